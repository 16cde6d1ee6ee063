"""Super-resolving phase measurements with coherent light: simulation and analysis."""

__version__ = "0.1.0"

from ._backend import backend_name
from .detection import (
    ClickStream,
    DetectorParams,
    click_probability,
    coincidence_rate_analytic,
    coincidences,
    sample_clicks,
    sample_joint_counts,
)
from .experiments import (
    COINCIDENCE,
    DriftModel,
    ScanRecord,
    SpaceDomainConfig,
    TimeDomainConfig,
    calibrate_mu,
    max_resolution,
    run_space_domain,
    run_time_domain,
)
from .optics import (
    CoherentMode,
    InvalidArgument,
    NoonModel,
    PolarizationState,
    hwp_matrix,
    noon_detection_prob,
    pbs_split,
    sine_product,
    split_coherent,
)

__all__ = [
    "COINCIDENCE",
    "ClickStream",
    "CoherentMode",
    "DetectorParams",
    "DriftModel",
    "InvalidArgument",
    "NoonModel",
    "PolarizationState",
    "ScanRecord",
    "SpaceDomainConfig",
    "TimeDomainConfig",
    "backend_name",
    "calibrate_mu",
    "click_probability",
    "coincidence_rate_analytic",
    "coincidences",
    "hwp_matrix",
    "max_resolution",
    "noon_detection_prob",
    "pbs_split",
    "run_space_domain",
    "run_time_domain",
    "sample_clicks",
    "sample_joint_counts",
    "sine_product",
    "split_coherent",
]
