"""Protocol drivers for the space-domain and time-domain super-resolution setups.

Both drivers return a :class:`ScanRecord` in long format: one entry per
``(phi1, phi2, channel)`` cell.  Channel ids ``>= 0`` are single detectors;
:data:`COINCIDENCE` marks the all-channel coincidence counter of a setting.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import optimize, special

from . import __version__
from .detection import DetectorParams, click_probability, sample_joint_counts
from .optics import (
    INF_DB,
    InvalidArgument,
    cascade_fractions,
    output_polarization_angle,
    pbs_h_probability,
)

COINCIDENCE = -1
DEFAULT_SEED = 20100226

# Reference space-domain defaults, tuned so the multiplied singles reproduce
# per-peak visibilities of 96.7 % .. 98.6 % (see README, "Calibration").
REFERENCE_PBS_EXTINCTION_DB = 35.0
REFERENCE_PBS_AXIS_ERROR_DEG = (0.0, 4.0, 0.0)
HIGH_ORDER_SINGLES_RATE_HZ = 1.5e6


class Infeasible(InvalidArgument):
    """A calibration target that no mean photon number can reach."""


@dataclass(frozen=True)
class DriftModel:
    """Multiplicative laser-intensity drift applied to the mean photon number."""

    kind: str = "none"
    relative_amplitude: float = 0.02
    timescale_s: float = 7200.0

    def __post_init__(self):
        if self.kind not in ("none", "sinusoidal", "random_walk"):
            raise InvalidArgument(f"unknown drift kind {self.kind!r}")
        if not self.relative_amplitude >= 0:
            raise InvalidArgument("drift relative_amplitude must be >= 0")
        if self.kind == "sinusoidal" and self.relative_amplitude >= 1:
            raise InvalidArgument("sinusoidal drift amplitude must be < 1 to keep intensity positive")
        if not self.timescale_s > 0:
            raise InvalidArgument("drift timescale_s must be > 0")

    def multiplier(self, times_s, rng: np.random.Generator | None = None) -> np.ndarray:
        """Intensity factor at each time; strictly positive.

        ``random_walk`` is a geometric Brownian path whose log has standard
        deviation ``relative_amplitude`` after one ``timescale_s``; it is drawn
        once over the sorted times so evaluation order cannot change it.
        """
        t = np.asarray(times_s, dtype=np.float64)
        if self.kind == "none" or self.relative_amplitude == 0:
            return np.ones_like(t)
        if self.kind == "sinusoidal":
            return 1.0 + self.relative_amplitude * np.sin(2 * np.pi * t / self.timescale_s)
        if rng is None:
            raise InvalidArgument("random_walk drift needs a generator")
        order = np.argsort(t, kind="stable")
        ts = t[order]
        dt = np.diff(np.concatenate(([0.0], ts)))
        steps = rng.normal(0.0, 1.0, ts.shape) * np.sqrt(dt / self.timescale_s)
        log_i = self.relative_amplitude * np.cumsum(steps)
        out = np.empty_like(t)
        out[order] = np.exp(log_i)
        return out


@dataclass
class ScanRecord:
    """Raw counts of one run in long format plus run metadata."""

    phi1_deg: np.ndarray
    phi2_deg: np.ndarray
    channel_id: np.ndarray
    clicks: np.ndarray
    gates: np.ndarray
    t_offset_s: np.ndarray
    metadata: dict = field(default_factory=dict)

    COLUMNS = ("phi1_deg", "phi2_deg", "channel_id", "clicks", "gates", "t_offset_s")

    def __post_init__(self):
        self.phi1_deg = np.asarray(self.phi1_deg, dtype=np.float64)
        self.phi2_deg = np.asarray(self.phi2_deg, dtype=np.float64)
        self.channel_id = np.asarray(self.channel_id, dtype=np.int64)
        self.clicks = np.asarray(self.clicks, dtype=np.int64)
        self.gates = np.asarray(self.gates, dtype=np.int64)
        self.t_offset_s = np.asarray(self.t_offset_s, dtype=np.float64)
        n = self.phi1_deg.shape[0]
        for name in self.COLUMNS:
            if getattr(self, name).shape != (n,):
                raise InvalidArgument(f"column {name} has the wrong length")
        if np.any(self.clicks < 0) or np.any(self.clicks > self.gates):
            raise InvalidArgument("every cell needs 0 <= clicks <= gates")

    def __len__(self):
        return self.phi1_deg.shape[0]

    @classmethod
    def concatenate(cls, parts: Sequence["ScanRecord"], metadata: dict) -> "ScanRecord":
        cols = {c: np.concatenate([getattr(p, c) for p in parts]) for c in cls.COLUMNS}
        return cls(**cols, metadata=metadata)

    def select(self, mask) -> "ScanRecord":
        cols = {c: getattr(self, c)[mask] for c in self.COLUMNS}
        return ScanRecord(**cols, metadata=dict(self.metadata))

    @property
    def kind(self) -> str:
        return self.metadata.get("kind", "")

    def keys(self):
        """Distinct ``(phi2, channel)`` pairs in first-appearance order."""
        seen = {}
        for p2, ch in zip(self.phi2_deg.tolist(), self.channel_id.tolist()):
            seen.setdefault((p2, ch), None)
        return list(seen)

    def phi1_values(self) -> np.ndarray:
        return np.unique(self.phi1_deg)

    def missing_cells(self) -> list[tuple[float, float, int]]:
        """Cells absent from the ``phi1 x (phi2, channel)`` grid."""
        present = set(zip(self.phi1_deg.tolist(), self.phi2_deg.tolist(), self.channel_id.tolist()))
        missing = []
        for p1 in self.phi1_values().tolist():
            for p2, ch in self.keys():
                if (p1, p2, ch) not in present:
                    missing.append((p1, p2, ch))
        return missing

    def check_complete(self):
        missing = self.missing_cells()
        if missing:
            shown = ", ".join(f"(phi1={a:g}, phi2={b:g}, channel={c})" for a, b, c in missing[:5])
            more = f" and {len(missing) - 5} more" if len(missing) > 5 else ""
            raise InvalidArgument(f"incomplete scan grid: missing {shown}{more}")
        if len(set(zip(self.phi1_deg.tolist(), self.phi2_deg.tolist(), self.channel_id.tolist()))) != len(self):
            raise InvalidArgument("duplicate scan cells")

    def series(self, phi2: float, channel: int):
        """``(phi1, clicks, gates, t)`` of one cell column, sorted by phi1."""
        m = (self.phi2_deg == phi2) & (self.channel_id == channel)
        if not np.any(m):
            raise InvalidArgument(f"no cells for phi2={phi2:g}, channel={channel}")
        order = np.argsort(self.phi1_deg[m], kind="stable")
        return (
            self.phi1_deg[m][order],
            self.clicks[m][order],
            self.gates[m][order],
            self.t_offset_s[m][order],
        )

    def total_time_s(self) -> float:
        return float(self.metadata.get("total_time_s", 0.0))


def _setting_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def _as_tuple(x, n, name):
    if np.ndim(x) == 0:
        return (float(x),) * n
    x = tuple(float(v) for v in x)
    if len(x) != n:
        raise InvalidArgument(f"{name} needs {n} values, got {len(x)}")
    return x


def mean_click_probability(mu: float, params: DetectorParams) -> float:
    """Click probability averaged over a full fringe ``mu cos^2(2 phi)``.

    Uses ``mean_phi exp(-a cos^2) = exp(-a/2) I0(a/2)``.
    """
    a = params.efficiency * mu
    return 1.0 - (1.0 - params.dark_click_prob) * float(special.i0e(a / 2.0))


def calibrate_mu(target_singles_rate_hz: float, params: DetectorParams, rtol: float = 1e-9) -> float:
    """Mean photon number per pulse at one detector giving the requested fringe-averaged rate."""
    target = target_singles_rate_hz / params.gate_rate_hz
    if not target_singles_rate_hz > 0:
        raise InvalidArgument("target singles rate must be > 0")
    if target >= 1.0:
        raise Infeasible(
            f"target {target_singles_rate_hz:g}/s is not below the gate rate {params.gate_rate_hz:g}/s"
        )
    floor = params.dark_click_prob
    if target < floor:
        raise Infeasible(f"target {target_singles_rate_hz:g}/s is below the dark-click rate")
    if target == floor:
        return 0.0
    if params.efficiency == 0:
        raise Infeasible("detector efficiency is zero")

    def excess(mu):
        return mean_click_probability(mu, params) - target

    hi = 1.0 / params.efficiency
    while excess(hi) < 0:
        hi *= 2.0
        if hi > 1e18:
            raise Infeasible("target singles rate not reachable")
    return float(optimize.bisect(excess, 0.0, hi, xtol=1e-300, rtol=rtol, maxiter=400))


def max_resolution(step_deg: float, points_per_fringe: int) -> int:
    """Largest super-resolution factor resolvable with a rotator step of ``step_deg``."""
    if not step_deg > 0:
        raise InvalidArgument("step must be > 0")
    if int(points_per_fringe) != points_per_fringe or points_per_fringe < 2:
        raise InvalidArgument("points per fringe must be an integer >= 2")
    return int(math.floor(90.0 / (points_per_fringe * step_deg) + 1e-9))


# -- space domain --------------------------------------------------------------


def default_phi1_grid(step_deg: float = 0.5, stop_deg: float = 90.0) -> tuple[float, ...]:
    n = int(round(stop_deg / step_deg))
    return tuple(float(v) for v in np.round(np.arange(n + 1) * step_deg, 10))


@dataclass(frozen=True)
class SpaceDomainConfig:
    mu_total: float = 24.0
    arm_fractions: tuple = (0.5, 0.25, 0.25)
    arm_hwp_offsets: tuple = (0.0, 15.0, 30.0)
    pbs_extinction_db: tuple = (INF_DB, INF_DB, INF_DB)
    pbs_axis_error_deg: tuple = (0.0, 0.0, 0.0)
    detector: DetectorParams = field(default_factory=DetectorParams)
    phi1_grid: tuple = field(default_factory=default_phi1_grid)
    gates_per_setting: int = 2_500_000
    rotation_time_s: float = 0.5
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("arm_fractions", _as_tuple(self.arm_fractions, 3, "arm_fractions"))
        set_("arm_hwp_offsets", _as_tuple(self.arm_hwp_offsets, 3, "arm_hwp_offsets"))
        set_("pbs_extinction_db", _as_tuple(self.pbs_extinction_db, 3, "pbs_extinction_db"))
        set_("pbs_axis_error_deg", _as_tuple(self.pbs_axis_error_deg, 3, "pbs_axis_error_deg"))
        set_("phi1_grid", tuple(float(v) for v in self.phi1_grid))
        if not self.mu_total >= 0:
            raise InvalidArgument("mu_total must be >= 0")
        if any(f < 0 for f in self.arm_fractions) or abs(sum(self.arm_fractions) - 1) > 1e-9:
            raise InvalidArgument("arm_fractions must be nonnegative and sum to 1")
        if any(not e > 0 for e in self.pbs_extinction_db):
            raise InvalidArgument("pbs_extinction_db must be > 0 dB")
        if not self.phi1_grid:
            raise InvalidArgument("phi1_grid must not be empty")
        if int(self.gates_per_setting) != self.gates_per_setting or self.gates_per_setting <= 0:
            raise InvalidArgument("gates_per_setting must be a positive integer")
        if not self.rotation_time_s >= 0:
            raise InvalidArgument("rotation_time_s must be >= 0")

    @property
    def n_channels(self) -> int:
        return 6

    def channel_layout(self):
        """``(arm, port)`` per channel id: H ports first (ids 0-2), then V ports."""
        return [(k % 3, "H" if k < 3 else "V") for k in range(6)]


def mu_total_for_singles_rate(
    target_singles_rate_hz: float,
    params: DetectorParams,
    arm_fractions: Sequence[float] = (0.5, 0.25, 0.25),
) -> float:
    """Source mean photon number that puts the weakest arm's detectors at the target rate."""
    return calibrate_mu(target_singles_rate_hz, params) / min(arm_fractions)


def reference_space_config(**overrides) -> SpaceDomainConfig:
    """Space-domain setup with the detector rates and imperfections of the reported run."""
    det = overrides.pop("detector", DetectorParams())
    fractions = overrides.get("arm_fractions", (0.5, 0.25, 0.25))
    base = dict(
        mu_total=mu_total_for_singles_rate(1e6, det, cascade_fractions([0.5, 0.5])),
        arm_fractions=fractions,
        pbs_extinction_db=REFERENCE_PBS_EXTINCTION_DB,
        pbs_axis_error_deg=REFERENCE_PBS_AXIS_ERROR_DEG,
        detector=det,
    )
    base.update(overrides)
    return SpaceDomainConfig(**base)


def space_channel_probabilities(config: SpaceDomainConfig, phi1_deg) -> np.ndarray:
    """Click probability of the six detectors, shape ``(len(phi1), 6)``."""
    phi1 = np.atleast_1d(np.asarray(phi1_deg, dtype=np.float64))
    out = np.empty((phi1.shape[0], 6))
    for arm in range(3):
        chi = output_polarization_angle(0.0, [phi1, config.arm_hwp_offsets[arm]])
        p_h = pbs_h_probability(chi, config.pbs_extinction_db[arm], config.pbs_axis_error_deg[arm])
        mu_arm = config.mu_total * config.arm_fractions[arm]
        out[:, arm] = click_probability(mu_arm * p_h, config.detector)
        out[:, arm + 3] = click_probability(mu_arm * (1.0 - p_h), config.detector)
    return out


def peak_coincidence_rate(config: SpaceDomainConfig, resolution_deg: float = 0.01) -> float:
    """Maximum over phi1 of the analytic six-fold coincidence rate."""
    phi1 = np.arange(0.0, 90.0, resolution_deg)
    probs = space_channel_probabilities(config, phi1)
    return float(config.detector.gate_rate_hz * np.prod(probs, axis=1).max())


def run_space_domain(config: SpaceDomainConfig) -> ScanRecord:
    probs = space_channel_probabilities(config, config.phi1_grid)
    dwell = config.gates_per_setting / config.detector.gate_rate_hz + config.rotation_time_s
    parts = []
    for i, phi1 in enumerate(config.phi1_grid):
        rng = _setting_rng(config.seed, i)
        singles, coinc = sample_joint_counts(probs[i], config.gates_per_setting, rng)
        phi2 = [config.arm_hwp_offsets[arm] for arm, _ in config.channel_layout()] + [0.0]
        parts.append(
            ScanRecord(
                phi1_deg=np.full(7, phi1),
                phi2_deg=phi2,
                channel_id=list(range(6)) + [COINCIDENCE],
                clicks=list(singles) + [coinc],
                gates=np.full(7, config.gates_per_setting),
                t_offset_s=np.full(7, i * dwell),
            )
        )
    meta = {
        "kind": "space",
        "seed": int(config.seed),
        "version": __version__,
        "config": config_snapshot(config),
        "total_time_s": len(config.phi1_grid) * dwell,
    }
    return ScanRecord.concatenate(parts, meta)


# -- time domain -----------------------------------------------------------------


@dataclass(frozen=True)
class TimeDomainConfig:
    n_target: int = 10
    detectors_used: str = "two"
    mu: float = 6.0
    phi1_grid: tuple = field(default_factory=default_phi1_grid)
    gates_per_setting: int = 2_500_000
    drift: DriftModel = field(default_factory=DriftModel)
    detector: DetectorParams = field(default_factory=DetectorParams)
    pbs_extinction_db: float = INF_DB
    rotation_time_s: float = 0.5
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        object.__setattr__(self, "phi1_grid", tuple(float(v) for v in self.phi1_grid))
        if int(self.n_target) != self.n_target or self.n_target < 1:
            raise InvalidArgument("n_target must be an integer >= 1")
        if self.detectors_used not in ("one", "two"):
            raise InvalidArgument("detectors_used must be 'one' or 'two'")
        if self.detectors_used == "two" and self.n_target % 2:
            raise InvalidArgument("the two-detector protocol needs an even n_target")
        if not self.mu >= 0:
            raise InvalidArgument("mu must be >= 0")
        if not self.phi1_grid:
            raise InvalidArgument("phi1_grid must not be empty")
        if int(self.gates_per_setting) != self.gates_per_setting or self.gates_per_setting <= 0:
            raise InvalidArgument("gates_per_setting must be a positive integer")
        if not self.pbs_extinction_db > 0:
            raise InvalidArgument("pbs_extinction_db must be > 0 dB")
        if not self.rotation_time_s >= 0:
            raise InvalidArgument("rotation_time_s must be >= 0")

    @property
    def phi2_step(self) -> float:
        return 90.0 / self.n_target

    def phi2_settings(self) -> list[float]:
        count = self.n_target // 2 if self.detectors_used == "two" else self.n_target
        return [j * self.phi2_step for j in range(count)]

    def setting_dwell_s(self) -> float:
        return self.gates_per_setting / self.detector.gate_rate_hz + self.rotation_time_s

    def total_time_s(self) -> float:
        return len(self.phi2_settings()) * len(self.phi1_grid) * self.setting_dwell_s()


def time_port_probability(phi1_deg, phi2_deg, extinction_db=INF_DB) -> np.ndarray:
    """Pre-detector H-port probability after plates at ``phi1`` then ``phi2``: ``cos^2(2(phi2-phi1))``."""
    chi = output_polarization_angle(0.0, [phi1_deg, phi2_deg])
    return pbs_h_probability(chi, extinction_db)


def run_time_domain(config: TimeDomainConfig) -> ScanRecord:
    phi1 = np.asarray(config.phi1_grid)
    n1 = phi1.shape[0]
    dwell = config.setting_dwell_s()
    settings = config.phi2_settings()
    # phi1 is scanned inside each phi2 setting, so time advances along phi1 first
    times = (np.arange(len(settings))[:, None] * n1 + np.arange(n1)[None, :]) * dwell
    drift = config.drift.multiplier(times.ravel(), _setting_rng(config.seed, 1 << 30)).reshape(times.shape)
    two = config.detectors_used == "two"
    parts = []
    for j, phi2 in enumerate(settings):
        rng = _setting_rng(config.seed, j)
        p_h = time_port_probability(phi1, phi2, config.pbs_extinction_db)
        mu = config.mu * drift[j]
        click_h = click_probability(mu * p_h, config.detector)
        gates = np.full(n1, config.gates_per_setting)
        if two:
            click_v = click_probability(mu * (1.0 - p_h), config.detector)
            # joint outcome per gate: patterns (none, H, V, both)
            pv = np.stack(
                [(1 - click_h) * (1 - click_v), click_h * (1 - click_v), (1 - click_h) * click_v, click_h * click_v],
                axis=1,
            )
            pv /= pv.sum(axis=1, keepdims=True)
            pattern = rng.multinomial(config.gates_per_setting, pv)
            counts = [pattern[:, 1] + pattern[:, 3], pattern[:, 2] + pattern[:, 3], pattern[:, 3]]
            channels = [0, 1, COINCIDENCE]
        else:
            counts = [rng.binomial(config.gates_per_setting, click_h)]
            channels = [0]
        for ch, c in zip(channels, counts):
            parts.append(
                ScanRecord(
                    phi1_deg=phi1,
                    phi2_deg=np.full(n1, phi2),
                    channel_id=np.full(n1, ch),
                    clicks=c,
                    gates=gates,
                    t_offset_s=times[j],
                )
            )
    meta = {
        "kind": "time",
        "seed": int(config.seed),
        "version": __version__,
        "config": config_snapshot(config),
        "total_time_s": config.total_time_s(),
        "drift_multiplier_range": [float(drift.min()), float(drift.max())],
    }
    return ScanRecord.concatenate(parts, meta)


def reference_time_config(n_target: int = 10, detectors_used: str = "two", **overrides) -> TimeDomainConfig:
    """Time-domain setup at the reported scale: 1 s per setting, singles calibrated to the target rate."""
    det = overrides.pop("detector", DetectorParams())
    # at d = 1e-5 a 30-fold product needs brighter channels to keep the dark
    # floor well below the fringe minima
    target = overrides.pop("target_singles_rate_hz", 5e5 if n_target <= 10 else HIGH_ORDER_SINGLES_RATE_HZ)
    if n_target > 10 and "phi1_grid" not in overrides:
        overrides["phi1_grid"] = default_phi1_grid(0.05)
    base = dict(
        n_target=n_target,
        detectors_used=detectors_used,
        mu=calibrate_mu(target, det),
        detector=det,
    )
    base.update(overrides)
    return TimeDomainConfig(**base)


def config_snapshot(config) -> dict:
    """JSON-compatible dict of a config (infinities written as strings)."""

    def clean(v):
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, float) and not math.isfinite(v):
            return repr(v)
        return v

    return clean(asdict(config))


def with_seed(config, seed: int):
    return replace(config, seed=int(seed))
