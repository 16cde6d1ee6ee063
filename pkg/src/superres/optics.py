"""Polarization optics and closed-form interference models.

Angles passed to the wave-plate functions are in degrees, measured from the
horizontal (H) axis.  A half-wave plate at ``theta`` maps linear polarization
at angle ``chi`` to ``2*theta - chi``; 90 degrees of plate rotation therefore
sweeps 360 degrees of fringe phase (see :func:`fringe_phase`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels

INF_DB = math.inf


class InvalidArgument(ValueError):
    """Raised for arguments outside an operation's domain."""


@dataclass(frozen=True)
class PolarizationState:
    """Normalized Jones vector ``(h, v)``."""

    h: complex
    v: complex

    def __post_init__(self):
        norm = abs(self.h) ** 2 + abs(self.v) ** 2
        if not math.isfinite(norm) or abs(norm - 1.0) > 1e-12:
            raise InvalidArgument(f"Jones vector not normalized: |h|^2+|v|^2={norm!r}")

    @classmethod
    def horizontal(cls) -> "PolarizationState":
        return cls(1.0 + 0j, 0j)

    @classmethod
    def vertical(cls) -> "PolarizationState":
        return cls(0j, 1.0 + 0j)

    @classmethod
    def linear(cls, angle_deg: float) -> "PolarizationState":
        a = math.radians(angle_deg)
        return cls(complex(math.cos(a)), complex(math.sin(a)))

    @classmethod
    def from_vector(cls, vec) -> "PolarizationState":
        vec = np.asarray(vec, dtype=complex)
        vec = vec / np.linalg.norm(vec)
        return cls(complex(vec[0]), complex(vec[1]))

    def as_vector(self) -> np.ndarray:
        return np.array([self.h, self.v], dtype=complex)

    def transform(self, matrix: np.ndarray) -> "PolarizationState":
        return PolarizationState.from_vector(np.asarray(matrix) @ self.as_vector())

    def overlap(self, other: "PolarizationState") -> float:
        """|<other|self>|^2; equals 1 iff the states agree up to a global phase."""
        return float(abs(np.vdot(other.as_vector(), self.as_vector())) ** 2)


def _rotation(angle_rad: float) -> np.ndarray:
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return np.array([[c, -s], [s, c]], dtype=complex)


def hwp_matrix(theta_deg: float) -> np.ndarray:
    """Jones matrix of an ideal half-wave plate with its fast axis at ``theta_deg``.

    Returned as ``R(theta) diag(1, -1) R(-theta)``, i.e. the real reflection
    ``[[cos 2t, sin 2t], [sin 2t, -cos 2t]]``; the global phase of the physical
    retarder (a factor ``-i``) is dropped.
    """
    if not math.isfinite(theta_deg):
        raise InvalidArgument(f"wave-plate angle must be finite, got {theta_deg!r}")
    t = math.radians(theta_deg)
    retarder = np.diag([1.0 + 0j, -1.0 + 0j])
    return _rotation(t) @ retarder @ _rotation(-t)


def is_unitary(matrix: np.ndarray, tol: float = 1e-12) -> bool:
    m = np.asarray(matrix)
    return bool(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) <= tol)


def extinction_leakage(extinction_ratio_db: float) -> float:
    """Fraction of the wrong polarization leaking into each port."""
    if math.isinf(extinction_ratio_db) and extinction_ratio_db > 0:
        return 0.0
    if not extinction_ratio_db > 0:
        raise InvalidArgument(f"extinction ratio must be > 0 dB, got {extinction_ratio_db!r}")
    return 10.0 ** (-extinction_ratio_db / 10.0)


def pbs_split(
    state: PolarizationState,
    extinction_ratio_db: float = INF_DB,
    axis_deg: float = 0.0,
) -> tuple[float, float]:
    """Port probabilities ``(p_h, p_v)`` of a polarizing beam splitter.

    ``axis_deg`` rotates the splitter's transmission axis away from H, which
    models a mis-oriented cube.  Leakage ``eps = 10**(-dB/10)`` mixes the two
    ideal outcomes: ``p_h = (1-eps)|h'|^2 + eps|v'|^2``.
    """
    eps = extinction_leakage(extinction_ratio_db)
    if axis_deg:
        state = state.transform(_rotation(-math.radians(axis_deg)))
    ih = abs(state.h) ** 2
    iv = abs(state.v) ** 2
    p_h = (1.0 - eps) * ih + eps * iv
    return p_h, 1.0 - p_h


def pbs_h_probability(pol_angle_deg, extinction_ratio_db=INF_DB, axis_deg=0.0):
    """Vectorized H-port probability for linear polarization at ``pol_angle_deg``.

    Same physics as :func:`pbs_split`, restricted to linear input states so it
    can run over whole scan grids.
    """
    eps = extinction_leakage(extinction_ratio_db)
    x = np.cos(np.radians(np.asarray(pol_angle_deg, dtype=np.float64) - axis_deg)) ** 2
    return (1.0 - eps) * x + eps * (1.0 - x)


def output_polarization_angle(input_angle_deg, plate_angles_deg: Sequence[float]):
    """Linear polarization angle after a stack of half-wave plates (applied in order)."""
    chi = np.asarray(input_angle_deg, dtype=np.float64)
    for theta in plate_angles_deg:
        chi = 2.0 * np.asarray(theta, dtype=np.float64) - chi
    return chi


def fringe_phase(hwp_angle_deg):
    """Fringe phase in degrees for a plate angle: four times the rotation."""
    return 4.0 * np.asarray(hwp_angle_deg, dtype=np.float64)


@dataclass(frozen=True)
class CoherentMode:
    """A coherent pulse: mean photon number per pulse and polarization."""

    mean_photon_number: float
    polarization: PolarizationState = field(default_factory=PolarizationState.horizontal)

    def __post_init__(self):
        if not (self.mean_photon_number >= 0.0) or not math.isfinite(self.mean_photon_number):
            raise InvalidArgument(f"mean photon number must be >= 0, got {self.mean_photon_number!r}")


def split_coherent(mode: CoherentMode, fractions: Sequence[float]) -> list[CoherentMode]:
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.ndim != 1 or fr.size == 0:
        raise InvalidArgument("fractions must be a non-empty 1-D sequence")
    if np.any(fr < 0) or not np.all(np.isfinite(fr)):
        raise InvalidArgument(f"fractions must be nonnegative, got {list(fractions)}")
    if abs(fr.sum() - 1.0) > 1e-9:
        raise InvalidArgument(f"fractions must sum to 1, got sum={fr.sum()!r}")
    return [CoherentMode(float(f * mode.mean_photon_number), mode.polarization) for f in fr]


def cascade_fractions(reflectivities: Sequence[float]) -> list[float]:
    """Output fractions of a chain of beam splitters, each tapping off ``r`` of what remains.

    ``cascade_fractions([0.5, 0.5])`` gives ``[0.5, 0.25, 0.25]``.
    """
    out = []
    remaining = 1.0
    for r in reflectivities:
        out.append(remaining * r)
        remaining *= 1.0 - r
    out.append(remaining)
    return out


def sine_product(n: int, phi):
    """Product of ``sin(phi + k*pi/n)`` over ``k = 0 .. n-1``."""
    if int(n) != n or n < 1:
        raise InvalidArgument(f"n must be an integer >= 1, got {n!r}")
    scalar = np.ndim(phi) == 0
    out = kernels.sine_product_grid(int(n), np.atleast_1d(np.asarray(phi, dtype=np.float64)))
    return float(out[0]) if scalar else out


def sine_product_closed_form(n: int, phi):
    return np.sin(n * np.asarray(phi, dtype=np.float64)) / 2.0 ** (n - 1)


@dataclass(frozen=True)
class NoonModel:
    particle_number: int
    relative_phase: float = 0.0

    def __post_init__(self):
        if int(self.particle_number) != self.particle_number or self.particle_number < 1:
            raise InvalidArgument(f"particle number must be an integer >= 1, got {self.particle_number!r}")
        object.__setattr__(self, "relative_phase", float(self.relative_phase) % (2 * math.pi))


def noon_detection_prob(model: NoonModel, port: str = "plus") -> float:
    """N-fold detection probability ``(1 +/- cos(N phi))/2`` in one beam-splitter output."""
    if port not in ("plus", "minus"):
        raise InvalidArgument(f"port must be 'plus' or 'minus', got {port!r}")
    sign = 1.0 if port == "plus" else -1.0
    return 0.5 * (1.0 + sign * math.cos(model.particle_number * model.relative_phase))
