"""Gated threshold single-photon detectors and coincidence counting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .optics import InvalidArgument


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float = 0.2
    dark_click_prob: float = 1e-5
    gate_rate_hz: float = 2.5e6

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise InvalidArgument(f"efficiency must lie in [0, 1], got {self.efficiency!r}")
        if not 0.0 <= self.dark_click_prob < 1.0:
            raise InvalidArgument(f"dark_click_prob must lie in [0, 1), got {self.dark_click_prob!r}")
        if not (self.gate_rate_hz > 0.0 and math.isfinite(self.gate_rate_hz)):
            raise InvalidArgument(f"gate_rate_hz must be > 0, got {self.gate_rate_hz!r}")


@dataclass
class ClickStream:
    """Clicks of one detector over ``n_gates`` gates.

    ``clicks`` holds the per-gate outcomes when they were kept; aggregate-only
    streams carry just ``count``.
    """

    channel_id: int
    n_gates: int
    count: int
    clicks: np.ndarray | None = None

    def __post_init__(self):
        if self.n_gates < 0 or not 0 <= self.count <= self.n_gates:
            raise InvalidArgument(f"invalid stream: count={self.count}, n_gates={self.n_gates}")
        if self.clicks is not None and self.clicks.shape != (self.n_gates,):
            raise InvalidArgument("per-gate clicks must have shape (n_gates,)")

    @property
    def frequency(self) -> float:
        return self.count / self.n_gates if self.n_gates else 0.0


def click_probability(mu_at_detector, params: DetectorParams):
    """Probability of at least one click in a gate: ``1 - (1-d) exp(-eta mu)``.

    Works elementwise on arrays.
    """
    mu = np.asarray(mu_at_detector, dtype=np.float64)
    if np.any(mu < 0) or np.any(np.isnan(mu)):
        raise InvalidArgument("mean photon number at the detector must be >= 0")
    p = -np.expm1(np.log1p(-params.dark_click_prob) - params.efficiency * mu)
    return float(p) if p.ndim == 0 else p


def _check_prob(p):
    if not 0.0 <= p <= 1.0:
        raise InvalidArgument(f"probability must lie in [0, 1], got {p!r}")


def sample_clicks(p: float, n_gates: int, seed, channel_id: int = 0) -> ClickStream:
    """Independent Bernoulli(p) outcome per gate, reproducible for a fixed seed."""
    _check_prob(p)
    if n_gates < 0:
        raise InvalidArgument(f"n_gates must be >= 0, got {n_gates}")
    rng = np.random.default_rng(seed)
    bits = rng.random(n_gates) < p
    return ClickStream(channel_id, n_gates, int(np.count_nonzero(bits)), bits)


def coincidences(streams: Sequence[ClickStream]) -> int:
    """Number of gates in which every stream clicked."""
    if not streams:
        raise InvalidArgument("need at least one stream")
    n = streams[0].n_gates
    for s in streams:
        if s.n_gates != n:
            raise InvalidArgument(
                f"mismatched gate counts: channel {s.channel_id} has {s.n_gates}, expected {n}"
            )
        if s.clicks is None:
            raise InvalidArgument(f"channel {s.channel_id} does not retain per-gate outcomes")
    return kernels.count_all_clicked(np.vstack([s.clicks for s in streams]))


def sample_joint_counts(probs, n_gates: int, rng: np.random.Generator):
    """Singles counts and all-channel coincidence count for independent channels.

    Draws the number of gates showing each of the ``2**k`` click patterns from
    one multinomial, which has exactly the joint law of ``n_gates`` rounds of
    independent per-gate Bernoulli outcomes without materializing them.
    """
    probs = np.asarray(probs, dtype=np.float64)
    for p in probs:
        _check_prob(p)
    k = probs.shape[0]
    pattern_p = kernels.pattern_probabilities(probs)
    pattern_p = pattern_p / pattern_p.sum()
    pattern_counts = rng.multinomial(n_gates, pattern_p)
    idx = np.arange(1 << k)
    bits = (idx[:, None] >> np.arange(k)) & 1
    singles = pattern_counts @ bits
    return singles.astype(np.int64), int(pattern_counts[-1])


def coincidence_rate_analytic(probs, gate_rate_hz: float) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    for p in probs:
        _check_prob(p)
    return float(gate_rate_hz * np.prod(probs))


def binomial_sigma(p: float, n_gates: int) -> float:
    """Standard deviation of a frequency estimated from ``n_gates`` Bernoulli(p) trials."""
    return math.sqrt(p * (1.0 - p) / n_gates)
