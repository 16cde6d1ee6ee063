"""From raw scan counts to fringes, visibilities and phase uncertainties."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize, signal

from . import kernels
from .detection import DetectorParams, click_probability
from .experiments import COINCIDENCE, ScanRecord
from .optics import InvalidArgument, fringe_phase

log = logging.getLogger(__name__)

# Log10 of the largest product we keep in raw count units before switching to
# per-gate frequencies.
_MAX_LOG10_COUNTS = 140.0


class IndeterminateFringeCount(ValueError):
    """The curve has no frequency standing out above its noise floor."""


@dataclass(frozen=True)
class FringeCurve:
    phase_deg: np.ndarray
    value: np.ndarray
    uncertainty: np.ndarray
    units: str = "counts"

    def __post_init__(self):
        for name in ("phase_deg", "value", "uncertainty"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = self.phase_deg.shape[0]
        if self.value.shape != (n,) or self.uncertainty.shape != (n,):
            raise InvalidArgument("phase, value and uncertainty must have equal lengths")
        if n > 1 and np.any(np.diff(self.phase_deg) <= 0):
            raise InvalidArgument("phases must be strictly increasing")

    def __len__(self):
        return self.phase_deg.shape[0]

    def normalized(self) -> "FringeCurve":
        peak = self.value.max()
        if peak <= 0:
            return self
        return FringeCurve(self.phase_deg, self.value / peak, self.uncertainty / peak, self.units)

    def scaled(self, factor: float) -> "FringeCurve":
        return FringeCurve(self.phase_deg, self.value * factor, self.uncertainty * abs(factor), self.units)

    def step_deg(self) -> float:
        steps = np.diff(self.phase_deg)
        if steps.size == 0:
            raise InvalidArgument("need at least two phase points")
        if np.ptp(steps) > 1e-6 * max(abs(steps.mean()), 1e-12):
            raise InvalidArgument("phase grid is not uniform")
        return float(steps.mean())


@dataclass(frozen=True)
class FringeFit:
    amplitude: float
    visibility: float
    multiplicity: int
    phase_offset_deg: float
    residual_rms: float
    chi2_reduced: float = float("nan")

    def __post_init__(self):
        if not 0.0 <= self.visibility <= 1.0:
            raise InvalidArgument(f"visibility out of range: {self.visibility!r}")
        if self.multiplicity < 1:
            raise InvalidArgument("multiplicity must be >= 1")

    def model(self, phase_deg):
        x = np.radians(np.asarray(phase_deg, dtype=np.float64))
        return self.amplitude * (1 + self.visibility * np.cos(self.multiplicity * x + math.radians(self.phase_offset_deg)))


def curve_from_counts(phase_deg, counts) -> FringeCurve:
    counts = np.asarray(counts, dtype=np.float64)
    return FringeCurve(phase_deg, counts, np.sqrt(np.maximum(counts, 1.0)))


def _resolve_selection(record: ScanRecord, selection) -> list[tuple[float, int]]:
    keys = record.keys()
    if selection is None or selection == "singles":
        chosen = [k for k in keys if k[1] != COINCIDENCE]
    elif selection == "coincidence":
        chosen = [k for k in keys if k[1] == COINCIDENCE]
    else:
        chosen = []
        for item in selection:
            if isinstance(item, tuple):
                chosen.append((float(item[0]), int(item[1])))
            else:
                chosen.extend(k for k in keys if k[1] == int(item))
        unknown = [k for k in chosen if k not in keys]
        if unknown:
            raise InvalidArgument(f"selection names cells not in the record: {unknown}")
    if not chosen:
        raise InvalidArgument(f"selection {selection!r} matches no channels")
    return chosen


def multiply_channels(
    record: ScanRecord,
    channel_selection="singles",
    normalize: bool = False,
    dark_click_prob: float = 0.0,
) -> FringeCurve:
    """Pointwise product of the selected count columns against fringe phase.

    ``channel_selection`` is ``"singles"`` (every detector column),
    ``"coincidence"``, a list of channel ids, or a list of ``(phi2, channel)``
    pairs.  ``dark_click_prob`` subtracts the expected dark counts from each
    column before multiplying.  Each column's uncertainty is its Poisson error
    with a floor of one count; errors combine in relative quadrature.
    """
    keys = _resolve_selection(record, channel_selection)
    grid = None
    cols, errs = [], []
    for phi2, ch in keys:
        phi1, clicks, gates, _ = record.series(phi2, ch)
        if grid is None:
            grid = phi1
        elif phi1.shape != grid.shape or np.any(phi1 != grid):
            have = set(phi1.tolist())
            gap = [p for p in grid.tolist() if p not in have] or [p for p in phi1.tolist() if p not in set(grid.tolist())]
            raise InvalidArgument(f"missing cell: phi2={phi2:g}, channel={ch}, phi1={gap[0]:g}")
        c = clicks.astype(np.float64)
        err = np.sqrt(np.maximum(c, 1.0))
        if dark_click_prob:
            c = np.maximum(c - dark_click_prob * gates, 0.0)
        cols.append(c)
        errs.append(err)
    cols = np.array(cols)
    errs = np.array(errs)
    units = "counts"
    if len(keys) > 1:
        log_peak = np.sum(np.log10(np.maximum(cols.max(axis=1), 1.0)))
        if log_peak > _MAX_LOG10_COUNTS:
            g = np.array([record.series(p2, ch)[2] for p2, ch in keys], dtype=np.float64)
            cols, errs, units = cols / g, errs / g, "per-gate frequency"
    value = np.prod(cols, axis=0)
    # sigma_P^2 = sum_k (sigma_k * prod_{j != k} c_j)^2, safe when some c_j == 0
    k = cols.shape[0]
    var = np.zeros_like(value)
    for i in range(k):
        others = np.prod(np.delete(cols, i, axis=0), axis=0) if k > 1 else np.ones_like(value)
        var += (errs[i] * others) ** 2
    curve = FringeCurve(fringe_phase(grid), value, np.sqrt(var), units)
    return curve.normalized() if normalize else curve


def coincidence_curve(record: ScanRecord) -> FringeCurve:
    return multiply_channels(record, "coincidence")


def _smooth3(y):
    if y.shape[0] < 3:
        return y.copy()
    s = y.copy()
    s[1:-1] = (y[:-2] + y[1:-1] + y[2:]) / 3.0
    return s


def _refine(y, idx, sign):
    lo, hi = max(idx - 1, 0), min(idx + 2, y.shape[0])
    window = sign * y[lo:hi]
    return lo + int(np.argmax(window))


def _merge_shallow(peaks, y, min_dip):
    merged = list(peaks)
    changed = True
    while changed and len(merged) > 1:
        changed = False
        for k in range(len(merged) - 1):
            a, b = merged[k], merged[k + 1]
            if y[a:b + 1].min() > min_dip * min(y[a], y[b]):
                merged.pop(k + 1 if y[a] >= y[b] else k)
                changed = True
                break
    return merged


def visibility_per_peak(
    curve: FringeCurve,
    smooth: bool = True,
    background: float = 0.0,
    min_peak_fraction: float = 0.2,
    min_dip: float = 0.5,
) -> list[tuple[float, float]]:
    """``(peak_phase_deg, V)`` for every resolvable peak, ``V = (P - m)/(P + m)``.

    ``m`` is the lower of the two minima around the peak.  Extrema are located
    on a 3-point moving average (when ``smooth``) and then read off the raw
    values.  Peaks lower than ``min_peak_fraction`` of the tallest one are
    noise, and two neighbouring peaks not separated by a dip below
    ``min_dip`` times the lower of them are one peak.  ``background`` is
    subtracted from every value first.
    """
    y = curve.value - background
    n = y.shape[0]
    if n < 3:
        log.warning("visibility_per_peak: curve has %d points, need >= 3", n)
        return []
    located = _smooth3(y) if smooth else y
    peaks, _ = kernels.local_extrema(located)
    peaks = sorted({_refine(y, int(i), 1.0) for i in peaks})
    top = y.max()
    peaks = _merge_shallow([i for i in peaks if y[i] >= min_peak_fraction * top and y[i] > 0], y, min_dip)
    if not peaks:
        log.warning("visibility_per_peak: no resolvable peak")
        return []

    def side_min(a, b, edge):
        # lowest raw value strictly between a and b; a stretch touching the
        # curve's edge only counts if the edge point is a genuine trough
        seg = y[a:b]
        if seg.size == 0:
            return None
        j = a + int(np.argmin(seg))
        if edge is not None and j == edge:
            nb = j + 1 if edge == 0 else j - 1
            if not (y[j] < y[nb] and y[j] < 0.5 * y[peaks[0] if edge == 0 else peaks[-1]]):
                return None
        return j

    out = []
    for idx, p in enumerate(peaks):
        left = side_min(peaks[idx - 1] + 1, p, None) if idx > 0 else side_min(0, p, 0)
        right = side_min(p + 1, peaks[idx + 1], None) if idx + 1 < len(peaks) else side_min(p + 1, n, n - 1)
        if left is None or right is None:
            continue
        m = max(min(y[left], y[right]), 0.0)
        out.append((float(curve.phase_deg[p]), float((y[p] - m) / (y[p] + m))))
    if not out:
        log.warning("visibility_per_peak: no peak has minima on both sides")
    return out


def fit_fringe(curve: FringeCurve, n: int, restarts: int = 12) -> FringeFit:
    """Weighted least-squares fit of ``A (1 + V cos(n phi + delta))``.

    The model is linear in ``(A, A V cos delta, -A V sin delta)`` and is solved
    in closed form.  If that solution leaves the physical region
    (``A <= 0`` or ``V > 1``) a bounded nonlinear fit is run from a grid of
    phase offsets and the best one is kept.
    """
    if int(n) != n or n < 1:
        raise InvalidArgument("n must be an integer >= 1")
    m = len(curve)
    if m < 3 * n or m < 3:
        raise InvalidArgument(f"under-determined fit: {m} points for multiplicity {n} (need >= {3 * n})")
    x = np.radians(curve.phase_deg)
    y = curve.value
    sig = np.where(curve.uncertainty > 0, curve.uncertainty, np.max(curve.uncertainty[curve.uncertainty > 0], initial=1.0))
    w = 1.0 / sig
    design = np.column_stack([np.ones_like(x), np.cos(n * x), np.sin(n * x)])
    coef, *_ = np.linalg.lstsq(design * w[:, None], y * w, rcond=None)
    a, b, c = coef
    amp, vis, delta = a, math.hypot(b, c) / a if a != 0 else math.inf, math.atan2(-c, b)

    if not (amp > 0 and vis <= 1.0):
        scale = max(np.max(np.abs(y)), 1e-300)

        def resid(params):
            A, V, d = params
            return (A * (1 + V * np.cos(n * x + d)) - y / scale) * (w * scale)

        best = None
        for d0 in np.linspace(-np.pi, np.pi, restarts, endpoint=False):
            r = optimize.least_squares(
                resid,
                x0=[max(np.mean(y) / scale, 1e-12), 0.5, d0],
                bounds=([0.0, 0.0, -np.inf], [np.inf, 1.0, np.inf]),
            )
            if best is None or r.cost < best.cost:
                best = r
        amp, vis, delta = best.x[0] * scale, best.x[1], best.x[2]

    vis = min(max(vis, 0.0), 1.0)
    delta = (delta + np.pi) % (2 * np.pi) - np.pi
    model = amp * (1 + vis * np.cos(n * x + delta))
    res = y - model
    dof = max(m - 3, 1)
    return FringeFit(
        amplitude=float(amp),
        visibility=float(vis),
        multiplicity=int(n),
        phase_offset_deg=float(math.degrees(delta)),
        residual_rms=float(np.sqrt(np.mean(res**2))),
        chi2_reduced=float(np.sum((res / sig) ** 2) / dof),
    )


def count_fringes(curve: FringeCurve, min_dominance: float = 20.0) -> int:
    """Number of fringes per 360 degrees of fringe phase.

    Periodogram over integer fringe counts ``f`` (cycles per 360 degrees) up to
    the Nyquist limit of the grid, so partial spans need no special casing.
    The strongest ``f`` must exceed ``min_dominance`` times the median power.
    """
    step = curve.step_deg()
    y = curve.value - curve.value.mean()
    if not np.any(np.abs(y) > 1e-12 * max(np.abs(curve.value).max(), 1e-300)):
        raise IndeterminateFringeCount("flat curve: no fringes")
    f_max = int(math.floor(360.0 / step / 2.0))
    if f_max < 1:
        raise IndeterminateFringeCount("phase grid too coarse to resolve one fringe")
    freqs = np.arange(1, f_max + 1, dtype=np.float64)
    x = np.radians(curve.phase_deg - curve.phase_deg[0])
    power = signal.lombscargle(x, y, freqs, floating_mean=True)
    best = int(np.argmax(power))
    floor = float(np.median(power))
    if freqs.size > 2 and not power[best] > min_dominance * floor:
        raise IndeterminateFringeCount(
            f"no dominant frequency: peak power {power[best]:.3g} vs median {floor:.3g}"
        )
    return int(freqs[best])


# -- phase sensitivity -----------------------------------------------------------


@dataclass(frozen=True)
class PhaseUncertainty:
    delta_phi: float
    sql: float
    detected_photons: float
    trials: int
    fisher_bound: float
    model: str

    def __iter__(self):
        yield self.delta_phi
        yield self.sql

    @property
    def ratio(self) -> float:
        return self.delta_phi / self.sql

    @property
    def ratio_stderr(self) -> float:
        # standard error of a sample standard deviation
        return self.ratio / math.sqrt(2.0 * (self.trials - 1))


@dataclass(frozen=True)
class SensitivityConfig:
    """Operating point of the phase-sensitivity study (time-domain protocol)."""

    mu: float = 0.5
    gates_per_setting: int = 20_000
    detectors_used: str = "one"
    detector: DetectorParams = DetectorParams()
    true_phase_rad: float = math.pi / 2


def sensitivity_channels(n: int, detectors_used: str):
    """``(phase_shift_rad, port_sign)`` of each detector column in the n-fold scheme.

    Setting ``j`` puts the second plate at ``j * 90/n`` degrees, which shifts
    the H-port fringe ``cos^2(psi/2 - j pi/n)``; the V port is its complement.
    """
    if detectors_used == "two":
        if n % 2:
            raise InvalidArgument("two-detector scheme needs even n")
        return [(j * math.pi / n, port) for j in range(n // 2) for port in (1, -1)]
    return [(j * math.pi / n, 1) for j in range(n)]


def _channel_probs(psi, n, config: SensitivityConfig):
    psi = np.atleast_1d(np.asarray(psi, dtype=np.float64))
    chans = sensitivity_channels(n, config.detectors_used)
    x = np.empty((psi.shape[0], len(chans)))
    for i, (shift, port) in enumerate(chans):
        h = np.cos(psi / 2 - shift) ** 2
        x[:, i] = h if port == 1 else 1.0 - h
    return x, click_probability(config.mu * x, config.detector)


def _poisson_loglike(counts, gates, probs):
    lam = np.clip(probs * gates, 1e-300, None)
    return counts @ np.log(lam).T - np.sum(lam, axis=1)[None, :]


def phase_uncertainty(
    config: SensitivityConfig | None = None,
    n: int = 1,
    trials: int = 500,
    seed: int = 0,
    grid_points: int = 2001,
) -> PhaseUncertainty:
    """Monte Carlo spread of the maximum-likelihood phase estimate versus the shot-noise limit.

    Each trial draws binomial click counts for every detector column at the
    true fringe phase and maximizes the likelihood over a window of half a
    super-resolved fringe on either side.  The shot-noise limit is
    ``1/sqrt(N)`` with ``N`` the expected number of detected photons
    (after efficiency, darks excluded) per trial.
    """
    config = config or SensitivityConfig()
    if trials < 100:
        raise InvalidArgument("phase_uncertainty needs trials >= 100")
    psi0 = config.true_phase_rad
    x0, p0 = _channel_probs(psi0, n, config)
    x0, p0 = x0[0], p0[0]
    gates = np.full(p0.shape, float(config.gates_per_setting))

    h = 1e-6
    _, p_plus = _channel_probs(psi0 + h, n, config)
    _, p_minus = _channel_probs(psi0 - h, n, config)
    slope = (p_plus[0] - p_minus[0]) / (2 * h)
    fisher = float(np.sum(gates * slope**2 / np.clip(p0 * (1 - p0), 1e-300, None)))
    photons = float(np.sum(gates * config.detector.efficiency * config.mu * x0))
    if fisher <= 1e-9 * max(photons, 1.0):
        raise InvalidArgument(
            f"degenerate phase point {psi0:.6g} rad: no channel has a nonzero slope; offset the true phase"
        )

    rng = np.random.default_rng(seed)
    counts = rng.binomial(config.gates_per_setting, np.broadcast_to(p0, (trials, p0.size))).astype(np.float64)

    half = math.pi / (2 * n)
    grid = psi0 + np.linspace(-half, half, grid_points)
    _, pg = _channel_probs(grid, n, config)
    poisson = bool(np.all(pg < 0.1))
    if poisson:
        ll = _poisson_loglike(counts, gates, pg)
    else:
        ll = kernels.binomial_loglike(counts, gates, pg)
    best = np.argmax(ll, axis=1)
    # parabolic refinement around the grid maximum
    inner = np.clip(best, 1, grid_points - 2)
    rows = np.arange(trials)
    l0, l1, l2 = ll[rows, inner - 1], ll[rows, inner], ll[rows, inner + 1]
    denom = l0 - 2 * l1 + l2
    shift = np.where(denom < 0, 0.5 * (l0 - l2) / np.where(denom < 0, denom, -1.0), 0.0)
    dx = grid[1] - grid[0]
    est = grid[inner] + np.clip(shift, -1.0, 1.0) * dx
    delta = float(np.std(est, ddof=1))
    return PhaseUncertainty(
        delta_phi=delta,
        sql=1.0 / math.sqrt(photons),
        detected_photons=photons,
        trials=trials,
        fisher_bound=1.0 / math.sqrt(fisher),
        model="poisson" if poisson else "binomial",
    )


def noon_fisher_information(n: int, phi: float) -> float:
    """Classical Fisher information of the two-outcome readout ``(1 +/- cos(n phi))/2``."""
    p = 0.5 * (1 + math.cos(n * phi))
    dp = -0.5 * n * math.sin(n * phi)
    info = 0.0
    for prob, d in ((p, dp), (1 - p, -dp)):
        if prob > 0:
            info += d * d / prob
    return info


def noon_phase_uncertainty(n: int, events: int, phi: float = 0.3) -> float:
    """Cramer-Rao phase uncertainty from ``events`` N-fold detections of a NOON state."""
    return 1.0 / math.sqrt(events * noon_fisher_information(n, phi))


def curve_table(curve: FringeCurve) -> np.ndarray:
    return np.column_stack([curve.phase_deg, curve.value, curve.uncertainty])


def select_phase_range(curve: FringeCurve, lo_deg: float, hi_deg: float) -> FringeCurve:
    m = (curve.phase_deg >= lo_deg) & (curve.phase_deg <= hi_deg)
    return FringeCurve(curve.phase_deg[m], curve.value[m], curve.uncertainty[m], curve.units)


def mean_peak_visibility(peaks: Sequence[tuple[float, float]]) -> float:
    return float(np.mean([v for _, v in peaks])) if peaks else float("nan")
