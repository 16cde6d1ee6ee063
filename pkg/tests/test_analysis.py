import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superres.analysis import (
    FringeCurve,
    IndeterminateFringeCount,
    SensitivityConfig,
    coincidence_curve,
    count_fringes,
    curve_from_counts,
    fit_fringe,
    mean_peak_visibility,
    multiply_channels,
    noon_fisher_information,
    noon_phase_uncertainty,
    phase_uncertainty,
    select_phase_range,
    visibility_per_peak,
)
from superres.experiments import ScanRecord, SpaceDomainConfig, default_phi1_grid, run_space_domain
from superres.optics import InvalidArgument


def synthetic(n, amp=1.0, vis=1.0, delta=0.0, points=None, span=360.0):
    points = points or max(60 * n, 360)
    x = np.arange(points) * (span / points)
    y = amp * (1 + vis * np.cos(np.radians(n * x) + delta))
    return FringeCurve(x, y, np.full(points, 1e-3 * amp))


def record_from_columns(phi1, columns, gates):
    """ScanRecord with one column per (phi2, channel) key, channel ids 0..k-1."""
    rows = {c: [] for c in ScanRecord.COLUMNS}
    for ch, clicks in enumerate(columns):
        rows["phi1_deg"].append(phi1)
        rows["phi2_deg"].append(np.zeros_like(phi1))
        rows["channel_id"].append(np.full(phi1.shape, ch))
        rows["clicks"].append(clicks)
        rows["gates"].append(np.full(phi1.shape, gates))
        rows["t_offset_s"].append(np.zeros_like(phi1))
    return ScanRecord(**{k: np.concatenate(v) for k, v in rows.items()})


# -- multiply_channels -------------------------------------------------------------


def test_single_channel_product_is_identity():
    phi1 = np.arange(0.0, 90.0, 1.0)
    clicks = np.arange(90) * 7
    curve = multiply_channels(record_from_columns(phi1, [clicks], 10**6))
    assert np.array_equal(curve.value, clicks)
    assert np.allclose(curve.phase_deg, 4 * phi1)


def test_six_noiseless_channels_give_sine_power():
    phi1 = np.arange(0.0, 90.0, 0.5)
    x = np.radians(4 * phi1) / 2  # phase argument so the product has 6 fringes per 360
    gates = 10**12
    cols = [np.round(gates * np.sin(x + k * np.pi / 6) ** 2).astype(np.int64) for k in range(6)]
    curve = multiply_channels(record_from_columns(phi1, cols, gates), normalize=False)
    expect = float(gates) ** 6 * (np.sin(6 * x) / 2**5) ** 2
    big = expect > 1e-6 * expect.max()
    assert np.allclose(curve.value[big], expect[big], rtol=1e-6)
    assert count_fringes(curve) == 6


def test_missing_cell_is_named():
    phi1 = np.arange(0.0, 10.0, 1.0)
    rec = record_from_columns(phi1, [np.ones(10, int), np.ones(10, int)], 100)
    rec = rec.select(~((rec.channel_id == 1) & (rec.phi1_deg == 4.0)))
    with pytest.raises(InvalidArgument, match="phi1=4"):
        multiply_channels(rec)
    assert rec.missing_cells() == [(4.0, 0.0, 1)]


def test_product_uncertainty_zero_safe():
    phi1 = np.arange(0.0, 5.0, 1.0)
    rec = record_from_columns(phi1, [np.array([0, 1, 4, 9, 16]), np.array([4, 4, 4, 4, 4])], 100)
    curve = multiply_channels(rec)
    # sigma^2 = (s1 c2)^2 + (c1 s2)^2 with s = sqrt(max(c, 1))
    expect = np.sqrt((np.sqrt([1, 1, 4, 9, 16]) * 4) ** 2 + (np.array([0, 1, 4, 9, 16]) * 2) ** 2)
    assert np.allclose(curve.uncertainty, expect)


@pytest.fixture(scope="module")
def space_record():
    return run_space_domain(SpaceDomainConfig(mu_total=24.0, gates_per_setting=2_500_000, seed=11))


def test_product_matches_coincidence_shape(space_record):
    prod = multiply_channels(space_record)
    coinc = coincidence_curve(space_record)
    # best scale between the two curves, then a pointwise 5 sigma comparison
    w = 1 / (coinc.uncertainty**2 + 1e-300)
    scale = np.sum(w * coinc.value * prod.value) / np.sum(w * prod.value**2)
    resid = coinc.value - scale * prod.value
    sigma = np.sqrt(coinc.uncertainty**2 + (scale * prod.uncertainty) ** 2)
    assert np.all(np.abs(resid) < 5 * sigma)


def test_product_overflow_switches_units():
    phi1 = np.arange(0.0, 90.0, 0.5)
    gates = 10**9
    cols = [np.full(phi1.shape, gates // 2) for _ in range(30)]
    curve = multiply_channels(record_from_columns(phi1, cols, gates))
    assert curve.units == "per-gate frequency"
    assert np.allclose(curve.value, 0.5**30)
    assert np.all(np.isfinite(curve.uncertainty))


# -- visibility_per_peak -----------------------------------------------------------


def test_visibility_noiseless_cosine():
    peaks = visibility_per_peak(synthetic(6))
    assert len(peaks) >= 5
    assert all(v == pytest.approx(1.0, abs=1e-12) for _, v in peaks)


def test_visibility_uses_lower_adjacent_minimum():
    y = np.array([0.5, 0.02, 0.5, 1.0, 0.5, 0.05, 0.5])
    curve = FringeCurve(np.arange(7.0), y, np.ones(7))
    (phase, v), = visibility_per_peak(curve, smooth=False)
    assert phase == 3.0
    assert v == pytest.approx(0.98 / 1.02, abs=1e-12)
    assert v == pytest.approx(0.961, abs=5e-4)


def test_visibility_no_peak_is_empty(caplog):
    flat = FringeCurve(np.arange(10.0), np.arange(10.0), np.ones(10))
    assert visibility_per_peak(flat) == []
    assert "visibility_per_peak" in caplog.text


def test_visibility_background_subtraction():
    base = synthetic(4, vis=0.8)
    lifted = FringeCurve(base.phase_deg, base.value + 0.1, base.uncertainty)
    v0 = mean_peak_visibility(visibility_per_peak(base))
    v1 = mean_peak_visibility(visibility_per_peak(lifted, background=0.1))
    assert v1 == pytest.approx(v0, abs=1e-12)


# -- fit_fringe -------------------------------------------------------------------


@pytest.mark.parametrize("n,amp,vis,delta", [(1, 2.0, 0.7, 0.3), (6, 1e5, 0.97, -1.2), (30, 3.0, 1.0, 2.9)])
def test_fit_recovers_exact_parameters(n, amp, vis, delta):
    fit = fit_fringe(synthetic(n, amp, vis, delta), n)
    assert fit.amplitude == pytest.approx(amp, rel=1e-9)
    assert fit.visibility == pytest.approx(vis, abs=1e-9)
    assert math.radians(fit.phase_offset_deg) == pytest.approx(delta, abs=1e-9)
    assert fit.residual_rms < 1e-9 * amp


def test_fit_underdetermined():
    with pytest.raises(InvalidArgument):
        fit_fringe(synthetic(10, points=29), 10)


def test_fit_falls_back_to_bounded_fit():
    # clipped sinusoid: the linear solution has V > 1, the bounded fit stays physical
    c = synthetic(3, vis=1.4)
    clipped = FringeCurve(c.phase_deg, np.maximum(c.value, 0.0), c.uncertainty)
    fit = fit_fringe(clipped, 3)
    assert 0.0 <= fit.visibility <= 1.0 and fit.amplitude > 0


@settings(max_examples=30, deadline=None)
@given(
    st.integers(1, 12),
    st.floats(0.5, 1.0),
    st.floats(-3.0, 3.0),
    st.floats(1e-3, 1e6),
)
def test_fit_scale_invariance(n, vis, delta, factor):
    curve = synthetic(n, 1.0, vis, delta, points=12 * n + 40)
    rng = np.random.default_rng(n)
    noisy = FringeCurve(curve.phase_deg, curve.value + 0.01 * rng.standard_normal(len(curve)), np.full(len(curve), 0.01))
    a = fit_fringe(noisy, n)
    b = fit_fringe(noisy.scaled(factor), n)
    assert b.visibility == pytest.approx(a.visibility, abs=1e-9)
    assert b.multiplicity == a.multiplicity
    assert b.phase_offset_deg == pytest.approx(a.phase_offset_deg, abs=1e-7)
    assert b.amplitude == pytest.approx(a.amplitude * factor, rel=1e-9)


@pytest.mark.parametrize("n,vis", [(2, 0.6), (6, 0.9), (10, 0.97)])
def test_fit_and_per_peak_agree(n, vis):
    curve = synthetic(n, 5.0, vis, 0.4)
    fit = fit_fringe(curve, n)
    assert abs(fit.visibility - mean_peak_visibility(visibility_per_peak(curve))) < 0.01


# -- count_fringes ------------------------------------------------------------------


def test_count_single_fringe():
    assert count_fringes(synthetic(1)) == 1


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 64), st.floats(0.5, 1.0), st.floats(-3.2, 3.2), st.integers(3, 8))
def test_count_fringes_exact(n, vis, delta, per_fringe):
    curve = synthetic(n, 1.0, vis, delta, points=per_fringe * n)
    assert count_fringes(curve) == n


def test_count_partial_span():
    # half the fringe-phase range, as for a 0..45 deg plate scan
    curve = synthetic(30, points=900, span=180.0)
    assert count_fringes(curve) == 30


def test_count_flat_is_indeterminate():
    with pytest.raises(IndeterminateFringeCount):
        count_fringes(FringeCurve(np.arange(100.0), np.ones(100), np.ones(100)))
    rng = np.random.default_rng(0)
    noise = FringeCurve(np.arange(0, 360.0, 1.0), rng.standard_normal(360), np.ones(360))
    with pytest.raises(IndeterminateFringeCount):
        count_fringes(noise)


def test_count_rejects_nonuniform_grid():
    x = np.array([0.0, 1.0, 3.0, 4.0])
    with pytest.raises(InvalidArgument):
        count_fringes(FringeCurve(x, np.array([1.0, 0.0, 1.0, 0.0]), np.ones(4)))


def test_space_record_counts_six(space_record):
    assert count_fringes(multiply_channels(space_record)) == 6
    assert count_fringes(coincidence_curve(space_record)) == 6


# -- phase sensitivity --------------------------------------------------------------


def test_phase_uncertainty_shot_noise_scaling():
    small = phase_uncertainty(SensitivityConfig(gates_per_setting=10_000), 6, trials=2000, seed=1)
    large = phase_uncertainty(SensitivityConfig(gates_per_setting=20_000), 6, trials=2000, seed=2)
    assert large.detected_photons == pytest.approx(2 * small.detected_photons)
    ratio = small.delta_phi / large.delta_phi
    # each spread carries a relative standard error of 1/sqrt(2(trials-1))
    err = math.sqrt(2) * math.sqrt(2 / (2 * 1999))
    assert abs(ratio - math.sqrt(2)) < 4 * err


@pytest.mark.parametrize("n", [1, 6, 10])
def test_no_super_sensitivity(n):
    res = phase_uncertainty(SensitivityConfig(), n, trials=500, seed=n)
    assert res.delta_phi >= 0.9 * res.sql
    # the estimator is efficient: spread agrees with the Cramer-Rao bound
    assert res.delta_phi == pytest.approx(res.fisher_bound, rel=0.15)


def test_phase_uncertainty_two_detector_variant():
    res = phase_uncertainty(SensitivityConfig(detectors_used="two"), 6, trials=500, seed=3)
    assert res.ratio >= 0.9


def test_phase_uncertainty_validation():
    with pytest.raises(InvalidArgument):
        phase_uncertainty(SensitivityConfig(), 6, trials=50)
    with pytest.raises(InvalidArgument, match="offset"):
        phase_uncertainty(SensitivityConfig(true_phase_rad=0.0), 1, trials=100)


def test_noon_fisher_information():
    for n in (1, 2, 4, 8):
        assert noon_fisher_information(n, 0.3) == pytest.approx(n * n, rel=1e-12)


def test_noon_beats_photon_equivalent_sql():
    n, m = 4, 10_000
    noon = noon_phase_uncertainty(n, m)
    assert noon == pytest.approx(1 / (n * math.sqrt(m)))
    assert noon < 1 / math.sqrt(n * m)


# -- helpers ------------------------------------------------------------------------


def test_curve_helpers():
    c = curve_from_counts([0.0, 1.0, 2.0], [0, 4, 9])
    assert np.allclose(c.uncertainty, [1, 2, 3])
    assert len(select_phase_range(c, 0.5, 2.0)) == 2
    assert c.normalized().value.max() == 1.0
    with pytest.raises(InvalidArgument):
        FringeCurve([0.0, 0.0], [1.0, 1.0], [1.0, 1.0])


def test_default_grid_spans_full_fringe_phase():
    assert 4 * default_phi1_grid()[-1] == 360.0
