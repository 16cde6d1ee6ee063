import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superres.optics import (
    CoherentMode,
    InvalidArgument,
    NoonModel,
    PolarizationState,
    cascade_fractions,
    extinction_leakage,
    fringe_phase,
    hwp_matrix,
    is_unitary,
    noon_detection_prob,
    output_polarization_angle,
    pbs_h_probability,
    pbs_split,
    sine_product,
    sine_product_closed_form,
    split_coherent,
)

angles = st.floats(-720.0, 720.0, allow_nan=False)


def test_hwp_45_turns_h_into_v():
    out = PolarizationState.horizontal().transform(hwp_matrix(45.0))
    assert out.overlap(PolarizationState.vertical()) == pytest.approx(1.0, abs=1e-12)


def test_hwp_22_5_gives_diagonal():
    out = PolarizationState.horizontal().transform(hwp_matrix(22.5))
    diag = PolarizationState.from_vector([1.0, 1.0])
    assert out.overlap(diag) == pytest.approx(1.0, abs=1e-12)
    # frozen independent check: multiply the rotation matrices by hand
    c, s = math.cos(math.radians(45)), math.sin(math.radians(45))
    assert np.allclose(out.as_vector(), [c, s], atol=1e-12)


def test_hwp_zero_is_identity_up_to_sign_of_v():
    assert np.allclose(hwp_matrix(0.0), np.diag([1, -1]))


@given(angles)
def test_hwp_is_unitary(theta):
    assert is_unitary(hwp_matrix(theta))


@given(angles, st.floats(-180, 180, allow_nan=False))
def test_hwp_reflects_linear_polarization(theta, chi):
    out = PolarizationState.linear(chi).transform(hwp_matrix(theta))
    expect = PolarizationState.linear(2 * theta - chi)
    assert out.overlap(expect) == pytest.approx(1.0, abs=1e-9)
    assert output_polarization_angle(chi, [theta]) == pytest.approx(2 * theta - chi)


def test_hwp_rejects_non_finite():
    for bad in (math.nan, math.inf):
        with pytest.raises(InvalidArgument):
            hwp_matrix(bad)


def test_polarization_must_be_normalized():
    with pytest.raises(InvalidArgument):
        PolarizationState(1.0, 1.0)


def test_pbs_ideal_and_20db():
    h = PolarizationState.horizontal()
    assert pbs_split(h) == (1.0, 0.0)
    p_h, p_v = pbs_split(h, 20.0)
    assert (p_h, p_v) == pytest.approx((0.99, 0.01), abs=1e-15)
    assert extinction_leakage(30.0) == pytest.approx(1e-3)


def test_pbs_invalid_extinction():
    with pytest.raises(InvalidArgument):
        pbs_split(PolarizationState.horizontal(), 0.0)
    with pytest.raises(InvalidArgument):
        extinction_leakage(-3.0)


@given(st.floats(-180, 180, allow_nan=False), st.floats(1.0, 60.0), st.floats(-10, 10))
def test_pbs_ports_sum_to_one_and_match_vectorized(chi, db, axis):
    p_h, p_v = pbs_split(PolarizationState.linear(chi), db, axis)
    assert p_h + p_v == pytest.approx(1.0, abs=1e-12)
    assert 0.0 <= p_h <= 1.0
    assert pbs_h_probability(chi, db, axis) == pytest.approx(p_h, abs=1e-12)


def test_pbs_axis_error_leaks_like_rotation():
    p_h, _ = pbs_split(PolarizationState.horizontal(), axis_deg=4.0)
    assert p_h == pytest.approx(math.cos(math.radians(4.0)) ** 2)


def test_fringe_phase_is_four_times_plate_angle():
    assert fringe_phase(90.0) == 360.0
    assert np.allclose(fringe_phase([0.0, 15.0]), [0.0, 60.0])


def test_split_cascade():
    parts = split_coherent(CoherentMode(0.9), cascade_fractions([0.5, 0.5]))
    assert [p.mean_photon_number for p in parts] == pytest.approx([0.45, 0.225, 0.225])
    thirds = split_coherent(CoherentMode(0.9), [1 / 3, 1 / 3, 1 / 3])
    assert [p.mean_photon_number for p in thirds] == pytest.approx([0.3, 0.3, 0.3])


@pytest.mark.parametrize("fractions", [[0.5, 0.6], [-0.1, 1.1], [], [math.nan, 1.0]])
def test_split_rejects_bad_fractions(fractions):
    with pytest.raises(InvalidArgument):
        split_coherent(CoherentMode(1.0), fractions)


def test_coherent_mode_rejects_negative():
    with pytest.raises(InvalidArgument):
        CoherentMode(-1.0)


def test_sine_product_n2_at_quarter_pi():
    assert sine_product(2, math.pi / 4) == pytest.approx(0.5, abs=1e-15)
    assert sine_product_closed_form(2, math.pi / 4) == pytest.approx(0.5, abs=1e-15)


def test_sine_product_n1_is_sine():
    phi = np.linspace(-3, 3, 50)
    assert np.allclose(sine_product(1, phi), np.sin(phi), atol=1e-15)


def test_sine_product_n6_grid():
    phi = np.linspace(0, 2 * np.pi, 10_000)
    assert np.max(np.abs(sine_product(6, phi) - np.sin(6 * phi) / 32)) < 1e-9


@given(st.integers(1, 64), st.floats(-10, 10, allow_nan=False))
def test_sine_product_identity_property(n, phi):
    brute = math.prod(math.sin(phi + k * math.pi / n) for k in range(n))
    assert sine_product(n, phi) == pytest.approx(brute, abs=1e-12)
    assert abs(sine_product(n, phi) - math.sin(n * phi) / 2 ** (n - 1)) < 1e-9


@pytest.mark.parametrize("n", [0, -1, 2.5])
def test_sine_product_rejects_bad_n(n):
    with pytest.raises(InvalidArgument):
        sine_product(n, 0.1)


def test_noon_six_maxima():
    phi = np.linspace(0, 2 * np.pi, 6001, endpoint=False)
    p = np.array([noon_detection_prob(NoonModel(6, x)) for x in phi])
    peaks = np.sum((p > np.roll(p, 1)) & (p >= np.roll(p, -1)))
    assert peaks == 6


@settings(max_examples=50)
@given(st.integers(1, 20), st.floats(-20, 20, allow_nan=False))
def test_noon_ports_complementary(n, phi):
    m = NoonModel(n, phi)
    assert noon_detection_prob(m, "plus") + noon_detection_prob(m, "minus") == pytest.approx(1.0)


def test_noon_validation():
    with pytest.raises(InvalidArgument):
        NoonModel(0)
    with pytest.raises(InvalidArgument):
        noon_detection_prob(NoonModel(2), "left")
    assert NoonModel(2, 2 * math.pi + 0.5).relative_phase == pytest.approx(0.5)
