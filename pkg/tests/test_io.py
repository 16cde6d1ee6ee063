import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superres.analysis import FringeCurve
from superres.experiments import (
    ScanRecord,
    SpaceDomainConfig,
    TimeDomainConfig,
    default_phi1_grid,
    run_time_domain,
)
from superres.io import (
    CURVE_HEADER,
    RECORD_HEADER,
    ConfigError,
    atomic_write,
    build_config,
    curve_to_csv,
    parse_config_text,
    read_curve,
    read_record,
    record_to_csv,
    write_record,
)


def test_headers_are_bit_exact():
    assert RECORD_HEADER == "phi1_deg,phi2_deg,channel_id,clicks,gates,t_offset_s"
    assert CURVE_HEADER == "phase_deg,counts,uncertainty"


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(finite, finite, st.integers(-1, 40), st.integers(0, 10**9), finite), min_size=1, max_size=30))
def test_record_round_trip_lossless(tmp_path_factory, rows):
    phi1, phi2, ch, clicks, t = map(np.array, zip(*rows))
    gates = clicks + 17
    rec = ScanRecord(phi1, phi2, ch, clicks, gates, t, metadata={"kind": "space", "x": [1.5, "inf"]})
    path = tmp_path_factory.mktemp("rt") / "scan.csv"
    write_record(rec, path)
    back = read_record(path)
    for col in ScanRecord.COLUMNS:
        assert np.array_equal(getattr(back, col), getattr(rec, col))
        assert getattr(back, col).dtype == getattr(rec, col).dtype
    assert back.metadata == rec.metadata
    assert path.read_text().splitlines()[0] == RECORD_HEADER


def test_simulated_record_round_trip(tmp_path):
    cfg = TimeDomainConfig(n_target=4, gates_per_setting=1000, phi1_grid=default_phi1_grid(3.0))
    rec = run_time_domain(cfg)
    write_record(rec, tmp_path / "scan.csv")
    back = read_record(tmp_path)
    assert record_to_csv(back) == record_to_csv(rec)
    assert back.metadata == rec.metadata


def test_read_record_rejects_wrong_header(tmp_path):
    p = tmp_path / "scan.csv"
    p.write_text("phi1,phi2,channel,clicks,gates,t\n")
    with pytest.raises(ValueError, match="header"):
        read_record(p)


def test_curve_round_trip(tmp_path):
    c = FringeCurve([0.0, 2.0, 4.0], [1.0, 1 / 3, 0.0], [1.0, 0.1, math.pi])
    atomic_write(tmp_path / "c.csv", curve_to_csv(c))
    back = read_curve(tmp_path / "c.csv")
    assert np.array_equal(back.value, c.value) and np.array_equal(back.uncertainty, c.uncertainty)
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == CURVE_HEADER


def test_atomic_write_leaves_no_partial_file(tmp_path):
    target = tmp_path / "out.csv"
    atomic_write(target, "old\n")

    with pytest.raises(TypeError):
        atomic_write(target, 12345)  # not text, fails mid-write
    assert target.read_text() == "old\n"
    assert [p.name for p in tmp_path.iterdir()] == ["out.csv"]


SPACE_CFG = """
# comment
[run]
seed = 7

[detector]
efficiency = 0.2   # inline comment
dark_click_prob = 1e-5

[scan]
phi1_step_deg = 1.0

[space]
mu_total = 12
pbs_extinction_db = 30, inf, 30
"""


def test_parse_space_config():
    cfg = build_config(parse_config_text(SPACE_CFG), "space")
    assert isinstance(cfg, SpaceDomainConfig)
    assert cfg.seed == 7 and cfg.mu_total == 12.0
    assert cfg.pbs_extinction_db == (30.0, math.inf, 30.0)
    assert len(cfg.phi1_grid) == 91


def test_parse_time_config_with_calibration():
    text = "[time]\nn_target = 6\ndetectors_used = one\ntarget_singles_rate_hz = 5e5\n[drift]\nkind = sinusoidal\n"
    cfg = build_config(parse_config_text(text), "time")
    assert isinstance(cfg, TimeDomainConfig)
    assert cfg.n_target == 6 and cfg.drift.kind == "sinusoidal"
    assert cfg.mu == pytest.approx(2.371, abs=2e-3)


@pytest.mark.parametrize(
    "text,kind,field,line",
    [
        ("[detector]\nefficency = 0.2\n", "space", "detector.efficency", 2),
        ("[run]\nseed = 1\n\n[detector]\nefficiency = 1.5\n", "space", "detector.efficiency", 5),
        ("[time]\nn_target = ten\n", "time", "time.n_target", 2),
        ("[lens]\nfocus = 1\n", "space", "lens", 1),
        ("[space]\nmu_total = 1\n", "time", "space", 1),
        ("[time]\nn_target = 5\ndetectors_used = two\n", "time", "time.n_target", 2),
    ],
)
def test_config_errors_name_field_and_line(text, kind, field, line):
    with pytest.raises(ConfigError) as err:
        build_config(parse_config_text(text), kind)
    assert err.value.field == field
    assert err.value.line == line


def test_duplicate_key_is_an_error():
    with pytest.raises(ConfigError) as err:
        parse_config_text("[run]\nseed = 1\nseed = 2\n")
    assert err.value.line == 3
