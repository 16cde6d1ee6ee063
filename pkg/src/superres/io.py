"""Config files, scan-record and curve CSVs, run manifests.

Every writer goes through :func:`atomic_write` so a failed run never leaves a
half-written file behind.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detection import DetectorParams
from .experiments import (
    DEFAULT_SEED,
    DriftModel,
    ScanRecord,
    SpaceDomainConfig,
    TimeDomainConfig,
    calibrate_mu,
    default_phi1_grid,
    mu_total_for_singles_rate,
)
from .optics import INF_DB, InvalidArgument

RECORD_HEADER = "phi1_deg,phi2_deg,channel_id,clicks,gates,t_offset_s"
CURVE_HEADER = "phase_deg,counts,uncertainty"


class ConfigError(InvalidArgument):
    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line

    def as_dict(self):
        return {"error": "validation", "field": self.field, "line": self.line, "message": str(self)}


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(x) -> str:
    # repr of a Python float round-trips exactly
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


# -- config ------------------------------------------------------------------------

_SCHEMA = {
    "run": {"seed": "int"},
    "detector": {"efficiency": "float", "dark_click_prob": "float", "gate_rate_hz": "float"},
    "scan": {
        "phi1_start_deg": "float",
        "phi1_stop_deg": "float",
        "phi1_step_deg": "float",
        "gates_per_setting": "int",
        "rotation_time_s": "float",
    },
    "space": {
        "mu_total": "float",
        "target_singles_rate_hz": "float",
        "arm_fractions": "floats",
        "arm_hwp_offsets_deg": "floats",
        "pbs_extinction_db": "floats",
        "pbs_axis_error_deg": "floats",
    },
    "time": {
        "n_target": "int",
        "detectors_used": "str",
        "mu": "float",
        "target_singles_rate_hz": "float",
        "pbs_extinction_db": "float",
    },
    "drift": {"kind": "str", "relative_amplitude": "float", "timescale_s": "float"},
}


def _line_index(text):
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    where = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), lineno)
            continue
        if "=" in line and section is not None:
            key = line.split("=", 1)[0].strip().lower()
            where.setdefault((section, key), lineno)
    return where


def _convert(kind, raw):
    if kind == "int":
        return int(raw.strip())
    if kind == "float":
        return float(raw.strip())
    if kind == "floats":
        vals = [float(v) for v in raw.split(",") if v.strip()]
        if not vals:
            raise ValueError("empty list")
        return vals[0] if len(vals) == 1 else vals
    return raw.strip()


def parse_config_text(text: str) -> dict:
    """Parse an INI-style config into ``{section: {key: value}}`` with strict key checking."""
    cp = configparser.ConfigParser(
        comment_prefixes=("#",), inline_comment_prefixes=("#",), interpolation=None, strict=True
    )
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc.message if hasattr(exc, 'message') else exc}",
                          line=getattr(exc, "lineno", None)) from None
    where = _line_index(text)
    out = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]", field=section, line=where.get((section, None)))
        out[section] = {}
        for key, raw in cp.items(section):
            line = where.get((section, key))
            field = f"{section}.{key}"
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {field!r}", field=field, line=line)
            try:
                out[section][key] = _convert(_SCHEMA[section][key], raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {field}: {raw!r} ({exc})", field=field, line=line) from None
    out["_lines"] = where
    return out


def _field_error(parsed, section, key, exc):
    line = parsed["_lines"].get((section, key)) or parsed["_lines"].get((section, None))
    return ConfigError(str(exc), field=f"{section}.{key}" if key else section, line=line)


def build_config(parsed: dict, kind: str):
    """Turn parsed sections into a :class:`SpaceDomainConfig` or :class:`TimeDomainConfig`."""
    other = "time" if kind == "space" else "space"
    if other in parsed:
        raise ConfigError(
            f"[{other}] section in a {kind}-domain config", field=other, line=parsed["_lines"].get((other, None))
        )
    if kind == "space" and "drift" in parsed:
        raise ConfigError("[drift] applies to time-domain runs only", field="drift",
                          line=parsed["_lines"].get(("drift", None)))

    def build(section, factory, **kw):
        try:
            return factory(**kw)
        except InvalidArgument as exc:
            key = next((k for k in parsed.get(section, {}) if k in str(exc)), None)
            raise _field_error(parsed, section, key, exc) from None
        except TypeError as exc:
            raise _field_error(parsed, section, None, exc) from None

    det = build("detector", DetectorParams, **parsed.get("detector", {}))
    scan = parsed.get("scan", {})
    start = scan.get("phi1_start_deg", 0.0)
    stop = scan.get("phi1_stop_deg", 90.0)
    step = scan.get("phi1_step_deg", 0.5)
    if not step > 0 or not stop >= start:
        raise _field_error(parsed, "scan", "phi1_step_deg", InvalidArgument("need phi1_step_deg > 0 and stop >= start"))
    grid = tuple(start + v for v in default_phi1_grid(step, stop - start))
    common = dict(
        detector=det,
        phi1_grid=grid,
        seed=parsed.get("run", {}).get("seed", DEFAULT_SEED),
    )
    for key in ("gates_per_setting", "rotation_time_s"):
        if key in scan:
            common[key] = scan[key]

    sect = parsed.get(kind, {})
    if "mu_total" in sect and "target_singles_rate_hz" in sect or "mu" in sect and "target_singles_rate_hz" in sect:
        raise _field_error(parsed, kind, "target_singles_rate_hz",
                           InvalidArgument("give either a mean photon number or target_singles_rate_hz"))
    if kind == "space":
        kw = dict(common)
        fractions = sect.get("arm_fractions", [0.5, 0.25, 0.25])
        kw["arm_fractions"] = fractions
        if "target_singles_rate_hz" in sect:
            try:
                kw["mu_total"] = mu_total_for_singles_rate(sect["target_singles_rate_hz"], det, fractions)
            except InvalidArgument as exc:
                raise _field_error(parsed, kind, "target_singles_rate_hz", exc) from None
        elif "mu_total" in sect:
            kw["mu_total"] = sect["mu_total"]
        for src, dst in (
            ("arm_hwp_offsets_deg", "arm_hwp_offsets"),
            ("pbs_extinction_db", "pbs_extinction_db"),
            ("pbs_axis_error_deg", "pbs_axis_error_deg"),
        ):
            if src in sect:
                kw[dst] = sect[src]
        return build(kind, SpaceDomainConfig, **kw)

    kw = dict(common)
    for key in ("n_target", "detectors_used", "pbs_extinction_db"):
        if key in sect:
            kw[key] = sect[key]
    if "target_singles_rate_hz" in sect:
        try:
            kw["mu"] = calibrate_mu(sect["target_singles_rate_hz"], det)
        except InvalidArgument as exc:
            raise _field_error(parsed, kind, "target_singles_rate_hz", exc) from None
    elif "mu" in sect:
        kw["mu"] = sect["mu"]
    if "drift" in parsed:
        kw["drift"] = build("drift", DriftModel, **parsed["drift"])
    return build(kind, TimeDomainConfig, **kw)


def load_config(path, kind: str):
    text = Path(path).read_text()
    return build_config(parse_config_text(text), kind)


# -- scan records ----------------------------------------------------------------------


def meta_path(record_path) -> Path:
    p = Path(record_path)
    return p.with_name(p.stem + ".meta.json")


def record_to_csv(record: ScanRecord) -> str:
    buf = io.StringIO()
    buf.write(RECORD_HEADER + "\n")
    for row in zip(
        record.phi1_deg.tolist(),
        record.phi2_deg.tolist(),
        record.channel_id.tolist(),
        record.clicks.tolist(),
        record.gates.tolist(),
        record.t_offset_s.tolist(),
    ):
        p1, p2, ch, k, g, t = row
        buf.write(f"{_num(p1)},{_num(p2)},{ch},{k},{g},{_num(t)}\n")
    return buf.getvalue()


def metadata_to_json(metadata: dict) -> str:
    return json.dumps(metadata, indent=2, sort_keys=True) + "\n"


def write_record(record: ScanRecord, path) -> list[Path]:
    path = Path(path)
    atomic_write(path, record_to_csv(record))
    atomic_write(meta_path(path), metadata_to_json(record.metadata))
    return [path, meta_path(path)]


def read_record(path) -> ScanRecord:
    path = Path(path)
    if path.is_dir():
        path = path / "scan.csv"
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or ",".join(header) != RECORD_HEADER:
            raise InvalidArgument(f"{path}: expected header {RECORD_HEADER!r}, got {header!r}")
        cols = [[] for _ in range(6)]
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 6:
                raise InvalidArgument(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
            try:
                vals = (float(row[0]), float(row[1]), int(row[2]), int(row[3]), int(row[4]), float(row[5]))
            except ValueError as exc:
                raise InvalidArgument(f"{path}:{lineno}: {exc}") from None
            for c, v in zip(cols, vals):
                c.append(v)
    mp = meta_path(path)
    metadata = json.loads(mp.read_text()) if mp.exists() else {}
    return ScanRecord(*[np.array(c) for c in cols], metadata=metadata)


def curve_to_csv(curve) -> str:
    buf = io.StringIO()
    buf.write(CURVE_HEADER + "\n")
    for x, y, e in zip(curve.phase_deg.tolist(), curve.value.tolist(), curve.uncertainty.tolist()):
        buf.write(f"{_num(x)},{_num(y)},{_num(e)}\n")
    return buf.getvalue()


def read_curve(path):
    from .analysis import FringeCurve

    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    with open(path) as fh:
        header = fh.readline().strip()
    if header != CURVE_HEADER:
        raise InvalidArgument(f"{path}: expected header {CURVE_HEADER!r}")
    return FringeCurve(data[:, 0], data[:, 1], data[:, 2])


@dataclass
class RunManifest:
    command: str
    config_path: str | None
    seed: int | None
    version: str
    outputs: list
    started: str
    finished: str

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2) + "\n"


def finite_or_str(x):
    return x if math.isfinite(x) else repr(x)


__all__ = [
    "CURVE_HEADER",
    "ConfigError",
    "INF_DB",
    "RECORD_HEADER",
    "RunManifest",
    "atomic_write",
    "build_config",
    "curve_to_csv",
    "load_config",
    "parse_config_text",
    "read_curve",
    "read_record",
    "record_to_csv",
    "write_record",
]
