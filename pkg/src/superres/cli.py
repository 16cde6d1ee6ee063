"""``superres`` command line: simulate, analyze, verify.

Exit codes: 0 success, 1 validation error, 2 runtime or numerical failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    IndeterminateFringeCount,
    count_fringes,
    curve_from_counts,
    fit_fringe,
    multiply_channels,
    visibility_per_peak,
)
from .experiments import COINCIDENCE, DEFAULT_SEED, ScanRecord, run_space_domain, run_time_domain, with_seed
from .io import ConfigError, RunManifest, atomic_write, curve_to_csv, load_config, read_record, write_record
from .optics import InvalidArgument, fringe_phase
from .verify import SUITES, run_suite

OUT_DIR_ENV = "SUPERRES_OUT_DIR"

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("superres")


class _Parser(argparse.ArgumentParser):
    # usage mistakes are validation errors, 2 is reserved for runtime failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="superres", description="Phase super-resolution with coherent light.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--quiet", action="store_true", help="only print results and errors")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run a simulated scan and write its data files")
    sim.add_argument("kind", choices=["space", "time"])
    sim.add_argument("--config", required=True, help="INI config file")
    sim.add_argument("--out", help=f"output directory (default ${OUT_DIR_ENV} or runs/<kind>)")
    sim.add_argument("--seed", type=_seed, help=f"override the config seed (default {DEFAULT_SEED})")
    sim.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    an = sub.add_parser("analyze", help="fit a recorded scan and tabulate per-peak visibility")
    an.add_argument("record", help="scan.csv or the run directory holding it")
    an.add_argument("--out", help="where to write fit.json and visibility.csv (default: next to the record)")
    an.add_argument("--n", type=int, help="fringe multiplicity to fit (default: counted from the curve)")
    an.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    ver = sub.add_parser("verify", help="run an invariant suite")
    ver.add_argument("suite_pos", nargs="?", choices=sorted(SUITES), metavar="suite")
    ver.add_argument("--suite", choices=sorted(SUITES))
    ver.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    return p


def _resolve_out(arg, default) -> Path:
    if arg:
        return Path(arg)
    env = os.environ.get(OUT_DIR_ENV)
    return Path(env) if env else Path(default)


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _curve_files(record: ScanRecord) -> dict:
    """Curve CSV texts keyed by file name."""
    files = {}
    if record.kind == "space":
        for phi2, ch in record.keys():
            if ch == COINCIDENCE:
                continue
            phi1, clicks, _, _ = record.series(phi2, ch)
            files[f"channel_{ch}.csv"] = curve_to_csv(curve_from_counts(fringe_phase(phi1), clicks))
    if any(ch == COINCIDENCE for _, ch in record.keys()):
        files["coincidence.csv"] = curve_to_csv(multiply_channels(record, "coincidence"))
    files["product.csv"] = curve_to_csv(multiply_channels(record, "singles"))
    return files


def cmd_simulate(args) -> int:
    started = _now()
    config = load_config(args.config, args.kind)
    if args.seed is not None:
        config = with_seed(config, args.seed)
    out = _resolve_out(args.out, Path("runs") / args.kind)
    log.info("simulating %s-domain scan, seed %d -> %s", args.kind, config.seed, out)
    record = run_space_domain(config) if args.kind == "space" else run_time_domain(config)
    files = _curve_files(record)
    # all computation is done before the first write
    written = write_record(record, out / "scan.csv")
    for name, text in files.items():
        atomic_write(out / name, text)
        written.append(out / name)
    manifest = RunManifest(
        command=f"simulate {args.kind}",
        config_path=str(args.config),
        seed=int(config.seed),
        version=__version__,
        outputs=[p.name for p in written],
        started=started,
        finished=_now(),
    )
    atomic_write(out / "manifest.json", manifest.to_json())
    log.info("wrote %d files, simulated wall-clock %.1f h", len(written) + 1, record.total_time_s() / 3600)
    return EXIT_OK


def _dark_prob(record: ScanRecord) -> float:
    return float(record.metadata.get("config", {}).get("detector", {}).get("dark_click_prob", 0.0))


def cmd_analyze(args) -> int:
    started = _now()
    path = Path(args.record)
    record = read_record(path)
    record.check_complete()
    curve = multiply_channels(record, "singles")
    if args.n is not None:
        n = args.n
    else:
        try:
            n = count_fringes(curve)
        except IndeterminateFringeCount as exc:
            raise InvalidArgument(f"cannot determine fringe multiplicity: {exc}; pass --n") from None
    fit = fit_fringe(curve, n)
    raw = visibility_per_peak(curve)
    dark = _dark_prob(record)
    sub = visibility_per_peak(multiply_channels(record, "singles", dark_click_prob=dark)) if dark else raw
    fit_sub = fit_fringe(multiply_channels(record, "singles", dark_click_prob=dark), n) if dark else fit

    out = Path(args.out) if args.out else (path if path.is_dir() else path.parent)
    report = {
        "record": str(path),
        "fringes_counted": n,
        "fit": {
            "amplitude": fit.amplitude,
            "visibility": fit.visibility,
            "multiplicity": fit.multiplicity,
            "phase_offset_deg": fit.phase_offset_deg,
            "residual_rms": fit.residual_rms,
            "chi2_reduced": fit.chi2_reduced,
            "units": curve.units,
        },
        "fit_dark_subtracted_visibility": fit_sub.visibility,
        "dark_click_prob": dark,
        "peaks": len(raw),
        "visibility_peaks_min": min((v for _, v in raw), default=None),
        "visibility_peaks_max": max((v for _, v in raw), default=None),
    }
    rows = ["background,peak_phase_deg,visibility"]
    rows += [f"raw,{repr(float(x))},{repr(float(v))}" for x, v in raw]
    rows += [f"dark_subtracted,{repr(float(x))},{repr(float(v))}" for x, v in sub]
    atomic_write(out / "fit.json", json.dumps(report, indent=2) + "\n")
    atomic_write(out / "visibility.csv", "\n".join(rows) + "\n")
    atomic_write(
        out / "analysis_manifest.json",
        RunManifest("analyze", None, record.metadata.get("seed"), __version__,
                    ["fit.json", "visibility.csv"], started, _now()).to_json(),
    )
    lo = min((v for _, v in raw), default=float("nan"))
    hi = max((v for _, v in raw), default=float("nan"))
    print(f"n={n} V_fit={fit.visibility:.6f} V_peaks=[{lo:.4f},{hi:.4f}]")
    return EXIT_OK


def cmd_verify(args) -> int:
    suite = args.suite or args.suite_pos
    if suite is None:
        raise InvalidArgument(f"name a suite: one of {', '.join(sorted(SUITES))}")
    checks = run_suite(suite)
    for c in checks:
        print(c.line())
    ok = all(c.passed for c in checks)
    print(f"{'PASS' if ok else 'FAIL'} suite={suite} checks={len(checks)}")
    return EXIT_OK if ok else EXIT_VERIFY


def _report_error(kind, exc):
    info = exc.as_dict() if isinstance(exc, ConfigError) else {"error": kind, "message": str(exc)}
    print(json.dumps(info), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr
    )
    handler = {"simulate": cmd_simulate, "analyze": cmd_analyze, "verify": cmd_verify}[args.command]
    try:
        return handler(args)
    except (InvalidArgument, FileNotFoundError, IsADirectoryError) as exc:
        _report_error("validation", exc)
        return EXIT_VALIDATION
    except (ArithmeticError, OSError, RuntimeError) as exc:
        _report_error("runtime", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
