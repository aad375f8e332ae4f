"""Command-line front end: ``neutron-chsh {scan,bell,calibrate,analyze}``.

Exit codes: 0 success (for ``bell``/``analyze``: violation, S - 2 > 3 sigma_S),
2 no violation, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import FitError, ScanData, fit_sinusoid, positions_for_bell_angles
from .beamline import energy_phase, gamma_period_mm, gamma_zero_displacement
from .config import AUTO, ConfigError, RunConfig, load_config
from .constants import TSIRELSON
from .counting import (BellRun, bell_run_from_records, run_bell_experiment, sample_counts,
                       thresholds_report)
from .ensemble import average_intensity, calibrate_spread_to_contrast, default_scan_positions, effective_contrast
from .svg import fringe_svg

EXIT_OK, EXIT_ERROR, EXIT_NO_VIOLATION = 0, 1, 2
VIOLATION_SIGMAS = 3.0
NOMINAL_SPREAD = 0.02
COUNTS_HEADER = ("alpha_rad", "gamma_rad", "repetition", "counts")
SCAN_HEADER = ("position_mm", "gamma_rad", "expected_counts", "sampled_counts")
MARKERS = (("π/4", math.pi / 4), ("3π/4", 3 * math.pi / 4), ("5π/4", 5 * math.pi / 4), ("7π/4", 7 * math.pi / 4))


class UsageError(ValueError):
    pass


def parse_angle(text: str) -> float:
    """Radians from ``'0.785'``, ``'0.785rad'`` or ``'45deg'``."""
    s = text.strip().lower()
    try:
        if s.endswith("deg"):
            return math.radians(float(s[:-3]))
        if s.endswith("rad"):
            s = s[:-3]
        return float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid angle {text!r}; use e.g. 1.57, 1.57rad or 90deg") from None


def parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid range {text!r}; expected LO:HI in mm") from None
    return lo, hi


def _num(x) -> str:
    """Deterministic text for a count or float."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) for v in row])


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out if args.out is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def resolve_spread(cfg: RunConfig) -> float:
    """Configured momentum spread, or the one calibrated to ``target_contrast``."""
    if cfg.fractional_spread != AUTO:
        return float(cfg.fractional_spread)
    return calibrate_spread_to_contrast(cfg.beamline(), cfg.target_contrast, cfg.distribution(0.0))


def resolve_contrast(cfg: RunConfig) -> float:
    if cfg.contrast != AUTO:
        return float(cfg.contrast)
    return effective_contrast(cfg.beamline(), cfg.distribution(resolve_spread(cfg)))


def _marker_positions(fit, lo: float, hi: float) -> list[tuple[str, float]]:
    out = []
    for label, g in MARKERS:
        x0 = positions_for_bell_angles(fit, [g])[0]
        k_lo, k_hi = math.ceil((lo - x0) / fit.period), math.floor((hi - x0) / fit.period)
        out += [(label, x0 + k * fit.period) for k in range(k_lo, k_hi + 1)]
    return sorted(out, key=lambda m: m[1])


def bell_report(run: BellRun, contrast: float | None, efficiency: float, extra: dict | None = None) -> dict:
    report = {
        "E": list(run.E),
        "sigma_E": list(run.sigma_E),
        "S": run.S,
        "sigma_S": run.sigma_S,
        "significance": run.significance,
        "violation": run.S - 2.0 > VIOLATION_SIGMAS * run.sigma_S,
        "angles": list(run.angles),
        "repetitions": run.repetitions,
        "reference_ideal": TSIRELSON,
    }
    if contrast is not None:
        report["contrast"] = contrast
        report["reference_contrast_scaled"] = contrast * TSIRELSON
        report["thresholds"] = thresholds_report(contrast, efficiency).to_dict()
    else:
        report["contrast"] = None
        report["thresholds"] = None
    report.update(extra or {})
    return report


def summary_lines(report: dict) -> list[str]:
    lines = [f"E{k + 1} = {e:+.4f} ± {s:.4f}" for k, (e, s) in enumerate(zip(report["E"], report["sigma_E"]))]
    lines.append(f"S = {report['S']:.4f} ± {report['sigma_S']:.4f}  (S - 2)/σ_S = {report['significance']:.1f}")
    return lines


def _print_bell(report: dict) -> None:
    for line in summary_lines(report):
        print(line)
    if report.get("thresholds"):
        for w in report["thresholds"]["warnings"]:
            print(f"warning: {w}", file=sys.stderr)


def _exit_for(report: dict) -> int:
    return EXIT_OK if report["violation"] else EXIT_NO_VIOLATION


# --------------------------------------------------------------------------- subcommands


def cmd_scan(args) -> int:
    cfg = _resolve_config(args)
    if args.points < 8:
        raise UsageError(f"--points must be at least 8, got {args.points}")
    beam = cfg.beamline()
    dist = cfg.distribution(resolve_spread(cfg))
    travel = cfg.stage_travel_mm
    if args.range is None:
        positions = default_scan_positions(beam, points=args.points)
    else:
        lo, hi = args.range
        if not lo < hi:
            raise UsageError(f"scan range must have LO < HI, got {lo}:{hi}")
        if lo < -travel or hi > travel:
            raise UsageError(f"scan range {lo}:{hi} mm exceeds the stage travel ±{travel} mm")
        positions = np.linspace(lo, hi, args.points)

    alpha = args.alpha
    expected = np.array([cfg.peak_counts * average_intensity(beam, dist, alpha / 2, 1e-3 * p) + cfg.background
                         for p in positions])
    if args.no_noise:
        sampled = expected.copy()
    else:
        sampled = np.array([sample_counts(m, [cfg.seed, 3, k]) for k, m in enumerate(expected)])
    gammas = [energy_phase(beam, 1e-3 * p) for p in positions]

    out = _out_dir(args, cfg)
    _write_csv(out / "scan.csv", SCAN_HEADER,
               [(p, g, e, int(s) if not args.no_noise else s)
                for p, g, e, s in zip(positions, gammas, expected, sampled)])
    fit = fit_sinusoid(ScanData(positions, sampled, alpha_setting=alpha))
    summary = {
        "alpha_rad": alpha,
        "fit": fit.to_dict(),
        "fractional_spread": dist.fractional_spread,
        "points": int(args.points),
        "predicted_period_mm": gamma_period_mm(beam),
        "gamma_zero_mm": 1e3 * gamma_zero_displacement(beam),
        "seed": cfg.seed,
        "noise": not args.no_noise,
    }
    _write_json(out / "scan_fit.json", summary)
    markers = _marker_positions(fit, positions[0], positions[-1])
    svg = fringe_svg(positions, sampled, fit.model, markers,
                     title=f"γ-scan, α = {alpha:.4f} rad, contrast {fit.contrast:.3f}")
    (out / "scan.svg").write_text(svg, encoding="utf-8")
    print(f"contrast = {fit.contrast:.4f} ± {fit.contrast_err:.4f}")
    print(f"period   = {fit.period:.3f} ± {fit.errors['period']:.3f} mm (predicted {gamma_period_mm(beam):.3f} mm)")
    print(f"wrote {out / 'scan.csv'}, {out / 'scan.svg'}, {out / 'scan_fit.json'}")
    return EXIT_OK


def cmd_bell(args) -> int:
    cfg = _resolve_config(args)
    if args.contrast is not None:
        cfg = replace(cfg, contrast=args.contrast)
    noise = not args.no_noise
    if cfg.bell_source == "beamline":
        beam = cfg.beamline()
        dist = cfg.distribution(resolve_spread(cfg))
        run = run_bell_experiment(beam, dist, cfg.rate_model(cfg.target_contrast), cfg.angles,
                                  cfg.repetitions, cfg.seed, noise)
        contrast = run.contrast
    else:
        contrast = resolve_contrast(cfg)
        run = run_bell_experiment(None, None, cfg.rate_model(contrast), cfg.angles, cfg.repetitions,
                                  cfg.seed, noise)
    offsets = {repr(k): v for k, v in sorted(run.alpha_offsets.items())}
    report = bell_report(run, contrast, cfg.detector_efficiency, {
        "seed": cfg.seed,
        "noise": noise,
        "peak_counts": cfg.peak_counts,
        "source": cfg.bell_source,
        "alpha_offsets": offsets,
    })
    out = _out_dir(args, cfg)
    _write_csv(out / "counts.csv", COUNTS_HEADER, run.records)
    _write_json(out / "report.json", report)
    _print_bell(report)
    print(f"wrote {out / 'counts.csv'}, {out / 'report.json'}")
    return _exit_for(report)


def cmd_calibrate(args) -> int:
    cfg = _resolve_config(args)
    target = cfg.target_contrast if args.target is None else args.target
    if not 0 < target <= 1:
        raise ValueError(f"target contrast must lie in (0, 1], got {target}")
    beam = cfg.beamline()
    spread = calibrate_spread_to_contrast(beam, target, cfg.distribution(0.0))
    check = effective_contrast(beam, cfg.distribution(spread))
    out = _out_dir(args, cfg)
    fragment = f"[source]\nfractional_spread = {spread!r}\ntarget_contrast = {target!r}\n"
    (out / "calibration.ini").write_text(fragment, encoding="utf-8")
    print(f"fractional spread (FWHM) = {spread:.5f}  ({100 * spread:.3f} %, nominal ~{100 * NOMINAL_SPREAD:.0f} %)")
    print(f"re-run check: contrast {check:.4f} (target {target:.4f})")
    print(f"wrote {out / 'calibration.ini'}")
    return EXIT_OK


def read_counts_csv(path: str | Path) -> list[tuple]:
    """Rows ``(alpha, gamma, repetition, counts)``; the repetition column is optional."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip() for f in (reader.fieldnames or [])]
        missing = {"alpha_rad", "gamma_rad", "counts"} - set(fields)
        if missing:
            raise ValueError(f"count CSV schema violation: missing column(s) {sorted(missing)}")
        records = []
        for line, row in enumerate(reader, start=2):
            row = {k.strip(): v for k, v in row.items() if k is not None}
            try:
                raw = row["counts"].strip()
                counts = int(raw) if raw.lstrip("+-").isdigit() else float(raw)
                rep = int(row["repetition"]) if row.get("repetition", "").strip() else 0
                records.append((float(row["alpha_rad"]), float(row["gamma_rad"]), rep, counts))
            except (ValueError, AttributeError) as exc:
                raise ValueError(f"count CSV schema violation on line {line}: {exc}") from None
            if counts < 0:
                raise ValueError(f"count CSV line {line}: negative counts")
    return records


def cmd_analyze(args) -> int:
    cfg = _resolve_config(args)
    run = bell_run_from_records(read_counts_csv(args.csv))
    report = bell_report(run, None, cfg.detector_efficiency, {"input": str(args.csv)})
    out = _out_dir(args, cfg)
    _write_json(out / "analysis.json", report)
    _print_bell(report)
    print(f"wrote {out / 'analysis.json'}")
    return _exit_for(report)


# --------------------------------------------------------------------------- argument parsing


def _common(suppress: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", metavar="PATH", default=default, help="INI run configuration")
    p.add_argument("--seed", type=int, metavar="U64", default=default, help="override [output] seed")
    p.add_argument("--out", metavar="DIR", default=default, help="override [output] directory")
    p.add_argument("--no-noise", action="store_true", default=default,
                   help="expected counts, no Poisson noise or systematic offsets")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neutron-chsh", parents=[_common(False)],
                                     description="Spin-energy CHSH test with a neutron polarimeter.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    # subcommand copies use SUPPRESS so they only override when given
    common = _common(True)

    p = sub.add_parser("scan", parents=[common], help="gamma-scan with fit and SVG plot")
    p.add_argument("--alpha", type=parse_angle, default=0.0, help="spin phase (rad, or e.g. 90deg)")
    p.add_argument("--range", type=parse_range, default=None, metavar="LO:HI",
                   help="stage range in mm (default: two periods about the gamma zero)")
    p.add_argument("--points", type=int, default=48)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("bell", parents=[common], help="16-setting CHSH run")
    p.add_argument("--contrast", type=float, default=None, help="force the fringe contrast")
    p.set_defaults(func=cmd_bell)

    p = sub.add_parser("calibrate", parents=[common], help="momentum spread for a target contrast")
    p.add_argument("--target", type=float, default=None, help="target contrast (default from config)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("analyze", parents=[common], help="E and S from a count CSV")
    p.add_argument("csv", help="CSV with columns alpha_rad, gamma_rad, [repetition,] counts")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 2 is reserved for "no violation"
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        return args.func(args)
    except (ConfigError, UsageError, FitError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
