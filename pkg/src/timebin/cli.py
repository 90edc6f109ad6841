"""Command-line driver: ``timebin <command> [--spec FILE] [--out DIR] [--seed N]``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error
(including fit convergence failures).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import shutil
import sys
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__
from .analysis import FitResult, WindowEstimate, estimate_window, fit_fringe, subtract_accidentals
from .events import CountRecord, delay_scan, scan_phase, simulate_point, write_events
from .optics import ConfigError, classify_regimes
from .specfile import ExperimentSpec, SpecError, bundled_spec, load_spec

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

CSV_FIELDS = ("scan_value", "duration_s", "singles_A", "singles_B", "coinc_raw")
CSV_CORR_FIELDS = ("coinc_corr", "corr_flag")


class UsageError(Exception):
    pass


def _q(x: float) -> float:
    """Round to the 9 significant digits stored in records.csv."""
    return float(f"{x:.8e}")


def quantize(record: CountRecord) -> CountRecord:
    corr = None if record.coincidences_corr is None else _q(record.coincidences_corr)
    return replace(record, scan_value=_q(record.scan_value), duration=_q(record.duration), coincidences_corr=corr)


def format_records(records) -> str:
    corrected = any(r.corrected for r in records)
    header = CSV_FIELDS + (CSV_CORR_FIELDS if corrected else ())
    lines = [",".join(header)]
    for r in records:
        row = [f"{r.scan_value:.8e}", f"{r.duration:.8e}", str(r.singles_A), str(r.singles_B), str(r.coincidences_raw)]
        if corrected:
            row += [f"{r.coincidences:.8e}", str(int(r.corr_flag))]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def read_records(path) -> list[CountRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [f for f in CSV_FIELDS if f not in (reader.fieldnames or [])]
        if missing:
            raise SpecError(f"{path}: missing column(s) {', '.join(missing)}")
        out = []
        for row in reader:
            corr = row.get("coinc_corr")
            out.append(CountRecord(
                scan_value=float(row["scan_value"]),
                duration=float(row["duration_s"]),
                singles_A=int(row["singles_A"]),
                singles_B=int(row["singles_B"]),
                coincidences_raw=int(row["coinc_raw"]),
                coincidences_corr=float(corr) if corr not in (None, "") else None,
                corr_flag=bool(int(row.get("corr_flag") or 0)),
            ))
    return out


def config_hash(spec: ExperimentSpec) -> str:
    return hashlib.sha256(spec.to_text().encode()).hexdigest()


def manifest_text(spec: ExperimentSpec, command: str) -> str:
    manifest = {
        "tool": "timebin",
        "version": __version__,
        "command": command,
        "seed": spec.scan.seed,
        "config_hash": config_hash(spec),
        "spec_text": spec.to_text(),
    }
    return json.dumps(manifest, indent=2, sort_keys=True) + "\n"


@contextmanager
def staged_output(out_dir):
    """Collect files in a staging directory and move them into ``out_dir`` on success.

    On failure the staging directory is removed and ``out_dir`` is untouched.
    """
    files: dict[str, str] = {}
    yield files
    if out_dir is None:
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    try:
        for name, text in files.items():
            (stage / name).write_text(text)
        for name in files:
            os.replace(stage / name, out / name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)


@dataclass
class RunResult:
    spec: ExperimentSpec
    records: list[CountRecord]
    fit: FitResult | None = None
    fit_raw: FitResult | None = None
    window: WindowEstimate | None = None
    files: dict[str, str] = field(default_factory=dict)

    def summary(self) -> str:
        lines = [f"run = {self.spec.name or 'spec'}", f"points = {len(self.records)}"]
        if self.fit_raw is not None:
            lines += [f"raw.{ln}" for ln in self.fit_raw.format_block().splitlines()]
        if self.fit is not None:
            prefix = "corrected." if self.fit_raw is not None else ""
            lines += [f"{prefix}{ln}" for ln in self.fit.format_block().splitlines()]
        if self.window is not None:
            lines += [f"{k} = {v!r}" for k, v in self.window.to_dict().items()]
        return "\n".join(lines) + "\n"


def run(spec: ExperimentSpec, out_dir=None, max_workers=None) -> RunResult:
    """Simulate the spec's scan, analyse it and (optionally) write the artifacts.

    Files: ``records.csv``, ``fit.json`` (plus ``fit_raw.json`` when
    accidentals are subtracted) or ``window.json`` for delay scans,
    ``regimes.txt`` and ``manifest.json``.
    """
    cfg, scan, ana = spec.config, spec.scan, spec.analysis
    result = RunResult(spec=spec, records=[])
    with staged_output(out_dir) as files:
        if scan.kind == "phase":
            records = scan_phase(cfg, scan.values, scan.duration_per_point, scan.seed, max_workers)
        else:
            records = delay_scan(cfg, scan.values, scan.duration_per_point, scan.seed,
                                 total_phase_Phi=scan.total_phase, max_workers=max_workers)
        records = [quantize(r) for r in records]
        if ana.subtract:
            if ana.fit and scan.kind == "phase":
                result.fit_raw = fit_fringe(records, ana.piezo_voltage_sigma)
                files["fit_raw.json"] = result.fit_raw.to_json()
            records = [quantize(r) for r in subtract_accidentals(records, cfg.coincidence_window)]
        result.records = records
        files["records.csv"] = format_records(records)
        if scan.kind == "phase" and ana.fit:
            result.fit = fit_fringe(records, ana.piezo_voltage_sigma)
            files["fit.json"] = result.fit.to_json()
        if scan.kind == "delay":
            result.window = estimate_window(records)
            files["window.json"] = json.dumps(result.window.to_dict(), indent=2, sort_keys=True) + "\n"
        files["regimes.txt"] = "\n".join(classify_regimes(cfg).lines()) + "\n"
        files["manifest.json"] = manifest_text(spec, f"{scan.kind}-scan")
        result.files = dict(files)
    return result


# measured values (with their quoted uncertainty) and the tolerance each rerun is held to
TARGETS = {
    "short_window_V": (0.916, 0.027, 0.03),
    "long_window_raw_V": (0.664, 0.008, 0.02),
    "long_window_corrected_V": (0.949, 0.005, 0.02),
    "window_ns": (21.5, None, 1.0),
    "baseline_per_s": (1600.0, None, 3 * math.sqrt(1600.0)),
}


@dataclass
class ReproduceRow:
    name: str
    value: float
    sigma: float
    target: float
    target_sigma: float | None
    tolerance: float

    @property
    def passed(self) -> bool:
        return abs(self.value - self.target) <= self.tolerance

    def format(self) -> str:
        ps = f" +- {self.target_sigma:g}" if self.target_sigma is not None else ""
        return (f"{self.name:<22} {self.value:>10.4f} +- {self.sigma:<8.4f} "
                f"target {self.target:g}{ps:<9} tol {self.tolerance:<7.3g} {'PASS' if self.passed else 'FAIL'}")


def reproduce(out_dir=None, seed=None, max_workers=None) -> list[ReproduceRow]:
    """Run the three fringe measurements and the window scan from the bundled specs."""
    specs = {name: bundled_spec(name) for name in ("swap_short_window", "swap_long_window", "delay_window")}
    if seed is not None:
        specs = {k: s.with_seed(seed) for k, s in specs.items()}
    sub = (lambda name: Path(out_dir) / name) if out_dir is not None else (lambda name: None)

    r_short = run(specs["swap_short_window"], sub("swap_short_window"), max_workers)
    r_long = run(specs["swap_long_window"], sub("swap_long_window"), max_workers)
    r_delay = run(specs["delay_window"], sub("delay_window"), max_workers)

    def row(name, value, sigma):
        target, target_sigma, tol = TARGETS[name]
        return ReproduceRow(name, value, sigma, target, target_sigma, tol)

    rows = [
        row("short_window_V", r_short.fit.V, r_short.fit.sigma_V),
        row("long_window_raw_V", r_long.fit_raw.V, r_long.fit_raw.sigma_V),
        row("long_window_corrected_V", r_long.fit.V, r_long.fit.sigma_V),
        row("window_ns", r_delay.window.window * 1e9, r_delay.window.sigma_window * 1e9),
        row("baseline_per_s", r_delay.window.baseline, r_delay.window.sigma_baseline),
    ]
    if out_dir is not None:
        with staged_output(out_dir) as files:
            files["report.txt"] = "\n".join(r.format() for r in rows) + "\n"
    return rows


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="override the spec seed (unsigned 64-bit)")
    common.add_argument("--format", choices=["csv"], default="csv", help="record format")
    common.add_argument("--workers", type=int, default=None, help="threads for scan points")

    p = _Parser(prog="timebin", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"timebin {__version__}")
    sp = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sp.add_parser("simulate", parents=[common], help="one acquisition; writes time tags and counts")
    s.add_argument("--spec", required=True)
    s.add_argument("--phase", type=float, default=None, help="total phase in rad (default: scan.total_phase)")
    s.add_argument("--duration", type=float, default=None, help="seconds (default: scan.duration_per_point)")

    for name, text in (("scan", "piezo phase scan with fringe fit"), ("delay-scan", "delay scan with window estimate")):
        s = sp.add_parser(name, parents=[common], help=text)
        s.add_argument("--spec", required=True)

    s = sp.add_parser("fit", parents=[common], help="fit a fringe to records.csv")
    s.add_argument("--records", required=True)
    s.add_argument("--piezo-sigma", type=float, default=0.0, help="piezo voltage uncertainty, V")

    s = sp.add_parser("correct", parents=[common], help="subtract accidentals from records.csv")
    s.add_argument("--records", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--window", type=float, help="coincidence window, s")
    g.add_argument("--spec", help="take the window from this spec")

    s = sp.add_parser("regimes", parents=[common], help="timing-condition report")
    s.add_argument("--spec", required=True)

    sp.add_parser("reproduce", parents=[common], help="rerun the bundled measurement scenarios")
    return p


def _spec(args) -> ExperimentSpec:
    spec = load_spec(args.spec)
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    return spec


def _cmd_simulate(args):
    spec = _spec(args)
    phase = spec.scan.total_phase if args.phase is None else args.phase
    duration = spec.scan.duration_per_point if args.duration is None else args.duration
    a, b, rec = simulate_point(spec.config, phase, duration, spec.scan.seed)
    rec = quantize(rec)
    print(format_records([rec]), end="")
    if args.out:
        out = Path(args.out)
        with staged_output(out) as files:
            files["records.csv"] = format_records([rec])
            files["manifest.json"] = manifest_text(spec, "simulate")
        write_events(out / "events.txt", a, b)


def _cmd_scan(args, kind):
    spec = _spec(args)
    if spec.scan.kind != kind:
        raise UsageError(f"spec {args.spec} describes a {spec.scan.kind} scan, not a {kind} scan")
    result = run(spec, args.out, args.workers)
    print(result.summary(), end="")


def _cmd_fit(args):
    records = read_records(args.records)
    fit = fit_fringe(records, args.piezo_sigma)
    print(fit.format_block(), end="")
    if args.out:
        with staged_output(args.out) as files:
            files["fit.json"] = fit.to_json()


def _cmd_correct(args):
    window = args.window if args.window is not None else load_spec(args.spec).config.coincidence_window
    if window < 0:
        raise SpecError(f"window must be nonnegative, got {window}")
    records = [quantize(r) for r in subtract_accidentals(read_records(args.records), window)]
    text = format_records(records)
    if args.out:
        with staged_output(args.out) as files:
            files["records.csv"] = text
    else:
        print(text, end="")


def _cmd_regimes(args):
    print("\n".join(classify_regimes(_spec(args).config).lines()))


def _cmd_reproduce(args):
    rows = reproduce(args.out, args.seed, args.workers)
    for r in rows:
        print(r.format())
    if not all(r.passed for r in rows):
        failed = ", ".join(r.name for r in rows if not r.passed)
        raise RuntimeError(f"scenarios outside tolerance: {failed}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handlers = {
            "simulate": _cmd_simulate,
            "scan": lambda a: _cmd_scan(a, "phase"),
            "delay-scan": lambda a: _cmd_scan(a, "delay"),
            "fit": _cmd_fit,
            "correct": _cmd_correct,
            "regimes": _cmd_regimes,
            "reproduce": _cmd_reproduce,
        }
        handlers[args.command](args)
    except (UsageError, SpecError, ConfigError) as exc:
        print(f"timebin: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        print(f"timebin: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
