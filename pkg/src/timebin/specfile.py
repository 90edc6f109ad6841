"""Experiment spec files: flat ``namespace.key = value`` lines.

Values are numbers (optionally followed by a unit), ``true``/``false``,
bare or quoted words, or bracketed lists of numbers.  ``#`` starts a comment.
Every key has an SI unit; a value may carry any unit of the same dimension
(``1.5 ns``, ``120 cm``) and is converted on load.  See the README for the
full key table.
"""
from __future__ import annotations

import ast
import dataclasses
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .optics import ConfigError, InterferometerConfig


class SpecError(ValueError):
    """Load failure naming the key, its line and the violated constraint."""

    def __init__(self, message, key=None, line=None):
        where = f"line {line}: " if line else ""
        what = f"{key}: " if key else ""
        super().__init__(f"{where}{what}{message}")
        self.key = key
        self.line = line


_UNITS = {
    "s": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9, "ps": 1e-12, "fs": 1e-15},
    "m": {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9},
    "1/s": {"1/s": 1.0, "Hz": 1.0, "cps": 1.0, "kHz": 1e3, "MHz": 1e6},
    "rad": {"rad": 1.0, "deg": np.pi / 180},
    "V": {"V": 1.0, "mV": 1e-3},
    "rad/V": {"rad/V": 1.0},
    "1": {},
}

# key -> (unit, default); default None means required
CONFIG_KEYS = {
    "geometry": ("str", None),
    "arm_short_s": ("m", 0.0),
    "arm_long_l": ("m", 0.6),
    "bs_reflectivity_R": ("1", 0.5),
    "phase_A": ("rad", 0.0),
    "phase_B": ("rad", 0.0),
    "piezo_gain": ("rad/V", 0.5),
    "piezo_offset": ("rad", 0.0),
    "piezo_voltage_jitter": ("V", 0.0),
    "pump_coherence_time": ("s", 1e-7),
    "single_photon_coherence_time": ("s", 1e-13),
    "coincidence_window": ("s", 1.5e-9),
    "pair_rate": ("1/s", 1e4),
    "background_singles_A": ("1/s", 0.0),
    "background_singles_B": ("1/s", 0.0),
    "detection_efficiency_A": ("1", 1.0),
    "detection_efficiency_B": ("1", 1.0),
    "mode_match_visibility": ("1", 1.0),
}
SCAN_KEYS = {
    "kind": ("str", "phase"),
    "values": ("list", None),
    "start": ("scan", None),
    "stop": ("scan", None),
    "points": ("int", None),
    "duration_per_point": ("s", 1.0),
    "seed": ("int", 0),
    "total_phase": ("rad", 0.0),
}
ANALYSIS_KEYS = {
    "fit": ("bool", True),
    "subtract": ("bool", False),
    "piezo_voltage_sigma": ("V", 0.0),
}
SCHEMA = {"config": CONFIG_KEYS, "scan": SCAN_KEYS, "analysis": ANALYSIS_KEYS}


@dataclass(frozen=True)
class ScanSpec:
    kind: str
    values: tuple[float, ...]
    duration_per_point: float
    seed: int
    total_phase: float = 0.0


@dataclass(frozen=True)
class AnalysisSpec:
    fit: bool = True
    subtract: bool = False
    piezo_voltage_sigma: float = 0.0


@dataclass(frozen=True)
class ExperimentSpec:
    config: InterferometerConfig
    scan: ScanSpec
    analysis: AnalysisSpec
    name: str = ""

    def with_seed(self, seed: int) -> "ExperimentSpec":
        return dataclasses.replace(self, scan=dataclasses.replace(self.scan, seed=int(seed)))

    def to_text(self) -> str:
        """Canonical spec text; :func:`parse_spec` of it gives back an equal spec."""
        lines = []
        for name in CONFIG_KEYS:
            v = getattr(self.config, name)
            lines.append(f"config.{name} = {v if name == 'geometry' else repr(float(v))}")
        lines.append(f"scan.kind = {self.scan.kind}")
        lines.append("scan.values = [" + ", ".join(repr(float(v)) for v in self.scan.values) + "]")
        lines.append(f"scan.duration_per_point = {self.scan.duration_per_point!r}")
        lines.append(f"scan.seed = {self.scan.seed}")
        lines.append(f"scan.total_phase = {self.scan.total_phase!r}")
        lines.append(f"analysis.fit = {str(self.analysis.fit).lower()}")
        lines.append(f"analysis.subtract = {str(self.analysis.subtract).lower()}")
        lines.append(f"analysis.piezo_voltage_sigma = {self.analysis.piezo_voltage_sigma!r}")
        return "\n".join(lines) + "\n"


_LINE = re.compile(r"^\s*([A-Za-z_][\w]*(?:\.[A-Za-z_][\w]*)+)\s*=\s*(.*?)\s*$")
_NUM_UNIT = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf)\s*(\S*)$")


def _strip_comment(text: str) -> str:
    quote = None
    for i, ch in enumerate(text):
        if ch in "\"'":
            quote = None if quote == ch else (quote or ch)
        elif ch == "#" and quote is None:
            return text[:i]
    return text


def _scaled(value: float, factor: float) -> float:
    # 15 significant digits drop the rounding residue of the unit factor
    return value if factor == 1.0 else float(f"{value * factor:.15g}")


def _number(raw: str, unit: str, key: str, line: int) -> float:
    m = _NUM_UNIT.match(raw)
    if not m:
        raise SpecError(f"expected a number, got {raw!r}", key, line)
    value = float(m.group(1))
    given = m.group(2)
    if not given:
        return value
    table = _UNITS.get(unit, {})
    if given not in table:
        expect = unit if unit != "1" else "dimensionless"
        raise SpecError(f"unit violation: {given!r} is not a unit of {expect}", key, line)
    return _scaled(value, table[given])


def _parse_value(raw: str, unit: str, key: str, line: int):
    if unit == "str":
        return raw.strip("\"'")
    if unit == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise SpecError(f"expected true/false, got {raw!r}", key, line)
    if unit == "int":
        try:
            return int(raw)
        except ValueError:
            raise SpecError(f"expected an integer, got {raw!r}", key, line) from None
    if unit in ("list", "scan"):
        if unit == "list":
            m = re.match(r"^(\[.*\])\s*(\S*)$", raw)
            if not m:
                raise SpecError(f"expected a bracketed list, got {raw!r}", key, line)
            try:
                vals = ast.literal_eval(m.group(1))
                vals = [float(v) for v in vals]
            except (ValueError, SyntaxError, TypeError):
                raise SpecError(f"could not parse list {raw!r}", key, line) from None
            return vals, m.group(2)
        m = _NUM_UNIT.match(raw)
        if not m:
            raise SpecError(f"expected a number, got {raw!r}", key, line)
        return float(m.group(1)), m.group(2)
    return _number(raw, unit, key, line)


def _scan_unit(kind):
    return "s" if kind == "delay" else "V"


def _convert_scan(vals, given, kind, key, line):
    if not given:
        return vals
    table = _UNITS[_scan_unit(kind)]
    if given not in table:
        raise SpecError(f"unit violation: {given!r} is not a unit of {_scan_unit(kind)}", key, line)
    f = table[given]
    return [_scaled(v, f) for v in vals] if isinstance(vals, list) else _scaled(vals, f)


def parse_spec(text: str, name: str = "") -> ExperimentSpec:
    entries: dict[str, tuple[str, int]] = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        body = _strip_comment(rawline).strip()
        if not body:
            continue
        m = _LINE.match(body)
        if not m:
            raise SpecError(f"cannot parse {rawline.strip()!r} (expected 'namespace.key = value')", line=lineno)
        key, raw = m.group(1), m.group(2)
        ns, _, sub = key.partition(".")
        if ns not in SCHEMA or sub not in SCHEMA[ns]:
            raise SpecError("unknown key", key, lineno)
        if key in entries:
            raise SpecError(f"duplicate key (first set on line {entries[key][1]})", key, lineno)
        entries[key] = (raw, lineno)

    def line_of(key):
        return entries.get(key, (None, None))[1]

    def get(ns, sub):
        unit, default = SCHEMA[ns][sub]
        key = f"{ns}.{sub}"
        if key not in entries:
            return default
        raw, line = entries[key]
        return _parse_value(raw, unit, key, line)

    if "config.geometry" not in entries:
        raise SpecError("missing required key", "config.geometry")
    cfg_kwargs = {sub: get("config", sub) for sub in CONFIG_KEYS}
    try:
        config = InterferometerConfig(**cfg_kwargs)
    except ConfigError as exc:
        key = f"config.{exc.field}"
        raise SpecError(exc.message, key, line_of(key)) from None

    kind = get("scan", "kind")
    if kind not in ("phase", "delay"):
        raise SpecError(f"must be 'phase' or 'delay', got {kind!r}", "scan.kind", line_of("scan.kind"))
    if "scan.values" in entries:
        vals, unit = get("scan", "values")
        values = _convert_scan(vals, unit, kind, "scan.values", line_of("scan.values"))
    elif all(f"scan.{k}" in entries for k in ("start", "stop", "points")):
        start, u1 = get("scan", "start")
        stop, u2 = get("scan", "stop")
        start = _convert_scan(start, u1, kind, "scan.start", line_of("scan.start"))
        stop = _convert_scan(stop, u2, kind, "scan.stop", line_of("scan.stop"))
        n = get("scan", "points")
        if n < 1:
            raise SpecError("must be at least 1", "scan.points", line_of("scan.points"))
        values = np.linspace(start, stop, n).tolist()
    else:
        raise SpecError("missing required key (or scan.start/scan.stop/scan.points)", "scan.values")
    key = "scan.values" if "scan.values" in entries else "scan.points"
    if not values:
        raise SpecError("scan values must be nonempty", key, line_of(key))
    diffs = np.diff(values)
    if len(values) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise SpecError("scan values must be strictly monotone", key, line_of(key))
    # 9 significant digits: what records.csv stores, so files round-trip exactly
    values = tuple(float(f"{v:.8e}") for v in values)

    duration = get("scan", "duration_per_point")
    if not duration > 0:
        raise SpecError("must be positive", "scan.duration_per_point", line_of("scan.duration_per_point"))
    scan = ScanSpec(kind=kind, values=values, duration_per_point=duration,
                    seed=get("scan", "seed"), total_phase=get("scan", "total_phase"))
    sigma = get("analysis", "piezo_voltage_sigma")
    if sigma < 0:
        raise SpecError("must be nonnegative", "analysis.piezo_voltage_sigma", line_of("analysis.piezo_voltage_sigma"))
    analysis = AnalysisSpec(fit=get("analysis", "fit"), subtract=get("analysis", "subtract"),
                            piezo_voltage_sigma=sigma)
    return ExperimentSpec(config=config, scan=scan, analysis=analysis, name=name)


def load_spec(path) -> ExperimentSpec:
    """Load a spec file, or the spec embedded in a run manifest (``manifest.json``)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read {path}: {exc.strerror}") from None
    if path.suffix == ".json":
        try:
            manifest = json.loads(text)
            text = manifest["spec_text"]
        except (ValueError, KeyError, TypeError):
            raise SpecError(f"{path} is not a run manifest") from None
    return parse_spec(text, name=path.stem)


BUNDLED_DIR = Path(__file__).parent / "specs"


def bundled_spec(name: str) -> ExperimentSpec:
    return load_spec(BUNDLED_DIR / f"{name}.spec")
