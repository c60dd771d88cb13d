"""Experiment configuration: TOML (or JSON) with unit-suffixed field names.

Example::

    seed = 7
    output_dir = "out"
    gate = "N"                      # or [theta_rad, phi_rad], or a table

    [pulse]
    shape = "sine_half_period"
    duration_ns = 1000
    area_rad = 3.141592653589793

    [grid]
    n_steps = 10000

    [noise]
    preset = "auto"                 # "none", "cnot_default" or "auto"
    detuning_sigma_rad_per_s = 0.0

    [calibration]
    bright_counts_per_cycle = 0.03
    contrast = 0.3
    n_cycles = 1000000
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .experiment import DEFAULT_RF_WAIT, DEFAULT_CYCLES, FluorescenceCalibration, NoiseModel
from .gates import GATE_NAMES, GateSpec, custom, preset
from .propagation import MIN_STEPS, TimeGrid
from .pulses import LambdaParams, NonCyclicPulseError, PulseEnvelope, PulseShape


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str, line: int | None = None, source: str = "config"):
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {field_name}: {message}")
        self.field = field_name
        self.line = line


def locate(text: str, dotted: str) -> int | None:
    """Line number (1-based) of a dotted key in TOML or JSON source text.

    Falls back to the enclosing table header, then to None.
    """
    *tables, key = dotted.split(".")
    key = re.sub(r"\[\d+\].*$", "", key).strip()
    want = ".".join(tables)
    is_json = text.lstrip().startswith("{")
    pat = re.compile(rf'^\s*"?{re.escape(key)}"?\s*[=:]')
    table = ""
    header = None
    for n, line in enumerate(text.splitlines(), start=1):
        head = re.match(r"^\s*\[([^\]]+)\]\s*$", line)
        if head:
            table = head.group(1).strip()
            if table == want:
                header = n
            continue
        if pat.match(line) and (is_json or table == want):
            return n
    return header


@dataclass(frozen=True)
class ExperimentSettings:
    n_trials: int = 200
    n_max: int = 100
    rf_wait: float = DEFAULT_RF_WAIT
    initial_states: tuple = ("0", "1")
    sweep_errors: tuple = tuple(round(-0.2 + 0.02 * k, 10) for k in range(21))
    exact: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    gate: str | tuple
    pulse: PulseEnvelope = field(default_factory=PulseEnvelope)
    n_steps: int = 10_000
    noise_preset: str = "auto"
    noise_overrides: dict = field(default_factory=dict)
    calibration: FluorescenceCalibration = field(default_factory=FluorescenceCalibration.nv_default)
    n_cycles: int = DEFAULT_CYCLES
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    output_dir: str = "out"
    check_tolerance: float | None = None
    sha256: str = ""

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.over(self.pulse.duration, self.n_steps)

    def gate_spec(self) -> GateSpec:
        if isinstance(self.gate, tuple):
            return custom(*self.gate, pulse=self.pulse)
        return preset(self.gate, self.pulse)

    def noise_for(self, command: str) -> NoiseModel:
        name = self.noise_preset
        if name == "auto":
            name = "cnot_default" if command == "cnot" else "none"
        base = NoiseModel.cnot_default() if name == "cnot_default" else NoiseModel()
        return replace(base, **self.noise_overrides)

    def with_seed(self, seed: int) -> ExperimentConfig:
        return replace(self, seed=seed)


_NOISE_FIELDS = {
    "detuning_sigma_rad_per_s": "detuning_sigma",
    "rabi_error_fraction": "rabi_error_fraction",
    "depolarizing_per_gate": "depolarizing_per_gate",
    "n_ensemble": "n_ensemble",
    "t2_echo_us": "t2_echo",
    "initial_mixture": "initial_mixture",
}
_TOP = {"seed", "gate", "output_dir", "pulse", "grid", "noise", "calibration", "experiment", "check"}
_SECTIONS = {
    "pulse": {"shape", "duration_ns", "area_rad", "allow_noncyclic", "sample_ns"},
    "grid": {"n_steps"},
    "noise": {"preset", *_NOISE_FIELDS},
    "calibration": {"bright_counts_per_cycle", "contrast", "snr", "n_cycles"},
    "experiment": {"n_trials", "n_max", "rf_wait_us", "initial_states", "sweep_errors", "exact"},
    "check": {"tolerance"},
}


class _Reader:
    def __init__(self, data: dict, text: str, source: str):
        self.data, self.text, self.source = data, text, source

    def fail(self, name: str, message: str):
        raise ConfigError(name, message, locate(self.text, name), self.source)

    def section(self, name: str) -> dict:
        sec = self.data.get(name, {})
        if not isinstance(sec, dict):
            self.fail(name, "must be a table")
        for key in sec:
            if key not in _SECTIONS[name]:
                self.fail(f"{name}.{key}", f"unknown field (expected one of {sorted(_SECTIONS[name])})")
        return sec

    def number(self, sec: dict, dotted: str, default, positive=False, integer=False, lo=None, hi=None):
        key = dotted.rsplit(".", 1)[-1]
        val = sec.get(key, default)
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.fail(dotted, f"must be a number, got {val!r}")
        if integer and (not float(val).is_integer()):
            self.fail(dotted, f"must be an integer, got {val!r}")
        if not math.isfinite(val) and not (val == math.inf and not integer):
            self.fail(dotted, f"must be finite, got {val!r}")
        if positive and not val > 0:
            self.fail(dotted, f"must be positive, got {val!r}")
        if lo is not None and val < lo:
            self.fail(dotted, f"must be >= {lo}, got {val!r}")
        if hi is not None and val > hi:
            self.fail(dotted, f"must be <= {hi}, got {val!r}")
        return int(val) if integer else float(val)


def _parse_gate(r: _Reader):
    g = r.data.get("gate")
    if g is None:
        r.fail("gate", "missing; give a preset name or [theta_rad, phi_rad]")
    if isinstance(g, str):
        if g not in GATE_NAMES:
            r.fail("gate", f"unknown gate {g!r}; expected one of {list(GATE_NAMES)}")
        return g
    if isinstance(g, dict):
        g = [g.get("theta_rad"), g.get("phi_rad", 0.0)]
        names = ("gate.theta_rad", "gate.phi_rad")
    else:
        names = ("gate[0] (theta_rad)", "gate[1] (phi_rad)")
    if not isinstance(g, list) or len(g) != 2:
        r.fail("gate", "must be a preset name or a pair [theta_rad, phi_rad]")
    for v, n in zip(g, names):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            r.fail(n, f"must be a number, got {v!r}")
    theta, phi = float(g[0]), float(g[1])
    if not 0.0 <= theta < math.pi:
        r.fail(names[0], f"theta must lie in [0, pi), got {theta}")
    if not -math.pi < phi <= math.pi:
        r.fail(names[1], f"phi must lie in (-pi, pi], got {phi}")
    LambdaParams(theta, phi)
    return (theta, phi)


def _parse_pulse(r: _Reader) -> PulseEnvelope:
    sec = r.section("pulse")
    shape = sec.get("shape", PulseShape.SINE_HALF_PERIOD.value)
    if shape not in {s.value for s in PulseShape}:
        r.fail("pulse.shape", f"unknown shape {shape!r}; expected one of {[s.value for s in PulseShape]}")
    duration = r.number(sec, "pulse.duration_ns", 1000.0, positive=True) / 1e9
    area = r.number(sec, "pulse.area_rad", math.pi, lo=0.0)
    allow = sec.get("allow_noncyclic", False)
    if not isinstance(allow, bool):
        r.fail("pulse.allow_noncyclic", "must be true or false")
    sample = sec.get("sample_ns")
    if sample is not None:
        sample = r.number(sec, "pulse.sample_ns", None, positive=True) / 1e9
        if sample > duration:
            r.fail("pulse.sample_ns", "sampling interval exceeds the pulse duration")
    try:
        return PulseEnvelope(shape, duration, area, allow, sample)
    except NonCyclicPulseError as exc:
        r.fail("pulse.shape", f"{exc} (set pulse.allow_noncyclic = true)")


def _parse_noise(r: _Reader) -> tuple[str, dict]:
    sec = r.section("noise")
    name = sec.get("preset", "auto")
    if name not in ("auto", "none", "cnot_default"):
        r.fail("noise.preset", f"unknown preset {name!r}; expected auto, none or cnot_default")
    out = {}
    for key, attr in _NOISE_FIELDS.items():
        if key not in sec:
            continue
        dotted = f"noise.{key}"
        if attr == "n_ensemble":
            out[attr] = r.number(sec, dotted, None, integer=True, lo=1)
        elif attr == "t2_echo":
            out[attr] = r.number(sec, dotted, None, positive=True) / 1e6
        elif attr in ("depolarizing_per_gate", "initial_mixture"):
            out[attr] = r.number(sec, dotted, None, lo=0.0, hi=1.0)
        else:
            out[attr] = r.number(sec, dotted, None, lo=0.0)
    return name, out


def _parse_calibration(r: _Reader) -> tuple[FluorescenceCalibration, int]:
    sec = r.section("calibration")
    bright = r.number(sec, "calibration.bright_counts_per_cycle", 0.03, positive=True)
    contrast = r.number(sec, "calibration.contrast", 0.3, positive=True, hi=1.0)
    snr = r.number(sec, "calibration.snr", 15.0, positive=True)
    n_cycles = r.number(sec, "calibration.n_cycles", DEFAULT_CYCLES, integer=True, lo=1)
    return FluorescenceCalibration.nv_default(bright, contrast, snr), n_cycles


def _parse_experiment(r: _Reader) -> ExperimentSettings:
    sec = r.section("experiment")
    d = ExperimentSettings()
    n_trials = r.number(sec, "experiment.n_trials", d.n_trials, integer=True, lo=100)
    n_max = r.number(sec, "experiment.n_max", d.n_max, integer=True, lo=2)
    rf_wait = r.number(sec, "experiment.rf_wait_us", d.rf_wait * 1e6, lo=0.0) / 1e6
    states = sec.get("initial_states", list(d.initial_states))
    if not isinstance(states, list) or not states or any(s not in ("0", "1") for s in states):
        r.fail("experiment.initial_states", 'must be a non-empty list drawn from "0" and "1"')
    errors = sec.get("sweep_errors", list(d.sweep_errors))
    if not isinstance(errors, list) or not errors:
        r.fail("experiment.sweep_errors", "must be a non-empty list of numbers")
    for k, e in enumerate(errors):
        if isinstance(e, bool) or not isinstance(e, (int, float)) or not -1.0 < e < 1.0:
            r.fail(f"experiment.sweep_errors[{k}]", f"must be a number in (-1, 1), got {e!r}")
    exact = sec.get("exact", False)
    if not isinstance(exact, bool):
        r.fail("experiment.exact", "must be true or false")
    return ExperimentSettings(n_trials, n_max, rf_wait, tuple(states), tuple(float(e) for e in errors), exact)


def parse_config(text: str, source: str = "config", fmt: str | None = None) -> ExperimentConfig:
    """Validate configuration text; raises :class:`ConfigError` naming the field and line."""
    fmt = fmt or ("json" if text.lstrip().startswith("{") else "toml")
    try:
        data = json.loads(text) if fmt == "json" else tomllib.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<syntax>", exc.msg, exc.lineno, source) from None
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError("<syntax>", str(exc), int(m.group(1)) if m else None, source) from None
    if not isinstance(data, dict):
        raise ConfigError("<root>", "must be a table", 1, source)
    r = _Reader(data, text, source)
    for key in data:
        if key not in _TOP:
            r.fail(key, f"unknown field (expected one of {sorted(_TOP)})")
    if "seed" not in data:
        r.fail("seed", "missing; a fixed seed is required")
    seed = data["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        r.fail("seed", f"must be a non-negative integer, got {seed!r}")
    gate = _parse_gate(r)
    pulse = _parse_pulse(r)
    grid = r.section("grid")
    n_steps = r.number(grid, "grid.n_steps", 10_000, integer=True, lo=MIN_STEPS)
    noise_preset, overrides = _parse_noise(r)
    cal, n_cycles = _parse_calibration(r)
    exp = _parse_experiment(r)
    out = data.get("output_dir", "out")
    if not isinstance(out, str) or not out:
        r.fail("output_dir", "must be a non-empty path string")
    check = r.section("check")
    tol = r.number(check, "check.tolerance", None, positive=True) if "tolerance" in check else None
    cfg = ExperimentConfig(
        seed=seed, gate=gate, pulse=pulse, n_steps=n_steps, noise_preset=noise_preset,
        noise_overrides=overrides, calibration=cal, n_cycles=n_cycles, experiment=exp,
        output_dir=out, check_tolerance=tol, sha256=hashlib.sha256(text.encode()).hexdigest(),
    )
    try:
        for cmd in ("gate", "cnot"):
            cfg.noise_for(cmd)
    except ValueError as exc:
        r.fail("noise", str(exc))
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {p}: {exc.strerror}", None, str(p)) from None
    fmt = "json" if p.suffix.lower() == ".json" else None
    cfg = parse_config(raw.decode("utf-8"), str(p), fmt)
    return replace(cfg, sha256=hashlib.sha256(raw).hexdigest())


__all__ = ["ConfigError", "ExperimentConfig", "ExperimentSettings", "parse_config", "load_config", "locate"]
