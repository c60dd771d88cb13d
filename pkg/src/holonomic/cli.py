"""Command-line driver: ``holonomic {gate,qpt,cnot,decay,sweep,check}``.

Exit codes: 0 success, 1 configuration or validation error, 2 numerical
failure (including a failed invariant check).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .channels import Channel
from .checks import run_checks
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .experiment import (
    BELL_INPUT,
    CNOT_INPUTS,
    apply_noise_ensemble,
    cnot_experiment,
    concatenation_decay,
    fit_per_gate_error,
    qpt_experiment,
    robustness_sweep,
)
from .gates import compose, custom, ideal_unitary, preset, realize, t_gate
from .pulses import PulseEnvelope, PulseShape
from .state_algebra import KET_0, KET_1, canonical_phase, phase_distance, to_json
from .tomography import PROCESS_LABELS

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


# --- output helpers ---------------------------------------------------------------

def _meta(cfg: ExperimentConfig, command: str) -> dict:
    return {"command": command, "config_sha256": cfg.sha256, "seed": cfg.seed, "tool_version": __version__}


def write_json(path: Path, cfg: ExperimentConfig, command: str, payload: dict) -> Path:
    doc = {"meta": _meta(cfg, command), **payload}
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return path


def write_csv(path: Path, cfg: ExperimentConfig, command: str, columns: list, rows: list) -> Path:
    buf = io.StringIO()
    for key, val in _meta(cfg, command).items():
        buf.write(f"# {key}: {val}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in row])
    path.write_text(buf.getvalue())
    return path


def _n_cycles(cfg: ExperimentConfig, exact: bool) -> int | None:
    return None if exact or cfg.experiment.exact else cfg.n_cycles


def _single_qubit(cfg: ExperimentConfig, command: str) -> None:
    if cfg.gate == "CNOT":
        raise ConfigError("gate", f"{command} needs a single-qubit gate, got 'CNOT'")


# --- commands -----------------------------------------------------------------

def _propagate_gate(gate, pulse: PulseEnvelope, grid):
    """(propagated logical block, diagnostics) for a preset, T, or (theta, phi)."""
    if gate == "T":
        parts = [realize(preset(n, pulse), grid) for n in ("N", "A")]
        u = compose(parts[0].u_logical, parts[1].u_logical)
    else:
        spec = custom(*gate, pulse=pulse) if isinstance(gate, tuple) else preset(gate, pulse)
        parts = [realize(spec, grid)]
        u = parts[0].u_logical
    diag = {
        "leakage": max(p.leakage for p in parts),
        "parallel_transport_residual": max(p.parallel_transport_residual for p in parts),
        "cyclicity_residual": max(p.cyclicity_residual for p in parts),
        "logical_unitarity_error": max(p.logical_unitarity_error for p in parts),
    }
    return u, diag


def _ideal(cfg: ExperimentConfig):
    return t_gate() if cfg.gate == "T" else ideal_unitary(cfg.gate_spec())


def cmd_gate(cfg: ExperimentConfig, exact: bool) -> list[Path]:
    out = Path(cfg.output_dir)
    u, diag = _propagate_gate(cfg.gate, cfg.pulse, cfg.grid)
    ideal = _ideal(cfg)
    shapes = {}
    for shape in PulseShape:
        p = PulseEnvelope(shape, cfg.pulse.duration, cfg.pulse.target_area, allow_noncyclic=True)
        v, _ = _propagate_gate(cfg.gate, p, cfg.grid)
        shapes[shape.value] = phase_distance(v, u)
    payload = {
        "gate": cfg.gate if isinstance(cfg.gate, str) else {"theta_rad": cfg.gate[0], "phi_rad": cfg.gate[1]},
        "ideal": to_json(canonical_phase(ideal.matrix)),
        "propagated": to_json(canonical_phase(u)),
        "distance_to_ideal": phase_distance(u, ideal),
        **diag,
        "shape_independence": {"distance_by_shape": shapes, "max_distance": max(shapes.values())},
        "n_steps": cfg.n_steps,
    }
    print(f"gate {payload['gate']}: distance to ideal {payload['distance_to_ideal']:.3e}, leakage {diag['leakage']:.3e}")
    return [write_json(out / "gate.json", cfg, "gate", payload)]


def _gate_channel(cfg: ExperimentConfig, noise) -> Channel:
    if cfg.gate == "T":
        n = apply_noise_ensemble(preset("N", cfg.pulse), noise, cfg.grid, cfg.seed)
        a = apply_noise_ensemble(preset("A", cfg.pulse), noise, cfg.grid, cfg.seed + 1)
        return n @ a
    return apply_noise_ensemble(cfg.gate_spec(), noise, cfg.grid, cfg.seed)


def cmd_qpt(cfg: ExperimentConfig, exact: bool) -> list[Path]:
    _single_qubit(cfg, "qpt")
    out = Path(cfg.output_dir)
    chan = _gate_channel(cfg, cfg.noise_for("qpt"))
    n_cycles = _n_cycles(cfg, exact)
    res = qpt_experiment(chan, _ideal(cfg), cfg.calibration, n_cycles, cfg.seed, cfg.experiment.n_trials)
    chi = res.chi.chi
    payload = {
        "process_fidelity": res.process_fidelity,
        "process_fidelity_error": res.process_fidelity_error,
        "average_gate_fidelity": res.average_fidelity,
        "average_gate_fidelity_error": res.average_fidelity_error,
        "chi": to_json(chi),
        "chi_ideal": to_json(res.chi_ideal.chi),
        "tp_residual": res.chi.tp_residual,
        "n_cycles_per_setting": n_cycles,
        "mc_failed_trials": res.mc_failed,
    }
    print(f"qpt: F_P = {res.process_fidelity:.4f} +- {res.process_fidelity_error:.4f}, "
          f"F_avg = {res.average_fidelity:.4f} +- {res.average_fidelity_error:.4f}")
    cols = ["row", *PROCESS_LABELS]
    return [
        write_json(out / "qpt.json", cfg, "qpt", payload),
        write_csv(out / "chi_real.csv", cfg, "qpt", cols, [[r, *chi[k].real] for k, r in enumerate(PROCESS_LABELS)]),
        write_csv(out / "chi_imag.csv", cfg, "qpt", cols, [[r, *chi[k].imag] for k, r in enumerate(PROCESS_LABELS)]),
    ]


def cmd_cnot(cfg: ExperimentConfig, exact: bool) -> list[Path]:
    out = Path(cfg.output_dir)
    results = cnot_experiment(
        cfg.noise_for("cnot"), CNOT_INPUTS, _n_cycles(cfg, exact), cfg.calibration, cfg.pulse, cfg.grid,
        cfg.experiment.rf_wait, cfg.seed, cfg.experiment.n_trials,
    )
    rows = [[r.label, r.fidelity, r.fidelity_error, r.concurrence, r.concurrence_error] for r in results]
    bell = next(r for r in results if r.label == BELL_INPUT)
    payload = {
        "input": bell.label,
        "fidelity": bell.fidelity,
        "fidelity_error": bell.fidelity_error,
        "concurrence": bell.concurrence,
        "concurrence_error": bell.concurrence_error,
        "rho": to_json(bell.rho.matrix),
    }
    for r in results:
        extra = f", concurrence {r.concurrence:.3f}" if r.concurrence is not None else ""
        print(f"cnot {r.label}: fidelity {r.fidelity:.3f} +- {r.fidelity_error:.3f}{extra}")
    return [
        write_csv(out / "cnot_fidelities.csv", cfg, "cnot",
                  ["input", "fidelity", "error", "concurrence", "concurrence_error"], rows),
        write_json(out / "cnot_bell.json", cfg, "cnot", payload),
    ]


def cmd_decay(cfg: ExperimentConfig, exact: bool) -> list[Path]:
    _single_qubit(cfg, "decay")
    if cfg.gate == "T":
        raise ConfigError("gate", "decay concatenates a single holonomic loop; T is a composite")
    out = Path(cfg.output_dir)
    spec = cfg.gate_spec()
    noise = cfg.noise_for("decay")
    chan = apply_noise_ensemble(spec, noise, cfg.grid, cfg.seed)
    kets = {"0": KET_0, "1": KET_1}
    rows, fits = [], {}
    for k, label in enumerate(cfg.experiment.initial_states):
        curve = concatenation_decay(
            spec, noise, cfg.experiment.n_max, kets[label], _n_cycles(cfg, exact), cfg.calibration,
            cfg.grid, cfg.seed + 1000 * (k + 1), channel=chan,
        )
        rows.extend([label, p.n, p.fidelity, p.error] for p in curve)
        eps, eps_std = fit_per_gate_error(curve)
        fits[label] = {"epsilon": eps, "epsilon_std": eps_std}
        print(f"decay from |{label}>: per-gate error {eps:.5f} +- {eps_std:.5f}")
    return [
        write_csv(out / "decay.csv", cfg, "decay", ["initial", "n", "fidelity", "error"], rows),
        write_json(out / "decay_fit.json", cfg, "decay", {"fits": fits, "n_max": cfg.experiment.n_max}),
    ]


def cmd_sweep(cfg: ExperimentConfig, exact: bool) -> list[Path]:
    out = Path(cfg.output_dir)
    rows = robustness_sweep(cfg.experiment.sweep_errors, cfg.pulse, cfg.grid)
    cols = ["rabi_error", "geometric_avg_fidelity", "dynamic_avg_fidelity"]
    print(f"sweep: {len(rows)} amplitude errors from {rows[0]['rabi_error']} to {rows[-1]['rabi_error']}")
    return [write_csv(out / "sweep.csv", cfg, "sweep", cols, [[r[c] for c in cols] for r in rows])]


COMMANDS = {"gate": cmd_gate, "qpt": cmd_qpt, "cnot": cmd_cnot, "decay": cmd_decay, "sweep": cmd_sweep}


# --- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="holonomic", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "gate": "propagate one gate and compare with its closed form",
        "qpt": "single-qubit process tomography with photon-count statistics",
        "cnot": "noisy CNOT with state tomography of each output",
        "decay": "fidelity decay under repeated gates and per-gate error fit",
        "sweep": "geometric versus dynamic NOT under amplitude errors",
        "check": "run the invariant suite",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="TOML or JSON experiment config (default: built-in, seed 0)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--exact", action="store_true", help="infinite-shot mode")
        p.add_argument("--out", type=Path, help="override output_dir")
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else parse_config('seed = 0\ngate = "N"\n', "<default>")
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed", f"must be non-negative, got {args.seed}")
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg = replace(cfg, output_dir=str(args.out))
    return cfg


def _run_check(cfg: ExperimentConfig) -> int:
    results = run_checks(cfg, cfg.check_tolerance)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.deviation:10.3e} <= {r.tolerance:8.1e}  {r.name}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERICAL


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        if args.command == "check":
            print(f"FAIL  config validation: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.command == "check":
        return _run_check(cfg)
    try:
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
        files = COMMANDS[args.command](cfg, args.exact)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - any failure past validation is numerical
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for f in files:
        print(f"wrote {f}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
