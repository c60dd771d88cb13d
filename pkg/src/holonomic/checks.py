"""Invariant suite behind ``holonomic check``.

Each check measures a non-negative deviation and compares it with its
tolerance; a check passes when deviation <= tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channels import Channel
from .experiment import FluorescenceCalibration, NoiseModel, apply_noise_ensemble, echo_unitary, simulate_counts
from .gates import PRESET_PARAMS, cnot_ideal, frame_fn, hamiltonian_fn, ideal_holonomy, preset, realize, t_gate
from .propagation import TimeGrid, check_parallel_transport, cyclicity_residual, holonomy_from_connection
from .pulses import LambdaParams, bright_dark, moving_frame_matrix, pulse_area
from .state_algebra import (
    DensityOperator,
    concurrence,
    partial_trace,
    phase_distance,
    random_density_matrix,
    random_unitary,
    tensor_product,
)
from .tomography import ProcessMatrix, exact_records, process_fidelity, process_tomography, state_tomography, unitary_runner


@dataclass(frozen=True)
class CheckResult:
    name: str
    deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.deviation)) and self.deviation <= self.tolerance


def _partial_trace(cfg, rng):
    worst = 0.0
    for _ in range(20):
        a, b = random_density_matrix(2, rng), random_density_matrix(2, rng)
        got = partial_trace(tensor_product(a, b), [2, 2], keep=0).matrix
        worst = max(worst, float(np.max(np.abs(got - a.matrix))))
    return worst


def _concurrence_local(cfg, rng):
    worst = 0.0
    for _ in range(20):
        rho = random_density_matrix(4, rng)
        u = np.kron(random_unitary(2, rng).matrix, random_unitary(2, rng).matrix)
        worst = max(worst, abs(concurrence(rho) - concurrence(DensityOperator(u @ rho.matrix @ u.conj().T))))
    return worst


def _pulse_area(cfg, rng):
    return abs(float(pulse_area(cfg.pulse, cfg.pulse.duration)) - cfg.pulse.target_area)


def _bright_dark(cfg, rng):
    worst = 0.0
    for _ in range(20):
        bd = bright_dark(LambdaParams(rng.uniform(0, math.pi), rng.uniform(-math.pi, math.pi)))
        proj = bd.bright.projector().matrix + bd.dark.projector().matrix
        worst = max(worst, float(np.max(np.abs(proj - np.diag([1, 1, 0])))))
    return worst


def _each_preset(cfg, fn):
    return max(fn(preset(name, cfg.pulse)) for name in PRESET_PARAMS)


def _parallel_transport(cfg, rng):
    return _each_preset(cfg, lambda s: check_parallel_transport(hamiltonian_fn(s), frame_fn(s), cfg.grid))


def _cyclicity(cfg, rng):
    return _each_preset(cfg, lambda s: cyclicity_residual(lambda t: moving_frame_matrix(s.params, s.pulse, t), cfg.grid))


def _propagator_vs_closed_form(cfg, rng):
    return _each_preset(cfg, lambda s: phase_distance(realize(s, cfg.grid).u_logical, ideal_holonomy(s.params)))


def _leakage(cfg, rng):
    return _each_preset(cfg, lambda s: realize(s, cfg.grid).leakage)


def _connection_vs_closed_form(cfg, rng):
    def one(s):
        res = holonomy_from_connection(lambda t: moving_frame_matrix(s.params, s.pulse, t), cfg.grid)
        return phase_distance(res.u_logical, ideal_holonomy(s.params))

    return _each_preset(cfg, one)


def _involutions(cfg, rng):
    worst = 0.0
    for _ in range(50):
        u = ideal_holonomy(LambdaParams(rng.uniform(0, math.pi), rng.uniform(-math.pi, math.pi))).matrix
        worst = max(worst, float(np.max(np.abs(u @ u - np.eye(2)))), abs(np.trace(u)), abs(np.linalg.det(u) + 1))
    return worst


def _t_gate(cfg, rng):
    return phase_distance(t_gate(), np.diag([1.0, np.exp(1j * math.pi / 4)]))


def _cnot(cfg, rng):
    return phase_distance(realize(preset("CNOT", cfg.pulse), cfg.grid).u_logical, cnot_ideal())


def _qpt_roundtrip(cfg, rng):
    worst = 0.0
    for _ in range(5):
        u = random_unitary(2, rng)
        chi = process_tomography(unitary_runner(u))
        worst = max(worst, 1.0 - process_fidelity(chi, ProcessMatrix.from_unitary(u)), chi.tp_residual)
    return worst


def _mle_validity(cfg, rng):
    worst = 0.0
    for _ in range(10):
        rho = random_density_matrix(4, rng)
        est = state_tomography(exact_records(rho), 2)
        worst = max(worst, -float(np.linalg.eigvalsh(est.matrix).min()), abs(np.trace(est.matrix).real - 1))
    return worst


def _noise_channel(cfg, rng):
    noise = NoiseModel(2e5, 0.02, 0.01, n_ensemble=4)
    grid = TimeGrid.over(cfg.pulse.duration, 1000)
    chan = apply_noise_ensemble(preset("N", cfg.pulse), noise, grid, seed=cfg.seed)
    return max(chan.tp_residual(), max(0.0, -chan.min_choi_eigenvalue()))


def _echo(cfg, rng):
    worst = 0.0
    for delta in rng.uniform(-1e3, 1e3, size=10) / 20e-6:
        chan = Channel.unitary(echo_unitary(delta, 20e-6))
        worst = max(worst, 1.0 - process_fidelity(chan.process_matrix(), ProcessMatrix.from_unitary(np.eye(2))))
    return worst


def _count_reproducibility(cfg, rng):
    cal = FluorescenceCalibration.nv_default()
    rho = DensityOperator(np.diag([0.3, 0.2, 0.5]).astype(complex))
    a = simulate_counts(rho, cal, 10_000, cfg.seed)
    b = simulate_counts(rho, cal, 10_000, cfg.seed)
    return float(a != b)


CHECKS: list[tuple[str, Callable, float]] = [
    ("state_algebra: partial trace of product", _partial_trace, 1e-10),
    ("state_algebra: concurrence local-unitary invariance", _concurrence_local, 1e-8),
    ("pulses: pulse area equals target", _pulse_area, 1e-9),
    ("pulses: bright/dark span the logical subspace", _bright_dark, 1e-12),
    ("propagation: parallel transport residual", _parallel_transport, 1e-9),
    ("propagation: frame cyclicity", _cyclicity, 1e-9),
    ("propagation: propagator vs closed form", _propagator_vs_closed_form, 1e-6),
    ("propagation: leakage", _leakage, 1e-6),
    ("propagation: connection holonomy vs closed form", _connection_vs_closed_form, 1e-6),
    ("gates: involution, traceless, det -1", _involutions, 1e-12),
    ("gates: T = N A up to phase", _t_gate, 1e-9),
    ("gates: propagated CNOT", _cnot, 1e-6),
    ("tomography: process round trip and TP", _qpt_roundtrip, 1e-6),
    ("tomography: MLE output is a state", _mle_validity, 1e-8),
    ("experiment: noisy channel is CPTP", _noise_channel, 1e-8),
    ("experiment: echo cancels static detuning", _echo, 1e-9),
    ("experiment: seeded counts reproducible", _count_reproducibility, 0.0),
]


def run_checks(cfg, tolerance: float | None = None) -> list[CheckResult]:
    """Run every check; ``tolerance`` replaces all per-check tolerances."""
    out = []
    for k, (name, fn, tol) in enumerate(CHECKS):
        rng = np.random.default_rng([cfg.seed, k])
        try:
            dev = float(fn(cfg, rng))
        except Exception:  # noqa: BLE001 - a crashing check is reported as a failure
            dev = math.inf
        out.append(CheckResult(name, dev, tol if tolerance is None else tolerance))
    return out
