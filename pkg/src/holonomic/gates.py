"""Closed-form holonomic gates and their pulse-level realization."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .propagation import (
    HolonomyResult,
    TimeGrid,
    check_parallel_transport,
    cyclicity_residual,
    logical_block,
    propagate,
)
from .pulses import (
    CNOT_LOGICAL_INDICES,
    LambdaParams,
    PulseEnvelope,
    cnot_frame_matrix,
    h1_at,
    h2_at,
    moving_frame_matrix,
)
from .state_algebra import I2, SIGMA_X, UnitaryOperator, canonical_phase


class GateKind(str, enum.Enum):
    SINGLE_QUBIT = "single_qubit"
    CNOT = "cnot"


PRESET_PARAMS = {
    "N": LambdaParams(3 * math.pi / 4, 0.0),
    "A": LambdaParams(3 * math.pi / 4, math.pi / 8),
    "H": LambdaParams(5 * math.pi / 8, 0.0),
}
GATE_NAMES = ("N", "A", "H", "T", "CNOT")


@dataclass(frozen=True)
class GateSpec:
    name: str
    params: LambdaParams | None = None
    pulse: PulseEnvelope = field(default_factory=PulseEnvelope)
    kind: GateKind = GateKind.SINGLE_QUBIT

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        if self.kind is GateKind.SINGLE_QUBIT and self.params is None:
            raise ValueError(f"single-qubit gate {self.name!r} needs Lambda parameters")
        preset = PRESET_PARAMS.get(self.name)
        if preset is not None and self.params != preset:
            raise ValueError(f"preset {self.name!r} must carry parameters {preset}")

    @property
    def duration(self) -> float:
        return self.pulse.duration


def preset(name: str, pulse: PulseEnvelope | None = None) -> GateSpec:
    """GateSpec for a named single loop ("N", "A", "H") or "CNOT"."""
    pulse = pulse or PulseEnvelope()
    if name == "CNOT":
        return GateSpec("CNOT", None, pulse, GateKind.CNOT)
    if name not in PRESET_PARAMS:
        raise KeyError(f"unknown gate {name!r}; T is a composite, use t_gate() or realize N and A")
    return GateSpec(name, PRESET_PARAMS[name], pulse)


def custom(theta: float, phi: float, pulse: PulseEnvelope | None = None) -> GateSpec:
    return GateSpec(f"loop({theta:.6g},{phi:.6g})", LambdaParams(theta, phi), pulse or PulseEnvelope())


def ideal_holonomy(params: LambdaParams) -> UnitaryOperator:
    c, s = math.cos(2 * params.theta), math.sin(2 * params.theta)
    e = np.exp(1j * params.phi)
    return UnitaryOperator(np.array([[-c, -e * s], [-np.conj(e) * s, c]]))


def t_gate() -> UnitaryOperator:
    """N A, the pi/8 gate up to a global phase."""
    return ideal_holonomy(PRESET_PARAMS["N"]) @ ideal_holonomy(PRESET_PARAMS["A"])


def cnot_ideal() -> UnitaryOperator:
    """|up><up| (x) X + |down><down| (x) I, nuclear spin as control."""
    up = np.diag([1.0, 0.0])
    down = np.diag([0.0, 1.0])
    return UnitaryOperator(np.kron(up, SIGMA_X) + np.kron(down, I2))


def ideal_unitary(spec: GateSpec) -> UnitaryOperator:
    if spec.kind is GateKind.CNOT:
        return cnot_ideal()
    return ideal_holonomy(spec.params)


def compose(*unitaries) -> np.ndarray:
    """Product u1 @ u2 @ ... with canonical global phase."""
    out = np.eye(np.asarray(getattr(unitaries[0], "matrix", unitaries[0])).shape[0], dtype=complex)
    for u in unitaries:
        out = out @ np.asarray(getattr(u, "matrix", u))
    return canonical_phase(out)


def hamiltonian_fn(spec: GateSpec):
    if spec.kind is GateKind.CNOT:
        return lambda t: h2_at(spec.pulse, t)
    return lambda t: h1_at(spec.params, spec.pulse, t)


def frame_fn(spec: GateSpec):
    if spec.kind is GateKind.CNOT:
        return lambda t: cnot_frame_matrix(spec.pulse, t)
    return lambda t: moving_frame_matrix(spec.params, spec.pulse, t)


def logical_basis(spec: GateSpec) -> np.ndarray:
    if spec.kind is GateKind.CNOT:
        return np.eye(6, dtype=complex)[:, list(CNOT_LOGICAL_INDICES)]
    return np.eye(3, 2, dtype=complex)


def realize(spec: GateSpec, grid: TimeGrid | None = None) -> HolonomyResult:
    """Propagate the gate's Hamiltonian and restrict to the logical subspace."""
    grid = grid or TimeGrid.over(spec.duration)
    h = hamiltonian_fn(spec)
    u = propagate(h, grid)
    block = logical_block(u, logical_basis(spec))
    frame = frame_fn(spec)
    pt = check_parallel_transport(h, frame, grid)
    return HolonomyResult(
        u_full=block.u_full,
        u_logical=block.u_logical,
        leakage=block.leakage,
        parallel_transport_residual=pt,
        cyclicity_residual=cyclicity_residual(frame, grid),
    )
