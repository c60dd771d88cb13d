"""Control envelopes and the Lambda-system Hamiltonians.

Energies are angular frequencies (hbar = 1), times are seconds.  Rabi
frequencies enter the Hamiltonian as ``<a|H|j> = Omega_j`` with
``Omega_0 = Omega cos(theta)`` and ``Omega_1 = Omega exp(i phi) sin(theta)``,
so the state that couples to the ancilla is

    |B> = cos(theta)|0> + exp(-i phi) sin(theta)|1>

and ``|D> = -exp(i phi) sin(theta)|0> + cos(theta)|1>`` is decoupled.  With
this convention the cyclic evolution implements ``I - 2|B><B|``, which is the
holonomy matrix used by :mod:`holonomic.gates`.

All functions accept scalar or array times; array input returns a stacked
``(..., d, d)`` (or ``(..., d, M)``) array.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .state_algebra import PureState

# rotating-frame bookkeeping only; these never enter the dynamics
ZERO_FIELD_SPLITTING_HZ = 2870e6
TRANSITION_MINUS1_HZ = 1601e6
TRANSITION_PLUS1_HZ = 4141e6
HYPERFINE_C13_HZ = 13.7e6
HYPERFINE_MINUS1_HZ = 14.15e6
HYPERFINE_PLUS1_HZ = 13.25e6
BIAS_FIELD_GAUSS = 451.0

_BLACKMAN_MEAN = 0.42


class PulseShape(str, enum.Enum):
    SQUARE = "square"
    SINE_HALF_PERIOD = "sine_half_period"
    BLACKMAN = "blackman"


class NonCyclicPulseError(ValueError):
    pass


@dataclass(frozen=True)
class PulseEnvelope:
    """Envelope Omega(t) on [0, duration], normalized to ``target_area``.

    ``sample_s`` switches on piecewise-constant sampling (an AWG grid);
    the held values are rescaled so the total area is still exact.
    """

    shape: PulseShape = PulseShape.SINE_HALF_PERIOD
    duration: float = 1e-6
    target_area: float = math.pi
    allow_noncyclic: bool = False
    sample_s: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "shape", PulseShape(self.shape))
        if not self.duration > 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if not np.isfinite(self.target_area) or self.target_area < 0:
            raise ValueError(f"target_area must be finite and non-negative, got {self.target_area}")
        if self.shape is PulseShape.SQUARE and not self.allow_noncyclic:
            raise NonCyclicPulseError(
                "square envelope does not vanish at its endpoints; pass allow_noncyclic=True to use it"
            )
        if self.sample_s is not None:
            if not self.sample_s > 0:
                raise ValueError(f"sample_s must be positive, got {self.sample_s}")
            if self.sample_s > self.duration:
                raise ValueError("sample_s longer than the pulse")

    @property
    def peak(self) -> float:
        """Omega_max in rad/s."""
        tau, area = self.duration, self.target_area
        if self.shape is PulseShape.SQUARE:
            return area / tau
        if self.shape is PulseShape.SINE_HALF_PERIOD:
            return area * math.pi / (2.0 * tau)
        return area / (_BLACKMAN_MEAN * tau)

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.sample_s)) if self.sample_s else 0

    def with_area(self, area: float) -> PulseEnvelope:
        return PulseEnvelope(self.shape, self.duration, area, self.allow_noncyclic, self.sample_s)


def _unit_profile(shape: PulseShape, x):
    """Envelope normalized to peak 1 on x = t/tau in [0, 1]."""
    if shape is PulseShape.SQUARE:
        return np.ones_like(x)
    if shape is PulseShape.SINE_HALF_PERIOD:
        return np.sin(np.pi * x)
    return 0.42 - 0.5 * np.cos(2 * np.pi * x) + 0.08 * np.cos(4 * np.pi * x)


def _unit_integral(shape: PulseShape, x):
    """Integral of the unit profile from 0 to x (in units of tau)."""
    if shape is PulseShape.SQUARE:
        return np.asarray(x, dtype=float)
    if shape is PulseShape.SINE_HALF_PERIOD:
        return (1 - np.cos(np.pi * x)) / np.pi
    return 0.42 * x - 0.5 * np.sin(2 * np.pi * x) / (2 * np.pi) + 0.08 * np.sin(4 * np.pi * x) / (4 * np.pi)


def _check_time(p: PulseEnvelope, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    slack = 1e-12 * p.duration
    if np.any(t < -slack) or np.any(t > p.duration + slack):
        raise ValueError(f"time outside [0, {p.duration}] s")
    return np.clip(t, 0.0, p.duration)


def _sampled_levels(p: PulseEnvelope) -> np.ndarray:
    n = p.n_samples
    centers = (np.arange(n) + 0.5) / n
    levels = _unit_profile(p.shape, centers)
    return levels * (p.target_area / (levels.sum() * p.duration / n))


def envelope_value(p: PulseEnvelope, t):
    """Omega(t) in rad/s."""
    t = _check_time(p, t)
    if p.sample_s:
        n = p.n_samples
        idx = np.minimum((t / p.duration * n).astype(int), n - 1)
        return _sampled_levels(p)[idx]
    return p.peak * _unit_profile(p.shape, t / p.duration)


def pulse_area(p: PulseEnvelope, t):
    """alpha(t), the integral of Omega from 0 to t."""
    t = _check_time(p, t)
    if p.sample_s:
        n = p.n_samples
        dt = p.duration / n
        levels = _sampled_levels(p)
        edges = np.concatenate([[0.0], np.cumsum(levels) * dt])
        idx = np.minimum((t / dt).astype(int), n - 1)
        return edges[idx] + levels[idx] * (t - idx * dt)
    x = t / p.duration
    return p.target_area * _unit_integral(p.shape, x) / _unit_integral(p.shape, 1.0)


@dataclass(frozen=True)
class LambdaParams:
    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.theta < math.pi):
            raise ValueError(f"theta must lie in [0, pi), got {self.theta}")
        if not (-math.pi < self.phi <= math.pi):
            raise ValueError(f"phi must lie in (-pi, pi], got {self.phi}")

    @property
    def rabi_ratio(self) -> complex:
        """Omega_1 / Omega_0 = exp(i phi) tan(theta)."""
        return complex(np.exp(1j * self.phi) * math.tan(self.theta))

    def bright_vector(self) -> np.ndarray:
        return np.array([math.cos(self.theta), np.exp(-1j * self.phi) * math.sin(self.theta)])

    def dark_vector(self) -> np.ndarray:
        return np.array([-np.exp(1j * self.phi) * math.sin(self.theta), math.cos(self.theta)])


@dataclass(frozen=True, eq=False)
class BrightDarkFrame:
    bright: PureState
    dark: PureState

    def __post_init__(self):
        if abs(self.bright.inner(self.dark)) > 1e-12:
            raise ValueError("bright and dark states are not orthogonal")
        for s in (self.bright, self.dark):
            if s.dim == 3 and abs(s.amplitudes[2]) > 1e-12:
                raise ValueError("bright/dark states must not overlap the ancilla")


def bright_dark(params: LambdaParams) -> BrightDarkFrame:
    """Bright and dark states embedded in {|0>, |1>, |a>}."""
    b = np.append(params.bright_vector(), 0.0)
    d = np.append(params.dark_vector(), 0.0)
    return BrightDarkFrame(PureState(b), PureState(d))


ANCILLA = np.array([0, 0, 1], dtype=complex)


def lambda_hamiltonian(bright: np.ndarray, ancilla: np.ndarray, omega) -> np.ndarray:
    """Omega (|b><a| + |a><b|) for scalar or array Omega."""
    k = np.outer(bright, ancilla.conj())
    k = k + k.conj().T
    return np.multiply.outer(np.asarray(omega, dtype=float), k)


def h1_at(params: LambdaParams, p: PulseEnvelope, t) -> np.ndarray:
    """Single-spin Lambda Hamiltonian in the basis {|0>, |1>, |a>}."""
    b = np.append(params.bright_vector(), 0.0)
    return lambda_hamiltonian(b, ANCILLA, envelope_value(p, t))


# six-level register: index = 3 * nuclear + level, level in (0, 1, a)
CNOT_BRIGHT = np.array([1, -1, 0, 0, 0, 0], dtype=complex) / math.sqrt(2)
CNOT_ANCILLA = np.array([0, 0, 1, 0, 0, 0], dtype=complex)
CNOT_LOGICAL_INDICES = (0, 1, 3, 4)
SIX_LEVEL_LABELS = ("0,up", "1,up", "a,up", "0,down", "1,down", "a,down")


def h2_at(p: PulseEnvelope, t) -> np.ndarray:
    """Electron-nuclear coupling Hamiltonian; acts only in the nuclear-up manifold."""
    return lambda_hamiltonian(CNOT_BRIGHT, CNOT_ANCILLA, envelope_value(p, t))


def lambda_frame(bright, ancilla, logical, alpha, literal: bool = False) -> np.ndarray:
    """Cyclic moving frame for a Lambda coupling, shape ``(..., d, M)``.

    Each logical vector ``|l>`` is split into its bright component and the
    rest; only the bright part moves, along

        |B(t)> = exp(i alpha) [cos(alpha) |B> - i sin(alpha) |a>].

    This curve stays inside the evolving computational subspace, so the
    parallel-transport condition holds exactly, and it is closed for
    alpha(tau) = pi.  ``literal=True`` uses ``+sin(alpha)|a>`` instead; that
    curve is also closed and gives the same connection but leaves the
    evolving subspace, so the transport condition fails for it.
    """
    alpha = np.asarray(alpha, dtype=float)
    bright = np.asarray(bright, dtype=complex)
    ancilla = np.asarray(ancilla, dtype=complex)
    logical = np.asarray(logical, dtype=complex)  # (d, M)
    coeff = bright.conj() @ logical  # <B|l>
    anc_phase = 1.0 if literal else -1j
    moved = np.exp(1j * alpha)[..., None] * (
        np.cos(alpha)[..., None] * bright + anc_phase * np.sin(alpha)[..., None] * ancilla
    )  # (..., d)
    delta = moved - bright
    return logical + delta[..., :, None] * coeff


def moving_frame_matrix(params: LambdaParams, p: PulseEnvelope, t, literal: bool = False) -> np.ndarray:
    b = np.append(params.bright_vector(), 0.0)
    logical = np.eye(3, 2, dtype=complex)
    return lambda_frame(b, ANCILLA, logical, pulse_area(p, t), literal=literal)


def moving_frame(params: LambdaParams, p: PulseEnvelope, t: float, literal: bool = False):
    """Frame vectors (xi_0(t), xi_1(t)) as a pair of states."""
    f = moving_frame_matrix(params, p, float(t), literal=literal)
    return PureState(f[:, 0]), PureState(f[:, 1])


def cnot_frame_matrix(p: PulseEnvelope, t, literal: bool = False) -> np.ndarray:
    logical = np.eye(6, dtype=complex)[:, list(CNOT_LOGICAL_INDICES)]
    return lambda_frame(CNOT_BRIGHT, CNOT_ANCILLA, logical, pulse_area(p, t), literal=literal)
