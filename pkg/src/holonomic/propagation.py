"""Schroedinger propagation and connection-matrix holonomies.

Both routes use the same building blocks: a batch of Hermitian generators
sampled at step midpoints, exponentiated by eigendecomposition, and
multiplied in time order (later steps on the left) by pairwise reduction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .state_algebra import PureState, UnitaryOperator, to_json

MIN_STEPS = 100
DEFAULT_STEPS = 10_000


class NonHermitianError(ValueError):
    pass


class NonCyclicFrameError(ValueError):
    def __init__(self, residual: float, tol: float):
        super().__init__(f"frame is not cyclic: residual {residual:.3g} exceeds {tol:.1g}")
        self.residual = residual


class FrameNotOrthonormalError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_steps: int = DEFAULT_STEPS

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError(f"t_end ({self.t_end}) must exceed t_start ({self.t_start})")
        if int(self.n_steps) != self.n_steps or self.n_steps < MIN_STEPS:
            raise ValueError(f"n_steps must be an integer >= {MIN_STEPS}, got {self.n_steps}")

    @classmethod
    def over(cls, duration: float, n_steps: int = DEFAULT_STEPS) -> TimeGrid:
        return cls(0.0, duration, n_steps)

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    def midpoints(self) -> np.ndarray:
        return self.t_start + (np.arange(self.n_steps) + 0.5) * self.dt

    def points(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.n_steps + 1)

    def refined(self, factor: int = 2) -> TimeGrid:
        return TimeGrid(self.t_start, self.t_end, self.n_steps * factor)


@dataclass(frozen=True, eq=False)
class HolonomyResult:
    u_full: np.ndarray
    u_logical: np.ndarray
    leakage: float = 0.0
    parallel_transport_residual: float | None = None
    cyclicity_residual: float | None = None
    extras: dict = field(default_factory=dict)

    @property
    def logical_unitarity_error(self) -> float:
        u = self.u_logical
        return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))

    def to_dict(self) -> dict:
        return {
            "u_full": to_json(self.u_full),
            "u_logical": to_json(self.u_logical),
            "leakage": self.leakage,
            "logical_unitarity_error": self.logical_unitarity_error,
            "parallel_transport_residual": self.parallel_transport_residual,
            "cyclicity_residual": self.cyclicity_residual,
        }


def sample(fn: Callable, times: np.ndarray) -> np.ndarray:
    """Evaluate ``fn`` on a time array, falling back to a loop if it is not vectorized."""
    try:
        out = np.asarray(fn(times))
        if out.ndim >= 3 and out.shape[0] == times.size:
            return out.astype(complex, copy=False)
    except (TypeError, ValueError):
        pass
    return np.stack([np.asarray(fn(float(t)), dtype=complex) for t in times])


def expm_hermitian(h: np.ndarray, scale: complex) -> np.ndarray:
    """exp(scale * h) for a stack of Hermitian matrices ``h``."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(scale * w)[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def ordered_product(steps: np.ndarray) -> np.ndarray:
    """steps[n-1] @ ... @ steps[1] @ steps[0] by pairwise reduction."""
    mats = steps
    while mats.shape[0] > 1:
        if mats.shape[0] % 2:
            tail = mats[-1:]
            mats = mats[:-1]
        else:
            tail = None
        mats = mats[1::2] @ mats[0::2]
        if tail is not None:
            mats = np.concatenate([mats, tail])
    return mats[0]


def _check_hermitian_samples(h: np.ndarray, tol: float = 1e-10) -> None:
    rng = np.random.default_rng(0)
    idx = rng.choice(h.shape[0], size=min(10, h.shape[0]), replace=False)
    for k in idx:
        dev = np.max(np.abs(h[k] - h[k].conj().T))
        scale = max(1.0, np.max(np.abs(h[k])))
        if dev > tol * scale:
            raise NonHermitianError(f"Hamiltonian sample {k} is not Hermitian (deviation {dev:.3g})")


def propagate(hamiltonian_fn: Callable, grid: TimeGrid) -> UnitaryOperator:
    """Time-ordered propagator prod_k exp(-i H(t_mid,k) dt)."""
    h = sample(hamiltonian_fn, grid.midpoints())
    _check_hermitian_samples(h)
    h = 0.5 * (h + np.swapaxes(h.conj(), -1, -2))
    return UnitaryOperator(ordered_product(expm_hermitian(h, -1j * grid.dt)))


def connection_matrix(frame_fn: Callable, t, dt_fd: float) -> np.ndarray:
    """A_{ll'} = <xi_l| i d/dt |xi_l'> by central differences.

    ``frame_fn`` returns the frame as columns, shape ``(..., d, M)``.
    Accepts scalar or array ``t``.
    """
    t = np.asarray(t, dtype=float)
    f0 = np.asarray(frame_fn(t), dtype=complex)
    gram = np.swapaxes(f0.conj(), -1, -2) @ f0
    dev = np.max(np.abs(gram - np.eye(gram.shape[-1])))
    if dev > 1e-9:
        raise FrameNotOrthonormalError(f"frame not orthonormal (deviation {dev:.3g})")
    fp = np.asarray(frame_fn(t + dt_fd), dtype=complex)
    fm = np.asarray(frame_fn(t - dt_fd), dtype=complex)
    deriv = (fp - fm) / (2.0 * dt_fd)
    return 1j * (np.swapaxes(f0.conj(), -1, -2) @ deriv)


def cyclicity_residual(frame_fn: Callable, grid: TimeGrid) -> float:
    f0 = np.asarray(frame_fn(grid.t_start), dtype=complex)
    f1 = np.asarray(frame_fn(grid.t_end), dtype=complex)
    return float(np.max(np.linalg.norm(f1 - f0, axis=0)))


def holonomy_from_connection(
    frame_fn: Callable,
    grid: TimeGrid,
    dt_fd: float | None = None,
    cyclic_tol: float = 1e-6,
) -> HolonomyResult:
    """U(tau) = T exp[i int A dt] as an ordered product over midpoints.

    The frame must close on itself; the result is expressed in the basis
    the frame starts from.
    """
    resid = cyclicity_residual(frame_fn, grid)
    if resid > cyclic_tol:
        raise NonCyclicFrameError(resid, cyclic_tol)
    if dt_fd is None:
        dt_fd = (grid.t_end - grid.t_start) * 1e-6
    dt_fd = min(dt_fd, 0.25 * grid.dt)
    a = connection_matrix(frame_fn, grid.midpoints(), dt_fd)
    herm_dev = float(np.max(np.abs(a - np.swapaxes(a.conj(), -1, -2))))
    # the anti-Hermitian part is pure finite-difference error
    a = 0.5 * (a + np.swapaxes(a.conj(), -1, -2))
    u = ordered_product(expm_hermitian(a, 1j * grid.dt))
    f0 = np.asarray(frame_fn(grid.t_start), dtype=complex)
    return HolonomyResult(
        u_full=u,
        u_logical=u,
        leakage=0.0,
        cyclicity_residual=resid,
        extras={"connection_hermiticity_error": herm_dev, "start_frame": f0},
    )


def check_parallel_transport(
    hamiltonian_fn: Callable,
    frame_fn: Callable,
    grid: TimeGrid,
    scale: float | None = None,
) -> float:
    """max |<xi_l|H|xi_l'>| over grid points, divided by ``scale``.

    ``scale`` defaults to the largest spectral norm of H on the grid, which
    is hbar * Omega_max for the Lambda Hamiltonians.
    """
    times = grid.points()
    h = sample(hamiltonian_fn, times)
    f = np.asarray(frame_fn(times), dtype=complex)
    proj = np.swapaxes(f.conj(), -1, -2) @ h @ f
    if scale is None:
        scale = float(np.max(np.linalg.norm(h, ord=2, axis=(-2, -1))))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(proj)) / scale)


def logical_block(u, logical_basis: Sequence[PureState] | np.ndarray) -> HolonomyResult:
    """Restrict ``u`` to the span of ``logical_basis``.

    Leakage is one minus the smallest retained norm-squared over the basis
    columns.
    """
    m = u.matrix if isinstance(u, UnitaryOperator) else np.asarray(u, dtype=complex)
    if isinstance(logical_basis, np.ndarray):
        basis = np.asarray(logical_basis, dtype=complex)
    else:
        basis = np.stack([s.amplitudes for s in logical_basis], axis=1)
    gram = basis.conj().T @ basis
    if np.max(np.abs(gram - np.eye(gram.shape[0]))) > 1e-9:
        raise FrameNotOrthonormalError("logical basis is not orthonormal")
    block = basis.conj().T @ m @ basis
    retained = np.sum(np.abs(block) ** 2, axis=0)
    leakage = float(np.clip(1.0 - retained.min(), 0.0, 1.0))
    return HolonomyResult(u_full=m, u_logical=block, leakage=leakage)
