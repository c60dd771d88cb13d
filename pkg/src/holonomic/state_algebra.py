"""Dense complex linear algebra for small spin registers.

Basis conventions used across the package:

* single electron spin (three-level Lambda system): ``|0>, |1>, |a>``
  with ``|0> = |m=-1>``, ``|1> = |m=+1>`` and ``|a> = |m=0>``;
* nuclear spin: ``|up>, |down>``;
* electron-nuclear register: the nuclear spin is the slow (first) tensor
  factor, so the logical basis is ``|0,up>, |1,up>, |0,down>, |1,down>`` and
  the six-level space is ``|0,up>, |1,up>, |a,up>, |0,down>, |1,down>, |a,down>``.
  Kets are labelled ``|electron, nuclear>`` regardless of index order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

NORM_TOL = 1e-10
HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = -1e-9
UNITARY_TOL = 1e-9


class InvalidStateError(ValueError):
    """Raised when an input violates a state or operator invariant."""


class DimensionError(ValueError):
    """Raised on incompatible dimensions."""


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=complex, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _frozen(self.amplitudes)
        if amps.ndim != 1 or amps.size == 0:
            raise InvalidStateError(f"amplitudes must be a non-empty vector, got shape {amps.shape}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise InvalidStateError(f"state is not normalized: |psi| = {norm:.12g}")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_unnormalized(cls, amplitudes) -> PureState:
        amps = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise InvalidStateError("zero vector cannot be normalized")
        return cls(amps / norm)

    @classmethod
    def basis(cls, dim: int, index: int) -> PureState:
        amps = np.zeros(dim, dtype=complex)
        amps[index] = 1.0
        return cls(amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def projector(self) -> DensityOperator:
        return DensityOperator(np.outer(self.amplitudes, self.amplitudes.conj()))

    def inner(self, other: PureState) -> complex:
        """Return <self|other>."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise InvalidStateError(f"density matrix must be square, got shape {m.shape}")
        herm = np.max(np.abs(m - m.conj().T))
        if herm > HERMITIAN_TOL:
            raise InvalidStateError(f"density matrix is not Hermitian (deviation {herm:.3g})")
        tr = np.trace(m).real
        if abs(tr - 1.0) > NORM_TOL:
            raise InvalidStateError(f"density matrix trace is {tr:.12g}, expected 1")
        lam_min = np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min()
        if lam_min < POSITIVITY_TOL:
            raise InvalidStateError(f"density matrix has negative eigenvalue {lam_min:.3g}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def maximally_mixed(cls, dim: int) -> DensityOperator:
        return cls(np.eye(dim, dtype=complex) / dim)

    def populations(self) -> np.ndarray:
        return np.clip(np.diag(self.matrix).real, 0.0, None)

    def expectation(self, operator) -> float:
        return float(np.trace(self.matrix @ np.asarray(operator)).real)


@dataclass(frozen=True, eq=False)
class UnitaryOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise InvalidStateError(f"unitary must be square, got shape {m.shape}")
        dev = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))
        if dev > UNITARY_TOL:
            raise InvalidStateError(f"matrix is not unitary (|U^dag U - I|_max = {dev:.3g})")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, other):
        if isinstance(other, UnitaryOperator):
            return UnitaryOperator(self.matrix @ other.matrix)
        if isinstance(other, PureState):
            return PureState(self.matrix @ other.amplitudes)
        return NotImplemented

    def conjugate(self, rho: DensityOperator) -> DensityOperator:
        m = self.matrix @ rho.matrix @ self.matrix.conj().T
        return DensityOperator(0.5 * (m + m.conj().T))

    @property
    def dagger(self) -> UnitaryOperator:
        return UnitaryOperator(self.matrix.conj().T)


Operand = Union[PureState, DensityOperator, UnitaryOperator, np.ndarray]


def _raw(x) -> np.ndarray:
    if isinstance(x, PureState):
        return x.amplitudes
    if isinstance(x, (DensityOperator, UnitaryOperator)):
        return x.matrix
    return np.asarray(x, dtype=complex)


def tensor_product(a: Operand, b: Operand) -> Operand:
    """Kronecker product with ``a`` as the slow index.

    Two operands of the same wrapper type give that type back; anything
    else returns a plain array.
    """
    prod = np.kron(_raw(a), _raw(b))
    if type(a) is type(b) and isinstance(a, (PureState, DensityOperator, UnitaryOperator)):
        return type(a)(prod)
    return prod


def partial_trace(rho: DensityOperator | np.ndarray, subsystem_dims: Sequence[int], keep: int) -> DensityOperator:
    m = _raw(rho)
    dims = [int(d) for d in subsystem_dims]
    if int(np.prod(dims)) != m.shape[0]:
        raise DimensionError(f"subsystem dims {dims} do not multiply to {m.shape[0]}")
    if not 0 <= keep < len(dims):
        raise DimensionError(f"keep index {keep} out of range for {len(dims)} subsystems")
    n = len(dims)
    t = m.reshape(dims + dims)
    # move kept subsystem's row/col indices to the end, then trace the rest pairwise
    rows = [i for i in range(n) if i != keep]
    t = np.moveaxis(t, [keep, n + keep], [-2, -1])
    rest = int(np.prod([dims[i] for i in rows])) if rows else 1
    t = t.reshape(rest, rest, dims[keep], dims[keep])
    out = np.einsum("iijk->jk", t)
    return DensityOperator(0.5 * (out + out.conj().T))


def state_fidelity(rho: DensityOperator, target: PureState) -> float:
    """Return <target|rho|target>."""
    if rho.dim != target.dim:
        raise DimensionError(f"dimension mismatch: rho {rho.dim}, target {target.dim}")
    psi = target.amplitudes
    val = np.vdot(psi, rho.matrix @ psi)
    if abs(val.imag) > 1e-10:
        raise InvalidStateError(f"fidelity has imaginary residual {val.imag:.3g}")
    return float(np.clip(val.real, 0.0, 1.0))


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    # eigenvalues at rounding level are zeros; their square roots would not be
    w = np.where(w > 10 * np.finfo(float).eps * max(w.max(), 1.0) * len(w), w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def uhlmann_fidelity(rho: DensityOperator, sigma: DensityOperator) -> float:
    """Mixed-state fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))**2.

    Evaluated as the squared nuclear norm of sqrt(rho) sqrt(sigma), which
    stays accurate for rank-deficient arguments.
    """
    if rho.dim != sigma.dim:
        raise DimensionError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")
    sv = np.linalg.svd(_psd_sqrt(rho.matrix) @ _psd_sqrt(sigma.matrix), compute_uv=False)
    return float(np.clip(np.sum(sv) ** 2, 0.0, 1.0))


_SY = np.array([[0, -1j], [1j, 0]])
_SYSY = np.kron(_SY, _SY)


def concurrence(rho: DensityOperator) -> float:
    """Wootters concurrence of a two-qubit density operator."""
    if rho.dim != 4:
        raise DimensionError(f"concurrence needs a two-qubit state, got dim {rho.dim}")
    m = rho.matrix
    r = m @ _SYSY @ m.conj() @ _SYSY
    lam = np.sqrt(np.clip(np.sort(np.linalg.eigvals(r).real)[::-1], 0.0, None))
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def global_phase_alignment(u, v) -> complex:
    """Phase e^{i gamma} aligning ``v`` to ``u`` at v's largest-magnitude entry."""
    a, b = _raw(u), _raw(v)
    idx = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    if abs(b[idx]) == 0 or abs(a[idx]) == 0:
        return 1.0 + 0j
    ratio = a[idx] / b[idx]
    return ratio / abs(ratio)


def equal_up_to_global_phase(u, v, tol: float = 1e-9) -> bool:
    a, b = _raw(u), _raw(v)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return phase_distance(a, b) < tol


def phase_distance(u, v) -> float:
    """Max-norm distance between ``u`` and ``v`` after phase alignment."""
    a, b = _raw(u), _raw(v)
    return float(np.max(np.abs(a - global_phase_alignment(a, b) * b)))


def canonical_phase(m, rel_tol: float = 1e-6) -> np.ndarray:
    """Rotate the global phase so the first nonzero diagonal entry is real-positive.

    Entries below ``rel_tol`` times the largest magnitude count as zero, so
    integrator noise on a vanishing diagonal cannot pick the phase.
    """
    a = np.array(_raw(m), dtype=complex)
    tol = rel_tol * float(np.max(np.abs(a), initial=0.0))
    if tol == 0.0:
        return a
    diag = np.diag(a) if a.ndim == 2 else a
    big = np.flatnonzero(np.abs(diag) > tol)
    z = diag[big[0]] if big.size else a.ravel()[np.flatnonzero(np.abs(a.ravel()) > tol)[0]]
    a = a * (abs(z) / z)
    return a


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> DensityOperator:
    """Hilbert-Schmidt random state (or Ginibre of given rank)."""
    k = dim if rank is None else rank
    g = rng.normal(size=(dim, k)) + 1j * rng.normal(size=(dim, k))
    m = g @ g.conj().T
    m /= np.trace(m).real
    return DensityOperator(0.5 * (m + m.conj().T))


def random_unitary(dim: int, rng: np.random.Generator) -> UnitaryOperator:
    """Haar-random unitary via QR with phase fix."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return UnitaryOperator(q * (d / np.abs(d)))


def random_pure_state(dim: int, rng: np.random.Generator) -> PureState:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return PureState.from_unnormalized(v)


# --- JSON serialization: arrays of [re, im] pairs, row-major ---------------

def to_json(x) -> list:
    a = _raw(x)
    if a.ndim == 0:
        return [float(a.real), float(a.imag)]
    return [to_json(row) for row in a]


def from_json(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("expected trailing [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


# --- named states -----------------------------------------------------------

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

KET_0 = PureState.basis(2, 0)
KET_1 = PureState.basis(2, 1)
KET_UP = PureState.basis(2, 0)
KET_DOWN = PureState.basis(2, 1)


def register_ket(electron: int, nuclear: int) -> PureState:
    """Logical two-qubit basis ket |electron, nuclear> (nuclear index is slow)."""
    return PureState.basis(4, 2 * nuclear + electron)


def register_state(electron: Sequence[complex], nuclear: Sequence[complex]) -> PureState:
    """Product state built from electron and nuclear amplitude vectors."""
    e = np.asarray(electron, dtype=complex)
    n = np.asarray(nuclear, dtype=complex)
    return PureState.from_unnormalized(np.kron(n, e))
