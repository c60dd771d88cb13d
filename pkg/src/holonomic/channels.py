"""Quantum channels as superoperators on row-major vec(rho)."""

from __future__ import annotations

import numpy as np

from .state_algebra import DensityOperator
from .tomography import ProcessMatrix, chi_from_superoperator


class Channel:
    """Linear map rho -> S vec(rho), composed right-to-left like operators."""

    def __init__(self, superop: np.ndarray):
        s = np.array(superop, dtype=complex)
        d2 = s.shape[0]
        d = int(round(np.sqrt(d2)))
        if s.shape != (d2, d2) or d * d != d2:
            raise ValueError(f"superoperator must be d^2 x d^2, got {s.shape}")
        s.flags.writeable = False
        self.superop = s
        self.dim = d

    @classmethod
    def identity(cls, dim: int) -> Channel:
        return cls(np.eye(dim * dim))

    @classmethod
    def unitary(cls, u) -> Channel:
        m = np.asarray(getattr(u, "matrix", u), dtype=complex)
        return cls(np.kron(m, m.conj()))

    @classmethod
    def kraus(cls, ops) -> Channel:
        return cls(sum(np.kron(k, np.asarray(k).conj()) for k in ops))

    @classmethod
    def depolarizing(cls, dim: int, p: float) -> Channel:
        """rho -> (1 - p) rho + p tr(rho) I/d."""
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"depolarizing probability {p} outside [0, 1]")
        eye = np.eye(dim).ravel()
        return cls((1.0 - p) * np.eye(dim * dim) + p * np.outer(eye, eye) / dim)

    @classmethod
    def leaky(cls, block: np.ndarray) -> Channel:
        """Trace-preserving completion of a contracting logical block.

        Population that leaves the logical subspace is returned as the
        maximally mixed logical state.
        """
        k0 = np.asarray(block, dtype=complex)
        d = k0.shape[0]
        lost = np.eye(d) - k0.conj().T @ k0
        w, v = np.linalg.eigh(0.5 * (lost + lost.conj().T))
        # K_ij = sqrt(lambda_i / d) |j><v_i| over loss directions i and outputs j
        ops = [k0]
        for i in range(d):
            if w[i] <= 0:
                continue
            bra = np.sqrt(w[i] / d) * v[:, i].conj()
            for j in range(d):
                ket = np.zeros(d)
                ket[j] = 1.0
                ops.append(np.outer(ket, bra))
        return cls.kraus(ops)

    def __matmul__(self, other: Channel) -> Channel:
        if self.dim != other.dim:
            raise ValueError("channel dimensions differ")
        return Channel(self.superop @ other.superop)

    def power(self, n: int) -> Channel:
        return Channel(np.linalg.matrix_power(self.superop, n))

    def apply(self, rho) -> DensityOperator:
        m = np.asarray(getattr(rho, "matrix", rho), dtype=complex)
        out = (self.superop @ m.ravel()).reshape(self.dim, self.dim)
        out = 0.5 * (out + out.conj().T)
        return DensityOperator(out / np.trace(out).real)

    def apply_raw(self, rho: np.ndarray) -> np.ndarray:
        return (self.superop @ np.asarray(rho).ravel()).reshape(self.dim, self.dim)

    def choi(self) -> np.ndarray:
        """sum_ij |i><j| (x) E(|i><j|)."""
        d = self.dim
        c = np.zeros((d * d, d * d), dtype=complex)
        for i in range(d):
            for j in range(d):
                e = np.zeros((d, d))
                e[i, j] = 1.0
                c += np.kron(e, self.apply_raw(e))
        return c

    def tp_residual(self) -> float:
        d = self.dim
        # tr(E(X)) = tr(X) for all X  <=>  vec(I)^T S = vec(I)^T
        eye = np.eye(d).ravel()
        return float(np.max(np.abs(eye @ self.superop - eye)))

    def min_choi_eigenvalue(self) -> float:
        c = self.choi()
        return float(np.linalg.eigvalsh(0.5 * (c + c.conj().T)).min())

    def chi(self) -> np.ndarray:
        if self.dim != 2:
            raise ValueError("chi is defined here for single-qubit channels")
        return chi_from_superoperator(self.superop)

    def process_matrix(self) -> ProcessMatrix:
        return ProcessMatrix(self.chi())

    @staticmethod
    def average(channels) -> Channel:
        chans = list(channels)
        return Channel(sum(c.superop for c in chans) / len(chans))
