"""State and process tomography with constrained maximum-likelihood fits.

Pauli settings are strings over ``IXYZ`` with one letter per qubit, first
letter on the first (slow) tensor factor.  State tomography uses the Pauli
matrices; process matrices use the operator basis ``I, X, -i sigma_y, Z``.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

from .state_algebra import (
    I2,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    DensityOperator,
    PureState,
    UnitaryOperator,
)

PAULI = {"I": I2, "X": SIGMA_X, "Y": SIGMA_Y, "Z": SIGMA_Z}
PROCESS_BASIS = (I2, SIGMA_X, -1j * SIGMA_Y, SIGMA_Z)
PROCESS_LABELS = ("I", "X", "Y", "Z")

QPT_INPUTS = (
    PureState(np.array([1, 0])),
    PureState(np.array([0, 1])),
    PureState(np.array([1, 1]) / np.sqrt(2)),
    PureState(np.array([1, -1j]) / np.sqrt(2)),
)

MLE_GTOL = 1e-8
MLE_MAXITER = 5000
TP_PENALTY = 1e6


class IncompleteSettingsError(ValueError):
    pass


class SingularReconstructionError(ValueError):
    def __init__(self, condition_number: float):
        super().__init__(f"process reconstruction system is singular (condition number {condition_number:.3g})")
        self.condition_number = condition_number


class MLEConvergenceWarning(RuntimeWarning):
    pass


@lru_cache(maxsize=None)
def pauli_settings(n_qubits: int) -> tuple[str, ...]:
    """All non-identity Pauli strings: 3 for one qubit, 15 for two."""
    labels = ("".join(p) for p in itertools.product("IXYZ", repeat=n_qubits))
    return tuple(lbl for lbl in labels if set(lbl) != {"I"})


def pauli_operator(label: str) -> np.ndarray:
    op = np.ones((1, 1), dtype=complex)
    for ch in label:
        op = np.kron(op, PAULI[ch])
    return op


@lru_cache(maxsize=None)
def _pauli_stack(labels: tuple[str, ...]) -> np.ndarray:
    return np.stack([pauli_operator(lbl) for lbl in labels])


@dataclass(frozen=True)
class MeasurementRecord:
    """Estimated expectation of one Pauli setting.

    ``std`` overrides the shot-noise estimate when the record came from a
    readout chain with its own error model (photon counts).
    """

    setting: str
    expectation: float
    shots: int | None = None
    std: float | None = None
    raw_counts: object | None = None

    def __post_init__(self):
        if set(self.setting) - set("IXYZ") or not self.setting:
            raise ValueError(f"bad Pauli setting {self.setting!r}")
        if not abs(self.expectation) <= 1.0 + 1e-12:
            raise ValueError(f"expectation {self.expectation} for {self.setting} is outside [-1, 1]")
        if self.shots is not None and self.shots <= 0:
            raise ValueError("shots must be positive")

    def sigma(self) -> float:
        if self.std is not None:
            return max(self.std, 1e-12)
        if self.shots is None:
            return 1.0
        var = max(1.0 - self.expectation**2, 1.0 / self.shots) / self.shots
        return float(np.sqrt(var))


def exact_records(rho: DensityOperator, n_qubits: int | None = None) -> list[MeasurementRecord]:
    n = n_qubits or int(round(np.log2(rho.dim)))
    return [
        MeasurementRecord(s, float(np.clip(rho.expectation(pauli_operator(s)), -1, 1)))
        for s in pauli_settings(n)
    ]


def sample_records(
    rho: DensityOperator, shots: int, rng: np.random.Generator, n_qubits: int | None = None
) -> list[MeasurementRecord]:
    """Projective two-outcome sampling of each Pauli setting."""
    n = n_qubits or int(round(np.log2(rho.dim)))
    out = []
    for s in pauli_settings(n):
        p_plus = float(np.clip((1.0 + rho.expectation(pauli_operator(s))) / 2.0, 0.0, 1.0))
        k = rng.binomial(shots, p_plus)
        out.append(MeasurementRecord(s, 2.0 * k / shots - 1.0, shots=shots))
    return out


def linear_inversion(records: Sequence[MeasurementRecord], n_qubits: int) -> np.ndarray:
    by_setting = {r.setting: r for r in records}
    needed = pauli_settings(n_qubits)
    missing = [s for s in needed if s not in by_setting]
    if missing:
        raise IncompleteSettingsError(f"missing Pauli settings: {', '.join(missing)}")
    d = 2**n_qubits
    rho = np.eye(d, dtype=complex)
    for s in needed:
        rho = rho + by_setting[s].expectation * pauli_operator(s)
    return rho / d


# --- T^dag T cone parameterization ---------------------------------------

def _lower_triangular_factor(m: np.ndarray) -> np.ndarray:
    """Lower-triangular T with real non-negative diagonal and T^dag T = m (m PSD)."""
    d = m.shape[0]
    j = np.eye(d)[::-1]
    w, v = np.linalg.eigh(j @ m @ j)
    s = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    _, r = np.linalg.qr(s)
    diag = np.diag(r)
    phases = np.where(np.abs(diag) > 0, np.conj(diag) / np.where(np.abs(diag) > 0, np.abs(diag), 1), 1.0)
    r = phases[:, None] * r
    return j @ r @ j


def _pack(t: np.ndarray) -> np.ndarray:
    d = t.shape[0]
    lo = np.tril_indices(d, -1)
    return np.concatenate([np.diag(t).real, t[lo].real, t[lo].imag])


def _unpack(x: np.ndarray, d: int) -> np.ndarray:
    lo = np.tril_indices(d, -1)
    k = len(lo[0])
    t = np.zeros((d, d), dtype=complex)
    t[np.diag_indices(d)] = x[:d]
    t[lo] = x[d : d + k] + 1j * x[d + k :]
    return t


def _pack_grad(x_mat: np.ndarray) -> np.ndarray:
    """Real gradient from X, where dL = Re tr(X dT)."""
    d = x_mat.shape[0]
    lo = np.tril_indices(d, -1)
    xt = x_mat.T
    return np.concatenate([np.diag(xt).real, xt[lo].real, -xt[lo].imag])


@dataclass(frozen=True)
class ConeFit:
    matrix: np.ndarray
    converged: bool
    iterations: int
    grad_norm: float
    loss: float


def fit_cone(
    loss_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    seed: np.ndarray,
    normalize: bool,
    gtol: float = MLE_GTOL,
    maxiter: int = MLE_MAXITER,
) -> ConeFit:
    """Minimize a loss over PSD matrices written as T^dag T (optionally / trace).

    ``loss_and_grad(m)`` returns the loss and a matrix G with
    dL = Re tr(G dm).
    """
    d = seed.shape[0]

    def to_matrix(x):
        t = _unpack(x, d)
        m = t.conj().T @ t
        return t, (m / np.trace(m).real if normalize else m)

    def fun(x):
        t, m = to_matrix(x)
        loss, g = loss_and_grad(m)
        if normalize:
            tr = np.trace(t.conj().T @ t).real
            g = (g - np.trace(g @ m) * np.eye(d)) / tr
        x_mat = (g + g.conj().T) @ t.conj().T
        return float(loss), _pack_grad(x_mat)

    x0 = _pack(_lower_triangular_factor(seed))
    res = minimize(
        fun, x0, jac=True, method="L-BFGS-B",
        options={"maxiter": maxiter, "gtol": gtol, "ftol": 0.0, "maxcor": 20},
    )
    _, m = to_matrix(res.x)
    _, grad = fun(res.x)
    gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
    return ConeFit(0.5 * (m + m.conj().T), gnorm < gtol, int(res.nit), gnorm, float(res.fun))


def _clamped_seed(h: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        return np.eye(h.shape[0], dtype=complex) / h.shape[0]
    m = (v * w) @ v.conj().T
    return m / np.trace(m).real


def mle_project(rho_raw: np.ndarray, records: Sequence[MeasurementRecord], full_output: bool = False):
    """Maximum-likelihood state under a Gaussian model of the Pauli records.

    The negative log-likelihood sum (model - observed)^2 / (2 sigma^2) is
    minimized over rho = T^dag T / tr(T^dag T), starting from the clamped
    linear estimate ``rho_raw``.  Emits :class:`MLEConvergenceWarning` and
    returns the best iterate if the gradient test is not met.
    """
    labels = tuple(r.setting for r in records)
    paulis = _pauli_stack(labels)
    d = paulis.shape[-1]
    ptrans = np.swapaxes(paulis, -1, -2).reshape(len(labels), d * d)
    obs = np.array([r.expectation for r in records])
    w = 1.0 / np.array([r.sigma() for r in records]) ** 2

    def loss_and_grad(rho):
        resid = (ptrans @ rho.ravel()).real - obs
        g = np.tensordot(w * resid, paulis, axes=1)
        return 0.5 * float(np.sum(w * resid**2)), g

    # gradients scale with the record weights, so the stopping test does too
    gtol = MLE_GTOL * max(1.0, float(w.max()))
    fit = fit_cone(loss_and_grad, _clamped_seed(np.asarray(rho_raw, dtype=complex)), normalize=True, gtol=gtol)
    if not fit.converged:
        warnings.warn(
            f"state MLE stopped after {fit.iterations} iterations with gradient {fit.grad_norm:.2g}",
            MLEConvergenceWarning,
            stacklevel=2,
        )
    rho = DensityOperator(fit.matrix / np.trace(fit.matrix).real)
    return (rho, fit) if full_output else rho


def state_tomography(
    records: Sequence[MeasurementRecord], n_qubits: int, mle: bool = True
) -> DensityOperator:
    """Linear inversion followed by the maximum-likelihood projection."""
    if n_qubits not in (1, 2):
        raise ValueError("state tomography supports 1 or 2 qubits")
    raw = linear_inversion(records, n_qubits)
    if not mle:
        return DensityOperator(_clamped_seed(raw))
    wanted = set(pauli_settings(n_qubits))
    used = [r for r in records if r.setting in wanted]
    return mle_project(raw, used)


# --- process tomography ----------------------------------------------------

class ProcessMatrix:
    """chi over the basis I, X, -i sigma_y, Z with eps(rho) = sum chi_mn E_m rho E_n^dag."""

    HERMITIAN_TOL = 1e-9
    PSD_TOL = -1e-8
    TP_TOL = 1e-6

    def __init__(self, chi, check_tp: bool = True):
        chi = np.array(chi, dtype=complex)
        if chi.shape != (4, 4):
            raise ValueError(f"chi must be 4x4, got {chi.shape}")
        herm = np.max(np.abs(chi - chi.conj().T))
        if herm > self.HERMITIAN_TOL:
            raise ValueError(f"chi is not Hermitian (deviation {herm:.3g})")
        chi = 0.5 * (chi + chi.conj().T)
        lam = np.linalg.eigvalsh(chi).min()
        if lam < self.PSD_TOL:
            raise ValueError(f"chi is not positive semidefinite (eigenvalue {lam:.3g})")
        chi.flags.writeable = False
        self.chi = chi
        if check_tp and self.tp_residual > self.TP_TOL:
            raise ValueError(f"chi is not trace preserving (residual {self.tp_residual:.3g})")

    @property
    def tp_residual(self) -> float:
        return float(np.max(np.abs(tp_map(self.chi) - I2)))

    @classmethod
    def from_unitary(cls, u) -> ProcessMatrix:
        m = np.asarray(getattr(u, "matrix", u), dtype=complex)
        c = np.array([np.trace(e.conj().T @ m) / 2.0 for e in PROCESS_BASIS])
        return cls(np.outer(c, c.conj()))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros((2, 2), dtype=complex)
        for m, em in enumerate(PROCESS_BASIS):
            for n, en in enumerate(PROCESS_BASIS):
                out += self.chi[m, n] * em @ rho @ en.conj().T
        return out

    def __repr__(self):
        return f"ProcessMatrix(tp_residual={self.tp_residual:.2e})"


def tp_map(chi: np.ndarray) -> np.ndarray:
    """sum_mn chi_mn E_n^dag E_m; the identity for a trace-preserving map."""
    out = np.zeros((2, 2), dtype=complex)
    for m, em in enumerate(PROCESS_BASIS):
        for n, en in enumerate(PROCESS_BASIS):
            out += chi[m, n] * en.conj().T @ em
    return out


def _process_design(inputs: Sequence[np.ndarray]) -> np.ndarray:
    """Rows: row-major vec of every output; columns: row-major vec(chi)."""
    cols = []
    for em in PROCESS_BASIS:
        for en in PROCESS_BASIS:
            cols.append(np.concatenate([(em @ rho @ en.conj().T).ravel() for rho in inputs]))
    return np.stack(cols, axis=1)


def _tp_design() -> np.ndarray:
    cols = [(en.conj().T @ em).ravel() for em in PROCESS_BASIS for en in PROCESS_BASIS]
    return np.stack(cols, axis=1)


def chi_from_superoperator(s: np.ndarray) -> np.ndarray:
    """chi for a single-qubit superoperator acting on row-major vec(rho)."""
    chi = np.zeros((4, 4), dtype=complex)
    for m, em in enumerate(PROCESS_BASIS):
        for n, en in enumerate(PROCESS_BASIS):
            basis = np.kron(em, en.conj())
            chi[m, n] = np.vdot(basis, s) / 4.0
    return chi


def reconstruct_chi(
    inputs: Sequence[np.ndarray],
    outputs: Sequence[np.ndarray],
    trace_preserving: bool = True,
    project: bool = True,
) -> ProcessMatrix:
    """Solve for chi from input/output density matrices, then fit it to the CP(-TP) cone."""
    design = _process_design(inputs)
    target = np.concatenate([np.asarray(o).ravel() for o in outputs])
    cond = np.linalg.cond(design)
    if not np.isfinite(cond) or cond > 1e10:
        raise SingularReconstructionError(cond)
    chi_lin = np.linalg.lstsq(design, target, rcond=None)[0].reshape(4, 4)
    chi_lin = 0.5 * (chi_lin + chi_lin.conj().T)
    if not project:
        return chi_lin
    system, rhs = design, target
    if trace_preserving:
        mu = np.sqrt(TP_PENALTY)
        system = np.vstack([design, mu * _tp_design()])
        rhs = np.concatenate([target, mu * I2.ravel()])

    def loss_and_grad(chi):
        r = system @ chi.ravel() - rhs
        c = (2.0 * system.conj().T @ r).reshape(4, 4)
        return float(np.vdot(r, r).real), c.conj().T

    w, v = np.linalg.eigh(chi_lin)
    seed = (v * np.clip(w, 0.0, None)) @ v.conj().T
    if np.trace(seed).real <= 0:
        seed = np.eye(4, dtype=complex) / 4
    # gradients carry the 1e6 penalty weight, so the stopping test is scaled with it
    fit = fit_cone(loss_and_grad, seed, normalize=False, gtol=MLE_GTOL * (TP_PENALTY if trace_preserving else 1.0))
    if not fit.converged:
        warnings.warn(
            f"process MLE stopped after {fit.iterations} iterations with gradient {fit.grad_norm:.2g}",
            MLEConvergenceWarning,
            stacklevel=2,
        )
    return ProcessMatrix(fit.matrix, check_tp=trace_preserving)


def process_tomography(
    gate_runner: Callable[[DensityOperator], object],
    n_qubits: int = 1,
    trace_preserving: bool = True,
) -> ProcessMatrix:
    """Four-input single-qubit process tomography.

    ``gate_runner`` maps an input density operator either to the output
    density operator or to a list of :class:`MeasurementRecord` for it,
    which is then state-tomographed.
    """
    if n_qubits != 1:
        raise ValueError("process tomography is provided for single qubits only")
    inputs = [s.projector() for s in QPT_INPUTS]
    outputs = []
    for rho in inputs:
        out = gate_runner(rho)
        if isinstance(out, DensityOperator):
            outputs.append(out.matrix)
        elif isinstance(out, np.ndarray):
            outputs.append(out)
        else:
            outputs.append(state_tomography(list(out), 1).matrix)
    return reconstruct_chi([r.matrix for r in inputs], outputs, trace_preserving=trace_preserving)


def process_fidelity(chi_e: ProcessMatrix, chi_id: ProcessMatrix) -> float:
    """Tr(chi_e chi_id)."""
    val = np.trace(chi_e.chi @ chi_id.chi)
    if abs(val.imag) > 1e-10:
        raise ValueError(f"process fidelity has imaginary part {val.imag:.3g}")
    return float(val.real)


def average_gate_fidelity(f_p: float, d: int = 2) -> float:
    """(d F_P + 1) / (d + 1)."""
    if not 0.0 <= f_p <= 1.0:
        raise ValueError(f"process fidelity {f_p} outside [0, 1]")
    if d < 2:
        raise ValueError(f"dimension must be at least 2, got {d}")
    return (d * f_p + 1.0) / (d + 1.0)


def unitary_runner(u: UnitaryOperator) -> Callable[[DensityOperator], DensityOperator]:
    return u.conjugate


def records_from_iterable(items: Iterable[dict]) -> list[MeasurementRecord]:
    """Build records from JSON-style dicts with keys setting/expectation[/shots/std]."""
    return [
        MeasurementRecord(
            str(it["setting"]), float(it["expectation"]), it.get("shots"), it.get("std")
        )
        for it in items
    ]
