"""Measurement physics and noise: photon-count readout, Monte Carlo error
bars, quasi-static noise ensembles, Hahn echo, and gate-concatenation decay.

Readout model
-------------
Each basis level carries a calibrated mean photon count per cycle.  A Pauli
setting (or a population) is read by mapping its +1 outcome onto the bright
``m = 0`` level and the -1 outcome onto a dark level, so the signal window
collects Poisson(n_cycles * (p bright + (1 - p) dark)) photons.  A reference
window taken after re-pumping collects Poisson(n_cycles * reference) photons
and normalizes the signal.

Noise model
-----------
Quasi-static Gaussian detuning ``delta`` enters as ``(delta/2)(|1><1| - |0><0|)``
on the electron, Rabi amplitudes are scaled by ``(1 + eps)``, both drawn once
per ensemble member.  Channels are averaged over members and followed by a
depolarizing channel.  Echoed waits additionally lose electron coherence as
``exp(-t / t2_echo)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .channels import Channel
from .gates import GateKind, GateSpec, cnot_ideal, hamiltonian_fn, ideal_unitary, logical_basis, preset
from .propagation import TimeGrid, logical_block, propagate
from .pulses import SIX_LEVEL_LABELS, PulseEnvelope, envelope_value
from .state_algebra import (
    SIGMA_X,
    SIGMA_Z,
    DensityOperator,
    PureState,
    concurrence,
    register_ket,
    register_state,
    state_fidelity,
)
from .tomography import (
    MeasurementRecord,
    ProcessMatrix,
    QPT_INPUTS,
    exact_records,
    pauli_operator,
    pauli_settings,
    process_fidelity,
    average_gate_fidelity,
    reconstruct_chi,
    state_tomography,
)

NV_COUNTS_PER_CYCLE = 0.03
DEFAULT_CYCLES = 1_000_000
NV_SNR = 15.0
DEFAULT_CONTRAST = 0.3
DEFAULT_RF_WAIT = 20e-6

ELECTRON_LABELS = ("0", "1", "a")


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def trial_rng(seed: int, *index: int) -> np.random.Generator:
    """Independent stream for (seed, index...), independent of evaluation order."""
    return np.random.default_rng([int(seed), *map(int, index)])


# --- calibration and counts ---------------------------------------------------

@dataclass(frozen=True)
class FluorescenceCalibration:
    """Mean photon counts per cycle for every tracked spin component.

    ``snr`` is the detector signal-to-background ratio; it is carried for
    reporting, the level means already include background.
    """

    mean_counts_per_cycle: dict = field(default_factory=dict)
    snr: float = NV_SNR
    reference_window_counts: float = NV_COUNTS_PER_CYCLE
    bright_label: str = "a"
    dark_label: str = "1"

    def __post_init__(self):
        for label, mean in self.mean_counts_per_cycle.items():
            if not mean >= 0:
                raise ValueError(f"mean counts for {label!r} must be non-negative, got {mean}")
        if self.reference_window_counts < 0:
            raise ValueError("reference_window_counts must be non-negative")
        for label in (self.bright_label, self.dark_label):
            if label not in self.mean_counts_per_cycle:
                raise ValueError(f"readout level {label!r} is not calibrated")
        if self.bright == self.dark:
            raise ValueError("bright and dark readout levels must differ")

    @classmethod
    def nv_default(
        cls, bright: float = NV_COUNTS_PER_CYCLE, contrast: float = DEFAULT_CONTRAST, snr: float = NV_SNR
    ) -> FluorescenceCalibration:
        """m = 0 components at ``bright``, m = +-1 components dimmer by ``contrast``."""
        if not 0 < contrast <= 1:
            raise ValueError(f"contrast must lie in (0, 1], got {contrast}")
        dark = bright * (1.0 - contrast)
        means = {}
        for lbl in ELECTRON_LABELS + SIX_LEVEL_LABELS:
            means[lbl] = bright if lbl.startswith("a") else dark
        return cls(means, snr=snr, reference_window_counts=bright)

    def rate(self, label: str) -> float:
        try:
            return self.mean_counts_per_cycle[label]
        except KeyError:
            raise KeyError(f"state label {label!r} has no calibrated fluorescence level") from None

    @property
    def bright(self) -> float:
        return self.rate(self.bright_label)

    @property
    def dark(self) -> float:
        return self.rate(self.dark_label)


@dataclass(frozen=True)
class CountRecord:
    setting: str
    n_cycles: int
    signal_counts: int
    reference_counts: int

    def __post_init__(self):
        if self.n_cycles < 1:
            raise ValueError("n_cycles must be at least 1")
        if self.signal_counts < 0 or self.reference_counts < 0:
            raise ValueError("counts must be non-negative")

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "n_cycles": self.n_cycles,
            "signal_counts": self.signal_counts,
            "reference_counts": self.reference_counts,
        }


def _default_labels(dim: int) -> tuple[str, ...]:
    if dim == 3:
        return ELECTRON_LABELS
    if dim == 6:
        return SIX_LEVEL_LABELS
    raise ValueError(f"no default level labels for dimension {dim}; pass labels explicitly")


def simulate_counts(
    state: DensityOperator,
    cal: FluorescenceCalibration,
    n_cycles: int,
    seed,
    labels: Sequence[str] | None = None,
    setting: str = "",
) -> CountRecord:
    """Poisson signal and reference counts for ``n_cycles`` repetitions."""
    if n_cycles < 1:
        raise ValueError("n_cycles must be at least 1")
    labels = tuple(labels) if labels is not None else _default_labels(state.dim)
    if len(labels) != state.dim:
        raise ValueError(f"{len(labels)} labels for a {state.dim}-level state")
    rate = float(np.dot(state.populations(), [cal.rate(lbl) for lbl in labels]))
    rng = _rng(seed)
    signal = int(rng.poisson(rate * n_cycles))
    reference = int(rng.poisson(cal.reference_window_counts * n_cycles))
    return CountRecord(setting, int(n_cycles), signal, reference)


def binary_readout_state(p_bright: float) -> DensityOperator:
    p = float(np.clip(p_bright, 0.0, 1.0))
    return DensityOperator(np.diag([p, 1.0 - p]).astype(complex))


def estimate_population(record: CountRecord, cal: FluorescenceCalibration) -> tuple[float, float]:
    """Bright-level population and its delta-method standard deviation."""
    s, r, n = record.signal_counts, record.reference_counts, record.n_cycles
    span = cal.bright - cal.dark
    if r > 0 and cal.reference_window_counts > 0:
        rate = s / r * cal.reference_window_counts
        rel = math.sqrt(1.0 / max(s, 1) + 1.0 / r)
        rate_std = max(rate, cal.reference_window_counts / r) * rel
    else:
        rate = s / n
        rate_std = math.sqrt(max(s, 1)) / n
    return (rate - cal.dark) / span, rate_std / abs(span)


def measure_population(
    p_bright: float, cal: FluorescenceCalibration, n_cycles: int, seed, setting: str = ""
) -> CountRecord:
    labels = (cal.bright_label, cal.dark_label)
    return simulate_counts(binary_readout_state(p_bright), cal, n_cycles, seed, labels, setting)


def pauli_count_records(
    rho: DensityOperator, cal: FluorescenceCalibration, n_cycles: int, seed
) -> list[CountRecord]:
    """One count record per non-identity Pauli setting of ``rho``."""
    rng = _rng(seed)
    n_qubits = int(round(math.log2(rho.dim)))
    out = []
    for s in pauli_settings(n_qubits):
        p_plus = (1.0 + rho.expectation(pauli_operator(s))) / 2.0
        out.append(measure_population(p_plus, cal, n_cycles, rng, setting=s))
    return out


def records_from_counts(counts: Sequence[CountRecord], cal: FluorescenceCalibration) -> list[MeasurementRecord]:
    """Pauli expectations from counts, clipped to [-1, 1]."""
    out = []
    for c in counts:
        p, p_std = estimate_population(c, cal)
        e = float(np.clip(2.0 * p - 1.0, -1.0, 1.0))
        out.append(MeasurementRecord(c.setting, e, std=max(2.0 * p_std, 1e-6), raw_counts=c))
    return out


@dataclass(frozen=True)
class MonteCarloResult:
    mean: float | np.ndarray
    std: float | np.ndarray
    n_trials: int
    n_failed: int = 0

    @property
    def flagged(self) -> bool:
        return self.n_failed > 0


def resample_counts(record: CountRecord, rng: np.random.Generator) -> CountRecord:
    return CountRecord(
        record.setting,
        record.n_cycles,
        int(rng.poisson(record.signal_counts)),
        int(rng.poisson(record.reference_counts)),
    )


def monte_carlo_error_bar(
    estimator: Callable,
    record: CountRecord | Sequence[CountRecord],
    n_trials: int,
    seed: int,
) -> MonteCarloResult:
    """Mean and standard deviation of ``estimator`` over Poisson resamples.

    Every count in ``record`` is redrawn from a Poisson law centred on its
    observed value.  Trials whose estimator raises are dropped and counted.
    Vector-valued estimators give element-wise statistics.
    """
    if n_trials < 100:
        raise ValueError("n_trials must be at least 100")
    single = isinstance(record, CountRecord)
    values = []
    failed = 0
    for k in range(n_trials):
        rng = trial_rng(seed, k)
        if single:
            sample = resample_counts(record, rng)
        else:
            sample = [resample_counts(r, rng) for r in record]
        try:
            values.append(np.asarray(estimator(sample), dtype=float))
        except Exception:  # noqa: BLE001 - any estimator failure drops the trial
            failed += 1
    if not values:
        raise RuntimeError("estimator failed on every Monte Carlo trial")
    arr = np.stack(values)
    mean, std = arr.mean(axis=0), arr.std(axis=0, ddof=1)
    if mean.ndim == 0:
        mean, std = float(mean), float(std)
    return MonteCarloResult(mean, std, len(values), failed)


# --- noise ----------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    detuning_sigma: float = 0.0
    rabi_error_fraction: float = 0.0
    depolarizing_per_gate: float = 0.0
    n_ensemble: int = 1
    t2_echo: float = math.inf
    initial_mixture: float = 0.0

    def __post_init__(self):
        for name in ("detuning_sigma", "rabi_error_fraction", "depolarizing_per_gate", "initial_mixture"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("depolarizing_per_gate", "initial_mixture"):
            if getattr(self, name) > 1:
                raise ValueError(f"{name} must not exceed 1")
        if int(self.n_ensemble) != self.n_ensemble or self.n_ensemble < 1:
            raise ValueError("n_ensemble must be a positive integer")
        if not self.t2_echo > 0:
            raise ValueError("t2_echo must be positive")

    def prepare(self, state) -> np.ndarray:
        """Initial density matrix with a fraction ``initial_mixture`` of I/d."""
        m = state.projector().matrix if isinstance(state, PureState) else np.asarray(getattr(state, "matrix", state))
        d = m.shape[0]
        return (1.0 - self.initial_mixture) * m + self.initial_mixture * np.eye(d) / d

    @property
    def quasi_static(self) -> bool:
        return self.detuning_sigma > 0 or self.rabi_error_fraction > 0

    @classmethod
    def cnot_default(cls) -> NoiseModel:
        """Calibration for the electron-nuclear experiment.

        A 7 us inhomogeneous dephasing time (sigma = 2e5 rad/s), 1% Rabi
        amplitude spread, 1% depolarization per gate and a 150 us echo
        coherence time; with 20 us RF segments this puts the Bell-state
        fidelity near 0.92 and its concurrence near 0.85.
        """
        return cls(detuning_sigma=2e5, rabi_error_fraction=0.01, depolarizing_per_gate=0.01,
                   n_ensemble=24, t2_echo=150e-6)


def electron_detuning_operator(kind: GateKind) -> np.ndarray:
    """(|1><1| - |0><0|) / 2 on the full gate space."""
    single = np.diag([-0.5, 0.5, 0.0]).astype(complex)
    if kind is GateKind.CNOT:
        return np.kron(np.eye(2), single)
    return single


def noisy_block(spec: GateSpec, grid: TimeGrid, detuning: float = 0.0, rabi_scale: float = 1.0) -> np.ndarray:
    """Logical block of the propagator with a fixed detuning and amplitude error."""
    h0 = hamiltonian_fn(spec)
    det = detuning * electron_detuning_operator(spec.kind)

    def h(t):
        return rabi_scale * h0(t) + det

    u = propagate(h, grid)
    return logical_block(u, logical_basis(spec)).u_logical


def ensemble_draws(noise: NoiseModel, seed: int) -> list[tuple[float, float]]:
    if not noise.quasi_static:
        return [(0.0, 0.0)]
    draws = []
    for k in range(noise.n_ensemble):
        rng = trial_rng(seed, k)
        draws.append((rng.normal(0.0, noise.detuning_sigma), rng.normal(0.0, noise.rabi_error_fraction)))
    return draws


def apply_noise_ensemble(spec: GateSpec, noise: NoiseModel, grid: TimeGrid | None = None, seed: int = 0) -> Channel:
    """Ensemble-averaged logical channel followed by depolarization."""
    grid = grid or TimeGrid.over(spec.duration)
    members = [
        Channel.leaky(noisy_block(spec, grid, delta, 1.0 + eps)) for delta, eps in ensemble_draws(noise, seed)
    ]
    avg = Channel.average(members)
    if noise.depolarizing_per_gate > 0:
        avg = Channel.depolarizing(avg.dim, noise.depolarizing_per_gate) @ avg
    return avg


# --- waits and echo ----------------------------------------------------------

def _electron_op(op: np.ndarray, dim: int) -> np.ndarray:
    if dim == 2:
        return op
    if dim == 4:
        return np.kron(np.eye(2), op)
    raise ValueError(f"unsupported register dimension {dim}")


def wait_unitary(delta: float, t: float, dim: int = 2) -> np.ndarray:
    """Free evolution under (delta/2)(|1><1| - |0><0|) for time t."""
    return _electron_op(np.diag([np.exp(0.5j * delta * t), np.exp(-0.5j * delta * t)]), dim)


def echo_unitary(delta: float, t: float, dim: int = 2) -> np.ndarray:
    """X W(t/2) X W(t/2): a Hahn echo with the flip undone at the end."""
    w = wait_unitary(delta, t / 2.0, dim)
    x = _electron_op(SIGMA_X, dim)
    return x @ w @ x @ w


def dephasing_channel(gamma: float, dim: int = 2) -> Channel:
    """Scale electron coherences by ``gamma``."""
    z = _electron_op(SIGMA_Z, dim)
    return Channel.kraus([math.sqrt((1 + gamma) / 2) * np.eye(dim), math.sqrt((1 - gamma) / 2) * z])


def wait_channel(t_wait: float, noise: NoiseModel, seed: int = 0, dim: int = 2, echo: bool = True) -> Channel:
    """Ensemble-averaged (echoed) wait including the echo-limited decay."""
    if t_wait < 0:
        raise ValueError("t_wait must be non-negative")
    if noise.detuning_sigma > 0:
        deltas = [trial_rng(seed, k).normal(0.0, noise.detuning_sigma) for k in range(noise.n_ensemble)]
    else:
        deltas = [0.0]
    make = echo_unitary if echo else wait_unitary
    chan = Channel.average(Channel.unitary(make(d, t_wait, dim)) for d in deltas)
    if math.isfinite(noise.t2_echo) and t_wait > 0:
        chan = dephasing_channel(math.exp(-t_wait / noise.t2_echo), dim) @ chan
    return chan


def echo_sequence(core: Channel, t_wait: float, noise: NoiseModel, seed: int = 0, echo: bool = True) -> Channel:
    """Follow ``core`` by an echoed wait of total length ``t_wait``.

    The wait draws its own quasi-static detunings; with ``echo`` the flip
    pair refocuses each of them exactly.
    """
    return wait_channel(t_wait, noise, seed, core.dim, echo) @ core


# --- concatenation decay ---------------------------------------------------

@dataclass(frozen=True)
class DecayPoint:
    n: int
    fidelity: float
    error: float


def concatenation_decay(
    spec: GateSpec,
    noise: NoiseModel,
    n_max: int,
    initial: PureState,
    n_cycles: int | None = DEFAULT_CYCLES,
    cal: FluorescenceCalibration | None = None,
    grid: TimeGrid | None = None,
    seed: int = 0,
    channel: Channel | None = None,
) -> list[DecayPoint]:
    """Population fidelity after n = 0..n_max repetitions of a noisy gate.

    ``n_cycles=None`` returns exact populations with zero error bars.
    """
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    cal = cal or FluorescenceCalibration.nv_default()
    chan = channel or apply_noise_ensemble(spec, noise, grid, seed)
    u = ideal_unitary(spec).matrix
    rho = noise.prepare(initial)
    target = initial.amplitudes
    curve = []
    for n in range(n_max + 1):
        p = float(np.vdot(target, rho @ target).real)
        if n_cycles is None:
            curve.append(DecayPoint(n, p, 0.0))
        else:
            rec = measure_population(p, cal, n_cycles, trial_rng(seed, 1, n), setting=f"n={n}")
            est, std = estimate_population(rec, cal)
            curve.append(DecayPoint(n, est, std))
        rho = chan.apply_raw(rho)
        target = u @ target
    return curve


class FitError(RuntimeError):
    pass


def decay_model(n, b, eps):
    return 0.5 + b * np.power(1.0 - 2.0 * eps, n)


def fit_per_gate_error(curve: Sequence[DecayPoint]) -> tuple[float, float]:
    """Weighted fit of F(n) = 0.5 + B (1 - 2 eps)^n; returns (eps, std error)."""
    if len(curve) < 5:
        raise ValueError("need at least 5 points to fit")
    n = np.array([c.n for c in curve], dtype=float)
    f = np.array([c.fidelity for c in curve], dtype=float)
    err = np.array([c.error for c in curve], dtype=float)
    sigma = err if np.all(err > 0) else None
    b0 = max(f[0] - 0.5, 1e-3)
    y = np.clip((f - 0.5) / b0, 1e-6, None)
    slope = np.polyfit(n, np.log(y), 1)[0]
    eps0 = float(np.clip(-slope / 2.0, -0.1, 0.4))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, _ = curve_fit(
                decay_model, n, f, p0=[b0, eps0], sigma=sigma, absolute_sigma=sigma is not None,
                xtol=1e-14, ftol=1e-14, maxfev=20000,
            )
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"decay fit did not converge: {exc}") from exc
    if not np.all(np.isfinite(popt)):
        raise FitError("decay fit returned non-finite parameters")
    # covariance from the analytic Jacobian; unweighted fits scale by the residual variance
    b, eps = popt
    q = 1.0 - 2.0 * eps
    jac = np.stack([np.power(q, n), -2.0 * b * n * np.power(q, n - 1)], axis=1)
    w = 1.0 / sigma**2 if sigma is not None else np.ones_like(f)
    cov = np.linalg.pinv(jac.T @ (w[:, None] * jac))
    if sigma is None:
        cov *= float(np.sum((f - decay_model(n, *popt)) ** 2)) / max(len(f) - 2, 1)
    std = float(np.sqrt(max(cov[1, 1], 0.0)))
    return float(eps), std


# --- CNOT experiment ------------------------------------------------------------

SQ = 1 / math.sqrt(2)
CNOT_INPUTS = {
    "|0,up>": register_ket(0, 0),
    "|1,up>": register_ket(1, 0),
    "|0,down>": register_ket(0, 1),
    "|1,down>": register_ket(1, 1),
    "|0>(|up>+|down>)": register_state([1, 0], [SQ, SQ]),
    "(|0>+|1>)|up>": register_state([SQ, SQ], [1, 0]),
}
BELL_INPUT = "|0>(|up>+|down>)"


@dataclass(frozen=True)
class StateResult:
    label: str
    fidelity: float
    fidelity_error: float
    rho: DensityOperator
    concurrence: float | None = None
    concurrence_error: float | None = None


def cnot_channel(
    noise: NoiseModel,
    pulse: PulseEnvelope | None = None,
    grid: TimeGrid | None = None,
    rf_wait: float = DEFAULT_RF_WAIT,
    seed: int = 0,
) -> Channel:
    """Noisy CNOT with echoed RF segments before and after it."""
    spec = preset("CNOT", pulse)
    core = apply_noise_ensemble(spec, noise, grid, seed)
    prep = wait_channel(rf_wait, noise, seed + 1, dim=4)
    readout = wait_channel(rf_wait, noise, seed + 2, dim=4)
    return readout @ core @ prep


def tomograph(
    rho: DensityOperator,
    cal: FluorescenceCalibration,
    n_cycles: int | None,
    seed: int,
    metrics: Callable[[DensityOperator], Sequence[float]],
    n_trials: int = 100,
):
    """Reconstruct ``rho`` from simulated counts and attach Monte Carlo error bars.

    Returns (reconstruction, metric values, metric standard deviations).
    """
    n_qubits = int(round(math.log2(rho.dim)))
    if n_cycles is None:
        est = state_tomography(exact_records(rho), n_qubits)
        vals = np.asarray(metrics(est), dtype=float)
        return est, vals, np.zeros_like(vals)
    counts = pauli_count_records(rho, cal, n_cycles, trial_rng(seed, 0))

    def estimate(cs):
        return metrics(state_tomography(records_from_counts(cs, cal), n_qubits))

    est = state_tomography(records_from_counts(counts, cal), n_qubits)
    vals = np.asarray(metrics(est), dtype=float)
    mc = monte_carlo_error_bar(estimate, counts, n_trials, seed + 7919)
    return est, vals, np.atleast_1d(mc.std)


def cnot_experiment(
    noise: NoiseModel,
    inputs: dict | None = None,
    n_cycles: int | None = DEFAULT_CYCLES,
    cal: FluorescenceCalibration | None = None,
    pulse: PulseEnvelope | None = None,
    grid: TimeGrid | None = None,
    rf_wait: float = DEFAULT_RF_WAIT,
    seed: int = 0,
    n_trials: int = 100,
    channel: Channel | None = None,
) -> list[StateResult]:
    """Apply the noisy CNOT to each input and state-tomograph the output."""
    inputs = inputs if inputs is not None else CNOT_INPUTS
    cal = cal or FluorescenceCalibration.nv_default()
    chan = channel or cnot_channel(noise, pulse, grid, rf_wait, seed)
    u = cnot_ideal()
    results = []
    for k, (label, psi) in enumerate(inputs.items()):
        target = u @ psi
        entangled = concurrence(target.projector()) > 1e-9
        out = chan.apply(noise.prepare(psi))

        def metrics(r, target=target, entangled=entangled):
            vals = [state_fidelity(r, target)]
            if entangled:
                vals.append(concurrence(r))
            return vals

        est, vals, stds = tomograph(out, cal, n_cycles, trial_rng(seed, 2, k).integers(2**31), metrics, n_trials)
        results.append(
            StateResult(
                label, float(vals[0]), float(stds[0]), est,
                float(vals[1]) if entangled else None,
                float(stds[1]) if entangled else None,
            )
        )
    return results


# --- single-qubit process tomography -----------------------------------------

@dataclass(frozen=True)
class QPTResult:
    chi: ProcessMatrix
    chi_ideal: ProcessMatrix
    process_fidelity: float
    average_fidelity: float
    process_fidelity_error: float
    average_fidelity_error: float
    mc_failed: int = 0


def qpt_experiment(
    channel: Channel,
    ideal,
    cal: FluorescenceCalibration | None = None,
    n_cycles: int | None = DEFAULT_CYCLES,
    seed: int = 0,
    n_trials: int = 200,
) -> QPTResult:
    """Four-input process tomography of ``channel`` read out through photon counts."""
    cal = cal or FluorescenceCalibration.nv_default()
    chi_id = ProcessMatrix.from_unitary(ideal)
    inputs = [s.projector() for s in QPT_INPUTS]
    outputs = [channel.apply(r) for r in inputs]
    if n_cycles is None:
        chi = reconstruct_chi([r.matrix for r in inputs], [
            state_tomography(exact_records(o), 1).matrix for o in outputs
        ])
        fp = process_fidelity(chi, chi_id)
        return QPTResult(chi, chi_id, fp, average_gate_fidelity(min(fp, 1.0)), 0.0, 0.0)

    counts = []
    for j, out in enumerate(outputs):
        counts.extend(pauli_count_records(out, cal, n_cycles, trial_rng(seed, 3, j)))

    def estimate_chi(cs):
        outs = [
            state_tomography(records_from_counts(cs[3 * j : 3 * j + 3], cal), 1).matrix for j in range(4)
        ]
        return reconstruct_chi([r.matrix for r in inputs], outs)

    chi = estimate_chi(counts)
    fp = process_fidelity(chi, chi_id)
    mc = monte_carlo_error_bar(lambda cs: process_fidelity(estimate_chi(cs), chi_id), counts, n_trials, seed + 104729)
    fbar = average_gate_fidelity(float(np.clip(fp, 0.0, 1.0)))
    return QPTResult(chi, chi_id, fp, fbar, mc.std, 2.0 * mc.std / 3.0, mc.n_failed)


# --- robustness scan ---------------------------------------------------------------

def dynamic_not_block(pulse: PulseEnvelope, grid: TimeGrid, rabi_scale: float = 1.0, detuning: float = 0.0) -> np.ndarray:
    """Resonant two-level pi pulse, H = (Omega/2) sigma_x, with the same envelope."""
    det = detuning * np.diag([-0.5, 0.5]).astype(complex)

    def h(t):
        return np.multiply.outer(0.5 * rabi_scale * envelope_value(pulse, t), SIGMA_X) + det

    return propagate(h, grid).matrix


def robustness_sweep(
    errors: Sequence[float], pulse: PulseEnvelope | None = None, grid: TimeGrid | None = None
) -> list[dict]:
    """Average gate fidelity of geometric and dynamic NOT gates under a systematic amplitude error."""
    spec = preset("N", pulse)
    grid = grid or TimeGrid.over(spec.duration)
    chi_x = ProcessMatrix.from_unitary(SIGMA_X)
    rows = []
    for e in errors:
        geo = Channel.leaky(noisy_block(spec, grid, 0.0, 1.0 + e))
        dyn = Channel.unitary(dynamic_not_block(spec.pulse, grid, 1.0 + e))
        f_geo = process_fidelity(geo.process_matrix(), chi_x)
        f_dyn = process_fidelity(dyn.process_matrix(), chi_x)
        rows.append({
            "rabi_error": float(e),
            "geometric_avg_fidelity": average_gate_fidelity(float(np.clip(f_geo, 0, 1))),
            "dynamic_avg_fidelity": average_gate_fidelity(float(np.clip(f_dyn, 0, 1))),
        })
    return rows


def with_noise(noise: NoiseModel, **changes) -> NoiseModel:
    return replace(noise, **changes)
