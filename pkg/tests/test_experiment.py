import math

import numpy as np
import pytest

from holonomic.channels import Channel
from holonomic.experiment import (
    BELL_INPUT,
    CNOT_INPUTS,
    CountRecord,
    DecayPoint,
    FitError,
    FluorescenceCalibration,
    NoiseModel,
    apply_noise_ensemble,
    cnot_experiment,
    concatenation_decay,
    decay_model,
    echo_sequence,
    echo_unitary,
    estimate_population,
    fit_per_gate_error,
    measure_population,
    monte_carlo_error_bar,
    robustness_sweep,
    simulate_counts,
    wait_channel,
    wait_unitary,
)
from holonomic.gates import ideal_unitary, preset
from holonomic.propagation import TimeGrid
from holonomic.state_algebra import KET_0, KET_1, DensityOperator, PureState, random_density_matrix
from holonomic.tomography import ProcessMatrix, process_fidelity

GRID = TimeGrid.over(1e-6, 1000)
N_SPEC = preset("N")
CAL = FluorescenceCalibration.nv_default()


def six_level_cal(**means):
    base = {lbl: 0.0 for lbl in ("0,up", "1,up", "a,up", "0,down", "1,down", "a,down")}
    base.update(means)
    return FluorescenceCalibration(base, reference_window_counts=0.03, bright_label="0,up", dark_label="1,up")


def basis6(k):
    return PureState.basis(6, k).projector()


def test_calibration_validation():
    with pytest.raises(ValueError):
        FluorescenceCalibration({"a": -0.1, "1": 0.0})
    with pytest.raises(ValueError):
        FluorescenceCalibration({"a": 0.03})
    with pytest.raises(ValueError):
        FluorescenceCalibration.nv_default(contrast=0.0)
    assert CAL.bright == 0.03 and CAL.dark == pytest.approx(0.021)


def test_count_record_validation():
    with pytest.raises(ValueError):
        CountRecord("Z", 0, 0, 0)
    with pytest.raises(ValueError):
        CountRecord("Z", 10, -1, 0)


def test_counts_at_nv_statistics():
    rec = simulate_counts(basis6(0), six_level_cal(**{"0,up": 0.03}), 1_000_000, seed=1)
    assert abs(rec.signal_counts - 30_000) < 5 * math.sqrt(30_000)


def test_dark_single_cycle_gives_zero():
    rec = simulate_counts(basis6(1), six_level_cal(**{"0,up": 0.03}), 1, seed=2)
    assert rec.signal_counts == 0


def test_mixture_mean_law_of_large_numbers():
    a, b = 0.03, 0.01
    cal = six_level_cal(**{"0,up": a, "1,up": b})
    rho = DensityOperator(np.diag([0.5, 0.5, 0, 0, 0, 0]).astype(complex))
    counts = np.array([simulate_counts(rho, cal, 100, seed=s).signal_counts for s in range(10_000)])
    mean = (a + b) / 2 * 100
    assert abs(counts.mean() - mean) < 3 * math.sqrt(mean / len(counts))


def test_unknown_label_is_an_error():
    cal = FluorescenceCalibration({"a": 0.03, "1": 0.02})
    with pytest.raises(KeyError):
        simulate_counts(DensityOperator.maximally_mixed(3), cal, 10, seed=0)


def test_counts_reproducible():
    rho = random_density_matrix(6, np.random.default_rng(0))
    assert simulate_counts(rho, CAL, 1000, 5) == simulate_counts(rho, CAL, 1000, 5)


def test_population_estimate_unbiased():
    est = [estimate_population(measure_population(0.3, CAL, 1_000_000, s), CAL)[0] for s in range(200)]
    assert np.mean(est) == pytest.approx(0.3, abs=0.02)


def test_mc_constant_estimator():
    rec = CountRecord("Z", 1000, 30, 30)
    assert monte_carlo_error_bar(lambda c: 1.0, rec, 100, seed=0).std == 0.0


def test_mc_poisson_scale():
    rec = CountRecord("Z", 1_000_000, 30_000, 30_000)
    res = monte_carlo_error_bar(lambda c: c.signal_counts / c.n_cycles, rec, 10_000, seed=1)
    assert res.std == pytest.approx(math.sqrt(30_000) / 1_000_000, rel=0.2)
    assert res.mean == pytest.approx(0.03, rel=1e-3)


def test_mc_needs_100_trials():
    with pytest.raises(ValueError):
        monte_carlo_error_bar(lambda c: 1.0, CountRecord("Z", 10, 1, 1), 99, seed=0)


def test_mc_drops_failing_trials():
    rec = CountRecord("Z", 100, 3, 3)

    def flaky(c):
        if c.signal_counts == 0:
            raise ZeroDivisionError
        return 1.0 / c.signal_counts

    res = monte_carlo_error_bar(flaky, rec, 500, seed=3)
    assert res.flagged and res.n_failed + res.n_trials == 500


def test_mc_is_order_independent():
    recs = [CountRecord("X", 100, 5, 3), CountRecord("Y", 100, 4, 3)]
    a = monte_carlo_error_bar(lambda cs: cs[0].signal_counts + cs[1].signal_counts, recs, 200, seed=7)
    b = monte_carlo_error_bar(lambda cs: cs[0].signal_counts + cs[1].signal_counts, recs, 200, seed=7)
    assert a == b


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(detuning_sigma=-1.0)
    with pytest.raises(ValueError):
        NoiseModel(depolarizing_per_gate=1.5)
    with pytest.raises(ValueError):
        NoiseModel(n_ensemble=0)


def test_zero_noise_is_ideal_gate():
    chan = apply_noise_ensemble(N_SPEC, NoiseModel(), GRID)
    assert np.max(np.abs(chan.superop - Channel.unitary(ideal_unitary(N_SPEC)).superop)) < 1e-8


def test_depolarizing_on_not():
    p = 0.1
    chan = apply_noise_ensemble(N_SPEC, NoiseModel(depolarizing_per_gate=p), GRID)
    out = chan.apply_raw(KET_0.projector().matrix)
    assert np.allclose(out, np.diag([p / 2, 1 - p / 2]), atol=1e-8)


def test_rabi_error_lowers_fidelity():
    ideal = ProcessMatrix.from_unitary(ideal_unitary(N_SPEC))
    for n in range(1, 11):
        chan = apply_noise_ensemble(N_SPEC, NoiseModel(rabi_error_fraction=0.05, n_ensemble=n), GRID, seed=n)
        assert process_fidelity(chan.process_matrix(), ideal) < 1 - 1e-6


def test_noisy_channels_are_cptp():
    noise = NoiseModel(3e5, 0.03, 0.02, n_ensemble=6)
    chans = [
        apply_noise_ensemble(N_SPEC, noise, GRID, seed=1),
        apply_noise_ensemble(preset("CNOT"), noise, GRID, seed=2),
        wait_channel(20e-6, NoiseModel(2e5, n_ensemble=8, t2_echo=1e-4), seed=3, dim=4),
    ]
    rng = np.random.default_rng(4)
    for chan in chans:
        assert chan.tp_residual() < 1e-8
        for _ in range(100):
            out = chan.apply_raw(random_density_matrix(chan.dim, rng).matrix)
            assert np.linalg.eigvalsh(0.5 * (out + out.conj().T)).min() > -1e-10


def test_zero_noise_decay_is_flat():
    curve = concatenation_decay(N_SPEC, NoiseModel(), 20, KET_0, n_cycles=None, grid=GRID)
    assert all(abs(p.fidelity - 1) < 1e-8 for p in curve)
    shot = concatenation_decay(N_SPEC, NoiseModel(), 20, KET_1, grid=GRID, seed=1)
    assert all(abs(p.fidelity - 1) < 5 * p.error for p in shot)


def test_half_depolarized_single_gate():
    curve = concatenation_decay(N_SPEC, NoiseModel(depolarizing_per_gate=0.5), 2, KET_0, n_cycles=None, grid=GRID)
    assert curve[1].fidelity == pytest.approx(0.75, abs=1e-8)


def test_decay_at_quarter_percent_error():
    eps = 0.0024
    curve = concatenation_decay(N_SPEC, NoiseModel(depolarizing_per_gate=2 * eps), 100, KET_0, n_cycles=None, grid=GRID)
    assert curve[100].fidelity == pytest.approx(decay_model(100, 0.5, eps), abs=1e-7)
    assert 1 - curve[100].fidelity == pytest.approx(0.191, abs=0.002)


def test_decay_needs_two_gates():
    with pytest.raises(ValueError):
        concatenation_decay(N_SPEC, NoiseModel(), 1, KET_0)


def test_fit_exact_curve():
    curve = [DecayPoint(n, decay_model(n, 0.5, 0.0024), 0.0) for n in range(101)]
    eps, _ = fit_per_gate_error(curve)
    assert abs(eps - 0.0024) < 1e-6


def test_fit_flat_curve():
    eps, std = fit_per_gate_error([DecayPoint(n, 1.0, 0.0) for n in range(30)])
    assert eps == pytest.approx(0.0, abs=1e-12)
    assert math.isfinite(std)


def test_fit_needs_five_points():
    with pytest.raises(ValueError):
        fit_per_gate_error([DecayPoint(n, 1.0, 0.01) for n in range(4)])


def test_fit_failure_is_reported():
    with pytest.raises(FitError):
        fit_per_gate_error([DecayPoint(n, float("nan"), 0.01) for n in range(10)])


def test_fit_shot_noise_regime():
    chan = apply_noise_ensemble(N_SPEC, NoiseModel(depolarizing_per_gate=0.0048), GRID)
    eps, std = fit_per_gate_error(concatenation_decay(N_SPEC, NoiseModel(), 100, KET_0, seed=3, channel=chan))
    assert abs(eps - 0.0024) < 3 * std
    assert std < 0.0006


def test_fit_unbiased_at_zero_noise():
    ideal = Channel.unitary(ideal_unitary(N_SPEC))
    eps = np.array([
        fit_per_gate_error(concatenation_decay(N_SPEC, NoiseModel(), 100, KET_0, seed=s, channel=ideal))[0]
        for s in range(200)
    ])
    assert abs(eps.mean()) < 2 * eps.std(ddof=1) / math.sqrt(len(eps))


def test_echo_without_detuning_is_identity():
    core = Channel.unitary(ideal_unitary(N_SPEC))
    echoed = echo_sequence(core, 10e-6, NoiseModel())
    assert np.allclose(echoed.superop, core.superop, atol=1e-14)


def test_static_detuning_phase():
    delta, t = 3.0e5, 7e-6
    plus = np.array([[0.5, 0.5], [0.5, 0.5]])
    bare = wait_unitary(delta, t) @ plus @ wait_unitary(delta, t).conj().T
    assert bare[0, 1] / 0.5 == pytest.approx(np.exp(1j * delta * t), abs=1e-12)
    u = echo_unitary(delta, t)
    echoed = u @ plus @ u.conj().T
    assert abs(echoed[0, 1] / 0.5 - 1) < 1e-10


def test_gaussian_dephasing_without_echo():
    sigma, t = 1e5, 1e-5
    chan = wait_channel(t, NoiseModel(detuning_sigma=sigma, n_ensemble=10_000), seed=0, echo=False)
    coh = abs(chan.apply_raw(np.full((2, 2), 0.5))[0, 1]) / 0.5
    assert coh == pytest.approx(math.exp(-(sigma * t) ** 2 / 2), rel=0.05)


def test_echo_cancels_any_static_detuning():
    chi_id = ProcessMatrix.from_unitary(np.eye(2))
    t = 20e-6
    for phase in (0.0, 1.0, 37.0, -500.0, 1e3):
        chan = Channel.unitary(echo_unitary(phase / t, t))
        assert 1 - process_fidelity(chan.process_matrix(), chi_id) < 1e-9


def test_echo_t2_decay():
    chan = wait_channel(50e-6, NoiseModel(t2_echo=100e-6))
    assert abs(chan.apply_raw(np.full((2, 2), 0.5))[0, 1]) / 0.5 == pytest.approx(math.exp(-0.5))


def test_noiseless_cnot_experiment():
    inputs = {k: CNOT_INPUTS[k] for k in ("|0,up>", "|1,down>", BELL_INPUT)}
    res = {r.label: r for r in cnot_experiment(NoiseModel(), inputs, n_cycles=None, grid=GRID, rf_wait=0.0)}
    assert res["|0,up>"].fidelity == pytest.approx(1.0, abs=1e-8)
    assert res["|1,down>"].fidelity == pytest.approx(1.0, abs=1e-8)
    assert res[BELL_INPUT].concurrence == pytest.approx(1.0, abs=1e-6)
    assert res["|0,up>"].concurrence is None


def test_initial_mixture():
    noise = NoiseModel(initial_mixture=0.1)
    rho = noise.prepare(KET_0)
    assert np.allclose(rho, np.diag([0.95, 0.05]))


def test_sweep_rows():
    rows = robustness_sweep([-0.1, 0.0, 0.1], grid=GRID)
    assert rows[1]["geometric_avg_fidelity"] == pytest.approx(1.0, abs=1e-8)
    assert rows[1]["dynamic_avg_fidelity"] == pytest.approx(1.0, abs=1e-8)
    assert all(r["geometric_avg_fidelity"] < 1 - 1e-4 for r in (rows[0], rows[2]))
