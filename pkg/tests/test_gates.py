import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holonomic.gates import (
    PRESET_PARAMS,
    GateKind,
    GateSpec,
    cnot_ideal,
    compose,
    custom,
    ideal_holonomy,
    preset,
    realize,
    t_gate,
)
from holonomic.propagation import TimeGrid
from holonomic.pulses import LambdaParams
from holonomic.state_algebra import (
    KET_0,
    KET_DOWN,
    KET_UP,
    concurrence,
    equal_up_to_global_phase,
    phase_distance,
    register_ket,
    register_state,
)

SQ = 1 / math.sqrt(2)
X = np.array([[0, 1], [1, 0]])
HADAMARD = np.array([[1, 1], [1, -1]]) * SQ
GRID = TimeGrid.over(1e-6)

thetas = st.floats(0.0, math.pi, exclude_max=True)
phis = st.floats(-math.pi, math.pi, exclude_min=True)


def test_presets_carry_exact_parameters():
    assert PRESET_PARAMS["N"] == LambdaParams(3 * math.pi / 4, 0.0)
    assert PRESET_PARAMS["A"] == LambdaParams(3 * math.pi / 4, math.pi / 8)
    assert PRESET_PARAMS["H"] == LambdaParams(5 * math.pi / 8, 0.0)
    with pytest.raises(ValueError):
        GateSpec("N", LambdaParams(1.0, 0.0))
    with pytest.raises(KeyError):
        preset("T")
    assert preset("CNOT").kind is GateKind.CNOT


def test_closed_form_not():
    assert np.allclose(ideal_holonomy(PRESET_PARAMS["N"]).matrix, X, atol=1e-15)


def test_closed_form_hadamard():
    assert np.allclose(ideal_holonomy(PRESET_PARAMS["H"]).matrix, HADAMARD, atol=1e-15)


@pytest.mark.parametrize("phi", [-2.0, 0.0, 0.3, math.pi])
def test_closed_form_diagonal_at_half_pi(phi):
    assert np.allclose(ideal_holonomy(LambdaParams(math.pi / 2, phi)).matrix, np.diag([1, -1]), atol=1e-15)


def test_closed_form_rotation():
    e = np.exp(1j * math.pi / 8)
    expected = np.array([[0, e], [np.conj(e), 0]])
    assert np.allclose(ideal_holonomy(PRESET_PARAMS["A"]).matrix, expected, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(thetas, phis)
def test_reflection_structure(theta, phi):
    u = ideal_holonomy(LambdaParams(theta, phi)).matrix
    assert np.max(np.abs(u @ u - np.eye(2))) < 1e-12
    assert np.max(np.abs(u - u.conj().T)) < 1e-12
    assert abs(np.trace(u)) < 1e-12
    assert abs(np.linalg.det(u) + 1) < 1e-12


def test_t_gate():
    t = t_gate().matrix
    assert np.allclose(t, np.diag([np.exp(-1j * math.pi / 8), np.exp(1j * math.pi / 8)]), atol=1e-15)
    assert abs(np.linalg.det(t) - 1) < 1e-12
    assert equal_up_to_global_phase(t, np.diag([1, np.exp(1j * math.pi / 4)]))
    t4 = np.linalg.matrix_power(t, 4)
    assert np.allclose(t4, np.diag([-1j, 1j]), atol=1e-12)
    assert equal_up_to_global_phase(t4, np.diag([1, -1]))


def test_cnot_action():
    u = cnot_ideal()
    assert np.allclose((u @ register_ket(0, 0)).amplitudes, register_ket(1, 0).amplitudes)
    assert np.allclose((u @ register_ket(0, 1)).amplitudes, register_ket(0, 1).amplitudes)
    bell = u @ register_state(KET_0.amplitudes, (KET_UP.amplitudes + KET_DOWN.amplitudes) * SQ)
    expected = (register_ket(1, 0).amplitudes + register_ket(0, 1).amplitudes) * SQ
    assert np.allclose(bell.amplitudes, expected)
    assert concurrence(bell.projector()) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("name, oracle", [("N", X), ("H", HADAMARD)])
def test_realize_single(name, oracle):
    res = realize(preset(name), GRID)
    assert phase_distance(res.u_logical, oracle) < 1e-6
    assert res.parallel_transport_residual < 1e-9
    assert res.cyclicity_residual < 1e-9


def test_realize_cnot():
    res = realize(preset("CNOT"), GRID)
    assert phase_distance(res.u_logical, cnot_ideal()) < 1e-6
    assert res.parallel_transport_residual < 1e-9


def test_realized_composition_is_t():
    n = realize(preset("N"), GRID).u_logical
    a = realize(preset("A"), GRID).u_logical
    assert phase_distance(n @ a, t_gate()) < 2e-6


def test_compose_is_canonical():
    m = compose(np.exp(0.7j) * X, HADAMARD)
    assert abs(m[0, 0].imag) < 1e-15 and m[0, 0].real > 0
    assert equal_up_to_global_phase(m, X @ HADAMARD)


def test_custom_spec():
    spec = custom(1.0, 0.5)
    assert spec.params == LambdaParams(1.0, 0.5)
    assert phase_distance(realize(spec, GRID).u_logical, ideal_holonomy(spec.params)) < 1e-6


def test_custom_rejects_out_of_range():
    with pytest.raises(ValueError):
        custom(4 * math.pi, 0.0)

