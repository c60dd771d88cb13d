import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holonomic.pulses import (
    ANCILLA,
    LambdaParams,
    NonCyclicPulseError,
    PulseEnvelope,
    PulseShape,
    bright_dark,
    envelope_value,
    h1_at,
    h2_at,
    moving_frame,
    moving_frame_matrix,
    pulse_area,
)

TAU = 1e-6
SQ = 1 / math.sqrt(2)
SINE = PulseEnvelope(PulseShape.SINE_HALF_PERIOD, TAU)
SQUARE = PulseEnvelope(PulseShape.SQUARE, TAU, allow_noncyclic=True)
BLACKMAN = PulseEnvelope(PulseShape.BLACKMAN, TAU)
ALL_SHAPES = [SINE, SQUARE, BLACKMAN]

thetas = st.floats(0.0, math.pi, exclude_max=True)
phis = st.floats(-math.pi, math.pi, exclude_min=True)


def test_square_needs_override():
    with pytest.raises(NonCyclicPulseError):
        PulseEnvelope(PulseShape.SQUARE, TAU)


def test_square_value():
    t = np.linspace(0, TAU, 7)
    assert np.allclose(envelope_value(SQUARE, t), math.pi * 1e6, rtol=1e-14)


def test_sine_value_and_peak():
    t = np.linspace(0, TAU, 11)
    expected = (math.pi**2 / 2) * 1e6 * np.sin(math.pi * t / TAU)
    assert np.allclose(envelope_value(SINE, t), expected, rtol=1e-13, atol=1e-6)


@pytest.mark.parametrize("p", [SINE, BLACKMAN])
def test_smooth_shapes_vanish_at_endpoints(p):
    assert envelope_value(p, 0.0) == pytest.approx(0.0, abs=1e-6 * p.peak)
    assert envelope_value(p, TAU) == pytest.approx(0.0, abs=1e-6 * p.peak)


@pytest.mark.parametrize("p", ALL_SHAPES)
def test_area_reaches_target(p):
    assert pulse_area(p, 0.0) == 0.0
    assert abs(pulse_area(p, TAU) - math.pi) < 1e-9


@pytest.mark.parametrize("p", ALL_SHAPES)
def test_area_matches_quadrature(p):
    from scipy.integrate import quad

    val, _ = quad(lambda t: envelope_value(p, t), 0, TAU, epsabs=1e-12, limit=200)
    assert val == pytest.approx(math.pi, abs=1e-9)


@pytest.mark.parametrize("p", ALL_SHAPES)
def test_area_monotone(p):
    a = pulse_area(p, np.linspace(0, TAU, 1001))
    assert np.all(np.diff(a) >= 0)


def test_half_areas():
    assert pulse_area(SQUARE, TAU / 2) == pytest.approx(math.pi / 2, abs=1e-12)
    assert pulse_area(SINE, TAU / 2) == pytest.approx(math.pi / 2, abs=1e-12)


def test_time_outside_pulse_rejected():
    with pytest.raises(ValueError):
        envelope_value(SINE, -1e-9)
    with pytest.raises(ValueError):
        pulse_area(SINE, 2 * TAU)


def test_sampled_envelope_keeps_area():
    p = PulseEnvelope(PulseShape.SINE_HALF_PERIOD, TAU, sample_s=2e-9)
    assert p.n_samples == 500
    assert abs(pulse_area(p, TAU) - math.pi) < 1e-9
    assert envelope_value(p, 1e-9) == envelope_value(p, 1.9e-9)


def test_lambda_params_ranges():
    with pytest.raises(ValueError):
        LambdaParams(math.pi, 0.0)
    with pytest.raises(ValueError):
        LambdaParams(0.5, -math.pi)
    assert LambdaParams(3 * math.pi / 4, 0.0).rabi_ratio == pytest.approx(-1.0)


def test_h1_entries():
    h = h1_at(LambdaParams(3 * math.pi / 4, 0.0), SQUARE, 0.3 * TAU) / SQUARE.peak
    assert h[0, 2] == pytest.approx(-SQ, abs=1e-15)
    assert h[1, 2] == pytest.approx(SQ, abs=1e-15)
    assert np.allclose(h, h.conj().T)


def test_h1_zero_envelope():
    assert np.array_equal(h1_at(LambdaParams(1.0, 0.5), SINE, 0.0), np.zeros((3, 3)))


@settings(max_examples=50, deadline=None)
@given(thetas, phis, st.floats(0.0, 1.0))
def test_h1_dark_state_decouples(theta, phi, x):
    params = LambdaParams(theta, phi)
    h = h1_at(params, SINE, x * TAU)
    bd = bright_dark(params)
    d, b = bd.dark.amplitudes, bd.bright.amplitudes
    assert np.max(np.abs(h @ d)) < 1e-12 * SINE.peak
    assert abs(np.vdot(d, h @ b)) < 1e-12 * SINE.peak


@settings(max_examples=50, deadline=None)
@given(thetas, phis)
def test_bright_dark_complete(theta, phi):
    bd = bright_dark(LambdaParams(theta, phi))
    proj = bd.bright.projector().matrix + bd.dark.projector().matrix
    assert np.max(np.abs(proj - np.diag([1, 1, 0]))) < 1e-12
    assert abs(bd.bright.inner(bd.dark)) < 1e-12


def test_h2_entries():
    h = h2_at(SQUARE, 0.5 * TAU) / SQUARE.peak
    assert h[0, 2] == pytest.approx(SQ)
    assert h[1, 2] == pytest.approx(-SQ)
    assert np.array_equal(h[3:, :], np.zeros((3, 6)))
    assert np.array_equal(h[:, 3:], np.zeros((6, 3)))
    assert np.max(np.abs(h @ np.array([SQ, SQ, 0, 0, 0, 0]))) < 1e-15


def test_h2_up_block_is_h1_with_ancilla_gauge():
    h1 = h1_at(LambdaParams(3 * math.pi / 4, 0.0), SINE, 0.4 * TAU)
    h2 = h2_at(SINE, 0.4 * TAU)
    gauge = np.diag([1, 1, -1])
    assert np.allclose(h2[:3, :3], gauge @ h1 @ gauge, atol=1e-9)


def test_moving_frame_endpoints():
    params = LambdaParams(1.1, 0.4)
    for t in (0.0, TAU):
        xi0, xi1 = moving_frame(params, SINE, t)
        assert np.allclose(xi0.amplitudes, [1, 0, 0], atol=1e-9)
        assert np.allclose(xi1.amplitudes, [0, 1, 0], atol=1e-9)


def test_moving_frame_orthonormal_sweep():
    f = moving_frame_matrix(LambdaParams(2.0, -1.0), BLACKMAN, np.linspace(0, TAU, 100))
    gram = np.swapaxes(f.conj(), -1, -2) @ f
    assert np.max(np.abs(gram - np.eye(2))) < 1e-12


def test_moving_frame_tracks_bright_curve():
    params = LambdaParams(0.7, 0.2)
    f = moving_frame_matrix(params, SINE, TAU / 3)
    alpha = pulse_area(SINE, TAU / 3)
    bd = bright_dark(params)
    b = bd.bright.amplitudes
    b_t = np.exp(1j * alpha) * (np.cos(alpha) * b - 1j * np.sin(alpha) * ANCILLA)
    # the frame maps |B> to B(t) and fixes |D>
    assert np.allclose(f @ b[:2], b_t, atol=1e-12)
    assert np.allclose(f @ bd.dark.amplitudes[:2], bd.dark.amplitudes, atol=1e-12)
