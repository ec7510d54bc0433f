import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ionspam.pulse import (
    DriveParams,
    Rotation,
    area_plateau,
    compose,
    cp_robust_180,
    detuning_plateau,
    detuning_scan,
    asymmetry,
    drives,
    flatness,
    integrate_schrodinger,
    rotation_unitary,
    sequence_transfer,
    single_pi,
    with_phase_error,
)

SEQ = cp_robust_180()
finite = st.floats(-3, 3, allow_nan=False)


def test_phases_in_order():
    assert [r.phi for r in SEQ] == pytest.approx([math.pi / 6, 0, math.pi / 2, 0, math.pi / 6])
    assert all(r.theta == pytest.approx(math.pi) for r in SEQ)


def test_perfect_transfer_at_zero_error():
    assert abs(sequence_transfer(SEQ, 1.0) - 1) < 1e-10
    assert abs(sequence_transfer(SEQ, 2 * math.pi * 57e3) - 1) < 1e-10


def test_flat_at_operating_point():
    d_delta, d_area = flatness(SEQ)
    assert abs(d_delta) < 1e-6 and abs(d_area) < 1e-6
    # a single pi pulse is flat in detuning too (even function) but not robust: check plateau instead


def test_composite_plateaus_wider():
    assert detuning_plateau(SEQ) > detuning_plateau(single_pi())
    assert area_plateau(SEQ) > area_plateau(single_pi())


def test_detuning_response_symmetric():
    curve = detuning_scan(SEQ, 1.0, np.linspace(-2, 2, 81))
    assert asymmetry(curve) < 1e-12


@given(finite, st.floats(0.01, 5), st.floats(0, 2 * math.pi), st.floats(0, 10))
@settings(max_examples=60, deadline=None)
def test_unitary(detuning, rabi, phase, t):
    u = rotation_unitary(DriveParams(rabi, detuning, t, phase))
    assert np.allclose(u.conj().T @ u, np.eye(2), atol=1e-12)


@given(st.floats(0, 2 * math.pi), st.floats(-1, 1), st.floats(0.8, 1.2))
@settings(max_examples=40, deadline=None)
def test_common_phase_shift_leaves_transfer_unchanged(dphi, detuning, scale):
    a = sequence_transfer(SEQ, 1.0, detuning, scale)
    b = sequence_transfer(with_phase_error(SEQ, dphi), 1.0, detuning, scale)
    assert a == pytest.approx(b, abs=1e-12)


def test_matches_rk4_oracle():
    psi = np.array([1, 0], dtype=complex)
    for d in drives(SEQ, 1.0, detuning=0.3, area_scale=1.05):
        psi = integrate_schrodinger(d, psi)
    u = compose(drives(SEQ, 1.0, detuning=0.3, area_scale=1.05))
    assert abs(psi[1]) ** 2 == pytest.approx(abs(u[1, 0]) ** 2, abs=1e-10)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        Rotation(-1.0, 0.0)
    with pytest.raises(ValueError):
        drives(SEQ, 0.0)
