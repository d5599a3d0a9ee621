import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbsim.drive import (
    DECREASE,
    HOLD,
    INCREASE,
    VECTORS,
    ChopperState,
    DriveUnit,
    DtcBands,
    DtcState,
    MachineParams,
    MachineState,
    SpeedCtrlState,
    _constants,
    chopper_step,
    currents,
    default_chopper,
    dtc_select_vector,
    electromagnetic_torque,
    estimate_flux_torque,
    field_weakening_flux,
    flux_sector,
    gate_voltage,
    machine_step,
    magnetic_energy,
    magnetized_state,
    PULLOUT_MARGIN,
    pullout_torque,
    rk4_machine,
    speed_controller_step,
    switching_table,
)
from rbsim.errors import NumericalDivergenceError
from rbsim.vehicle import VehicleParams

M = MachineParams()
P = VehicleParams()


# flux / torque estimator

def test_torque_zero_current():
    _, T = estimate_flux_torque((0, 0), (0, 0), 1e-4, DtcState(1.0, 0.3), M)
    assert T == 0


def test_torque_cross_product():
    s, T = estimate_flux_torque((0, 0), (0, 100), 1e-12, DtcState(1.0, 0.0), M)
    assert T == pytest.approx(300.0, rel=1e-9)


def test_flux_unchanged_without_excitation():
    s, _ = estimate_flux_torque((0, 0), (0, 0), 1e-3, DtcState(0.7, -0.2), M)
    assert (s.psi_alpha, s.psi_beta) == (0.7, -0.2)


def test_flux_integrates_back_emf():
    s, _ = estimate_flux_torque((100, 0), (10, 0), 1e-3, DtcState(), M)
    assert s.psi_alpha == pytest.approx((100 - M.R_s * 10) * 1e-3)


@pytest.mark.parametrize("deg,sector", [(0, 1), (29.9, 1), (30, 2), (90, 3), (150, 4),
                                        (180, 4), (210, 5), (270, 6), (-31, 6), (-30, 1)])
def test_flux_sector(deg, sector):
    r = math.radians(deg)
    assert flux_sector(math.cos(r), math.sin(r)) == sector


def test_gate_vectors_geometry():
    for k in range(1, 7):
        va, vb = gate_voltage(VECTORS[k], 600.0)
        assert math.hypot(va, vb) == pytest.approx(400.0)
        assert math.degrees(math.atan2(vb, va)) % 360 == pytest.approx(60 * (k - 1), abs=1e-9)
    assert gate_voltage(VECTORS[0], 600) == (0, 0)
    assert gate_voltage(VECTORS[7], 600) == (0, 0)


# switching table

@pytest.mark.parametrize("sector", range(1, 7))
def test_table_active_vectors(sector):
    k = sector - 1
    vec = lambda j: VECTORS[(k + j) % 6 + 1]  # noqa: E731
    assert switching_table(sector, INCREASE, INCREASE) == vec(1)
    assert switching_table(sector, INCREASE, DECREASE) == vec(-1)
    assert switching_table(sector, DECREASE, INCREASE) == vec(2)
    assert switching_table(sector, DECREASE, DECREASE) == vec(-2)
    assert switching_table(sector, INCREASE, HOLD) in (VECTORS[0], VECTORS[7])
    assert switching_table(sector, INCREASE, HOLD, flux_outside=True) == vec(0)
    assert switching_table(sector, DECREASE, HOLD, flux_outside=True) == vec(3)


def test_zero_vector_minimises_switching():
    assert switching_table(1, INCREASE, HOLD, prev_gate=(1, 1, 0)) == (1, 1, 1)
    assert switching_table(1, INCREASE, HOLD, prev_gate=(1, 0, 0)) == (0, 0, 0)


def _one_step_response(gate, dt=20e-6, omega_m=20.0):
    """(d|psi_s|, dT_e) after one micro-step from a magnetised machine with flux at 0 deg."""
    s0 = magnetized_state(M, omega_m=omega_m)
    s1 = machine_step(gate, 650.0, 0.0, dt, s0, M)
    torque = lambda s: electromagnetic_torque(s.psi_s, currents(s.psi_s, s.psi_r, M)[0],  # noqa: E731
                                              M.pole_pairs)
    dpsi = math.hypot(*s1.psi_s) - math.hypot(*s0.psi_s)
    return dpsi, torque(s1) - torque(s0)


def test_table_matches_one_step_oracle():
    resp = {k: _one_step_response(VECTORS[k]) for k in range(8)}
    growing = [k for k in range(1, 7) if resp[k][0] > 0]
    shrinking = [k for k in range(1, 7) if resp[k][0] < 0]
    best_up = max(growing, key=lambda k: resp[k][1])
    best_up_shrink = max(shrinking, key=lambda k: resp[k][1])
    best_down = min(growing, key=lambda k: resp[k][1])
    assert VECTORS[best_up] == switching_table(1, INCREASE, INCREASE)
    assert VECTORS[best_up_shrink] == switching_table(1, DECREASE, INCREASE)
    assert VECTORS[best_down] == switching_table(1, INCREASE, DECREASE)
    # at standstill the zero vectors slew the torque least
    slew = {k: abs(_one_step_response(VECTORS[k], omega_m=0.0)[1]) for k in range(8)}
    assert max(slew[0], slew[7]) < min(slew[k] for k in (2, 3, 5, 6))
    assert max(slew[0], slew[7]) <= min(slew[k] for k in range(1, 7)) + 1e-9


def test_hysteresis_memory():
    bands = DtcBands(100.0, 0.02)
    s = DtcState(0.9, 0.0, torque_comparator=INCREASE, flux_comparator=DECREASE,
                 gate=VECTORS[2])
    s2, gate = dtc_select_vector(520.0, 500.0, 0.9, s, bands)
    assert (s2.torque_comparator, s2.flux_comparator) == (INCREASE, DECREASE)
    assert gate == switching_table(1, DECREASE, INCREASE)
    s3, gate3 = dtc_select_vector(520.0, 500.0, 0.9, s2, bands)
    assert s3 == s2 and gate3 == gate


def test_torque_comparator_thresholds():
    bands = DtcBands(100.0, 0.02)
    s = DtcState(0.9, 0.0)
    assert dtc_select_vector(700, 500, 0.9, s, bands)[0].torque_comparator == INCREASE
    assert dtc_select_vector(300, 500, 0.9, s, bands)[0].torque_comparator == DECREASE
    up = DtcState(0.9, 0.0, torque_comparator=INCREASE)
    assert dtc_select_vector(490, 500, 0.9, up, bands)[0].torque_comparator == HOLD


def test_default_bands():
    b = DtcBands.default(M)
    assert (b.torque, b.flux) == pytest.approx((100.0, 0.018))


# speed controller

def test_speed_controller_examples():
    assert speed_controller_step(0.0, 0.0, 1e-4, SpeedCtrlState(), P).T_ref == 0
    s = speed_controller_step(10.0, 0.0, 1e-12, SpeedCtrlState(), P)
    assert s.T_ref == pytest.approx(300.0)
    for integ in (0.0, 50.0, 1e4):
        assert speed_controller_step(100.0, 0.0, 1e-3, SpeedCtrlState(integ), P).T_ref == 2000
    assert speed_controller_step(0.0, 100.0, 1e-3, SpeedCtrlState(), P).T_ref == -2000


def test_psi_ref_constant_by_default():
    s = speed_controller_step(3.0, 1.0, 1e-3, SpeedCtrlState(psi_ref=0.9), P)
    assert s.psi_ref == 0.9


def test_anti_windup():
    s = SpeedCtrlState()
    for _ in range(2000):
        s = speed_controller_step(100.0, 0.0, 1e-3, s, P)
        assert s.T_ref == 2000
    assert s.integrator == 0.0
    s = speed_controller_step(0.0, 10.0, 1e-3, s, P)
    assert s.T_ref == pytest.approx(-300.0, abs=P.Ki * 10 * 1e-3 + 1e-9)


@given(st.floats(-200, 200), st.floats(-1e4, 1e4), st.floats(1e-6, 1e-2))
def test_speed_controller_output_clamped(e, integ, dt):
    s = speed_controller_step(e, 0.0, dt, SpeedCtrlState(integ), P)
    assert -2000 <= s.T_ref <= 2000


# chopper

def test_chopper_examples():
    off = ChopperState()
    s, p = chopper_step(600.0, 1e-3, off)
    assert (s.on, p) == (False, 0.0)
    s, p = chopper_step(800.0, 1e-3, off)
    assert s.on and p == 320_000.0
    s, p = chopper_step(770.0, 1e-3, s)
    assert s.on and p == 296_450.0
    s, p = chopper_step(750.0, 1e-3, s)
    assert not s.on and p == 0.0


def test_default_chopper_thresholds():
    c = default_chopper(P, units=40)
    assert (c.V_act, c.V_rel, c.R_ch, c.units) == (780.0, 760.0, 2.0, 40)
    assert c.conductance == 20.0


def test_chopper_invalid():
    with pytest.raises(ValueError):
        ChopperState(V_act=700, V_rel=710)


@settings(max_examples=200, deadline=None)
@given(st.floats(600, 900), st.floats(1, 100), st.floats(901, 1200))
def test_chopper_triangle_property(V_act, gap, peak):
    s = ChopperState(V_act=V_act, V_rel=V_act - gap)
    trace = np.concatenate([np.linspace(0, peak, 400), np.linspace(peak, 0, 400)])
    transitions, prev = [], s.on
    for V in trace:
        s, p = chopper_step(V, 1e-3, s)
        if s.on != prev:
            transitions.append(s.on)
        prev = s.on
        assert (p > 0) == s.on
        if V <= s.V_rel:
            assert p == 0
    assert transitions == [True, False]


# machine

def test_zero_state_stays_zero():
    s = machine_step(VECTORS[0], 650.0, 0.0, 50e-6, MachineState(), M)
    assert s == MachineState()


def test_locked_rotor_current_slope():
    m = MachineParams(J=1e9)
    dt = 1e-7
    s = machine_step(VECTORS[1], 650.0, 0.0, dt, MachineState(), m)
    i_s, _ = currents(s.psi_s, s.psi_r, m)
    v = 2.0 / 3.0 * 650.0
    assert i_s[0] / dt == pytest.approx(v / (m.sigma * m.L_s), rel=1e-4)
    assert i_s[1] == pytest.approx(0.0, abs=1e-9)


def test_divergence_is_reported():
    with pytest.raises(NumericalDivergenceError, match="step 7"):
        machine_step(VECTORS[1], float("inf"), 0.0, 50e-6, magnetized_state(M), M, step=7)


def test_drive_step_limit():
    with pytest.raises(ValueError):
        DriveUnit(P, M, dt=150e-6)


def test_step_power_balance_at_20us():
    unit = DriveUnit(P, MachineParams(J=40.0), dt=20e-6)
    k = _constants(unit.m)
    worst = 0.0
    for j in range(20):
        unit.run(250, 650.0, 0.0, 0.0, torque_ref=500.0)
        s = unit.state
        x = (*s.psi_s, *s.psi_r, s.omega_m)
        for gate in VECTORS[1:7]:
            vsa, vsb = gate_voltage(gate, 650.0)
            new, (e_in, e_cu, e_mech) = rk4_machine(x, vsa, vsb, 0.0, 20e-6, unit.m, k)
            dW = (magnetic_energy(new[:2], new[2:4], unit.m)
                  - magnetic_energy(x[:2], x[2:4], unit.m))
            worst = max(worst, abs(e_in - e_cu - e_mech - dW) / abs(e_in))
    assert worst < 0.01


def test_run_energy_totals_balance():
    unit = DriveUnit(P, MachineParams(J=40.0), dt=20e-6)
    W0 = unit.stored_energy()
    unit.run(5000, 650.0, 0.0, 0.0, torque_ref=500.0)
    t = unit.totals
    dW = unit.stored_energy() - W0
    assert t.steps == 5000
    assert t.E_dc - t.E_cu - dW == pytest.approx(0.0, abs=1e-3 * abs(t.E_dc))


def test_field_weakening():
    assert field_weakening_flux(M, 650.0, 10.0) == M.rated_flux
    high = field_weakening_flux(M, 650.0, 300.0)
    assert high < M.rated_flux
    assert M.pole_pairs * 300.0 * high == pytest.approx(0.9 * 650.0 / math.sqrt(3))


def test_pullout_torque_default_machine():
    assert pullout_torque(M, M.rated_flux) == pytest.approx(842.13, abs=0.01)
    assert pullout_torque(M, 0.45) == pytest.approx(pullout_torque(M, 0.9) / 4)


def test_torque_command_capped_below_pullout():
    unit = DriveUnit(P, MachineParams(J=1e6), dt=20e-6)
    T = []
    unit.run(10000, 650.0, 0.0, 0.0, torque_ref=1500.0, record=lambda t, r, e, *_: T.append((r, e)))
    cmd, te = np.array(T).T
    assert cmd.max() == pytest.approx(PULLOUT_MARGIN * pullout_torque(M, M.rated_flux))
    assert te[5000:].mean() > 0.8 * cmd.max()


def test_speed_loop_tracks_constant_reference():
    unit = DriveUnit(P, MachineParams(J=5.0), dt=50e-6)
    unit.run(80000, 650.0, omega_ref=50.0, T_load=200.0)
    assert unit.state.omega_m == pytest.approx(50.0, abs=1.0)
