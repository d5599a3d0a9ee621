"""Drive-level traction model: induction machine, DTC, speed loop and braking chopper.

The machine is the usual fifth-order squirrel-cage model in the stationary
alpha-beta frame, with state (psi_s, psi_r, omega_m). Space vectors use the
amplitude-invariant Clarke transform, so power is ``1.5 * v . i`` and torque
``1.5 * p * (psi_s x i_s)``.

Hot loops work on plain floats; dataclasses are used for state that crosses
the module boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import NumericalDivergenceError
from .vehicle import VehicleParams

SQRT3 = math.sqrt(3.0)

# Switch states (Sa, Sb, Sc) for V0..V7; V1..V6 sit at 0, 60, ..., 300 degrees.
VECTORS = (
    (0, 0, 0),
    (1, 0, 0),
    (1, 1, 0),
    (0, 1, 0),
    (0, 1, 1),
    (0, 0, 1),
    (1, 0, 1),
    (1, 1, 1),
)

INCREASE, HOLD, DECREASE = 1, 0, -1


@dataclass(frozen=True)
class MachineParams:
    R_s: float = 29.7e-3
    R_r: float = 22.1e-3
    L_s: float = 35.3e-3
    L_r: float = 35.3e-3
    L_m: float = 34.6e-3
    pole_pairs: int = 2
    J: float = 1.0  # kg*m^2
    rated_flux: float = 0.9  # Wb
    rated_torque: float = 2000.0  # N*m, scale for the torque band

    def __post_init__(self):
        for name in ("R_s", "R_r", "L_s", "L_r", "L_m", "J", "rated_flux"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.L_s * self.L_r <= self.L_m ** 2:
            raise ValueError("L_s*L_r must exceed L_m^2")

    @property
    def sigma(self) -> float:
        return 1.0 - self.L_m ** 2 / (self.L_s * self.L_r)


@dataclass(frozen=True)
class MachineState:
    psi_s: tuple[float, float] = (0.0, 0.0)
    psi_r: tuple[float, float] = (0.0, 0.0)
    omega_m: float = 0.0  # mechanical rad/s
    theta_m: float = 0.0


@dataclass(frozen=True)
class DtcState:
    psi_alpha: float = 0.0
    psi_beta: float = 0.0
    torque_comparator: int = HOLD
    flux_comparator: int = INCREASE
    sector: int = 1
    gate: tuple[int, int, int] = (0, 0, 0)


@dataclass(frozen=True)
class DtcBands:
    torque: float = 100.0  # N*m half-width
    flux: float = 0.018  # Wb half-width

    @classmethod
    def default(cls, m: MachineParams) -> "DtcBands":
        return cls(0.05 * m.rated_torque, 0.02 * m.rated_flux)


@dataclass(frozen=True)
class SpeedCtrlState:
    integrator: float = 0.0
    T_ref: float = 0.0
    psi_ref: float = 0.9


@dataclass(frozen=True)
class ChopperState:
    on: bool = False
    V_act: float = 780.0
    V_rel: float = 760.0
    R_ch: float = 2.0
    units: int = 1  # identical choppers in parallel (one per drive)

    def __post_init__(self):
        if not self.V_rel < self.V_act:
            raise ValueError("V_rel must be below V_act")
        if self.R_ch <= 0:
            raise ValueError("R_ch must be > 0")

    @property
    def conductance(self) -> float:
        return self.units / self.R_ch


def default_chopper(p: VehicleParams, units: int = 1, V_nominal: float = 650.0) -> ChopperState:
    V_act = 1.2 * V_nominal
    return ChopperState(False, V_act, V_act - 20.0, p.chopper_R, units)


# ---------------------------------------------------------------------------
# Inverter and machine


def gate_voltage(gate, V_dc: float) -> tuple[float, float]:
    """Stator voltage space vector applied by a two-level inverter."""
    a, b, c = gate
    return (V_dc / 3.0 * (2 * a - b - c), V_dc / SQRT3 * (b - c))


def currents(psi_s, psi_r, m: MachineParams):
    """Stator and rotor currents from the flux linkages."""
    D = m.L_s * m.L_r - m.L_m ** 2
    isa = (m.L_r * psi_s[0] - m.L_m * psi_r[0]) / D
    isb = (m.L_r * psi_s[1] - m.L_m * psi_r[1]) / D
    ira = (m.L_s * psi_r[0] - m.L_m * psi_s[0]) / D
    irb = (m.L_s * psi_r[1] - m.L_m * psi_s[1]) / D
    return (isa, isb), (ira, irb)


def electromagnetic_torque(psi, i, pole_pairs: int) -> float:
    return 1.5 * pole_pairs * (psi[0] * i[1] - psi[1] * i[0])


def magnetic_energy(psi_s, psi_r, m: MachineParams) -> float:
    i_s, i_r = currents(psi_s, psi_r, m)
    return 0.75 * (psi_s[0] * i_s[0] + psi_s[1] * i_s[1] + psi_r[0] * i_r[0] + psi_r[1] * i_r[1])


def magnetized_state(m: MachineParams, flux: float | None = None, omega_m: float = 0.0) -> MachineState:
    """No-load steady state with stator flux ``flux`` along alpha."""
    flux = m.rated_flux if flux is None else flux
    return MachineState((flux, 0.0), (flux * m.L_m / m.L_s, 0.0), omega_m)


def _derivs(x, vsa, vsb, T_load, m: MachineParams, k):
    # x = (psa, psb, pra, prb, w); k = precomputed constants
    psa, psb, pra, prb, w = x
    Lr_D, Lm_D, Ls_D, Rs, Rr, pp, J = k
    isa = Lr_D * psa - Lm_D * pra
    isb = Lr_D * psb - Lm_D * prb
    ira = Ls_D * pra - Lm_D * psa
    irb = Ls_D * prb - Lm_D * psb
    we = pp * w
    Te = 1.5 * pp * (psa * isb - psb * isa)
    p_in = 1.5 * (vsa * isa + vsb * isb)
    p_cu = 1.5 * (Rs * (isa * isa + isb * isb) + Rr * (ira * ira + irb * irb))
    return (
        vsa - Rs * isa,
        vsb - Rs * isb,
        -Rr * ira - we * prb,
        -Rr * irb + we * pra,
        (Te - T_load) / J,
        p_in,
        p_cu,
        Te * w,
    )


def _constants(m: MachineParams):
    D = m.L_s * m.L_r - m.L_m ** 2
    return (m.L_r / D, m.L_m / D, m.L_s / D, m.R_s, m.R_r, m.pole_pairs, m.J)


def rk4_machine(x, vsa, vsb, T_load, dt, m, k):
    """One RK4 step of the machine; returns (new state, (E_in, E_cu, E_mech)).

    Input power, copper loss and air-gap power are integrated with the same
    stages as the state so the step's energy balance is consistent.
    """
    h2 = 0.5 * dt
    a = _derivs(x, vsa, vsb, T_load, m, k)
    b = _derivs((x[0] + h2 * a[0], x[1] + h2 * a[1], x[2] + h2 * a[2], x[3] + h2 * a[3],
                 x[4] + h2 * a[4]), vsa, vsb, T_load, m, k)
    c = _derivs((x[0] + h2 * b[0], x[1] + h2 * b[1], x[2] + h2 * b[2], x[3] + h2 * b[3],
                 x[4] + h2 * b[4]), vsa, vsb, T_load, m, k)
    d = _derivs((x[0] + dt * c[0], x[1] + dt * c[1], x[2] + dt * c[2], x[3] + dt * c[3],
                 x[4] + dt * c[4]), vsa, vsb, T_load, m, k)
    w = dt / 6.0
    new = (
        x[0] + w * (a[0] + 2.0 * (b[0] + c[0]) + d[0]),
        x[1] + w * (a[1] + 2.0 * (b[1] + c[1]) + d[1]),
        x[2] + w * (a[2] + 2.0 * (b[2] + c[2]) + d[2]),
        x[3] + w * (a[3] + 2.0 * (b[3] + c[3]) + d[3]),
        x[4] + w * (a[4] + 2.0 * (b[4] + c[4]) + d[4]),
    )
    return new, (w * (a[5] + 2.0 * (b[5] + c[5]) + d[5]),
                 w * (a[6] + 2.0 * (b[6] + c[6]) + d[6]),
                 w * (a[7] + 2.0 * (b[7] + c[7]) + d[7]))


def machine_step(gate, V_dc: float, T_load: float, dt: float, state: MachineState,
                 m: MachineParams, step: int | None = None) -> MachineState:
    """Advance the machine one step with the inverter output held constant."""
    vsa, vsb = gate_voltage(gate, V_dc)
    x = (*state.psi_s, *state.psi_r, state.omega_m)
    new, _ = rk4_machine(x, vsa, vsb, T_load, dt, m, _constants(m))
    if not all(math.isfinite(v) for v in new):
        where = f" at step {step}" if step is not None else ""
        raise NumericalDivergenceError(f"machine state became non-finite{where}")
    return MachineState((new[0], new[1]), (new[2], new[3]), new[4],
                        state.theta_m + 0.5 * dt * (state.omega_m + new[4]))


def dc_bus_current(gate, V_dc: float, state: MachineState, m: MachineParams) -> float:
    """DC-link current drawn by a lossless inverter (power balance)."""
    if V_dc <= 0:
        return 0.0
    vs = gate_voltage(gate, V_dc)
    i_s, _ = currents(state.psi_s, state.psi_r, m)
    return 1.5 * (vs[0] * i_s[0] + vs[1] * i_s[1]) / V_dc


# ---------------------------------------------------------------------------
# Direct torque control


def estimate_flux_torque(v_s, i_s, dt: float, s: DtcState, m: MachineParams):
    """Voltage-model flux estimate and torque from measured stator quantities."""
    pa = s.psi_alpha + (v_s[0] - m.R_s * i_s[0]) * dt
    pb = s.psi_beta + (v_s[1] - m.R_s * i_s[1]) * dt
    T_e = electromagnetic_torque((pa, pb), i_s, m.pole_pairs)
    return replace(s, psi_alpha=pa, psi_beta=pb, sector=flux_sector(pa, pb)), T_e


def flux_sector(psi_alpha: float, psi_beta: float) -> int:
    """Sector 1..6; sector k spans [60k - 90, 60k - 30) degrees."""
    ang = math.degrees(math.atan2(psi_beta, psi_alpha))
    return int(((ang + 30.0) % 360.0) // 60.0) + 1


def _torque_comparator(err: float, band: float, prev: int) -> int:
    if err >= band:
        return INCREASE
    if err <= -band:
        return DECREASE
    if prev == INCREASE and err <= 0.0:
        return HOLD
    if prev == DECREASE and err >= 0.0:
        return HOLD
    return prev


def _flux_comparator(err: float, band: float, prev: int) -> int:
    if err >= band:
        return INCREASE
    if err <= -band:
        return DECREASE
    return prev


def switching_table(sector: int, flux: int, torque: int, prev_gate=(0, 0, 0),
                    flux_outside: bool = False) -> tuple[int, int, int]:
    """Classic six-sector table.

    Zero vectors are chosen to minimise switching. When torque is held but
    the flux has left its band, the radial vectors V(k) / V(k+3) correct it
    instead; at low speed zero vectors alone would let the flux decay.
    """
    if torque == HOLD:
        if flux_outside:
            return VECTORS[(sector - 1 + (0 if flux == INCREASE else 3)) % 6 + 1]
        return VECTORS[7] if sum(prev_gate) >= 2 else VECTORS[0]
    if flux == INCREASE:
        shift = 1 if torque == INCREASE else -1
    else:
        shift = 2 if torque == INCREASE else -2
    return VECTORS[(sector - 1 + shift) % 6 + 1]


def dtc_select_vector(T_ref: float, T_e: float, psi_ref: float, s: DtcState, bands: DtcBands):
    """Update the hysteresis comparators and pick the inverter gate vector."""
    flux_mag = math.hypot(s.psi_alpha, s.psi_beta)
    tq = _torque_comparator(T_ref - T_e, bands.torque, s.torque_comparator)
    flux_err = psi_ref - flux_mag
    fx = _flux_comparator(flux_err, bands.flux, s.flux_comparator)
    sector = flux_sector(s.psi_alpha, s.psi_beta)
    gate = switching_table(sector, fx, tq, s.gate, abs(flux_err) >= bands.flux)
    return replace(s, torque_comparator=tq, flux_comparator=fx, sector=sector, gate=gate), gate


# ---------------------------------------------------------------------------
# Speed loop and chopper


def speed_controller_step(omega_ref: float, omega: float, dt: float, s: SpeedCtrlState,
                          p: VehicleParams, psi_ref: float | None = None,
                          feedforward: float = 0.0) -> SpeedCtrlState:
    """PI speed loop with output clamping; the integrator freezes while clamped.

    ``feedforward`` is a torque added ahead of the clamp (the engine passes
    the load torque predicted by the vehicle model).
    """
    e = omega_ref - omega
    lo, hi = p.torque_limit
    integ = s.integrator + p.Ki * e * dt
    raw = feedforward + p.Kp * e + integ
    T_ref = min(max(raw, lo), hi)
    if T_ref != raw and (raw - T_ref) * e > 0:
        integ = s.integrator
    return SpeedCtrlState(integ, T_ref, s.psi_ref if psi_ref is None else psi_ref)


def chopper_step(V_dc: float, dt: float, s: ChopperState) -> tuple[ChopperState, float]:
    """Hysteresis switching of the braking resistor; returns dissipated power."""
    on = s.on
    if not on and V_dc > s.V_act:
        on = True
    elif on and V_dc <= s.V_rel:
        on = False
    new = s if on == s.on else replace(s, on=on)
    return new, (V_dc * V_dc * s.conductance if on else 0.0)


def field_weakening_flux(m: MachineParams, V_dc: float, omega_m: float, margin: float = 0.9) -> float:
    """Stator flux reference: rated flux below base speed, ~V/omega above it."""
    we = abs(m.pole_pairs * omega_m)
    limit = margin * V_dc / SQRT3
    if we * m.rated_flux <= limit:
        return m.rated_flux
    return limit / we


def pullout_torque(m: MachineParams, psi_s: float) -> float:
    """Breakdown torque at stator flux ``psi_s``; DTC loses the machine beyond it."""
    return 1.5 * m.pole_pairs * (1.0 - m.sigma) * psi_s * psi_s / (2.0 * m.sigma * m.L_s)


# Fraction of the pull-out torque the drive will command.
PULLOUT_MARGIN = 0.95


# ---------------------------------------------------------------------------
# Closed-loop drive


@dataclass
class DriveTotals:
    E_dc: float = 0.0  # J, energy drawn from the DC bus
    E_cu: float = 0.0  # J, copper losses
    E_mech: float = 0.0  # J, electromagnetic torque times speed
    steps: int = 0


class DriveUnit:
    """One motor with its inverter, DTC and speed loop, stepped at ``dt``."""

    def __init__(self, vehicle: VehicleParams, machine: MachineParams | None = None,
                 dt: float = 50e-6, bands: DtcBands | None = None,
                 field_weakening: bool = True, state: MachineState | None = None):
        if dt <= 0 or dt > 100e-6:
            raise ValueError("drive step must be in (0, 100 us]")
        self.vehicle = vehicle
        self.m = machine or MachineParams()
        self.dt = dt
        self.bands = bands or DtcBands.default(self.m)
        self.field_weakening = field_weakening
        self.state = state or magnetized_state(self.m)
        self.dtc = DtcState(*self.state.psi_s)
        self.ctrl = SpeedCtrlState(psi_ref=self.m.rated_flux)
        self.totals = DriveTotals()
        self._k = _constants(self.m)

    def stored_energy(self) -> float:
        s = self.state
        return magnetic_energy(s.psi_s, s.psi_r, self.m) + 0.5 * self.m.J * s.omega_m ** 2

    def run(self, n: int, V_dc: float, omega_ref, T_load, torque_ref=None,
            feedforward=None, record=None) -> None:
        """Advance ``n`` steps.

        ``omega_ref``, ``T_load``, ``feedforward`` and ``torque_ref`` are
        callables of the step-local time (s since the call started), or
        constants. When ``torque_ref`` is given the speed loop is bypassed.
        Either way the command is capped at a fraction of the pull-out torque
        for the present flux reference.
        ``record``, if given, is called with
        ``(t, T_ref, T_e, |psi|, i_s, V_dc)`` after every step.
        """
        m, dt, k, bands, veh = self.m, self.dt, self._k, self.bands, self.vehicle
        as_fn = lambda f: f if callable(f) or f is None else (lambda t, c=f: c)  # noqa: E731
        omega_ref, T_load = as_fn(omega_ref), as_fn(T_load)
        torque_ref, feedforward = as_fn(torque_ref), as_fn(feedforward)
        s = self.state
        x = (*s.psi_s, *s.psi_r, s.omega_m)
        theta = s.theta_m
        dtc, ctrl = self.dtc, self.ctrl
        pa, pb = dtc.psi_alpha, dtc.psi_beta
        tq, fx, gate = dtc.torque_comparator, dtc.flux_comparator, dtc.gate
        integ, T_ref, psi_ref = ctrl.integrator, ctrl.T_ref, ctrl.psi_ref
        lo0, hi0 = veh.torque_limit
        Kp, Ki = veh.Kp, veh.Ki
        Rs, pp = m.R_s, m.pole_pairs
        tot = self.totals
        Lr_D, Lm_D = k[0], k[1]
        sector = dtc.sector
        for j in range(n):
            t = j * dt
            isa = Lr_D * x[0] - Lm_D * x[2]
            isb = Lr_D * x[1] - Lm_D * x[3]
            psi_ref = (field_weakening_flux(m, V_dc, x[4]) if self.field_weakening
                       else m.rated_flux)
            T_po = PULLOUT_MARGIN * pullout_torque(m, psi_ref)
            lo, hi = max(lo0, -T_po), min(hi0, T_po)
            if torque_ref is None:
                # Same law as speed_controller_step, inlined.
                e = omega_ref(t) - x[4]
                ff = feedforward(t) if feedforward is not None else 0.0
                new_integ = integ + Ki * e * dt
                raw = ff + Kp * e + new_integ
                T_ref = min(max(raw, lo), hi)
                if T_ref == raw or (raw - T_ref) * e <= 0:
                    integ = new_integ
            else:
                T_ref = min(max(torque_ref(t), lo), hi)
            # Flux estimate with the vector applied over the previous step.
            vpa, vpb = gate_voltage(gate, V_dc)
            pa += (vpa - Rs * isa) * dt
            pb += (vpb - Rs * isb) * dt
            T_e = 1.5 * pp * (pa * isb - pb * isa)
            flux_err = psi_ref - math.hypot(pa, pb)
            tq = _torque_comparator(T_ref - T_e, bands.torque, tq)
            fx = _flux_comparator(flux_err, bands.flux, fx)
            sector = flux_sector(pa, pb)
            gate = switching_table(sector, fx, tq, gate, abs(flux_err) >= bands.flux)
            vsa, vsb = gate_voltage(gate, V_dc)
            x_new, (e_in, e_cu, e_mech) = rk4_machine(x, vsa, vsb, T_load(t), dt, m, k)
            if not all(math.isfinite(v) for v in x_new):
                raise NumericalDivergenceError(
                    f"machine state became non-finite at step {tot.steps}")
            theta += 0.5 * dt * (x[4] + x_new[4])
            x = x_new
            tot.E_dc += e_in
            tot.E_cu += e_cu
            tot.E_mech += e_mech
            tot.steps += 1
            if record is not None:
                i_s = (Lr_D * x[0] - Lm_D * x[2], Lr_D * x[1] - Lm_D * x[3])
                T_now = electromagnetic_torque((x[0], x[1]), i_s, pp)
                record(t + dt, T_ref, T_now, math.hypot(x[0], x[1]), i_s, V_dc)
        self.dtc = DtcState(pa, pb, tq, fx, sector, gate)
        self.ctrl = SpeedCtrlState(integ, T_ref, psi_ref)
        self.state = MachineState((x[0], x[1]), (x[2], x[3]), x[4], theta)
