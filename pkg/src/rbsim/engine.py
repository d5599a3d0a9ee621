"""Time-stepping orchestration and energy bookkeeping.

Each train is driven backwards from its speed profile (forces, axle,
gearbox, then either a fixed drive efficiency or the simulated drive), the
corridor network is solved for the resulting electrical powers, and every
energy flow is integrated.

The time grid is the uniform ``dt_network`` grid plus every profile
breakpoint, so acceleration is constant inside each interval. Quantities
are evaluated at both ends of an interval with that interval's
acceleration; at a breakpoint this means two network solves (one per
side). With this the kinetic-energy integral is exact and phase energies
are not smeared across breakpoints.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .drive import DriveUnit, magnetized_state
from .drivetrain import MotorShaftPoint, motor_count, wheel_to_motor
from .errors import InfeasibleError, SolverError
from .network import DIRECTION_SIGN, build_graph
from .profiles import SpeedProfile
from .scenario import DRIVE_LEVEL, Scenario, TrainSpec
from .solver import SolveResult, solve
from .vehicle import (AxleOutput, ForceBreakdown, axle_torque_speed,
                      check_accel_limits, tractive_effort)

logger = logging.getLogger(__name__)

J_PER_KWH = 3.6e6
ACCEL, CRUISE, DECEL = 1, 0, -1


@dataclass(frozen=True)
class TrainState:
    position: float
    speed: float
    accel: float
    forces: ForceBreakdown
    axle: AxleOutput
    shaft: MotorShaftPoint
    shaft_power: float  # W, all motors
    electrical_power: float  # W, + drawing
    voltage: float = math.nan
    current: float = math.nan  # A, drive DC current (+ drawing)
    chopper_power: float = 0.0
    cumulative_energy: float = 0.0
    chopper_energy: float = 0.0


@dataclass(frozen=True)
class TrainEnergy:
    name: str
    accel_energy: float  # J consumed over acceleration phases
    decel_energy: float  # J regenerated over deceleration phases
    chopper_energy: float  # J
    net_energy: float  # J, integral of electrical power

    @property
    def regen_ratio(self) -> float | None:
        return self.decel_energy / self.accel_energy if self.accel_energy > 0 else None

    @property
    def accel_kWh(self) -> float:
        return self.accel_energy / J_PER_KWH

    @property
    def decel_kWh(self) -> float:
        return self.decel_energy / J_PER_KWH

    @property
    def to_network(self) -> float:
        return max(0.0, self.decel_energy - self.chopper_energy)


@dataclass(frozen=True)
class EnergyReport:
    trains: tuple[TrainEnergy, ...]
    substation_energy: tuple[float, ...]  # J per substation, at the terminals
    rail_loss: float  # J
    aux_energy: float  # J

    @property
    def accel_energy(self) -> float:
        return sum(t.accel_energy for t in self.trains)

    @property
    def decel_energy(self) -> float:
        return sum(t.decel_energy for t in self.trains)

    @property
    def regen_ratio(self) -> float | None:
        a = self.accel_energy
        return self.decel_energy / a if a > 0 else None

    @property
    def chopper_energy(self) -> float:
        return sum(t.chopper_energy for t in self.trains)

    def summary(self) -> dict[str, float | None]:
        return {
            "accel_kWh": self.accel_energy / J_PER_KWH,
            "decel_kWh": self.decel_energy / J_PER_KWH,
            "regen_ratio": self.regen_ratio,
            "chopper_kWh": self.chopper_energy / J_PER_KWH,
            "substation_kWh": sum(self.substation_energy) / J_PER_KWH,
            "rail_loss_kWh": self.rail_loss / J_PER_KWH,
            "accel_J": self.accel_energy,
            "decel_J": self.decel_energy,
        }


@dataclass(frozen=True)
class EnergyLedger:
    """Where the substation energy went, integrated over a run (J)."""

    substation: float
    kinetic: float
    rolling: float
    grade: float
    aero: float
    gearbox: float
    drive: float
    chopper: float
    rail: float
    aux: float

    @property
    def demand(self) -> float:
        return (self.kinetic + self.rolling + self.grade + self.aero + self.gearbox
                + self.drive + self.chopper + self.rail + self.aux)

    @property
    def residual(self) -> float:
        return self.substation - self.demand

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / abs(self.substation) if self.substation else abs(self.residual)


@dataclass
class RunResult:
    scenario: Scenario
    columns: list[str]
    rows: np.ndarray
    times: np.ndarray
    report: EnergyReport
    ledger: EnergyLedger
    interval_dt: np.ndarray
    interval_phase: np.ndarray  # (K, n_trains) of ACCEL/CRUISE/DECEL
    interval_energy: np.ndarray  # (K, n_trains) J
    interval_regen: np.ndarray  # (K, n_trains) J, negative-power part only
    substation_currents: np.ndarray  # (n_solves, n_sub)
    substation_voltages: np.ndarray  # (n_solves, n_sub)
    solver_tol: float = 0.01
    peak_braking_current: np.ndarray = field(default=None)

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]


# ---------------------------------------------------------------------------
# Profile helpers


def phase_split(profile: SpeedProfile):
    """Partition ``[0, T]`` into acceleration, deceleration and cruise intervals
    by the sign of the profile slope. Adjacent segments of the same kind merge."""
    out = {ACCEL: [], DECEL: [], CRUISE: []}
    times, slopes = profile.times, profile.slopes
    kind_prev = None
    for i, a in enumerate(slopes):
        kind = ACCEL if a > 0 else DECEL if a < 0 else CRUISE
        t0, t1 = float(times[i]), float(times[i + 1])
        if kind == kind_prev:
            lst = out[kind]
            lst[-1] = (lst[-1][0], t1)
        else:
            out[kind].append((t0, t1))
        kind_prev = kind
    return out[ACCEL], out[DECEL], out[CRUISE]


def time_grid(scenario: Scenario) -> np.ndarray:
    """Uniform grid plus all profile breakpoints up to the shortest profile end."""
    T = min(tr.profile.duration for tr in scenario.trains)
    dt = scenario.dt_network
    n = int(math.floor(T / dt + 1e-9))
    base = np.arange(n + 1) * dt
    bps = np.concatenate([tr.profile.times for tr in scenario.trains] + [[T]])
    bps = bps[bps <= T]
    snap = 1e-6 * dt
    keep = [x for x in base if x <= T and np.min(np.abs(bps - x)) > snap]
    grid = np.unique(np.concatenate([keep, bps]))
    return grid


def _segments(profile: SpeedProfile, t: float) -> tuple[int, int]:
    """(left, right) segment indices at ``t``; they differ only at interior breakpoints."""
    last = profile.times.size - 2
    right = min(int(np.searchsorted(profile.times, t, side="right")) - 1, last)
    left = max(int(np.searchsorted(profile.times, t, side="left")) - 1, 0)
    return min(left, last), right


def train_state(spec: TrainSpec, t: float, seg: int, position: float) -> TrainState:
    """Backward-facing evaluation for one train at time ``t`` using segment ``seg``."""
    p = spec.vehicle
    prof = spec.profile
    v = float(np.interp(t, prof.times, prof.speeds))
    a = float(prof.slopes[seg])
    forces = tractive_effort(a, v, p)
    axle = axle_torque_speed(forces.F_T, v, p)
    shaft = wheel_to_motor(axle.T_w, axle.omega_w, p)
    P_shaft = motor_count(p) * shaft.T_G * shaft.omega_G
    eta = p.drive_efficiency
    P_elec = P_shaft / eta if P_shaft >= 0 else P_shaft * eta
    return TrainState(position, v, a, forces, axle, shaft, P_shaft, P_elec)


# ---------------------------------------------------------------------------
# Run


class _Integrator:
    """Accumulates trapezoidal (or rectangle) energy terms over intervals."""

    def __init__(self, n_trains: int, n_subs: int):
        self.train = np.zeros(n_trains)
        self.chopper = np.zeros(n_trains)
        self.sub = np.zeros(n_subs)
        self.rail = 0.0
        self.aux = 0.0
        self.kinetic = self.rolling = self.grade = self.aero = self.gearbox = 0.0
        self.drive = 0.0

    def mechanical(self, a: list[TrainState], b: list[TrainState], specs, h: float):
        for sa, sb, spec in zip(a, b, specs):
            p = spec.vehicle
            M = p.mass
            Nm = motor_count(p)
            tr = lambda fa, fb: 0.5 * h * (fa + fb)  # noqa: E731
            self.kinetic += tr(M * sa.accel * sa.speed, M * sb.accel * sb.speed)
            self.rolling += tr(sa.forces.F_N * sa.speed, sb.forces.F_N * sb.speed)
            self.grade += tr(sa.forces.F_g * sa.speed, sb.forces.F_g * sb.speed)
            self.aero += tr(sa.forces.F_a * sa.speed, sb.forces.F_a * sb.speed)
            self.gearbox += tr(Nm * sa.shaft.B * sa.axle.omega_w,
                               Nm * sb.shaft.B * sb.axle.omega_w)

    def network(self, ra: SolveResult, rb: SolveResult, h: float):
        self.sub += 0.5 * h * (ra.substation_powers + rb.substation_powers)
        self.rail += 0.5 * h * (ra.rail_loss + rb.rail_loss)
        self.aux += 0.5 * h * (ra.aux_powers.sum() + rb.aux_powers.sum())
        self.chopper += 0.5 * h * (ra.chopper_powers + rb.chopper_powers)


def _solve_at(scenario: Scenario, positions, powers, t: float, v_init=None) -> SolveResult:
    tracks = [tr.direction for tr in scenario.trains]
    graph = build_graph(scenario.layout, positions, t, tracks)
    if v_init is not None and len(v_init) != len(graph.nodes):
        v_init = None
    try:
        return solve(graph, powers, scenario.substations,
                     [tr.chopper for tr in scenario.trains],
                     tol=scenario.solver_tol, max_iter=scenario.max_iter,
                     v_init=v_init, strict_disconnect=scenario.strict_disconnect)
    except InfeasibleError as exc:
        raise InfeasibleError(f"t={t:.4g} s: {exc}", train=exc.train,
                              residual=exc.residual) from None
    except SolverError as exc:
        raise SolverError(f"t={t:.4g} s: {exc}", exc.residual) from None


def _attach(states: list[TrainState], res: SolveResult) -> list[TrainState]:
    out = []
    for k, s in enumerate(states):
        V = float(res.train_voltages[k])
        out.append(replace(s, voltage=V, current=s.electrical_power / V,
                           chopper_power=float(res.chopper_powers[k])))
    return out


def _columns(scenario: Scenario) -> list[str]:
    cols = ["time_s"]
    for name in scenario.train_names:
        cols += [f"{name}_{q}" for q in ("position_m", "speed_mps", "tractive_force_N",
                                          "electrical_power_W", "train_current_A",
                                          "train_voltage_V", "chopper_power_W", "energy_J")]
    cols += [f"{name}_current_A" for name in scenario.substation_names]
    cols += ["substation_energy_J", "rail_loss_J", "chopper_energy_J"]
    return cols


def _row(t, states, res: SolveResult, integ: _Integrator) -> list[float]:
    row = [t]
    for k, s in enumerate(states):
        row += [s.position, s.speed, s.forces.F_T, s.electrical_power, s.current,
                s.voltage, s.chopper_power, integ.train[k]]
    row += list(res.substation_currents)
    row += [integ.sub.sum(), integ.rail, integ.chopper.sum()]
    return row


def run(scenario: Scenario) -> RunResult:
    """Simulate the scenario and return the time series and energy report."""
    for spec in scenario.trains:
        check_accel_limits(spec.profile, spec.vehicle, strict=scenario.strict_limits)
    durations = {float(s.profile.duration) for s in scenario.trains}
    if len(durations) > 1:
        logger.warning("profiles end at different times %s; the run stops at %.6g s",
                       sorted(durations), min(durations))
    if scenario.mode == DRIVE_LEVEL:
        return _run_drive_level(scenario)
    return _run_quasi_static(scenario)


def _advance(positions, specs, v_a, v_b, h):
    return [x + DIRECTION_SIGN[s.direction] * 0.5 * (va + vb) * h
            for x, s, va, vb in zip(positions, specs, v_a, v_b)]


def _interval_phase(specs, t0, t1):
    mid = 0.5 * (t0 + t1)
    out = []
    for s in specs:
        a = s.profile.slopes[s.profile.segment_index(mid)]
        out.append(ACCEL if a > 0 else DECEL if a < 0 else CRUISE)
    return out


def _run_quasi_static(scenario: Scenario) -> RunResult:
    specs = scenario.trains
    n_tr, n_sub = len(specs), len(scenario.substations)
    grid = time_grid(scenario)
    K = grid.size - 1
    integ = _Integrator(n_tr, n_sub)
    rows = []
    sub_I, sub_V = [], []
    e_int = np.zeros((K, n_tr))
    e_neg = np.zeros((K, n_tr))
    phases = np.zeros((K, n_tr), dtype=int)
    positions = [s.position for s in specs]
    v_prev_speeds = None
    v_nodes = None
    prev = None  # (states, result) at the right side of the previous point

    def evaluate(t, segs):
        nonlocal v_nodes
        states = [train_state(s, t, sg, x) for s, sg, x in zip(specs, segs, positions)]
        res = _solve_at(scenario, positions, [s.electrical_power for s in states], t, v_nodes)
        v_nodes = res.node_voltages
        sub_I.append(res.substation_currents)
        sub_V.append(res.substation_voltages)
        return _attach(states, res), res

    for k, t in enumerate(grid):
        t = float(t)
        segs = [_segments(s.profile, t) for s in specs]
        speeds = [float(np.interp(t, s.profile.times, s.profile.speeds)) for s in specs]
        if k > 0:
            positions = _advance(positions, specs, v_prev_speeds, speeds, t - grid[k - 1])
        v_prev_speeds = speeds
        right = evaluate(t, [sg[1] for sg in segs]) if k < K else None
        if k > 0:
            kink = any(sg[0] != sg[1] for sg in segs)
            left = evaluate(t, [sg[0] for sg in segs]) if (kink or right is None) else right
            h = t - float(grid[k - 1])
            (sa, ra), (sb, rb) = prev, left
            integ.mechanical(sa, sb, specs, h)
            integ.network(ra, rb, h)
            pa = np.array([s.electrical_power for s in sa])
            pb = np.array([s.electrical_power for s in sb])
            e_int[k - 1] = 0.5 * h * (pa + pb)
            e_neg[k - 1] = 0.5 * h * (np.minimum(pa, 0) + np.minimum(pb, 0))
            phases[k - 1] = _interval_phase(specs, float(grid[k - 1]), t)
            integ.train += e_int[k - 1]
            integ.drive += sum(0.5 * h * ((x.electrical_power - x.shaft_power)
                                          + (y.electrical_power - y.shaft_power))
                               for x, y in zip(sa, sb))
        shown = right if right is not None else left
        rows.append(_row(t, shown[0], shown[1], integ))
        prev = right

    return _finish(scenario, grid, rows, integ, e_int, e_neg, phases, sub_I, sub_V)


def _run_drive_level(scenario: Scenario) -> RunResult:
    specs = scenario.trains
    n_tr, n_sub = len(specs), len(scenario.substations)
    grid = time_grid(scenario)
    K = grid.size - 1
    integ = _Integrator(n_tr, n_sub)
    rows = []
    sub_I, sub_V = [], []
    e_int = np.zeros((K, n_tr))
    e_neg = np.zeros((K, n_tr))
    phases = np.zeros((K, n_tr), dtype=int)
    positions = [s.position for s in specs]
    m = scenario.machine

    states0 = [train_state(s, 0.0, _segments(s.profile, 0.0)[1], x)
               for s, x in zip(specs, positions)]
    res = _solve_at(scenario, positions, [0.0] * n_tr, 0.0)
    sub_I.append(res.substation_currents)
    sub_V.append(res.substation_voltages)
    states0 = [replace(s, electrical_power=0.0) for s in states0]
    rows.append(_row(0.0, _attach(states0, res), res, integ))
    V_bus = [float(v) for v in res.train_voltages]
    v_nodes = res.node_voltages

    units = [DriveUnit(s.vehicle, m, dt=scenario.dt_control,
                       state=magnetized_state(m, omega_m=st.shaft.omega_G))
             for s, st in zip(specs, states0)]
    stored0 = sum(motor_count(s.vehicle) * u.stored_energy() for s, u in zip(specs, units))
    e_cu = 0.0

    for k in range(K):
        t0, t1 = float(grid[k]), float(grid[k + 1])
        h = t1 - t0
        segs = [_segments(s.profile, 0.5 * (t0 + t1))[1] for s in specs]
        sa = [train_state(s, t0, sg, x) for s, sg, x in zip(specs, segs, positions)]
        v0 = [s.speed for s in sa]
        v1 = [float(np.interp(t1, s.profile.times, s.profile.speeds)) for s in specs]
        positions = _advance(positions, specs, v0, v1, h)
        sb = [train_state(s, t1, sg, x) for s, sg, x in zip(specs, segs, positions)]

        powers = []
        for i, (spec, u) in enumerate(zip(specs, units)):
            w0, w1 = sa[i].shaft.omega_G, sb[i].shaft.omega_G
            T0, T1 = sa[i].shaft.T_G, sb[i].shaft.T_G
            n = max(1, math.ceil(h / scenario.dt_control - 1e-9))
            u.dt = h / n
            alpha = (w1 - w0) / h
            dT = (T1 - T0) / h
            before = (u.totals.E_dc, u.totals.E_cu)
            u.run(n, V_bus[i],
                  omega_ref=lambda tau, w0=w0, alpha=alpha: w0 + alpha * tau,
                  T_load=lambda tau, T0=T0, dT=dT: T0 + dT * tau,
                  feedforward=lambda tau, T0=T0, dT=dT, a=alpha: T0 + dT * tau + m.J * a)
            Nm = motor_count(spec.vehicle)
            powers.append(Nm * (u.totals.E_dc - before[0]) / h)
            e_cu += Nm * (u.totals.E_cu - before[1])

        res = _solve_at(scenario, positions, powers, t1, v_nodes)
        v_nodes = res.node_voltages
        V_bus = [float(v) for v in res.train_voltages]
        sub_I.append(res.substation_currents)
        sub_V.append(res.substation_voltages)

        integ.mechanical(sa, sb, specs, h)
        integ.sub += h * res.substation_powers
        integ.rail += h * res.rail_loss
        integ.aux += h * res.aux_powers.sum()
        integ.chopper += h * res.chopper_powers
        p = np.array(powers)
        e_int[k] = h * p
        e_neg[k] = h * np.minimum(p, 0)
        phases[k] = _interval_phase(specs, t0, t1)
        integ.train += e_int[k]
        shown = _attach([replace(s, electrical_power=pw) for s, pw in zip(sb, powers)], res)
        rows.append(_row(t1, shown, res, integ))

    stored1 = sum(motor_count(s.vehicle) * u.stored_energy() for s, u in zip(specs, units))
    integ.drive = e_cu + stored1 - stored0
    return _finish(scenario, grid, rows, integ, e_int, e_neg, phases, sub_I, sub_V)


def _finish(scenario, grid, rows, integ, e_int, e_neg, phases, sub_I, sub_V) -> RunResult:
    columns = _columns(scenario)
    arr = np.array(rows, dtype=float).reshape(len(rows), len(columns))
    result = RunResult(
        scenario=scenario,
        columns=columns,
        rows=arr,
        times=np.asarray(grid, dtype=float),
        report=None,
        ledger=EnergyLedger(
            substation=float(integ.sub.sum()), kinetic=integ.kinetic,
            rolling=integ.rolling, grade=integ.grade, aero=integ.aero,
            gearbox=integ.gearbox, drive=integ.drive,
            chopper=float(integ.chopper.sum()), rail=integ.rail, aux=integ.aux),
        interval_dt=np.diff(grid),
        interval_phase=phases,
        interval_energy=e_int,
        interval_regen=e_neg,
        substation_currents=np.array(sub_I),
        substation_voltages=np.array(sub_V),
        solver_tol=scenario.solver_tol,
    )
    result.report = energy_report(result, chopper=integ.chopper, substation=integ.sub,
                                  rail=integ.rail, aux=integ.aux)
    currents = np.stack([result.column(f"{n}_train_current_A")
                         for n in scenario.train_names], axis=1)
    result.peak_braking_current = np.abs(np.minimum(currents, 0.0)).max(axis=0)
    return result


def energy_report(result: RunResult, chopper=None, substation=None, rail=None,
                  aux=None) -> EnergyReport:
    """Phase-resolved energy totals from a run's interval energies.

    Acceleration energy sums every interval flagged as accelerating;
    deceleration energy sums only the negative (regenerated) part of the
    power over decelerating intervals.
    """
    names = result.scenario.train_names
    trains = []
    for i, name in enumerate(names):
        ph = result.interval_phase[:, i]
        accel = float(result.interval_energy[ph == ACCEL, i].sum())
        decel = float(-result.interval_regen[ph == DECEL, i].sum())
        ch = float(chopper[i]) if chopper is not None else 0.0
        trains.append(TrainEnergy(name, accel, decel, ch,
                                  float(result.interval_energy[:, i].sum())))
    n_sub = len(result.scenario.substations)
    subs = tuple(float(x) for x in (substation if substation is not None else np.zeros(n_sub)))
    return EnergyReport(tuple(trains), subs, float(rail or 0.0), float(aux or 0.0))


def energy_balance(result: RunResult) -> EnergyLedger:
    return result.ledger
