"""Scenario definition and YAML loading.

A scenario file looks like::

    mode: quasi_static          # or drive_level
    dt_network: 0.1             # s
    dt_control: 5.0e-5          # s, drive_level only
    solver: {tol: 0.01, max_iter: 200, strict_disconnect: false}
    layout:
      stations: [0, 1500, 3000]
      R_power_per_m: 1.0e-5
      R_traction_per_m: 2.0e-5
    substations:
      - {name: SS1, position: 750, V0: 650, R_th: 0.01}
    trains:
      - name: T1
        position: 0
        direction: eastbound
        profile: profiles/run.csv    # path relative to this file, or
        profile_points: [[0, 0], [30, 15], [60, 0]]
        unit: m/s
        vehicle: {n_cars: 10}        # VehicleParams overrides
        chopper: {V_act: 780, V_rel: 760}

Anything omitted falls back to the reference vehicle and network defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .drive import ChopperState, MachineParams, default_chopper
from .drivetrain import motor_count
from .errors import ScenarioError
from .network import DIRECTION_SIGN, EASTBOUND, TrackLayout
from .profiles import SpeedProfile, parse_speed_profile
from .substation import SubstationParams
from .vehicle import VehicleParams

QUASI_STATIC = "quasi_static"
DRIVE_LEVEL = "drive_level"
MODES = (QUASI_STATIC, DRIVE_LEVEL)


@dataclass(frozen=True)
class TrainSpec:
    profile: SpeedProfile
    position: float = 0.0
    direction: str = EASTBOUND
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    chopper: ChopperState | None = None
    name: str = ""

    def __post_init__(self):
        if self.direction not in DIRECTION_SIGN:
            raise ScenarioError(f"direction must be one of {sorted(DIRECTION_SIGN)}")
        if self.chopper is None:
            object.__setattr__(self, "chopper",
                               default_chopper(self.vehicle, units=motor_count(self.vehicle)))


@dataclass(frozen=True)
class Scenario:
    layout: TrackLayout
    substations: tuple[SubstationParams, ...]
    trains: tuple[TrainSpec, ...]
    mode: str = QUASI_STATIC
    dt_network: float = 0.1
    dt_control: float = 50e-6
    solver_tol: float = 0.01
    max_iter: int = 200
    strict_disconnect: bool = False
    strict_limits: bool = False
    machine: MachineParams = field(default_factory=MachineParams)

    def __post_init__(self):
        object.__setattr__(self, "substations", tuple(self.substations))
        object.__setattr__(self, "trains", tuple(self.trains))
        if not self.substations:
            raise ScenarioError("at least one substation is required")
        if not self.trains:
            raise ScenarioError("at least one train is required")
        if self.mode not in MODES:
            raise ScenarioError(f"mode must be one of {MODES}")
        if self.dt_network <= 0:
            raise ScenarioError("dt_network must be > 0")
        if self.mode == DRIVE_LEVEL and not 0 < self.dt_control <= self.dt_network:
            raise ScenarioError("dt_control must be in (0, dt_network]")
        positions = tuple(s.position for s in self.substations)
        if positions != self.layout.substation_positions:
            raise ScenarioError("layout substation positions disagree with the substation list")
        for k, tr in enumerate(self.trains):
            if not self.layout.contains(tr.position):
                raise ScenarioError(
                    f"train {k} starts at {tr.position} m, outside extent {self.layout.extent}")

    def with_(self, **changes) -> "Scenario":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return Scenario(**kw)

    @property
    def train_names(self) -> list[str]:
        return [t.name or f"train{k + 1}" for k, t in enumerate(self.trains)]

    @property
    def substation_names(self) -> list[str]:
        return [s.name or f"ss{k + 1}" for k, s in enumerate(self.substations)]


def _dataclass_from(cls, data: dict | None, **base):
    data = dict(data or {})
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ScenarioError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    for k, v in data.items():
        if isinstance(v, list):
            data[k] = tuple(v)
    base.update(data)
    return cls(**base)


def scenario_from_dict(cfg: dict, base_dir: Path | str = ".") -> Scenario:
    base_dir = Path(base_dir)
    known = {"mode", "dt_network", "dt_control", "solver", "strict_limits",
             "layout", "substations", "trains", "machine"}
    unknown = set(cfg) - known
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")

    subs = tuple(
        _dataclass_from(SubstationParams, s) for s in cfg.get("substations") or []
    )
    if not subs:
        raise ScenarioError("at least one substation is required")
    subs = tuple(sorted(subs, key=lambda s: s.position))

    lay = dict(cfg.get("layout") or {})
    extent = lay.pop("extent", None)
    layout = TrackLayout(
        station_positions=tuple(lay.pop("stations", ())),
        substation_positions=tuple(s.position for s in subs),
        R_Ppu=float(lay.pop("R_power_per_m", 10e-6)),
        R_Tpu=float(lay.pop("R_traction_per_m", 20e-6)),
        extent=tuple(extent) if extent is not None else None,
    )
    if lay:
        raise ScenarioError(f"unknown layout keys: {sorted(lay)}")

    trains = []
    for k, t in enumerate(cfg.get("trains") or []):
        t = dict(t)
        unit = t.pop("unit", "m/s")
        if "profile" in t:
            path = base_dir / t.pop("profile")
            profile = parse_speed_profile(path.read_text(), unit)
        elif "profile_points" in t:
            profile = SpeedProfile.from_points(t.pop("profile_points"), unit)
        else:
            raise ScenarioError(f"train {k} needs 'profile' or 'profile_points'")
        vehicle = _dataclass_from(VehicleParams, t.pop("vehicle", None))
        chopper_cfg = t.pop("chopper", None)
        chopper = None
        if chopper_cfg is not None:
            d = default_chopper(vehicle, units=motor_count(vehicle))
            chopper = _dataclass_from(ChopperState, chopper_cfg, V_act=d.V_act, V_rel=d.V_rel,
                                      R_ch=d.R_ch, units=d.units)
        trains.append(TrainSpec(
            profile=profile,
            position=float(t.pop("position", 0.0)),
            direction=t.pop("direction", EASTBOUND),
            vehicle=vehicle,
            chopper=chopper,
            name=str(t.pop("name", "")),
        ))
        if t:
            raise ScenarioError(f"unknown keys for train {k}: {sorted(t)}")

    solver = dict(cfg.get("solver") or {})
    scenario = Scenario(
        layout=layout,
        substations=subs,
        trains=tuple(trains),
        mode=cfg.get("mode", QUASI_STATIC),
        dt_network=float(cfg.get("dt_network", 0.1)),
        dt_control=float(cfg.get("dt_control", 50e-6)),
        solver_tol=float(solver.pop("tol", 0.01)),
        max_iter=int(solver.pop("max_iter", 200)),
        strict_disconnect=bool(solver.pop("strict_disconnect", False)),
        strict_limits=bool(cfg.get("strict_limits", False)),
        machine=_dataclass_from(MachineParams, cfg.get("machine")),
    )
    if solver:
        raise ScenarioError(f"unknown solver keys: {sorted(solver)}")
    return scenario


def load_scenario(path: Path | str) -> Scenario:
    path = Path(path)
    with open(path) as fh:
        cfg = yaml.safe_load(fh) or {}
    return scenario_from_dict(cfg, path.parent)
