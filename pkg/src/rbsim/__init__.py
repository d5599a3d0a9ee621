"""Regenerative braking energy simulator for DC rail corridors."""

from .drive import ChopperState, DriveUnit, MachineParams, chopper_step
from .drivetrain import motor_count, wheel_to_motor
from .engine import EnergyLedger, EnergyReport, RunResult, phase_split, run
from .network import TrackLayout, build_graph, loop_resistance
from .profiles import SpeedProfile, parse_speed_profile, sample_speed
from .scenario import Scenario, TrainSpec, load_scenario
from .solver import SolveResult, receptivity_split, solve
from .substation import SubstationParams, substation_current
from .vehicle import VehicleParams, tractive_effort

__all__ = [
    "ChopperState", "DriveUnit", "EnergyLedger", "EnergyReport", "MachineParams",
    "RunResult", "Scenario", "SolveResult", "SpeedProfile", "SubstationParams",
    "TrackLayout", "TrainSpec", "VehicleParams", "build_graph", "chopper_step",
    "load_scenario", "loop_resistance", "motor_count", "parse_speed_profile",
    "phase_split", "receptivity_split", "run", "sample_speed", "solve", "substation_current",
    "tractive_effort", "wheel_to_motor",
]
