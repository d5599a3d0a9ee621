"""Backward-facing longitudinal vehicle model.

The speed trace is the input; the tractive effort needed to follow it, and
the corresponding axle torque and speed, are the outputs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ProfileError
from .profiles import SpeedProfile

logger = logging.getLogger(__name__)

MPH_PER_S = 0.44704  # m/s^2 per mph/s
AXLES_PER_CAR = 4


@dataclass(frozen=True)
class VehicleParams:
    """Constants for one consist. Defaults are the reference metro car set."""

    mass_per_car: float = 38_000.0  # kg
    n_cars: int = 10
    f_R: float = 0.002
    g: float = 9.81
    theta: float = 0.0  # rad
    C_w: float = 0.5
    A: float = 9.0  # m^2
    rho: float = 1.225  # kg/m^3
    r: float = 0.432  # m
    gamma_G: float = 6.64
    eta_G: float = 0.96
    chopper_R: float = 2.0  # ohm, per drive
    Kp: float = 30.0
    Ki: float = 100.0
    torque_limit: tuple[float, float] = (-2000.0, 2000.0)  # N*m per motor
    accel_limit: tuple[float, float] = (-3.0 * MPH_PER_S, 3.5 * MPH_PER_S)
    drive_efficiency: float = 0.95  # motor + inverter, quasi-static mode only

    def __post_init__(self):
        checks = [
            (self.mass_per_car > 0, "mass_per_car must be > 0"),
            (self.n_cars >= 1, "n_cars must be >= 1"),
            (0 < self.eta_G <= 1, "eta_G must be in (0, 1]"),
            (0 < self.drive_efficiency <= 1, "drive_efficiency must be in (0, 1]"),
            (self.r > 0, "r must be > 0"),
            (self.gamma_G > 0, "gamma_G must be > 0"),
            (self.chopper_R > 0, "chopper_R must be > 0"),
            (self.torque_limit[0] < 0 < self.torque_limit[1], "torque_limit must bracket 0"),
            (self.accel_limit[0] < 0 < self.accel_limit[1], "accel_limit must bracket 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    @property
    def mass(self) -> float:
        return self.mass_per_car * self.n_cars


@dataclass(frozen=True)
class ForceBreakdown:
    F_T: float
    F_N: float
    F_g: float
    F_a: float


@dataclass(frozen=True)
class AxleOutput:
    T_w: float
    omega_w: float


def resistive_forces(v: float, p: VehicleParams) -> tuple[float, float, float]:
    """Rolling, grade and aerodynamic forces (N) at speed ``v``."""
    M = p.mass
    F_N = p.f_R * M * p.g * math.cos(p.theta)
    F_g = M * p.g * math.sin(p.theta)
    F_a = 0.5 * p.C_w * p.A * p.rho * v * v
    return F_N, F_g, F_a


def tractive_effort(accel: float, v: float, p: VehicleParams) -> ForceBreakdown:
    F_N, F_g, F_a = resistive_forces(v, p)
    F_T = p.mass * accel + F_N + F_g + F_a
    return ForceBreakdown(F_T, F_N, F_g, F_a)


def accel_from_profile(profile: SpeedProfile, t: float) -> float:
    """Slope of the profile segment active at ``t``.

    At a breakpoint the segment to the right is used, except at the final
    sample where only the left segment exists.
    """
    return float(profile.slopes[profile.segment_index(t)])


def axle_torque_speed(F_T: float, v: float, p: VehicleParams) -> AxleOutput:
    T_w = F_T * p.r / (AXLES_PER_CAR * p.n_cars)
    return AxleOutput(T_w, v / p.r)


def check_accel_limits(profile: SpeedProfile, p: VehicleParams, strict: bool = False) -> list[int]:
    """Return indices of profile segments whose slope breaks ``p.accel_limit``.

    With ``strict`` the first violation raises :class:`ProfileError`;
    otherwise each one is logged as a warning.
    """
    lo, hi = p.accel_limit
    tol = 1e-9
    bad = np.nonzero((profile.slopes < lo - tol) | (profile.slopes > hi + tol))[0]
    for i in bad:
        msg = (
            f"segment {i} ({profile.times[i]:g}-{profile.times[i + 1]:g} s) has "
            f"acceleration {profile.slopes[i]:.4g} m/s^2 outside [{lo:.4g}, {hi:.4g}]"
        )
        if strict:
            raise ProfileError(msg)
        logger.warning(msg)
    return [int(i) for i in bad]
