"""Gearbox between axle and motor shaft."""

from __future__ import annotations

from dataclasses import dataclass

from .vehicle import AXLES_PER_CAR, VehicleParams


@dataclass(frozen=True)
class MotorShaftPoint:
    T_G: float  # N*m
    omega_G: float  # rad/s
    B: float  # N*m, loss torque (>= 0)


def wheel_to_motor(T_w: float, omega_w: float, p: VehicleParams) -> MotorShaftPoint:
    """Map one axle's torque and speed to the motor shaft.

    The loss torque ``B = |T_w| (1 - eta_G)`` is added to the torque the
    motor must supply when motoring and taken off what it receives when
    braking, so in both cases ``T_G = (T_w + B) / gamma_G``.
    """
    B = abs(T_w) * (1.0 - p.eta_G)
    return MotorShaftPoint((T_w + B) / p.gamma_G, omega_w * p.gamma_G, B)


def motor_count(p: VehicleParams) -> int:
    return AXLES_PER_CAR * p.n_cars
