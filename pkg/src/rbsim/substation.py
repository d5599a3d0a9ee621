"""Rectifier substation reduced to a Thevenin source behind an ideal diode."""

from __future__ import annotations

import math
from dataclasses import dataclass

# Ideal six-pulse bridge ratio; two phase-shifted bridges in parallel keep it.
BRIDGE_RATIO = 3.0 * math.sqrt(2.0) / math.pi


@dataclass(frozen=True)
class SubstationParams:
    position: float  # m
    V0: float = 650.0  # V, no-load
    R_th: float = 0.01  # ohm
    aux_load: float = 0.0  # W, constant draw at the busbar
    name: str = ""

    def __post_init__(self):
        if self.V0 <= 0:
            raise ValueError("V0 must be > 0")
        if self.R_th <= 0:
            raise ValueError("R_th must be > 0")
        if self.aux_load < 0:
            raise ValueError("aux_load must be >= 0")


def substation_current(V_rail: float, p: SubstationParams) -> float:
    """Current delivered into the rail at rail voltage ``V_rail``; never negative."""
    return max(0.0, (p.V0 - V_rail) / p.R_th)


def twelve_pulse_no_load(V_ll_secondary: float) -> float:
    """No-load DC voltage of the parallel twelve-pulse rectifier for a given
    secondary line-to-line rms voltage."""
    if V_ll_secondary <= 0:
        raise ValueError("secondary voltage must be > 0")
    return BRIDGE_RATIO * V_ll_secondary
