"""Speed-profile ingestion and delimited-text output.

Profiles are two-column records ``time, speed``. Lines starting with ``#``
are comments, a single non-numeric header line is tolerated, and commas,
semicolons, tabs or plain whitespace all work as delimiters. Everything is
converted to SI (seconds, metres per second) on the way in.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ProfileError

# Conversion factors to m/s.
UNIT_FACTORS = {
    "m/s": 1.0,
    "km/h": 1.0 / 3.6,
    "mph": 0.44704,
}

_SPLIT = re.compile(r"[,;\t ]+")


def unit_factor(unit: str) -> float:
    try:
        return UNIT_FACTORS[unit]
    except KeyError:
        raise ProfileError(
            f"unknown speed unit {unit!r}; expected one of {sorted(UNIT_FACTORS)}"
        ) from None


@dataclass(frozen=True)
class SpeedProfile:
    """Piecewise-linear speed trace, stored in SI units."""

    times: np.ndarray
    speeds: np.ndarray
    source_unit: str = "m/s"
    _slopes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        v = np.array(self.speeds, dtype=float)
        if t.ndim != 1 or t.shape != v.shape:
            raise ProfileError("times and speeds must be 1-D arrays of equal length")
        if t.size < 2:
            raise ProfileError("a profile needs at least two samples")
        if t[0] != 0.0:
            raise ProfileError(f"first sample time must be 0, got {t[0]!r}")
        bad = np.nonzero(np.diff(t) <= 0)[0]
        if bad.size:
            raise ProfileError(f"non-monotonic time at sample {bad[0] + 2}")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ProfileError("speeds must be finite and non-negative")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "speeds", v)
        slopes = np.diff(v) / np.diff(t)
        slopes.setflags(write=False)
        object.__setattr__(self, "_slopes", slopes)

    @classmethod
    def from_points(cls, points, unit: str = "m/s") -> "SpeedProfile":
        arr = np.asarray(points, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ProfileError("points must be a sequence of (time, speed) pairs")
        return cls(arr[:, 0], arr[:, 1] * unit_factor(unit), source_unit=unit)

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    @property
    def slopes(self) -> np.ndarray:
        """Acceleration of each linear segment (m/s^2)."""
        return self._slopes

    def segment_index(self, t: float) -> int:
        """Index of the segment active at ``t``; right-continuous except at the end."""
        self._check_range(t)
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(i, self.times.size - 2)

    def distance(self) -> float:
        return float(np.trapezoid(self.speeds, self.times))

    def _check_range(self, t: float) -> None:
        if not (0.0 <= t <= self.times[-1]):
            raise ValueError(
                f"time {t!r} s outside profile range [0, {self.times[-1]!r}]"
            )


def parse_speed_profile(text, unit: str = "m/s") -> SpeedProfile:
    """Parse delimited ``time, speed`` records into a :class:`SpeedProfile`.

    ``text`` may be a string or any iterable of lines (e.g. an open file).
    Errors name the offending line, counted from 1.
    """
    factor = unit_factor(unit)
    lines = text.splitlines() if isinstance(text, str) else list(text)
    times: list[float] = []
    speeds: list[float] = []
    seen_header = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c for c in _SPLIT.split(line) if c]
        try:
            t, v = (float(c) for c in cells[:2])
            if len(cells) != 2:
                raise ValueError
        except ValueError:
            if not times and not seen_header:
                seen_header = True
                continue
            raise ProfileError(f"malformed record at row {lineno}: {raw!r}") from None
        if times and t <= times[-1]:
            raise ProfileError(f"non-monotonic time at row {lineno}")
        if v < 0:
            raise ProfileError(f"negative speed at row {lineno}")
        times.append(t)
        speeds.append(v * factor)
    if not times:
        raise ProfileError("empty speed profile")
    if times[0] != 0.0:
        raise ProfileError("first sample time must be 0")
    if len(times) == 1:
        raise ProfileError("a profile needs at least two samples")
    return SpeedProfile(np.array(times), np.array(speeds), source_unit=unit)


def sample_speed(profile: SpeedProfile, t: float) -> float:
    """Linearly interpolated speed at time ``t``."""
    profile._check_range(t)
    return float(np.interp(t, profile.times, profile.speeds))


def emit_speed_profile(profile: SpeedProfile, unit: str = "m/s") -> str:
    factor = unit_factor(unit)
    out = io.StringIO()
    out.write("time_s,speed\n")
    for t, v in zip(profile.times.tolist(), profile.speeds.tolist()):
        out.write(f"{t!r},{v / factor!r}\n")
    return out.getvalue()


def emit_table(columns, rows) -> str:
    """Comma-delimited table with one header row; values use ``repr`` precision."""
    out = io.StringIO()
    out.write(",".join(columns) + "\n")
    for row in rows:
        out.write(",".join(repr(float(x)) for x in row) + "\n")
    return out.getvalue()


def emit_timeseries(result) -> str:
    """Serialise a run's time series (see README for the column order)."""
    return emit_table(result.columns, result.rows)
