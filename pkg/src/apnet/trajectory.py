"""Target tracks: scripted waypoint tours and externally steered motion.

The scripted track replaces hand-steering reproducibly: waypoints joined by
C1 smoothstep segments with zero end speed, so position and its derivative
stay bounded and dwell intervals join smoothly.

The external track turns a stream of pointer commands into a rate-limited
pursuit of the latest commanded point, advanced once per simulation step.
Position is continuous with speed clamped to v_max, and the reported speed
is a finite difference smoothed over a trailing window, decaying to zero
within that window once commands stop.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_WINDOW = 0.2  # seconds of trailing motion behind the speed estimate


@dataclass(frozen=True)
class Waypoint:
    position: np.ndarray
    travel: float  # seconds moving from the previous point (0 for the first)
    dwell: float   # seconds holding at this point


class WaypointTrack:
    """Piecewise smoothstep tour through waypoints with dwells."""

    def __init__(self, waypoints: list[Waypoint]):
        if not waypoints:
            raise ValueError("need at least one waypoint")
        starts = []  # segment start times
        segs = []    # (t0, t1, p0, p1); t1 == t0 marks a hold
        t = 0.0
        prev = np.asarray(waypoints[0].position, dtype=float)
        for k, wp in enumerate(waypoints):
            pos = np.asarray(wp.position, dtype=float)
            if k > 0:
                if wp.travel <= 0:
                    raise ValueError("travel time must be positive past the first waypoint")
                starts.append(t)
                segs.append((t, t + wp.travel, prev, pos))
                t += wp.travel
            if wp.dwell > 0:
                starts.append(t)
                segs.append((t, t + wp.dwell, pos, pos))
                t += wp.dwell
            prev = pos
        if not segs:
            segs = [(0.0, 0.0, prev, prev)]
            starts = [0.0]
        self._starts = np.asarray(starts)
        self._segs = segs
        self.duration = t
        self.final_position = prev

    def sample(self, times) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Positions (T,2), velocities (T,2), speeds (T,) at the given times."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        pos = np.empty((times.shape[0], 2))
        vel = np.zeros((times.shape[0], 2))
        idx = np.clip(np.searchsorted(self._starts, times, side="right") - 1, 0, len(self._segs) - 1)
        for k, (t, seg_i) in enumerate(zip(times, idx)):
            t0, t1, p0, p1 = self._segs[seg_i]
            if t <= t0 or t1 == t0:
                pos[k] = p0 if t <= t0 else p1
                continue
            if t >= t1:
                pos[k] = p1
                continue
            span = t1 - t0
            u = (t - t0) / span
            s = u * u * (3.0 - 2.0 * u)
            pos[k] = (1.0 - s) * p0 + s * p1
            vel[k] = (p1 - p0) * (6.0 * u * (1.0 - u) / span)
        return pos, vel, np.linalg.norm(vel, axis=1)

    def position_bound(self) -> np.ndarray:
        """Per-coordinate magnitude ceiling over the whole tour."""
        pts = np.array([p for seg in self._segs for p in (seg[2], seg[3])])
        return np.abs(pts).max(axis=0)

    def rate_bound(self) -> np.ndarray:
        """Per-coordinate velocity ceiling: smoothstep peak slope is 1.5/T."""
        best = np.zeros(2)
        for t0, t1, p0, p1 in self._segs:
            if t1 > t0:
                best = np.maximum(best, 1.5 * np.abs(p1 - p0) / (t1 - t0))
        return best

    def speed_bound(self) -> float:
        best = 0.0
        for t0, t1, p0, p1 in self._segs:
            if t1 > t0:
                best = max(best, 1.5 * float(np.linalg.norm(p1 - p0)) / (t1 - t0))
        return best

    def accel_bound(self) -> float:
        """Acceleration ceiling: smoothstep peak curvature is 6 d / T^2."""
        best = 0.0
        for t0, t1, p0, p1 in self._segs:
            if t1 > t0:
                best = max(best, 6.0 * float(np.linalg.norm(p1 - p0)) / (t1 - t0) ** 2)
        return best


class ExternalTrack:
    """Rate-limited pursuit of externally commanded points, stepped on the sim clock."""

    def __init__(self, start_position, v_max: float, dt: float):
        if v_max <= 0 or dt <= 0:
            raise ValueError("v_max and dt must be positive")
        self.v_max = float(v_max)
        self.dt = float(dt)
        self._goal = np.asarray(start_position, dtype=float).copy()
        self._pos = self._goal.copy()
        window = max(1, int(round(SPEED_WINDOW / dt)))
        self._history = [self._pos.copy()] * (window + 1)
        self._window = window
        self.step_index = 0
        self.command_log: list[tuple[int, float, float, int]] = []

    def command(self, x: float, y: float, seq: int) -> None:
        """Retarget the pursuit; takes effect from the current step onward."""
        self._goal = np.array([float(x), float(y)])
        self.command_log.append((self.step_index, float(x), float(y), int(seq)))

    def advance_steps(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """March n sim steps; returns per-boundary positions (n+1,2), speeds (n+1,).

        Boundary 0 is the current state before stepping.
        """
        positions = np.empty((n + 1, 2))
        speeds = np.empty(n + 1)
        positions[0] = self._pos
        speeds[0] = self._speed()
        max_step = self.v_max * self.dt
        for k in range(n):
            gap = self._goal - self._pos
            dist = float(np.linalg.norm(gap))
            if dist > max_step:
                self._pos = self._pos + gap * (max_step / dist)
            else:
                self._pos = self._goal.copy()
            self._history.append(self._pos.copy())
            if len(self._history) > self._window + 1:
                self._history.pop(0)
            self.step_index += 1
            positions[k + 1] = self._pos
            speeds[k + 1] = self._speed()
        return positions, speeds

    def _speed(self) -> float:
        span = (len(self._history) - 1) * self.dt
        if span <= 0:
            return 0.0
        moved = float(np.linalg.norm(self._history[-1] - self._history[0]))
        return min(moved / span, self.v_max)


def stage_times(t0: float, h: float, n_steps: int) -> np.ndarray:
    """RK4 stage grid for a block: t0 + (h/2) * [0 .. 2S]."""
    return t0 + 0.5 * h * np.arange(2 * n_steps + 1)


def interp_boundaries(values: np.ndarray, n_steps: int) -> np.ndarray:
    """Linearly interpolate per-step boundary samples onto the stage grid.

    values has n_steps+1 rows; the result has 2*n_steps+1, with midpoints
    averaged between neighbors.
    """
    values = np.asarray(values, dtype=float)
    out_shape = (2 * n_steps + 1,) + values.shape[1:]
    out = np.empty(out_shape)
    out[0::2] = values
    out[1::2] = 0.5 * (values[:-1] + values[1:])
    return out
