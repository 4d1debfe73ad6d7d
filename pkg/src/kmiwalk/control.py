"""Self-paced binary state machine with calibrated hysteresis thresholds.

Per-tick walking posteriors are averaged over the most recent 1.5 s
(three 0.5-s ticks) and compared against two thresholds: the controller
switches from idle to walk when the smoothed posterior strictly exceeds
``t_walk`` and back when it falls strictly below ``t_idle``; anywhere in
between it holds the present state.  With both thresholds at 0.5 the
machine degenerates to the per-tick maximum-posterior rule.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np

from .recording import IDLE, WALK


class ControlError(ValueError):
    """Invalid posterior, threshold ordering, or calibration input."""


@dataclass(frozen=True)
class Thresholds:
    """Hysteresis pair with 0 <= t_idle <= t_walk <= 1 (equality allowed)."""

    t_idle: float
    t_walk: float

    def __post_init__(self):
        if not (0.0 <= self.t_idle <= self.t_walk <= 1.0):
            raise ControlError(
                f"need 0 <= t_idle <= t_walk <= 1, got ({self.t_idle}, {self.t_walk})"
            )


def calibrate(idle_posteriors, walk_posteriors) -> Thresholds:
    """Initial thresholds from cued calibration data.

    ``t_walk`` is the median smoothed walking posterior under cued walking
    imagery and ``t_idle`` the median under cued idling.  A model whose
    medians come out inverted is unusable and raises; equal medians return
    a zero dead-band with a warning.
    """
    idle = np.asarray(list(idle_posteriors), dtype=np.float64)
    walk = np.asarray(list(walk_posteriors), dtype=np.float64)
    if idle.size == 0 or walk.size == 0:
        raise ControlError("calibration needs posteriors from both cue conditions")
    t_idle = float(np.median(idle))
    t_walk = float(np.median(walk))
    if t_idle > t_walk:
        raise ControlError(
            f"calibration medians inverted (t_idle={t_idle:.3f} > t_walk={t_walk:.3f}); "
            "model unusable for self-paced control"
        )
    if t_idle == t_walk:
        warnings.warn("calibration medians equal; zero dead-band thresholds")
    return Thresholds(t_idle, t_walk)


def adjust(thresholds: Thresholds, delta_idle: float, delta_walk: float) -> Thresholds:
    """Manual post-calibration offsets, clamped to [0, 1], order preserved."""
    t_idle = min(1.0, max(0.0, thresholds.t_idle + delta_idle))
    t_walk = min(1.0, max(0.0, thresholds.t_walk + delta_walk))
    if t_idle > t_walk:
        raise ControlError(
            f"adjustment breaks threshold order: ({t_idle:.3f}, {t_walk:.3f})"
        )
    return Thresholds(t_idle, t_walk)


class PosteriorSmoother:
    """Running mean over the most recent ``horizon`` per-tick posteriors.

    Before the window fills, the mean of the available ticks is used.
    """

    def __init__(self, horizon: int = 3):
        if horizon < 1:
            raise ControlError("smoothing horizon must be >= 1")
        self.horizon = horizon
        self._buffer: deque[float] = deque(maxlen=horizon)

    def push(self, p_walk: float) -> float:
        self._buffer.append(p_walk)
        return sum(self._buffer) / len(self._buffer)

    @property
    def mean(self) -> float:
        if not self._buffer:
            raise ControlError("no posteriors pushed yet")
        return sum(self._buffer) / len(self._buffer)

    def reset(self) -> None:
        self._buffer.clear()


class HysteresisController:
    """Sequential idle/walk state machine driven by per-tick posteriors.

    A controller instance is single-owner and mutable; ``step`` pushes one
    raw posterior, updates the smoothed value, and applies the transition
    rules.  The initial state is idle.
    """

    def __init__(self, thresholds: Thresholds, smoothing: int = 3):
        self.thresholds = thresholds
        self.smoother = PosteriorSmoother(smoothing)
        self.state = IDLE
        self.tick = 0
        self.p_bar = float("nan")

    def step(self, p_walk: float) -> int:
        """Advance one tick; returns the new state (IDLE or WALK)."""
        if not 0.0 <= p_walk <= 1.0:
            raise ControlError(f"posterior {p_walk} outside [0, 1]")
        self.p_bar = self.smoother.push(p_walk)
        if self.state == IDLE and self.p_bar > self.thresholds.t_walk:
            self.state = WALK
        elif self.state == WALK and self.p_bar < self.thresholds.t_idle:
            self.state = IDLE
        self.tick += 1
        return self.state

    def replay(self, posteriors) -> np.ndarray:
        """States for a whole posterior trace, one per tick."""
        return np.array([self.step(p) for p in posteriors], dtype=np.uint8)

    def reset(self) -> None:
        self.smoother.reset()
        self.state = IDLE
        self.tick = 0
        self.p_bar = float("nan")


def smoothed_trace(posteriors: np.ndarray, horizon: int = 3) -> np.ndarray:
    """Vectorised running mean over the trailing ``horizon`` ticks.

    Matches :class:`PosteriorSmoother` exactly, including the partial-window
    warm-up at the start of the trace.
    """
    p = np.asarray(posteriors, dtype=np.float64)
    if horizon < 1:
        raise ControlError("smoothing horizon must be >= 1")
    if p.size == 0 or horizon == 1:
        return p.copy()
    csum = np.cumsum(p)
    out = np.empty_like(p)
    head = min(horizon, p.size)
    out[:head] = csum[:head] / np.arange(1, head + 1)
    if p.size > horizon:
        out[horizon:] = (csum[horizon:] - csum[:-horizon]) / horizon
    return out


def hysteresis_states(p_bar: np.ndarray, thresholds: Thresholds) -> np.ndarray:
    """Vectorised state trace from an already-smoothed posterior trace.

    Equivalent to replaying :class:`HysteresisController` with the smoothing
    already applied: the state at each tick is set by the most recent
    crossing of either threshold, idle until the first crossing.
    """
    p_bar = np.asarray(p_bar, dtype=np.float64)
    up = p_bar > thresholds.t_walk
    down = p_bar < thresholds.t_idle
    event = up | down
    indices = np.where(event, np.arange(p_bar.size), -1)
    last = np.maximum.accumulate(indices)
    walking = np.where(last >= 0, up[np.clip(last, 0, None)], False)
    return np.where(walking, WALK, IDLE).astype(np.uint8)


def replay_states(
    posteriors: np.ndarray, thresholds: Thresholds, smoothing: int = 3
) -> np.ndarray:
    """Vectorised equivalent of stepping a controller through a raw trace."""
    return hysteresis_states(smoothed_trace(posteriors, smoothing), thresholds)


# ---------------------------------------------------------------------------
# calibration stream file ([idle] / [walk] sections) and thresholds.cfg
# ---------------------------------------------------------------------------


def read_calibration_file(path) -> tuple[list[float], list[float]]:
    """Parse a calibration text file: one posterior per line under
    ``[idle]`` / ``[walk]`` section headers."""
    sections: dict[str, list[float]] = {"idle": [], "walk": []}
    current: str | None = None
    with open(path) as fh:
        for line_num, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                name = line[1:-1].strip().lower()
                if name not in sections:
                    raise ControlError(f"{path}:{line_num}: unknown section [{name}]")
                current = name
            elif current is None:
                raise ControlError(f"{path}:{line_num}: value before any section")
            else:
                sections[current].append(float(line))
    return sections["idle"], sections["walk"]


def write_calibration_file(path, idle_posteriors, walk_posteriors) -> None:
    with open(path, "w") as fh:
        fh.write("[idle]\n")
        fh.writelines(f"{p}\n" for p in idle_posteriors)
        fh.write("[walk]\n")
        fh.writelines(f"{p}\n" for p in walk_posteriors)


def save_thresholds(path, thresholds: Thresholds) -> None:
    with open(path, "w") as fh:
        fh.write(f"t_idle = {thresholds.t_idle!r}\n")
        fh.write(f"t_walk = {thresholds.t_walk!r}\n")


def load_thresholds(path) -> Thresholds:
    values: dict[str, float] = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            values[key.strip()] = float(value)
    try:
        return Thresholds(values["t_idle"], values["t_walk"])
    except KeyError as exc:
        raise ControlError(f"{path}: missing key {exc}") from exc
