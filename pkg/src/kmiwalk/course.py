"""Fixed-tick simulator of the linear walking course with 10 stop zones.

The avatar walks a 210-m straight course at the speed implied by a perfect
191-s walking time, stopping at 10 equally spaced positions.  Standing
still inside a 3.5-m zone accrues dwell credit: a 2-s stand earns the full
point, 0.5-2 s a linear fraction, and only the best episode per zone
counts.  Sessions end when the avatar walks past the course end or when
the 20-min limit censors the run.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .control import HysteresisController, Thresholds
from .recording import IDLE, WALK

_EPS = 1e-9


class CourseError(ValueError):
    """Invalid course geometry or simulator misuse."""


@dataclass(frozen=True)
class CourseSpec:
    """Geometry, scoring rule, and timing of the virtual course."""

    course_length_m: float = 210.0
    npc_positions_m: tuple[float, ...] = ()
    zone_radius_m: float = 3.5
    walk_speed_mps: float = 210.0 / 191.0
    dwell_full_s: float = 2.0
    dwell_min_s: float = 0.5
    time_limit_s: float = 1200.0
    tick_s: float = 0.5

    def __post_init__(self):
        positions = np.asarray(self.npc_positions_m, dtype=np.float64)
        if positions.size == 0:
            raise CourseError("course needs at least one stop position")
        if (np.diff(positions) <= 0).any():
            raise CourseError("stop positions must be strictly increasing")
        if positions[0] <= 0 or positions[-1] > self.course_length_m:
            raise CourseError("stop positions must lie inside the course")
        if self.zone_radius_m <= 0 or self.walk_speed_mps <= 0 or self.tick_s <= 0:
            raise CourseError("radius, speed, and tick must be positive")

    @property
    def n_zones(self) -> int:
        return len(self.npc_positions_m)

    @property
    def step_m(self) -> float:
        return self.walk_speed_mps * self.tick_s

    @property
    def limit_ticks(self) -> int:
        return int(round(self.time_limit_s / self.tick_s))


def default_course() -> CourseSpec:
    """The standard course: 210 m, 10 stops on 18-s walking legs.

    The walking speed is fixed by covering 210 m in 191 s, which puts stop
    i at i * 18 s of walking (~19.79 m apart) and leaves an 11-s run-out
    after the last zone.  A perfect agent scores 10 points in
    191 + 10 * 2 = 211 s.
    """
    speed = 210.0 / 191.0
    positions = tuple(i * 18.0 * speed for i in range(1, 11))
    return CourseSpec(npc_positions_m=positions, walk_speed_mps=speed)


def score_dwell(episode_s: float, in_zone: bool = True, spec: CourseSpec | None = None) -> float:
    """Points for one dwell episode: linear in [0.5, 2] s, capped at one point.

    Nothing is awarded below 0.5 s or outside a zone; dwelling beyond 2 s
    earns no extra credit.
    """
    if episode_s < 0:
        raise CourseError("episode duration must be nonnegative")
    dwell_min = spec.dwell_min_s if spec else 0.5
    dwell_full = spec.dwell_full_s if spec else 2.0
    if not in_zone or episode_s < dwell_min:
        return 0.0
    return min(episode_s / dwell_full, 1.0)


def zones_at(positions: np.ndarray, spec: CourseSpec) -> np.ndarray:
    """Zone index for each position, -1 outside every zone (radius inclusive)."""
    positions = np.atleast_1d(np.asarray(positions, dtype=np.float64))
    centers = np.asarray(spec.npc_positions_m)
    right = np.searchsorted(centers, positions)
    left = np.clip(right - 1, 0, len(centers) - 1)
    right = np.clip(right, 0, len(centers) - 1)
    d_left = np.abs(positions - centers[left])
    d_right = np.abs(positions - centers[right])
    nearest = np.where(d_left <= d_right, left, right)
    inside = np.abs(positions - centers[nearest]) <= spec.zone_radius_m + _EPS
    return np.where(inside, nearest, -1)


@dataclass
class TickEvent:
    """One session-log row."""

    tick: int
    clock_s: float
    p_bar: float
    state: int
    position_m: float
    zone_id: int
    event: str


@dataclass
class SessionResult:
    """Outcome of one course session plus its per-tick log when requested."""

    stops: float
    completion_time_s: float
    censored: bool
    zone_points: np.ndarray
    false_start_s: float = 0.0
    false_stop_s: float = 0.0
    productive_s: float = 0.0
    events: list[TickEvent] | None = None

    def error_rates(self) -> tuple[float, float]:
        """False-start and false-stop durations as fractions of session time."""
        total = self.completion_time_s
        return self.false_start_s / total, self.false_stop_s / total


class WalkingSimulation:
    """Tick-level avatar kinematics, dwell accounting, and event logging.

    Drive with :meth:`tick`, passing the controller state for that tick.
    The simulation is strictly sequential; ticking after the session has
    finished raises.
    """

    def __init__(self, spec: CourseSpec):
        self.spec = spec
        self.position = 0.0
        self.clock = 0.0
        self.tick_index = 0
        self.finished = False
        self.censored = False
        self.completion_time = None
        self.zone_best = np.zeros(spec.n_zones)
        self.zone_begun = np.zeros(spec.n_zones, dtype=bool)
        self.zone_credited = np.zeros(spec.n_zones, dtype=bool)
        self.false_start_ticks = 0
        self.false_stop_ticks = 0
        self._episode_zone = -1
        self._episode_ticks = 0
        self._last_zone = -1

    def _close_episode(self) -> None:
        if self._episode_zone >= 0:
            duration = self._episode_ticks * self.spec.tick_s
            if duration > self.zone_best[self._episode_zone]:
                self.zone_best[self._episode_zone] = duration
        self._episode_zone = -1
        self._episode_ticks = 0

    def tick(self, state: int) -> str:
        """Advance one tick in the given controller state; returns the event tag."""
        if self.finished or self.censored:
            raise CourseError("tick after session end")
        if state not in (IDLE, WALK):
            raise CourseError(f"invalid controller state {state}")
        spec = self.spec
        if state == WALK:
            self.position = min(self.position + spec.step_m, spec.course_length_m)
        self.clock += spec.tick_s
        self.tick_index += 1
        zone = int(zones_at(self.position, spec)[0])

        event = "none"
        if state == IDLE:
            if zone >= 0:
                if self._episode_zone < 0:
                    self._episode_zone = zone
                    self.zone_begun[zone] = True
                self._episode_ticks += 1
                duration = self._episode_ticks * spec.tick_s
                if duration >= spec.dwell_full_s - _EPS and not self.zone_credited[zone]:
                    self.zone_credited[zone] = True
                    event = "stop_scored"
            else:
                self.false_stop_ticks += 1
                event = "false_stop"
        else:
            self._close_episode()
            if zone >= 0 and self.zone_begun[zone] and not self.zone_credited[zone]:
                self.false_start_ticks += 1
                event = "false_start"

        if zone != self._last_zone and event in ("none", "false_start", "false_stop"):
            if zone >= 0:
                event = "enter"
            elif self._last_zone >= 0:
                event = "exit"
        self._last_zone = zone

        if self.position >= spec.course_length_m - _EPS:
            self.finished = True
            self.completion_time = self.clock
            self._close_episode()
            event = "finish"
        elif self.clock >= spec.time_limit_s - _EPS:
            self.censored = True
            self.completion_time = spec.time_limit_s
            self._close_episode()
        return event

    def result(self, events: list[TickEvent] | None = None) -> SessionResult:
        self._close_episode()
        points = np.array(
            [score_dwell(d, True, self.spec) for d in self.zone_best]
        )
        completion = (
            self.completion_time if self.completion_time is not None else self.spec.time_limit_s
        )
        false_start_s = self.false_start_ticks * self.spec.tick_s
        false_stop_s = self.false_stop_ticks * self.spec.tick_s
        return SessionResult(
            stops=float(points.sum()),
            completion_time_s=float(completion),
            censored=not self.finished,
            zone_points=points,
            false_start_s=false_start_s,
            false_stop_s=false_stop_s,
            productive_s=float(completion) - false_start_s - false_stop_s,
            events=events,
        )


def run_session(
    thresholds: Thresholds,
    posteriors,
    spec: CourseSpec | None = None,
    smoothing: int = 3,
    log_events: bool = True,
) -> SessionResult:
    """Run one session: posteriors through the state machine into the course.

    ``posteriors`` is the raw per-tick walking-posterior trace; smoothing
    happens inside the controller.  If the trace runs out before the course
    is completed the session is censored with the partial score.
    """
    if spec is None:
        spec = default_course()
    controller = HysteresisController(thresholds, smoothing)
    sim = WalkingSimulation(spec)
    events: list[TickEvent] | None = [] if log_events else None
    for p in posteriors:
        if sim.tick_index >= spec.limit_ticks:
            break
        state = controller.step(float(p))
        tag = sim.tick(state)
        if events is not None:
            events.append(
                TickEvent(
                    tick=sim.tick_index,
                    clock_s=sim.clock,
                    p_bar=controller.p_bar,
                    state=state,
                    position_m=sim.position,
                    zone_id=int(zones_at(sim.position, spec)[0]),
                    event=tag,
                )
            )
        if sim.finished or sim.censored:
            break
    return sim.result(events)


def score_walk_trace(walk: np.ndarray, spec: CourseSpec) -> SessionResult:
    """Vectorised scoring of a walk/idle state trace (no event log).

    Produces the same score, completion time, and censoring flag as ticking
    :class:`WalkingSimulation` through the trace; used for Monte-Carlo
    ensembles where the per-tick log is not needed.
    """
    walk = np.asarray(walk, dtype=bool)[: spec.limit_ticks]
    positions = np.minimum(
        np.cumsum(np.where(walk, spec.step_m, 0.0)), spec.course_length_m
    )
    crossed = np.flatnonzero(positions >= spec.course_length_m - _EPS)
    if crossed.size:
        end = int(crossed[0]) + 1
        censored = False
        completion = end * spec.tick_s
    else:
        end = walk.size
        censored = True
        completion = spec.time_limit_s
    walk = walk[:end]
    positions = positions[:end]
    zones = zones_at(positions, spec)

    zone_best = np.zeros(spec.n_zones)
    idle = ~walk
    if idle.any():
        flips = np.flatnonzero(np.diff(idle.astype(np.int8))) + 1
        bounds = np.concatenate(([0], flips, [idle.size]))
        for a, b in zip(bounds[:-1], bounds[1:]):
            if idle[a] and zones[a] >= 0:
                duration = (b - a) * spec.tick_s
                z = zones[a]
                if duration > zone_best[z]:
                    zone_best[z] = duration
    points = np.array([score_dwell(d, True, spec) for d in zone_best])
    return SessionResult(
        stops=float(points.sum()),
        completion_time_s=float(completion),
        censored=censored,
        zone_points=points,
    )


# ---------------------------------------------------------------------------
# session log: line-oriented per-tick records, summary footer
# ---------------------------------------------------------------------------

_STATE_NAMES = {IDLE: "idle", WALK: "walk"}


def write_session_log(path, result: SessionResult) -> None:
    """Write `tick,clock_s,p_bar,state,position_m,zone_id,event` rows plus footer."""
    if result.events is None:
        raise CourseError("session was run without event logging")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tick", "clock_s", "p_bar", "state", "position_m", "zone_id", "event"])
        for ev in result.events:
            writer.writerow(
                [
                    ev.tick,
                    f"{ev.clock_s:.1f}",
                    f"{ev.p_bar:.6f}",
                    _STATE_NAMES[ev.state],
                    f"{ev.position_m:.4f}",
                    ev.zone_id,
                    ev.event,
                ]
            )
        fh.write(f"# stops = {result.stops}\n")
        fh.write(f"# completion_time_s = {result.completion_time_s}\n")
        fh.write(f"# censored = {int(result.censored)}\n")
