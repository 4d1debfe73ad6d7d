import numpy as np
import pytest

from kmiwalk.control import Thresholds, replay_states
from kmiwalk.course import (
    CourseError,
    CourseSpec,
    WalkingSimulation,
    default_course,
    run_session,
    score_dwell,
    score_walk_trace,
    write_session_log,
    zones_at,
)
from kmiwalk.recording import IDLE, WALK
from kmiwalk.synth import perfect_course_trace

MID = Thresholds(0.5, 0.5)


class TestDefaultCourse:
    def test_geometry(self):
        spec = default_course()
        assert spec.walk_speed_mps == pytest.approx(210.0 / 191.0)
        positions = np.asarray(spec.npc_positions_m)
        assert len(positions) == 10
        assert positions[0] == pytest.approx(18.0 * 210.0 / 191.0)
        assert np.allclose(np.diff(positions), 18.0 * 210.0 / 191.0)
        # run-out after the last stop
        assert spec.course_length_m - positions[-1] == pytest.approx(12.094, abs=0.01)

    def test_invalid_geometry(self):
        with pytest.raises(CourseError):
            CourseSpec(npc_positions_m=())
        with pytest.raises(CourseError):
            CourseSpec(npc_positions_m=(5.0, 3.0))
        with pytest.raises(CourseError):
            CourseSpec(npc_positions_m=(5.0, 500.0))


class TestScoreDwell:
    def test_full_point(self):
        assert score_dwell(2.0) == 1.0

    def test_linear_fraction(self):
        assert score_dwell(1.0) == 0.5

    def test_below_floor(self):
        assert score_dwell(0.4) == 0.0

    def test_no_bonus_beyond_full(self):
        assert score_dwell(7.5) == 1.0

    def test_outside_zone(self):
        assert score_dwell(3.0, in_zone=False) == 0.0

    def test_monotone(self):
        values = [score_dwell(d) for d in np.linspace(0, 3, 31)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_negative_error(self):
        with pytest.raises(CourseError):
            score_dwell(-0.1)


class TestTick:
    def test_walk_tick_moves_one_step(self):
        sim = WalkingSimulation(default_course())
        sim.tick(WALK)
        assert sim.position == pytest.approx(210.0 / 191.0 * 0.5)
        assert sim.clock == 0.5

    def test_idle_tick_holds_position(self):
        sim = WalkingSimulation(default_course())
        sim.tick(IDLE)
        assert sim.position == 0.0
        assert sim.clock == 0.5

    def test_tick_after_finish_raises(self):
        spec = default_course()
        sim = WalkingSimulation(spec)
        for _ in range(382):
            sim.tick(WALK)
        assert sim.finished
        assert sim.completion_time == pytest.approx(191.0)
        with pytest.raises(CourseError):
            sim.tick(WALK)

    def test_invalid_state(self):
        sim = WalkingSimulation(default_course())
        with pytest.raises(CourseError):
            sim.tick(7)


class TestPerfectRun:
    def test_score_and_time(self):
        result = run_session(MID, perfect_course_trace())
        assert result.stops == pytest.approx(10.0)
        assert abs(result.completion_time_s - 211.0) <= 1.0
        assert not result.censored
        assert result.false_start_s == 0.0
        assert result.false_stop_s == 0.0

    def test_pass_through_scores_zero(self):
        result = run_session(MID, np.ones(3000))
        assert result.stops == 0.0
        assert abs(result.completion_time_s - 191.0) <= 1.0

    def test_never_walks_censored(self):
        result = run_session(Thresholds(0.0, 1.0), np.full(3000, 0.5))
        assert result.censored
        assert result.completion_time_s == 1200.0
        assert result.stops == 0.0


class TestSessionProperties:
    def random_results(self, n=30, seed=0, log=True):
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(n):
            thr = Thresholds(0.2 + 0.2 * rng.uniform(), 0.5 + 0.3 * rng.uniform())
            trace = rng.uniform(size=2400)
            out.append((thr, trace, run_session(thr, trace, log_events=log)))
        return out

    def test_score_bounds_and_time_floor(self):
        for _, _, result in self.random_results(seed=1):
            assert 0.0 <= result.stops <= 10.0
            if not result.censored:
                assert result.completion_time_s >= 191.0 - 0.5

    def test_timeline_partition(self):
        for _, _, result in self.random_results(seed=2):
            total = result.false_start_s + result.false_stop_s + result.productive_s
            assert total == pytest.approx(result.completion_time_s)

    def test_kinematic_conservation(self):
        spec = default_course()
        for _, _, result in self.random_results(seed=3):
            walk_ticks = sum(1 for ev in result.events if ev.state == WALK)
            final = result.events[-1].position_m
            assert min(walk_ticks * spec.step_m, spec.course_length_m) == pytest.approx(final)

    def test_deterministic_replay(self):
        rng = np.random.default_rng(4)
        trace = rng.uniform(size=2400)
        a = run_session(Thresholds(0.3, 0.7), trace)
        b = run_session(Thresholds(0.3, 0.7), trace)
        assert a.stops == b.stops and a.completion_time_s == b.completion_time_s
        assert [e.event for e in a.events] == [e.event for e in b.events]

    def test_exhausted_trace_censors_with_partial_score(self):
        result = run_session(MID, perfect_course_trace()[:100])
        assert result.censored
        assert result.completion_time_s == 1200.0
        assert 0.0 < result.stops < 10.0

    def test_vectorised_matches_sequential(self):
        spec = default_course()
        for thr, trace, sequential in self.random_results(n=40, seed=5):
            states = replay_states(trace, thr, 3)
            fast = score_walk_trace(states == WALK, spec)
            assert fast.stops == pytest.approx(sequential.stops)
            assert fast.completion_time_s == pytest.approx(sequential.completion_time_s)
            assert fast.censored == sequential.censored
            assert np.allclose(fast.zone_points, sequential.zone_points)


class TestZones:
    def test_membership(self):
        spec = default_course()
        center = spec.npc_positions_m[2]
        inside = zones_at(np.array([center, center - 3.4, center + 3.4]), spec)
        assert (inside == 2).all()
        outside = zones_at(np.array([center - 3.6, center + 3.6, 0.0]), spec)
        assert (outside == -1).all()

    def test_zone_crossing_takes_several_seconds(self):
        spec = default_course()
        assert 2 * spec.zone_radius_m / spec.walk_speed_mps == pytest.approx(6.37, abs=0.01)


class TestEventLog:
    def test_perfect_run_scores_every_zone(self):
        result = run_session(MID, perfect_course_trace())
        tags = [e.event for e in result.events]
        assert tags.count("stop_scored") == 10
        assert tags.count("enter") == 10
        assert tags.count("exit") >= 9
        assert tags[-1] == "finish"

    def test_interrupted_dwell_is_false_start(self):
        spec = default_course()
        leg_ticks = 36
        # walk to stop 1, idle 1 s, twitch forward, idle again, walk out
        states = (
            [WALK] * leg_ticks + [IDLE] * 2 + [WALK] + [IDLE] * 4 + [WALK] * 500
        )
        trace = np.array([1.0 if s == WALK else 0.0 for s in states])
        result = run_session(Thresholds(0.5, 0.5), trace, spec, smoothing=1)
        tags = [e.event for e in result.events]
        assert "false_start" in tags
        assert result.false_start_s > 0

    def test_write_log(self, tmp_path):
        result = run_session(MID, perfect_course_trace())
        path = tmp_path / "session.csv"
        write_session_log(path, result)
        lines = path.read_text().splitlines()
        assert lines[0] == "tick,clock_s,p_bar,state,position_m,zone_id,event"
        assert any(line.startswith("# stops = 10.0") for line in lines)

    def test_write_log_requires_events(self, tmp_path):
        result = score_walk_trace(np.ones(400, dtype=bool), default_course())
        with pytest.raises(CourseError):
            write_session_log(tmp_path / "x.csv", result)
