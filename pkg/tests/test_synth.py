import numpy as np
import pytest

from kmiwalk.control import Thresholds, replay_states
from kmiwalk.course import default_course, run_session
from kmiwalk.model_selection import cross_validate
from kmiwalk.recording import IDLE, WALK
from kmiwalk.spectral import BIN_CENTERS, psd_bins, segment_training_trials, stack_trials
from kmiwalk.synth import (
    GeneratorConfig,
    ScriptedAgent,
    SynthError,
    generate_recording,
    ideal_posterior_trace,
    perfect_course_agent,
    perfect_course_trace,
)


class TestGenerator:
    def test_deterministic(self):
        cfg = GeneratorConfig(erd_depth=0.5, seed=8)
        a = generate_recording(cfg, duration_s=60)
        b = generate_recording(cfg, duration_s=60)
        assert a == b

    def test_labels_partition_into_epochs(self):
        rec = generate_recording(GeneratorConfig(seed=1), duration_s=600)
        labels = rec.labels.reshape(20, -1)
        for k, block in enumerate(labels):
            expected = IDLE if k % 2 == 0 else WALK
            assert (block == expected).all()

    def test_band_power_ratio_matches_depth(self):
        cfg = GeneratorConfig(erd_depth=0.8, seed=2)
        rec = generate_recording(cfg, duration_s=600)
        trials = segment_training_trials(rec)
        bin11 = BIN_CENTERS == 11
        modulated = list(cfg.modulated_channels)
        idle_power = np.mean(
            [t.powers[bin11][:, modulated].mean() for t in trials if t.label == IDLE]
        )
        walk_power = np.mean(
            [t.powers[bin11][:, modulated].mean() for t in trials if t.label == WALK]
        )
        # rhythm dominates the bin, so the ratio tracks (1 - depth)^2 with a
        # small noise-floor offset
        expected = (1.0 - cfg.erd_depth) ** 2
        assert abs(walk_power / idle_power - expected) <= 0.1

    def test_erd_zero_is_chance(self, null_recording):
        from kmiwalk.recording import common_average_reference

        referenced = common_average_reference(null_recording)
        X, y = stack_trials(segment_training_trials(referenced))
        report = cross_validate(X, y, runs=10, seed=0)
        assert 0.45 <= report.mean_accuracy <= 0.55
        assert report.p_value > 0.01

    def test_accuracy_monotone_in_depth(self):
        accuracies = []
        for depth in (0.0, 0.2, 0.4, 0.8):
            rec = generate_recording(
                GeneratorConfig(erd_depth=depth, seed=21), duration_s=600
            )
            X, y = stack_trials(segment_training_trials(rec))
            report = cross_validate(X, y, runs=2, seed=0)
            accuracies.append((report.mean_accuracy, report.std_accuracy))
        slack = max(s for _, s in accuracies)
        for (a1, _), (a2, _) in zip(accuracies, accuracies[1:]):
            assert a2 >= a1 - slack

    def test_config_validation(self):
        with pytest.raises(SynthError):
            GeneratorConfig(erd_depth=1.5)
        with pytest.raises(SynthError):
            GeneratorConfig(modulated_channels=(99,))
        with pytest.raises(SynthError):
            GeneratorConfig(rhythm_low_hz=12.0, rhythm_high_hz=10.0)


class TestScriptedAgents:
    def test_schedule_validation(self):
        with pytest.raises(SynthError):
            ScriptedAgent(())
        with pytest.raises(SynthError):
            ScriptedAgent(((1.0, 1.5),))
        with pytest.raises(SynthError):
            ScriptedAgent(((-1.0, 0.5),))

    def test_value_lookup(self):
        agent = ScriptedAgent(((2.0, 0.0), (3.0, 1.0)))
        assert agent.value_at(1.0) == 0.0
        assert agent.value_at(2.5) == 1.0
        assert agent.value_at(99.0) == 1.0
        with pytest.raises(SynthError):
            agent.value_at(-1.0)

    def test_trace_length(self):
        agent = ScriptedAgent(((2.0, 0.0), (3.0, 1.0)))
        assert len(ideal_posterior_trace(agent, 0.5)) == 10

    def test_perfect_agent_schedule_duration(self):
        agent = perfect_course_agent()
        assert agent.duration_s == pytest.approx(211.0)

    def test_compensated_trace_reproduces_intents(self):
        spec = default_course()
        trace = perfect_course_trace(spec)
        states = replay_states(trace, Thresholds(0.5, 0.5), 3)
        agent = perfect_course_agent(spec)
        intents = np.array(
            [WALK if agent.value_at(k * 0.5) > 0.5 else IDLE
             for k in range(1, len(trace) + 1)]
        )
        assert np.array_equal(states, intents)

    def test_always_walk_agent(self):
        agent = ScriptedAgent(((400.0, 1.0),))
        result = run_session(Thresholds(0.5, 0.5), ideal_posterior_trace(agent))
        assert result.stops == 0.0
        assert abs(result.completion_time_s - 191.0) <= 1.0

    def test_always_idle_agent(self):
        agent = ScriptedAgent(((1300.0, 0.0),))
        result = run_session(Thresholds(0.5, 0.5), ideal_posterior_trace(agent))
        assert result.censored
        assert result.stops == 0.0
