"""Synthetic EEG-like recordings and scripted control traces.

The generator produces 1/f-noise channels carrying a narrow-band rhythm
whose amplitude attenuates on selected channels during walk-labelled
epochs (event-related desynchronisation).  With attenuation depth 0 the
classes are statistically identical; the class contrast otherwise has a
closed form: the walk/idle rhythm band-power ratio is (1 - depth)^2.

Scripted agents provide deterministic posterior traces for the course
simulator, including a perfect agent that walks leg by leg and stands
exactly two seconds at every stop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .course import CourseSpec, default_course
from .recording import IDLE, WALK, Recording


class SynthError(ValueError):
    """Invalid generator configuration or schedule."""


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters of the synthetic recording generator.

    ``modulated_channels`` indexes the channels whose rhythm attenuates by
    ``erd_depth`` during walk epochs; depth 0 removes all class information
    and depth 1 silences the rhythm completely while walking.
    """

    n_channels: int = 16
    sample_rate: float = 256.0
    modulated_channels: tuple[int, ...] = (0, 1, 2, 3)
    rhythm_low_hz: float = 10.0
    rhythm_high_hz: float = 12.0
    erd_depth: float = 0.0
    noise_exponent: float = 1.0
    noise_scale_uv: float = 10.0
    rhythm_scale_uv: float = 12.0
    amplitude_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.erd_depth <= 1.0:
            raise SynthError("erd_depth must lie in [0, 1]")
        if any(c < 0 or c >= self.n_channels for c in self.modulated_channels):
            raise SynthError("modulated_channels out of range")
        if not 0 < self.rhythm_low_hz <= self.rhythm_high_hz:
            raise SynthError("invalid rhythm band")
        if self.amplitude_jitter < 0:
            raise SynthError("amplitude_jitter must be nonnegative")


def _pink_noise(
    rng: np.random.Generator, n: int, exponent: float, sample_rate: float,
    highpass_hz: float = 0.5,
) -> np.ndarray:
    """Unit-variance 1/f^exponent noise via spectral shaping.

    Components below ``highpass_hz`` are removed, mirroring an acquisition
    high-pass; without it the slow drift dominates long recordings and
    trials stop being exchangeable across epochs.
    """
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    gain = np.zeros_like(freqs)
    shaped = freqs >= highpass_hz
    gain[shaped] = freqs[shaped] ** (-exponent / 2.0)
    spectrum = gain * (
        rng.standard_normal(len(freqs)) + 1j * rng.standard_normal(len(freqs))
    )
    noise = np.fft.irfft(spectrum, n=n)
    sd = noise.std()
    return noise / sd if sd > 0 else noise


def generate_recording(
    cfg: GeneratorConfig,
    duration_s: float = 600.0,
    epoch_s: float = 30.0,
    start_label: int = IDLE,
) -> Recording:
    """Alternating idle/walk recording with class-dependent rhythm attenuation.

    Labels partition the timeline into ``epoch_s`` blocks starting with
    ``start_label``.  Each channel is pink noise plus a sinusoid at a fixed
    per-channel frequency and phase inside the rhythm band; on modulated
    channels the sinusoid amplitude is scaled by (1 - erd_depth) during
    walk epochs, so the class contrast lives purely in rhythm band power.
    A nonzero ``amplitude_jitter`` additionally modulates the rhythm with a
    log-normal envelope redrawn every second (rhythms wax and wane), which
    widens the trial-to-trial feature spread and keeps decoded posteriors
    away from saturation the way real signals do.  Bit-identical for a
    fixed config.
    """
    rng = np.random.default_rng(cfg.seed)
    fs = cfg.sample_rate
    n = int(round(duration_s * fs))
    epoch_n = int(round(epoch_s * fs))
    if n <= 0 or epoch_n <= 0:
        raise SynthError("duration and epoch must be positive")

    labels = np.empty(n, dtype=np.uint8)
    other = WALK if start_label == IDLE else IDLE
    for k, start in enumerate(range(0, n, epoch_n)):
        labels[start : start + epoch_n] = start_label if k % 2 == 0 else other

    t = np.arange(n) / fs
    samples = np.empty((cfg.n_channels, n), dtype=np.float64)
    # frequencies snap to the 0.25-Hz grid (a whole number of cycles per 4-s
    # trial) and each channel keeps one phase for the whole recording, so
    # with zero attenuation every trial sees identical rhythm power and the
    # classes stay statistically indistinguishable
    grid = np.arange(np.ceil(cfg.rhythm_low_hz * 4) / 4 + 0.25, cfg.rhythm_high_hz, 0.25)
    if grid.size == 0:
        grid = np.array([(cfg.rhythm_low_hz + cfg.rhythm_high_hz) / 2.0])
    freqs = rng.choice(grid, size=cfg.n_channels)
    phases = rng.uniform(0, 2 * np.pi, size=cfg.n_channels)
    modulated = set(cfg.modulated_channels)
    for ch in range(cfg.n_channels):
        channel = cfg.noise_scale_uv * _pink_noise(rng, n, cfg.noise_exponent, fs)
        envelope = np.full(n, cfg.rhythm_scale_uv)
        if cfg.amplitude_jitter > 0:
            block = int(round(fs))
            factors = np.exp(cfg.amplitude_jitter * rng.standard_normal(-(-n // block)))
            envelope *= np.repeat(factors, block)[:n]
        if ch in modulated:
            envelope[labels == WALK] *= 1.0 - cfg.erd_depth
        samples[ch] = channel + envelope * np.sin(
            2 * np.pi * freqs[ch] * t + phases[ch]
        )
    names = [f"c{ch + 1:02d}" for ch in range(cfg.n_channels)]
    return Recording(fs, names, samples, labels)


# ---------------------------------------------------------------------------
# scripted agents
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScriptedAgent:
    """Piecewise-constant schedule of target posterior values over time."""

    segments: tuple[tuple[float, float], ...]  # (duration_s, posterior value)

    def __post_init__(self):
        if not self.segments:
            raise SynthError("empty schedule")
        for duration, value in self.segments:
            if duration <= 0:
                raise SynthError("segment durations must be positive")
            if not 0.0 <= value <= 1.0:
                raise SynthError("scheduled posteriors must lie in [0, 1]")

    @classmethod
    def from_intents(cls, intents: list[tuple[float, int]]) -> "ScriptedAgent":
        """Build from (duration_s, IDLE/WALK) pairs; walk maps to posterior 1."""
        return cls(tuple((d, 1.0 if s == WALK else 0.0) for d, s in intents))

    @property
    def duration_s(self) -> float:
        return sum(d for d, _ in self.segments)

    def value_at(self, time_s: float) -> float:
        """Scheduled value at a time point; times beyond the end clamp to it."""
        if time_s < 0:
            raise SynthError("schedule gap: negative time")
        elapsed = 0.0
        for duration, value in self.segments:
            elapsed += duration
            if time_s <= elapsed:
                return value
        return self.segments[-1][1]


def ideal_posterior_trace(
    agent: ScriptedAgent,
    tick_s: float = 0.5,
    lookahead_ticks: int = 0,
) -> np.ndarray:
    """Per-tick posterior trace sampled from the schedule.

    Tick t covers ((t-1), t] * tick_s and reads the schedule at its end.
    ``lookahead_ticks`` shifts the read forward, which pre-compensates the
    controller's smoothing lag (one tick for the default 1.5-s horizon at
    mid thresholds).
    """
    n_ticks = int(round(agent.duration_s / tick_s))
    return np.array(
        [agent.value_at(min((k + lookahead_ticks) * tick_s, agent.duration_s))
         for k in range(1, n_ticks + 1)]
    )


def perfect_course_agent(spec: CourseSpec | None = None) -> ScriptedAgent:
    """Schedule that walks each leg and stands the full dwell at every stop.

    Legs run exactly between consecutive stop centres, followed by the
    run-out to the course end; the session lands at the perfect score and
    the minimum stopping time.
    """
    if spec is None:
        spec = default_course()
    intents: list[tuple[float, int]] = []
    previous = 0.0
    for center in spec.npc_positions_m:
        intents.append(((center - previous) / spec.walk_speed_mps, WALK))
        intents.append((spec.dwell_full_s, IDLE))
        previous = center
    intents.append(((spec.course_length_m - previous) / spec.walk_speed_mps, WALK))
    return ScriptedAgent.from_intents(intents)


def perfect_course_trace(
    spec: CourseSpec | None = None,
    tick_s: float = 0.5,
    smoothing: int = 3,
) -> np.ndarray:
    """Posterior trace for the perfect agent, smoothing lag pre-compensated.

    Run through mid thresholds (0.5, 0.5) and the given smoothing horizon,
    the resulting controller states reproduce the intents tick for tick.
    """
    agent = perfect_course_agent(spec)
    return ideal_posterior_trace(agent, tick_s, lookahead_ticks=smoothing // 2)
