"""Spectral feature extraction: 2-Hz power bins, trial segmentation, online windows.

Power spectra use a plain rectangular-window periodogram.  One-sided
magnitude-squared coefficients are normalised so that their total equals
the mean square of the signal, which makes the sum of the 20 bins bounded
by the signal power (Parseval).  A coefficient at frequency ``f`` belongs
to the bin centred at odd integer ``c`` when ``c - 1 < f <= c + 1``; the
upper-closed convention keeps a tone near a bin edge inside the lower bin
so that short 0.75-s windows still localise it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .recording import IDLE, WALK, Recording

BIN_CENTERS = np.arange(1, 40, 2)


class SpectralError(ValueError):
    """Invalid spectral input (empty window, bad band, shape mismatch)."""


@dataclass(frozen=True)
class FrequencyBand:
    """Inclusive range of 2-Hz bin centres, both bounds odd integers in 1..39."""

    f_low: int
    f_high: int

    def __post_init__(self):
        if not (1 <= self.f_low <= self.f_high <= 39):
            raise SpectralError(f"band {self.f_low}-{self.f_high} out of 1..39")
        if self.f_low % 2 == 0 or self.f_high % 2 == 0:
            raise SpectralError("band bounds must be odd bin centres")

    @classmethod
    def from_edges(cls, low_hz: float, high_hz: float) -> "FrequencyBand":
        """Band whose bins lie fully inside the edge interval [low_hz, high_hz].

        Edge-style bounds (e.g. 6-20 Hz) map to the centres 7..19.
        """
        f_low = int(np.ceil(low_hz + 1))
        f_high = int(np.floor(high_hz - 1))
        f_low += 1 - f_low % 2
        f_high -= 1 - f_high % 2
        if f_low > f_high:
            raise SpectralError(f"edge band {low_hz}-{high_hz} contains no full bin")
        return cls(max(f_low, 1), min(f_high, 39))

    def mask(self, centers: np.ndarray) -> np.ndarray:
        return (centers >= self.f_low) & (centers <= self.f_high)

    def __str__(self) -> str:
        return f"{self.f_low}-{self.f_high} Hz"


FULL_BAND = FrequencyBand(1, 39)


@dataclass(frozen=True)
class SpectralTrial:
    """One trial's spectral power matrix (bins x channels) with optional label."""

    powers: np.ndarray
    bin_centers: np.ndarray
    label: int | None = None

    def __post_init__(self):
        powers = np.asarray(self.powers, dtype=np.float64)
        centers = np.asarray(self.bin_centers, dtype=np.int64)
        if powers.ndim != 2 or powers.shape[0] != centers.shape[0]:
            raise SpectralError("powers must be (n_bins x n_channels)")
        if powers.size and powers.min() < 0:
            raise SpectralError("spectral powers must be nonnegative")
        object.__setattr__(self, "powers", powers)
        object.__setattr__(self, "bin_centers", centers)

    @property
    def n_bins(self) -> int:
        return self.powers.shape[0]

    @property
    def n_channels(self) -> int:
        return self.powers.shape[1]

    def vector(self) -> np.ndarray:
        """Row-major flattening (bin 0 over all channels, bin 1, ...)."""
        return self.powers.reshape(-1)


def one_sided_power(window: np.ndarray, sample_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Frequencies and one-sided power of a rectangular-window periodogram.

    Normalised so that ``power.sum(axis=-1)`` equals the mean square of the
    signal (discrete Parseval identity).
    """
    window = np.atleast_2d(np.asarray(window, dtype=np.float64))
    n = window.shape[-1]
    if n == 0:
        raise SpectralError("empty window")
    spectrum = np.abs(np.fft.rfft(window, axis=-1)) ** 2 / n**2
    if n % 2 == 0:
        spectrum[..., 1:-1] *= 2.0
    else:
        spectrum[..., 1:] *= 2.0
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    return freqs, spectrum


def psd_bins(window: np.ndarray, sample_rate: float, label: int | None = None) -> SpectralTrial:
    """Integrate a window's periodogram into 2-Hz bins centred at 1, 3, ..., 39 Hz.

    Parameters
    ----------
    window : ndarray, shape (n_channels, n_samples)
        Channel-major signal segment of at least 0.5 s.
    sample_rate : float
        Sampling rate in Hz.
    label : int, optional
        Class tag attached to the resulting trial.
    """
    window = np.atleast_2d(np.asarray(window, dtype=np.float64))
    if window.shape[-1] == 0:
        raise SpectralError("empty window")
    if window.shape[-1] < 0.5 * sample_rate:
        raise SpectralError("window shorter than 0.5 s")
    freqs, spectrum = one_sided_power(window, sample_rate)
    powers = np.empty((len(BIN_CENTERS), window.shape[0]))
    for i, c in enumerate(BIN_CENTERS):
        mask = (freqs > c - 1) & (freqs <= c + 1)
        powers[i] = spectrum[:, mask].sum(axis=1)
    return SpectralTrial(powers, BIN_CENTERS.copy(), label)


def restrict_band(trial: SpectralTrial, band: FrequencyBand) -> SpectralTrial:
    """Keep only the bins whose centre lies inside ``band``, order preserved."""
    mask = band.mask(trial.bin_centers)
    if not mask.any():
        raise SpectralError(f"band {band} leaves no bins")
    return replace(trial, powers=trial.powers[mask], bin_centers=trial.bin_centers[mask])


def label_epochs(labels: np.ndarray) -> list[tuple[int, int, int]]:
    """Maximal runs of constant idle/walk label as (start, end, label) sample spans."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return []
    boundaries = np.flatnonzero(np.diff(labels)) + 1
    edges = np.concatenate(([0], boundaries, [labels.size]))
    return [
        (int(a), int(b), int(labels[a]))
        for a, b in zip(edges[:-1], edges[1:])
        if labels[a] in (IDLE, WALK)
    ]


def training_windows(
    labels: np.ndarray,
    sample_rate: float,
    discard_s: float = 8.0,
    trial_s: float = 4.0,
) -> list[tuple[int, int, int]]:
    """Sample spans (start, end, label) of the training trials.

    Each labelled epoch loses its first ``discard_s`` seconds
    (cue-reaction uncertainty) and the remainder is carved into
    ``floor((duration - discard_s) / trial_s)`` non-overlapping windows;
    the leftover at the epoch's end is discarded.  Epochs too short to
    hold one window are skipped with a warning.
    """
    discard_n = int(round(discard_s * sample_rate))
    trial_n = int(round(trial_s * sample_rate))
    windows: list[tuple[int, int, int]] = []
    for start, end, label in label_epochs(labels):
        n_windows = int((end - start - discard_n) // trial_n)
        if n_windows < 1:
            warnings.warn(
                f"epoch of {(end - start) / sample_rate:.1f} s at sample {start} "
                "too short; skipped"
            )
            continue
        for k in range(n_windows):
            a = start + discard_n + k * trial_n
            windows.append((a, a + trial_n, label))
    return windows


def segment_training_trials(
    rec: Recording,
    discard_s: float = 8.0,
    trial_s: float = 4.0,
) -> list[SpectralTrial]:
    """Cut labelled epochs into fixed non-overlapping spectral trials.

    Epoch boundaries come from the label stream.  A 30-s epoch yields
    floor((30 - 8) / 4) = 5 trials, so a 10-min alternating recording
    yields exactly 100.  See :func:`training_windows` for the carving rule.
    """
    return [
        psd_bins(rec.samples[:, a:b], rec.sample_rate, label)
        for a, b, label in training_windows(rec.labels, rec.sample_rate, discard_s, trial_s)
    ]


def sliding_window_ends(
    n_samples: int,
    sample_rate: float,
    block_s: float = 0.5,
    window_s: float = 0.75,
) -> np.ndarray:
    """End sample index of each online analysis tick (first at t = window_s)."""
    ends = []
    k = 0
    while True:
        end = int(round((window_s + k * block_s) * sample_rate))
        if end > n_samples:
            break
        ends.append(end)
        k += 1
    return np.array(ends, dtype=np.int64)


def sliding_online_window(
    rec: Recording,
    block_s: float = 0.5,
    window_s: float = 0.75,
) -> list[SpectralTrial]:
    """Spectral trials over the most recent ``window_s`` at every ``block_s`` tick.

    The first emission happens once a full window of data exists, i.e. at
    t = ``window_s``; a 10-s stream at the defaults yields 19 trials.
    """
    fs = rec.sample_rate
    window_n = int(round(window_s * fs))
    ends = sliding_window_ends(rec.n_samples, fs, block_s, window_s)
    return [psd_bins(rec.samples[:, end - window_n : end], fs) for end in ends]


def stack_trials(trials: list[SpectralTrial]) -> tuple[np.ndarray, np.ndarray]:
    """Vectorise labelled trials into a feature matrix and label vector."""
    if not trials:
        raise SpectralError("no trials")
    shape = trials[0].powers.shape
    centers = trials[0].bin_centers
    for t in trials:
        if t.powers.shape != shape or not np.array_equal(t.bin_centers, centers):
            raise SpectralError("trials have inconsistent shapes or bins")
        if t.label is None:
            raise SpectralError("all trials must be labelled")
    X = np.stack([t.vector() for t in trials])
    y = np.array([t.label for t in trials], dtype=np.int64)
    return X, y
