"""Multichannel labelled recordings: in-memory type, preprocessing, and file IO.

A recording holds channel-major float32 signals in microvolts plus one
class label per sample (unlabelled / idle / walk).  The binary container
(magic ``KMW1``) and the CSV import path load to the same structure.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace

import numpy as np

MAGIC = b"KMW1"

UNLABELED = 0
IDLE = 1
WALK = 2

LABEL_NAMES = {UNLABELED: "unlabeled", IDLE: "idle", WALK: "walk"}


class RecordingError(ValueError):
    """Invalid recording content or an unreadable recording file."""


@dataclass(frozen=True)
class Recording:
    """Timestamped multichannel signal with per-sample class labels.

    Attributes
    ----------
    sample_rate : float
        Sampling rate in Hz (default acquisition rate is 256 Hz).
    channels : list of str
        Ordered channel identifiers.
    samples : ndarray, shape (n_channels, n_samples), float64
        Signal in microvolts, channel-major.  The binary container stores
        float32; loading quantises accordingly.
    labels : ndarray, shape (n_samples,), uint8
        Per-sample class tag: 0 unlabelled, 1 idle, 2 walk.
    """

    sample_rate: float
    channels: list[str]
    samples: np.ndarray
    labels: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2:
            raise RecordingError("samples must be a 2-D (channels x samples) array")
        object.__setattr__(self, "samples", samples)
        if self.labels is None:
            object.__setattr__(
                self, "labels", np.zeros(samples.shape[1], dtype=np.uint8)
            )
        else:
            object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.uint8))
        if self.sample_rate <= 0:
            raise RecordingError("sample_rate must be positive")
        if len(self.channels) != samples.shape[0]:
            raise RecordingError(
                f"{len(self.channels)} channel names for {samples.shape[0]} rows"
            )
        if self.labels.shape != (samples.shape[1],):
            raise RecordingError("labels length must equal the number of samples")
        if self.labels.size and self.labels.max() > WALK:
            raise RecordingError("labels must be in {0, 1, 2}")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate

    def select_channels(self, names: list[str]) -> "Recording":
        """Return a copy restricted to ``names``, in the given order."""
        index = {c: i for i, c in enumerate(self.channels)}
        missing = [c for c in names if c not in index]
        if missing:
            raise RecordingError(f"channels not present: {missing}")
        rows = [index[c] for c in names]
        return replace(self, channels=list(names), samples=self.samples[rows])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Recording):
            return NotImplemented
        return (
            self.sample_rate == other.sample_rate
            and self.channels == other.channels
            and np.array_equal(self.samples, other.samples)
            and np.array_equal(self.labels, other.labels)
        )


def common_average_reference(rec: Recording) -> Recording:
    """Subtract the instantaneous mean across channels from every channel.

    After re-referencing the per-sample mean over the returned channels is
    zero (to numeric tolerance).  Labels are unchanged.  Requires at least
    two channels.
    """
    if rec.n_channels < 2:
        raise RecordingError("common average reference needs at least 2 channels")
    mean = rec.samples.mean(axis=0, keepdims=True)
    return replace(rec, samples=rec.samples - mean)


def _log_high_band_power(samples: np.ndarray, sample_rate: float) -> np.ndarray:
    """Per-channel log power in the 30-40 Hz EMG-prone band."""
    n = samples.shape[1]
    spectrum = np.abs(np.fft.rfft(samples.astype(np.float64), axis=1)) ** 2
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    mask = (freqs >= 30.0) & (freqs < 40.0)
    if not mask.any():
        raise RecordingError("recording too short to estimate 30-40 Hz power")
    power = spectrum[:, mask].sum(axis=1) / n**2
    return np.log(np.maximum(power, np.finfo(float).tiny))


def reject_artifact_channels(
    rec: Recording,
    z_threshold: float = 4.0,
    max_iters: int | None = None,
) -> tuple[Recording, list[str]]:
    """Iteratively drop channels with outlying 30-40 Hz log band power.

    At each pass the robust z-score (median / scaled MAD) of the
    per-channel log band power is computed over the currently retained
    set; the single worst channel above ``z_threshold`` is removed and
    the statistics are recomputed.  Stops when no channel exceeds the
    threshold, when ``max_iters`` removals have been made, or when fewer
    than two channels would remain.

    Returns the retained recording and the excluded channel names.
    """
    if z_threshold <= 0:
        raise RecordingError("z_threshold must be positive")
    if max_iters is None:
        max_iters = rec.n_channels
    retained = rec
    excluded: list[str] = []
    for _ in range(max_iters):
        if retained.n_channels < 2:
            break
        log_power = _log_high_band_power(retained.samples, retained.sample_rate)
        med = np.median(log_power)
        mad = np.median(np.abs(log_power - med))
        if mad == 0:
            break
        z = (log_power - med) / (1.4826 * mad)
        worst = int(np.argmax(z))
        if z[worst] <= z_threshold:
            break
        excluded.append(retained.channels[worst])
        keep = [c for c in retained.channels if c != retained.channels[worst]]
        retained = retained.select_channels(keep)
    if retained.n_channels < 2:
        raise RecordingError("no channels survive rejection")
    return retained, excluded


# ---------------------------------------------------------------------------
# binary container (magic "KMW1", little-endian)
#
#   magic           4 bytes
#   sample_rate     f64
#   n_channels      u32
#   n_samples       u64
#   channel table   per channel: u16 name length + UTF-8 bytes
#   samples         channel-major f32
#   labels          u8 per sample
# ---------------------------------------------------------------------------


def save_recording(path, rec: Recording) -> None:
    """Write ``rec`` to the binary container format."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<dIQ", rec.sample_rate, rec.n_channels, rec.n_samples))
        for name in rec.channels:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
        fh.write(np.ascontiguousarray(rec.samples, dtype="<f4").tobytes())
        fh.write(rec.labels.astype(np.uint8).tobytes())


def load_recording(path) -> Recording:
    """Read a recording from the binary container format."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise RecordingError(f"{path}: not a recording file (bad magic)")
    try:
        sample_rate, n_channels, n_samples = struct.unpack_from("<dIQ", data, 4)
        offset = 4 + struct.calcsize("<dIQ")
        channels = []
        for _ in range(n_channels):
            (length,) = struct.unpack_from("<H", data, offset)
            offset += 2
            channels.append(data[offset : offset + length].decode("utf-8"))
            offset += length
        n_values = n_channels * n_samples
        end_samples = offset + 4 * n_values
        end_labels = end_samples + n_samples
        if len(data) < end_labels:
            raise RecordingError(f"{path}: truncated recording file")
        samples = np.frombuffer(data[offset:end_samples], dtype="<f4").reshape(
            n_channels, n_samples
        ).astype(np.float64)
        labels = np.frombuffer(data[end_samples:end_labels], dtype=np.uint8)
    except (struct.error, UnicodeDecodeError) as exc:
        raise RecordingError(f"{path}: corrupt recording file ({exc})") from exc
    return Recording(sample_rate, channels, samples.copy(), labels.copy())


def import_csv(path, sample_rate: float = 256.0) -> Recording:
    """Load a CSV with one column per channel plus a trailing ``label`` column.

    The header row names the channels; each subsequent row is one sample.
    Labels use the integer codes 0 (unlabelled), 1 (idle), 2 (walk).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise RecordingError(f"{path}: empty CSV") from None
        if not header or header[-1].strip().lower() != "label":
            raise RecordingError(f"{path}: last CSV column must be 'label'")
        channels = [name.strip() for name in header[:-1]]
        if not channels:
            raise RecordingError(f"{path}: no channel columns")
        values, labels = [], []
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise RecordingError(f"{path}:{row_num}: wrong column count")
            values.append([float(v) for v in row[:-1]])
            labels.append(int(row[-1]))
    if not values:
        raise RecordingError(f"{path}: no samples")
    samples = np.asarray(values, dtype=np.float64).T
    return Recording(sample_rate, channels, samples, np.asarray(labels, dtype=np.uint8))


def export_csv(path, rec: Recording) -> None:
    """Write the CSV form of ``rec``; values keep full round-trip precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(rec.channels + ["label"])
        for i in range(rec.n_samples):
            row = [np.format_float_positional(v, unique=True) for v in rec.samples[:, i]]
            writer.writerow(row + [int(rec.labels[i])])
