"""End-to-end decoding model: offline training, online posteriors, model files.

The trained artefact bundles everything needed for online operation: the
retained channel list, the optimal frequency band, the fitted decoder and
its cross-validation report.  Model files (magic ``KMM1``) store every
numeric field as little-endian f64 and round-trip bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .decoding import ClasswisePca, KmiDecoder
from .model_selection import CvReport, cross_validate, optimize_band
from .recording import Recording, common_average_reference, reject_artifact_channels
from .spectral import (
    FrequencyBand,
    SpectralTrial,
    restrict_band,
    segment_training_trials,
    sliding_online_window,
    stack_trials,
)

MODEL_MAGIC = b"KMM1"
MODEL_VERSION = 1


class ModelIOError(ValueError):
    """Unreadable, truncated, or wrong-version model file."""


@dataclass
class DecodingModel:
    """A trained subject-specific decoding model plus its provenance."""

    channels: list[str]
    band: FrequencyBand
    decoder: KmiDecoder
    cv: CvReport
    excluded_channels: list[str]

    def posterior_trial(self, trial: SpectralTrial) -> float:
        """P(walk) for one spectral trial over the model's channels."""
        if trial.n_channels != len(self.channels):
            raise ModelIOError(
                f"trial has {trial.n_channels} channels, model expects {len(self.channels)}"
            )
        restricted = restrict_band(trial, self.band)
        return float(self.decoder.posterior_walk(restricted.vector()[None, :])[0])

    def summary_row(self) -> str:
        """Offline-performance table row: accuracy, p-value, channels, band."""
        return (
            f"{self.cv.mean_accuracy * 100:5.1f} +/- {self.cv.std_accuracy * 100:.1f}%  "
            f"p = {self.cv.p_value:.3g}  RC = {len(self.channels)}  band = {self.band}"
        )


def train_from_recording(
    rec: Recording,
    variance_keep: float = 0.99,
    method: str = "lda",
    runs: int = 10,
    folds: int = 10,
    seed: int = 0,
    z_threshold: float = 4.0,
    optimize: bool = True,
) -> DecodingModel:
    """Full offline pipeline: rejection, re-referencing, segmentation, band search.

    With ``optimize=False`` the full 1-39 Hz band is kept and only
    cross-validated.
    """
    retained, excluded = reject_artifact_channels(rec, z_threshold=z_threshold)
    referenced = common_average_reference(retained)
    trials = segment_training_trials(referenced)
    params = dict(variance_keep=variance_keep, method=method)
    if optimize:
        band, report, decoder = optimize_band(
            trials, runs=runs, folds=folds, seed=seed, **params
        )
    else:
        X, y = stack_trials(trials)
        band = FrequencyBand(int(trials[0].bin_centers.min()), int(trials[0].bin_centers.max()))
        report = cross_validate(X, y, runs=runs, folds=folds, seed=seed, **params)
        decoder = KmiDecoder(**params).fit(X, y)
    return DecodingModel(retained.channels, band, decoder, report, excluded)


def online_posteriors(
    model: DecodingModel,
    rec: Recording,
    block_s: float = 0.5,
    window_s: float = 0.75,
) -> np.ndarray:
    """Per-tick walking posteriors for a stream, one value per 0.5-s block.

    Applies the online analysis chain: select the model's channels,
    re-reference, window the most recent 0.75 s at every tick, bin the
    spectrum, and evaluate the decoder over the optimal band.
    """
    selected = rec.select_channels(model.channels)
    referenced = common_average_reference(selected)
    windows = sliding_online_window(referenced, block_s=block_s, window_s=window_s)
    if not windows:
        return np.empty(0)
    X = np.stack([restrict_band(w, model.band).vector() for w in windows])
    return model.decoder.posterior_walk(X)


# ---------------------------------------------------------------------------
# model file (magic "KMM1", version 1, little-endian, all floats f64)
# ---------------------------------------------------------------------------


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def pack(self, fmt: str, *values) -> None:
        self.parts.append(struct.pack("<" + fmt, *values))

    def text(self, value: str) -> None:
        encoded = value.encode("utf-8")
        self.pack("H", len(encoded))
        self.parts.append(encoded)

    def array(self, values: np.ndarray) -> None:
        arr = np.ascontiguousarray(values, dtype="<f8")
        self.pack("Q", arr.size)
        self.parts.append(arr.tobytes())

    def bytes(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data: bytes, context: str):
        self.data = data
        self.offset = 0
        self.context = context

    def unpack(self, fmt: str):
        fmt = "<" + fmt
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise ModelIOError(f"{self.context}: truncated model file")
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values if len(values) > 1 else values[0]

    def text(self) -> str:
        length = self.unpack("H")
        if self.offset + length > len(self.data):
            raise ModelIOError(f"{self.context}: truncated model file")
        value = self.data[self.offset : self.offset + length].decode("utf-8")
        self.offset += length
        return value

    def array(self, shape=None) -> np.ndarray:
        size = self.unpack("Q")
        nbytes = 8 * size
        if self.offset + nbytes > len(self.data):
            raise ModelIOError(f"{self.context}: truncated model file")
        arr = np.frombuffer(self.data, dtype="<f8", count=size, offset=self.offset).copy()
        self.offset += nbytes
        return arr.reshape(shape) if shape is not None else arr


def save_model(path, model: DecodingModel) -> None:
    """Serialise a trained model; the round trip is bit-exact."""
    w = _Writer()
    w.parts.append(MODEL_MAGIC)
    w.pack("I", MODEL_VERSION)
    w.pack("I", len(model.channels))
    for name in model.channels:
        w.text(name)
    w.pack("I", len(model.excluded_channels))
    for name in model.excluded_channels:
        w.text(name)
    w.pack("II", model.band.f_low, model.band.f_high)

    dec = model.decoder
    w.pack("d", dec.variance_keep)
    w.text(dec.method)
    w.pack("dd", dec.ridge_scale, dec.var_floor)
    w.pack("qq", int(dec.classes_[0]), int(dec.classes_[1]))
    w.pack("Q", dec.n_features_in_)
    for h in range(2):
        w.pack("Q", dec.cpca_.dims_[h])
        w.array(dec.cpca_.means_[h])
        w.array(dec.cpca_.bases_[h])
        w.array(dec.weights_[h])
    w.array(dec.feature_means_)
    w.array(dec.feature_vars_)
    w.array(dec.priors_)

    cv = model.cv
    w.pack("ddd", cv.mean_accuracy, cv.std_accuracy, cv.p_value)
    w.pack("IIIq", cv.n_trials, cv.runs, cv.folds, cv.seed)
    w.array(cv.run_accuracies)
    w.array(cv.fold_accuracies)
    with open(path, "wb") as fh:
        fh.write(w.bytes())


def load_model(path) -> DecodingModel:
    """Load a model file written by :func:`save_model`."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MODEL_MAGIC:
        raise ModelIOError(f"{path}: not a model file (bad magic)")
    r = _Reader(data, str(path))
    r.offset = 4
    version = r.unpack("I")
    if version != MODEL_VERSION:
        raise ModelIOError(f"{path}: unsupported model version {version}")
    channels = [r.text() for _ in range(r.unpack("I"))]
    excluded = [r.text() for _ in range(r.unpack("I"))]
    band = FrequencyBand(*r.unpack("II"))

    dec = KmiDecoder(
        variance_keep=r.unpack("d"),
        method=r.text(),
        ridge_scale=r.unpack("d"),
        var_floor=r.unpack("d"),
    )
    dec.classes_ = np.array(r.unpack("qq"), dtype=np.int64)
    dec.n_features_in_ = r.unpack("Q")
    cpca = ClasswisePca(dec.variance_keep)
    cpca.classes_ = dec.classes_
    cpca.n_features_in_ = dec.n_features_in_
    cpca.means_, cpca.bases_, cpca.dims_ = [], [], []
    dec.weights_ = []
    for _ in range(2):
        m = r.unpack("Q")
        cpca.dims_.append(int(m))
        cpca.means_.append(r.array())
        cpca.bases_.append(r.array((dec.n_features_in_, m)))
        dec.weights_.append(r.array())
    dec.cpca_ = cpca
    dec.feature_means_ = r.array((2, 2))
    dec.feature_vars_ = r.array((2, 2))
    dec.priors_ = r.array()

    mean_acc, std_acc, p_value = r.unpack("ddd")
    n_trials, runs, folds, seed = r.unpack("IIIq")
    run_acc = r.array()
    fold_acc = r.array((runs, folds))
    cv = CvReport(mean_acc, std_acc, run_acc, fold_acc, p_value, n_trials, runs, folds, seed)
    return DecodingModel(channels, band, dec, cv, excluded)
