"""Cross-validated accuracy estimation and greedy frequency-band optimisation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from sklearn.model_selection import StratifiedKFold

from .decoding import KmiDecoder
from .spectral import FrequencyBand, SpectralTrial, stack_trials


class SelectionError(ValueError):
    """Not enough trials, or inconsistent trial shapes."""


@dataclass(frozen=True)
class CvReport:
    """Accuracy of repeated stratified cross-validation runs.

    ``mean_accuracy`` and ``std_accuracy`` summarise the per-run accuracies
    (one value per full CV run).  ``p_value`` is the exact binomial tail of
    the pooled correct count against 50% chance.
    """

    mean_accuracy: float
    std_accuracy: float
    run_accuracies: np.ndarray
    fold_accuracies: np.ndarray
    p_value: float
    n_trials: int
    runs: int
    folds: int
    seed: int

    def row(self) -> str:
        """One report line in the offline-performance table style."""
        return (
            f"{self.mean_accuracy * 100:.1f} +/- {self.std_accuracy * 100:.1f}%  "
            f"p = {self.p_value:.3g}"
        )


def chance_p_value(mean_accuracy: float, n_trials: int) -> float:
    """Exact binomial tail P(X >= k | n, 0.5) with k the pooled correct count.

    The correct count is the ceiling of ``mean_accuracy * n_trials`` (each
    trial is classified once per run; run accuracies are averaged, so the
    pooled count is generally fractional and is resolved upward).
    """
    k = min(n_trials, math.ceil(round(mean_accuracy * n_trials, 9)))
    return stats.binomtest(k, n_trials, 0.5, alternative="greater").pvalue


def _fold_seed(seed: int, run: int) -> int:
    return int(np.random.SeedSequence((seed, run)).generate_state(1)[0])


def cross_validate(
    X: np.ndarray,
    y: np.ndarray,
    runs: int = 10,
    folds: int = 10,
    seed: int = 0,
    **decoder_params,
) -> CvReport:
    """Repeated stratified k-fold accuracy of the full decoding pipeline.

    The whole pipeline (classwise PCA, discriminant, Gaussian densities) is
    refit inside every fold.  Fold shuffling derives deterministically from
    ``(seed, run)``, so reports are reproducible bit for bit.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) != 2:
        raise SelectionError(f"expected 2 classes, got {list(classes)}")
    if counts.min() < folds:
        raise SelectionError(
            f"need at least {folds} trials per class, got {counts.min()}"
        )
    fold_acc = np.empty((runs, folds))
    run_acc = np.empty(runs)
    for run in range(runs):
        splitter = StratifiedKFold(
            n_splits=folds, shuffle=True, random_state=_fold_seed(seed, run)
        )
        correct = 0
        for j, (train_idx, test_idx) in enumerate(splitter.split(X, y)):
            decoder = KmiDecoder(**decoder_params).fit(X[train_idx], y[train_idx])
            predicted = decoder.predict(X[test_idx])
            hits = int((predicted == y[test_idx]).sum())
            correct += hits
            fold_acc[run, j] = hits / len(test_idx)
        run_acc[run] = correct / len(y)
    mean_acc = float(run_acc.mean())
    return CvReport(
        mean_accuracy=mean_acc,
        std_accuracy=float(run_acc.std(ddof=1)) if runs > 1 else 0.0,
        run_accuracies=run_acc,
        fold_accuracies=fold_acc,
        p_value=chance_p_value(mean_acc, len(y)),
        n_trials=len(y),
        runs=runs,
        folds=folds,
        seed=seed,
    )


def band_columns(bin_centers: np.ndarray, n_channels: int, band: FrequencyBand) -> np.ndarray:
    """Boolean column mask selecting a band from vectorised (bin-major) trials."""
    return np.repeat(band.mask(bin_centers), n_channels)


def optimize_band(
    trials: list[SpectralTrial],
    runs: int = 10,
    folds: int = 10,
    seed: int = 0,
    **decoder_params,
) -> tuple[FrequencyBand, CvReport, KmiDecoder]:
    """Greedy search for the frequency band maximising CV accuracy.

    Starting from the widest available band, the lower bound is raised in
    2-Hz steps while the mean CV accuracy strictly improves, then the upper
    bound is lowered the same way.  All candidates are scored with the same
    CV seed, and the best band seen is returned together with its report
    and a decoder refit on all trials restricted to that band.
    """
    X_full, y = stack_trials(trials)
    centers = trials[0].bin_centers
    n_channels = trials[0].n_channels
    cache: dict[tuple[int, int], CvReport] = {}

    def score(band: FrequencyBand) -> CvReport:
        key = (band.f_low, band.f_high)
        if key not in cache:
            cols = band_columns(centers, n_channels, band)
            cache[key] = cross_validate(
                X_full[:, cols], y, runs=runs, folds=folds, seed=seed, **decoder_params
            )
        return cache[key]

    best_band = FrequencyBand(int(centers.min()), int(centers.max()))
    best = score(best_band)

    low = best_band.f_low
    while low + 2 <= best_band.f_high:
        candidate = FrequencyBand(low + 2, best_band.f_high)
        report = score(candidate)
        if report.mean_accuracy > best.mean_accuracy:
            best_band, best = candidate, report
            low += 2
        else:
            break

    high = best_band.f_high
    while high - 2 >= best_band.f_low:
        candidate = FrequencyBand(best_band.f_low, high - 2)
        report = score(candidate)
        if report.mean_accuracy > best.mean_accuracy:
            best_band, best = candidate, report
            high -= 2
        else:
            break

    cols = band_columns(centers, n_channels, best_band)
    decoder = KmiDecoder(**decoder_params).fit(X_full[:, cols], y)
    return best_band, best, decoder
