"""Random-walk controls and significance testing of course performances.

The null model feeds uniform per-tick posteriors through the same smoothing
and state machine as a real subject, under the subject's own thresholds.
An observed (stops, time) performance is scored against the null by the
mass of the ensemble's 2-D Parzen density lying below the density at the
observation (the region outside the constant-density contour through it).
A rank-based Monte-Carlo variant serves both as the censoring-robust
fallback and as an independent cross-check of the contour integral.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from .control import Thresholds, replay_states
from .course import CourseSpec, SessionResult, default_course, run_session, score_walk_trace
from .recording import WALK

_BANDWIDTH_FLOOR = 1e-6


class EvaluationError(ValueError):
    """Bad evaluation input (degenerate data, malformed observations)."""


class CensoringError(EvaluationError):
    """Too many censored runs for a density fit; use mc_p_value instead."""


@dataclass(frozen=True)
class PerformancePoint:
    """One session outcome: successful stops and completion time."""

    stops: float
    time_s: float

    def __post_init__(self):
        if not 0.0 <= self.stops <= 10.0:
            raise EvaluationError(f"stops {self.stops} outside [0, 10]")
        if not 0.0 < self.time_s <= 1200.0:
            raise EvaluationError(f"time {self.time_s} outside (0, 1200]")

    def as_array(self) -> np.ndarray:
        return np.array([self.stops, self.time_s])


def _as_point(observed) -> np.ndarray:
    if isinstance(observed, PerformancePoint):
        return observed.as_array()
    arr = np.asarray(observed, dtype=np.float64).reshape(-1)
    if arr.size != 2:
        raise EvaluationError("observed performance must be a (stops, time) pair")
    return arr


def random_walk_session(
    thresholds: Thresholds,
    spec: CourseSpec | None = None,
    seed=0,
    smoothing: int = 3,
    log_events: bool = False,
) -> SessionResult:
    """One chance-controller session: uniform(0, 1) posteriors at every tick.

    The draws pass through the same 1.5-s smoothing and transition rules as
    subject runs, with the same scoring and 20-min limit.  Deterministic
    for a fixed seed.
    """
    if spec is None:
        spec = default_course()
    rng = np.random.default_rng(seed)
    draws = rng.uniform(size=spec.limit_ticks)
    if log_events:
        return run_session(thresholds, draws, spec, smoothing=smoothing, log_events=True)
    states = replay_states(draws, thresholds, smoothing)
    return score_walk_trace(states == WALK, spec)


@dataclass
class RandomWalkEnsemble:
    """Monte-Carlo random-walk outcomes under one threshold pair."""

    stops: np.ndarray
    times: np.ndarray
    censored: np.ndarray
    thresholds: Thresholds
    seed: int

    @property
    def n_runs(self) -> int:
        return len(self.stops)

    def points(self) -> np.ndarray:
        """(n, 2) array of (stops, time) pairs, censored runs at the limit."""
        return np.column_stack([self.stops, self.times])

    def censored_fraction(self) -> float:
        return float(self.censored.mean())

    def summary(self) -> dict:
        """Mean and spread of both measures, online-performance table style."""
        all_censored = bool(self.censored.all())
        return {
            "n_runs": self.n_runs,
            "stops_mean": float(self.stops.mean()),
            "stops_std": float(self.stops.std(ddof=1)) if self.n_runs > 1 else 0.0,
            "time_mean": float(self.times.mean()),
            "time_std": float(self.times.std(ddof=1)) if self.n_runs > 1 else 0.0,
            "censored_runs": int(self.censored.sum()),
            "time_display": "> 1200" if all_censored else f"{self.times.mean():.1f}",
        }


def run_ensemble(
    thresholds: Thresholds,
    spec: CourseSpec | None = None,
    n: int = 1000,
    seed: int = 0,
    smoothing: int = 3,
    n_jobs: int = 1,
) -> RandomWalkEnsemble:
    """Independent random-walk sessions with per-run seeds from (seed, index).

    Results are identical regardless of ``n_jobs``: every run's generator
    derives only from the master seed and the run index, and outputs are
    ordered by index.
    """
    if n < 1:
        raise EvaluationError("ensemble needs at least one run")
    if spec is None:
        spec = default_course()

    def one(i: int) -> tuple[float, float, bool]:
        r = random_walk_session(thresholds, spec, seed=[seed, i], smoothing=smoothing)
        return r.stops, r.completion_time_s, r.censored

    if n_jobs == 1:
        rows = [one(i) for i in range(n)]
    else:
        rows = Parallel(n_jobs=n_jobs)(delayed(one)(i) for i in range(n))
    stops, times, censored = (np.array(col) for col in zip(*rows))
    return RandomWalkEnsemble(stops, times, censored.astype(bool), thresholds, seed)


def save_ensemble(path, ensemble: RandomWalkEnsemble) -> None:
    """Write `run,stops,time_s,censored` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "stops", "time_s", "censored"])
        for i in range(ensemble.n_runs):
            writer.writerow(
                [i, repr(float(ensemble.stops[i])), repr(float(ensemble.times[i])),
                 int(ensemble.censored[i])]
            )


def load_ensemble(path, thresholds: Thresholds | None = None, seed: int = 0) -> RandomWalkEnsemble:
    stops, times, censored = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["run", "stops", "time_s", "censored"]:
            raise EvaluationError(f"{path}: not an ensemble file")
        for row in reader:
            stops.append(float(row[1]))
            times.append(float(row[2]))
            censored.append(bool(int(row[3])))
    if thresholds is None:
        thresholds = Thresholds(0.0, 1.0)
    return RandomWalkEnsemble(
        np.array(stops), np.array(times), np.array(censored), thresholds, seed
    )


# ---------------------------------------------------------------------------
# 2-D Parzen density and contour p-values
# ---------------------------------------------------------------------------


@dataclass
class Pdf2D:
    """Gridded 2-D density over (stops, time) with its bandwidths."""

    x_axis: np.ndarray
    y_axis: np.ndarray
    density: np.ndarray
    bandwidths: np.ndarray
    n_samples: int

    @property
    def cell_area(self) -> float:
        return float((self.x_axis[1] - self.x_axis[0]) * (self.y_axis[1] - self.y_axis[0]))

    def density_at(self, point) -> float | None:
        """Bilinear interpolation; None when the point is off the grid."""
        x, y = _as_point(point) if not isinstance(point, np.ndarray) else point
        if not (self.x_axis[0] <= x <= self.x_axis[-1] and self.y_axis[0] <= y <= self.y_axis[-1]):
            return None
        ix = min(int(np.searchsorted(self.x_axis, x)), len(self.x_axis) - 1)
        iy = min(int(np.searchsorted(self.y_axis, y)), len(self.y_axis) - 1)
        ix = max(ix - 1, 0)
        iy = max(iy - 1, 0)
        tx = (x - self.x_axis[ix]) / (self.x_axis[ix + 1] - self.x_axis[ix])
        ty = (y - self.y_axis[iy]) / (self.y_axis[iy + 1] - self.y_axis[iy])
        d = self.density
        return float(
            (1 - tx) * (1 - ty) * d[ix, iy]
            + tx * (1 - ty) * d[ix + 1, iy]
            + (1 - tx) * ty * d[ix, iy + 1]
            + tx * ty * d[ix + 1, iy + 1]
        )


def _silverman_bandwidths(points: np.ndarray, factor: float) -> np.ndarray:
    """Per-dimension Silverman bandwidths (d=2), floored when degenerate."""
    n = len(points)
    sd = points.std(axis=0, ddof=1) if n > 1 else np.zeros(2)
    h = sd * n ** (-1.0 / 6.0) * factor
    if (h < _BANDWIDTH_FLOOR).any():
        warnings.warn("degenerate variance; bandwidth floor applied")
        h = np.maximum(h, _BANDWIDTH_FLOOR)
    return h


def _matched_points(points: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Shrink points toward their mean so kernel smoothing preserves variance.

    Plain kernel smoothing inflates each dimension's variance by h^2, which
    biases density-contour masses; pre-shrinking the sample removes the
    inflation exactly while keeping the estimator nonparametric.
    """
    mean = points.mean(axis=0)
    sd = points.std(axis=0, ddof=1)
    ratio = np.divide(h, sd, out=np.zeros_like(h), where=sd > 0)
    scale = np.sqrt(np.maximum(0.0, 1.0 - ratio**2))
    scale[sd == 0] = 1.0
    return mean + (points - mean) * scale


def fit_parzen(
    points,
    censored: np.ndarray | None = None,
    bandwidth_factor: float = 1.0,
    grid_size: int = 256,
    pad_bandwidths: float = 3.0,
    variance_matched: bool = True,
    max_censored_fraction: float = 0.05,
) -> Pdf2D:
    """Product-Gaussian kernel density of (stops, time) performance points.

    Bandwidths follow Silverman's per-dimension rule scaled by
    ``bandwidth_factor``; by default the sample is variance-matched before
    smoothing (see :func:`_matched_points`).  The grid spans the data
    padded by ``pad_bandwidths`` bandwidths and the density is normalised
    on the grid.  Refuses heavily censored ensembles, for which the
    rank-based :func:`mc_p_value` is the appropriate tool.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[1] != 2:
        raise EvaluationError("points must be (n, 2)")
    if censored is not None:
        censored = np.asarray(censored, dtype=bool)
        fraction = censored.mean() if censored.size else 0.0
        if fraction > max_censored_fraction:
            raise CensoringError(
                f"{fraction:.0%} of runs censored (> {max_censored_fraction:.0%}); "
                "use mc_p_value"
            )
        points = points[~censored]
    if len(points) < 10:
        raise EvaluationError("need at least 10 uncensored points")

    h = _silverman_bandwidths(points, bandwidth_factor)
    if variance_matched:
        points = _matched_points(points, h)
    lo = points.min(axis=0) - pad_bandwidths * h
    hi = points.max(axis=0) + pad_bandwidths * h
    x_axis = np.linspace(lo[0], hi[0], grid_size)
    y_axis = np.linspace(lo[1], hi[1], grid_size)
    gx = np.exp(-0.5 * ((x_axis[:, None] - points[None, :, 0]) / h[0]) ** 2)
    gy = np.exp(-0.5 * ((y_axis[:, None] - points[None, :, 1]) / h[1]) ** 2)
    density = gx @ gy.T / (len(points) * 2.0 * np.pi * h[0] * h[1])
    cell = (x_axis[1] - x_axis[0]) * (y_axis[1] - y_axis[0])
    density /= density.sum() * cell
    return Pdf2D(x_axis, y_axis, density, h, len(points))


def hdr_p_value(pdf: Pdf2D, observed) -> float:
    """Probability mass outside the constant-density contour through ``observed``.

    The density level at the observation (bilinear interpolation) defines a
    contour; the p-value is the integral of the density over the region
    where it is below that level.  Observations beyond the grid lie outside
    all of the null's support and get p = 0 with a warning.
    """
    point = _as_point(observed)
    level = pdf.density_at(point)
    if level is None:
        warnings.warn("observed performance outside the density grid; p = 0")
        return 0.0
    return float(pdf.density[pdf.density < level].sum() * pdf.cell_area)


def mc_p_value(
    points,
    observed,
    bandwidth_factor: float = 1.0,
    variance_matched: bool = True,
) -> float:
    """Rank-based p-value: fraction of ensemble points in lower density regions.

    Density values come from the same kernel construction as
    :func:`fit_parzen` but are evaluated directly (no grid), so censored
    ensembles piling up at the time limit still yield a finite p-value.
    Serves as the independent cross-check for :func:`hdr_p_value`.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if len(points) == 0:
        raise EvaluationError("empty ensemble")
    target = _as_point(observed)
    h = _silverman_bandwidths(points, bandwidth_factor)
    kernel_points = _matched_points(points, h) if variance_matched else points

    def kde(at: np.ndarray) -> np.ndarray:
        z0 = (at[:, 0][:, None] - kernel_points[None, :, 0]) / h[0]
        z1 = (at[:, 1][:, None] - kernel_points[None, :, 1]) / h[1]
        return np.exp(-0.5 * (z0**2 + z1**2)).sum(axis=1)

    member_density = kde(points)
    observed_density = kde(target[None, :])[0]
    return float((member_density < observed_density).mean())


def evaluate_observed(ensemble: RandomWalkEnsemble, observed, **parzen_kwargs) -> dict:
    """Score an observed performance against a random-walk ensemble.

    Uses the contour p-value when the ensemble supports a density fit and
    falls back to the rank-based Monte-Carlo p-value when censoring is too
    heavy.  Significance versus chance is declared at p < 0.05.
    """
    point = _as_point(observed)
    try:
        pdf = fit_parzen(ensemble.points(), ensemble.censored, **parzen_kwargs)
        p = hdr_p_value(pdf, point)
        method = "hdr-contour"
    except CensoringError:
        p = mc_p_value(ensemble.points(), point)
        method = "mc-rank"
    return {
        "observed_stops": float(point[0]),
        "observed_time_s": float(point[1]),
        "p_value": p,
        "method": method,
        "significant_0.05": bool(p < 0.05),
        "ensemble": ensemble.summary(),
    }


# ---------------------------------------------------------------------------
# offline <-> online statistics
# ---------------------------------------------------------------------------


def correlate(x, y) -> tuple[float, float]:
    """Pearson correlation with its two-sided t-test p-value."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 3:
        raise EvaluationError("correlate needs equal-length inputs of size >= 3")
    if x.std() == 0 or y.std() == 0:
        raise EvaluationError("zero variance input")
    result = stats.pearsonr(x, y)
    return float(result.statistic), float(result.pvalue)


def regress_offline_on_online(accuracy, times, stops) -> tuple[np.ndarray, float, float]:
    """OLS of offline accuracy on completion time and stop count.

    Returns (coefficients [intercept, time, stops], R^2, overall F-test p).
    """
    y = np.asarray(accuracy, dtype=np.float64)
    t = np.asarray(times, dtype=np.float64)
    s = np.asarray(stops, dtype=np.float64)
    if not (len(y) == len(t) == len(s)):
        raise EvaluationError("inconsistent lengths")
    n = len(y)
    if n < 4:
        raise EvaluationError("need at least 4 observations for two regressors")
    design = np.column_stack([np.ones(n), t, s])
    if np.linalg.matrix_rank(design) < 3:
        raise EvaluationError("collinear regressors")
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    residuals = y - design @ coef
    ss_res = float(residuals @ residuals)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0:
        raise EvaluationError("dependent variable has zero variance")
    r2 = 1.0 - ss_res / ss_tot
    k = 2
    df_res = n - k - 1
    if r2 >= 1.0:
        return coef, 1.0, 0.0
    f_stat = (r2 / k) / ((1.0 - r2) / df_res)
    p = float(stats.f.sf(f_stat, k, df_res))
    return coef, r2, p
