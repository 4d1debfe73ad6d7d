"""Subject-specific decoding: classwise PCA, linear discriminants, Gaussian Bayes.

The pipeline maps one vectorised spectral trial through a piecewise linear
feature extractor -- a principal subspace adapted to each class, each
reduced to a single scalar by a linear discriminant -- and classifies by
fusing per-subspace Gaussian posterior probabilities.  The estimators
follow the scikit-learn fit/predict API so they compose with the usual
model-selection tooling.
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


class DecodingError(ValueError):
    """Degenerate training data or a misconfigured decoder."""


class ClasswisePca(BaseEstimator, TransformerMixin):
    """Per-class principal subspaces for small-sample dimensionality reduction.

    For each class the trials are centred on the class mean and an
    orthonormal basis is kept for the smallest number of principal
    directions whose eigenvalues capture at least ``variance_keep`` of the
    class variance, capped at (class count - 1).

    Attributes (after fit)
    ----------------------
    classes_ : ndarray, shape (2,)
    means_ : list of ndarray, per-class mean vectors
    bases_ : list of ndarray, per-class orthonormal bases (n_features x m)
    dims_ : list of int, per-class subspace dimensions
    """

    def __init__(self, variance_keep: float = 0.99):
        self.variance_keep = variance_keep

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        if not 0 < self.variance_keep <= 1:
            raise DecodingError("variance_keep must lie in (0, 1]")
        self.classes_ = np.unique(y)
        self.means_, self.bases_, self.dims_ = [], [], []
        for cls in self.classes_:
            Xc = X[y == cls]
            if Xc.shape[0] < 2:
                raise DecodingError(f"class {cls} has fewer than 2 trials")
            mean = Xc.mean(axis=0)
            centered = Xc - mean
            _, singular, vt = np.linalg.svd(centered, full_matrices=False)
            eigvals = singular**2
            total = eigvals.sum()
            if total <= 0:
                warnings.warn(f"class {cls} has zero variance; using arbitrary axis")
                basis = np.zeros((X.shape[1], 1))
                basis[0, 0] = 1.0
                m = 1
            else:
                cap = min(Xc.shape[0] - 1, X.shape[1])
                fractions = np.cumsum(eigvals) / total
                m = int(np.searchsorted(fractions, self.variance_keep - 1e-12) + 1)
                m = max(1, min(m, cap))
                # own the memory C-contiguously so arithmetic is bit-identical
                # after a serialisation round trip
                basis = np.ascontiguousarray(vt[:m].T)
            self.means_.append(mean)
            self.bases_.append(basis)
            self.dims_.append(m)
        self.n_features_in_ = X.shape[1]
        return self

    def project(self, X, class_index: int) -> np.ndarray:
        """Coordinates of ``X`` in the subspace adapted to one class."""
        check_is_fitted(self, "bases_")
        X = check_array(X, dtype=np.float64)
        return (X - self.means_[class_index]) @ self.bases_[class_index]

    def transform(self, X) -> np.ndarray:
        """Concatenated per-class subspace coordinates."""
        check_is_fitted(self, "bases_")
        return np.hstack([self.project(X, i) for i in range(len(self.classes_))])


def lda_direction(
    X_by_class: list[np.ndarray],
    ridge_scale: float = 1e-6,
) -> np.ndarray:
    """Fisher discriminant direction for two classes, unit-normalised.

    w is proportional to (pooled covariance + ridge)^-1 (mu_1 - mu_0) with
    the ridge set to ``ridge_scale * trace / dim`` for numerical safety on
    near-singular small-sample covariances.  The sign points towards the
    second class's mean.
    """
    if len(X_by_class) != 2:
        raise DecodingError("discriminant needs exactly two classes")
    X0, X1 = (np.atleast_2d(np.asarray(Xc, dtype=np.float64)) for Xc in X_by_class)
    mu0, mu1 = X0.mean(axis=0), X1.mean(axis=0)
    diff = mu1 - mu0
    if not np.any(diff):
        raise DecodingError("degenerate discriminant: identical class means")
    n0, n1 = X0.shape[0], X1.shape[0]
    scatter = (X0 - mu0).T @ (X0 - mu0) + (X1 - mu1).T @ (X1 - mu1)
    pooled = scatter / max(n0 + n1 - 2, 1)
    dim = pooled.shape[0]
    ridge = ridge_scale * np.trace(pooled) / dim
    if ridge <= 0:
        ridge = ridge_scale
    w = np.linalg.solve(pooled + ridge * np.eye(dim), diff)
    return w / np.linalg.norm(w)


# AIDA or other discriminants plug in behind the same signature.
DISCRIMINANTS = {"lda": lda_direction}


def register_discriminant(name: str, fn) -> None:
    """Register an alternative discriminant under ``name``."""
    DISCRIMINANTS[name] = fn


class KmiDecoder(BaseEstimator, ClassifierMixin):
    """Binary motor-imagery decoder: classwise PCA + discriminant + Gaussian Bayes.

    fit expects vectorised spectral trials (one row per trial) with binary
    labels; the smaller label is treated as the idle class, the larger as
    walk.  ``predict_proba`` returns posterior probabilities fused as the
    unweighted mean over the two class-adapted subspaces.

    Parameters
    ----------
    variance_keep : float
        Classwise PCA retained-variance fraction.
    method : str
        Discriminant name in ``DISCRIMINANTS`` ("lda" by default).
    ridge_scale : float
        Relative ridge for the pooled discriminant covariance.
    var_floor : float
        Lower bound on the per-subspace Gaussian variances.
    """

    def __init__(
        self,
        variance_keep: float = 0.99,
        method: str = "lda",
        ridge_scale: float = 1e-6,
        var_floor: float = 1e-12,
    ):
        self.variance_keep = variance_keep
        self.method = method
        self.ridge_scale = ridge_scale
        self.var_floor = var_floor

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise DecodingError(f"expected 2 classes, got {list(self.classes_)}")
        if self.method not in DISCRIMINANTS:
            raise DecodingError(f"unknown discriminant method {self.method!r}")
        discriminant = DISCRIMINANTS[self.method]

        self.cpca_ = ClasswisePca(self.variance_keep).fit(X, y)
        masks = [y == cls for cls in self.classes_]
        self.weights_ = []
        for h in range(2):
            projected = self.cpca_.project(X, h)
            self.weights_.append(
                discriminant([projected[masks[0]], projected[masks[1]]], self.ridge_scale)
            )

        feats = self._features_fitted(X)
        self.feature_means_ = np.empty((2, 2))
        self.feature_vars_ = np.empty((2, 2))
        for h in range(2):
            for c in range(2):
                values = feats[masks[c], h]
                self.feature_means_[h, c] = values.mean()
                self.feature_vars_[h, c] = max(values.var(), self.var_floor)
        self.priors_ = np.array([mask.mean() for mask in masks])
        self.n_features_in_ = X.shape[1]
        return self

    def _features_fitted(self, X) -> np.ndarray:
        return np.column_stack(
            [self.cpca_.project(X, h) @ self.weights_[h] for h in range(2)]
        )

    def features(self, X) -> np.ndarray:
        """Per-subspace scalar features, one column per class-adapted map."""
        check_is_fitted(self, "weights_")
        X = check_array(X, dtype=np.float64)
        return self._features_fitted(X)

    def predict_proba(self, X) -> np.ndarray:
        """Posterior [P(idle), P(walk)] per trial, fused over the two subspaces."""
        check_is_fitted(self, "weights_")
        feats = self.features(X)
        posteriors = np.zeros((feats.shape[0], 2))
        for h in range(2):
            f = feats[:, h][:, None]
            log_lik = (
                -0.5 * (f - self.feature_means_[h]) ** 2 / self.feature_vars_[h]
                - 0.5 * np.log(2 * np.pi * self.feature_vars_[h])
            )
            log_post = log_lik + np.log(self.priors_)
            log_post -= log_post.max(axis=1, keepdims=True)
            post = np.exp(log_post)
            posteriors += post / post.sum(axis=1, keepdims=True)
        return posteriors / 2.0

    def posterior_walk(self, X) -> np.ndarray:
        """P(walk | trial) as a 1-D array."""
        return self.predict_proba(X)[:, 1]

    def predict(self, X) -> np.ndarray:
        """Maximum-posterior class per trial; ties resolve to the idle class."""
        proba = self.predict_proba(X)
        return self.classes_[(proba[:, 1] > 0.5).astype(int)]
