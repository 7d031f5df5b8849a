"""
Exact Gaussian process interpolation with noise-free (or lambda-regularized) data.

The posterior mean and variance are

    mu(x)      = k_t(x)^T (K_tt + lambda I)^{-1} F_t
    sigma^2(x) = k(x, x) - k_t(x)^T (K_tt + lambda I)^{-1} k_t(x)

with a floor jitter added to the diagonal for numerical stability.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist

from . import config
from .errors import DuplicatePoints, GPConsistencyError
from .kernels import KernelSpec, as_point, as_points, cross_covariance, factorize, floor_jitter, gram_matrix

logger = logging.getLogger(__name__)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TrainingSet:
    """
    Noise-free observations F at distinct points X.

    Attributes:
        X (np.ndarray): (n, d) training points
        F (np.ndarray): (n,) observations
        diameter (float): Domain diameter; duplicates are points closer than
            1e-12 times this value
    """
    X: np.ndarray
    F: np.ndarray
    diameter: float = 1.0

    def __post_init__(self):
        if np.size(self.X) == 0:
            shape = np.shape(self.X)
            X = np.zeros((0, shape[1] if len(shape) == 2 else 1))
        else:
            X = as_points(self.X)
        F = np.asarray(self.F, dtype=float).ravel()
        if X.shape[0] != F.shape[0]:
            raise ValueError(f"|X| = {X.shape[0]} but |F| = {F.shape[0]}")
        if not np.all(np.isfinite(F)):
            raise ValueError("Observations must be finite")
        if self.diameter <= 0:
            raise ValueError(f"diameter must be positive, got {self.diameter}")
        if X.shape[0] > 1 and float(np.min(pdist(X))) <= self.tolerance:
            raise DuplicatePoints("Training set contains coincident points")
        object.__setattr__(self, 'X', _frozen(X))
        object.__setattr__(self, 'F', _frozen(F))

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def tolerance(self) -> float:
        return config.DUPLICATE_TOLERANCE * self.diameter

    def is_duplicate(self, x) -> bool:
        """True if x lies within tolerance of an existing point."""
        if len(self) == 0:
            return False
        x = as_point(x, dim=self.dim)
        return bool(np.min(cdist(self.X, x[None, :])) <= self.tolerance)

    def extended(self, x, f: float) -> 'TrainingSet':
        """
        Return a new set with (x, f) appended.

        Raises:
            DuplicatePoints: If x is within tolerance of an existing point
        """
        x = as_point(x, dim=self.dim if len(self) else None)
        if self.is_duplicate(x):
            raise DuplicatePoints(f"Point {x.tolist()} duplicates an existing training point")
        X = np.vstack([self.X, x[None, :]]) if len(self) else x[None, :]
        return TrainingSet(X, np.append(self.F, float(f)), self.diameter)


@dataclass(frozen=True)
class GPModel:
    """
    Fitted interpolant.

    Attributes:
        kernel (KernelSpec): Prior covariance
        data (TrainingSet): Training data
        chol (np.ndarray): Lower factor of K + (lam + jitter_used) I
        alpha (np.ndarray): Weights solving (K + (lam + jitter_used) I) alpha = F
        jitter_used (float): Jitter chosen by the ladder
        lam (float): Regularization lambda (0 for noise-free)
    """
    kernel: KernelSpec
    data: TrainingSet
    chol: np.ndarray
    alpha: np.ndarray
    jitter_used: float
    lam: float = 0.0

    @property
    def dim(self) -> int:
        return self.data.dim

    def predict(self, X) -> Tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at each row of X."""
        return predict(self, X)


def fit(kernel: KernelSpec, data: TrainingSet, lam: float = 0.0) -> GPModel:
    """
    Fit the interpolant to a non-empty training set.

    Args:
        kernel (KernelSpec): Prior covariance
        data (TrainingSet): Duplicate-free observations
        lam (float): Regularization lambda >= 0

    Returns:
        GPModel: The fitted model

    Raises:
        ValueError: Empty data or negative lambda
        FactorizationFailure: If the jitter ladder is exhausted
    """
    if len(data) == 0:
        raise ValueError("Cannot fit a GP to an empty training set")
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")

    K = gram_matrix(kernel, data.X)
    if lam:
        K[np.diag_indices_from(K)] += lam
    L, jitter = factorize(K, floor_jitter(K))
    alpha = linalg.cho_solve((L, True), data.F)
    return GPModel(kernel, data, _frozen(L), _frozen(alpha), jitter, float(lam))


def predict(model: GPModel, X) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized posterior mean and variance.

    Variances are clamped to [0, 1]; values below -1e-8 indicate a broken
    factorization.

    Raises:
        ValueError: Dimension mismatch
        GPConsistencyError: Strongly negative variance
    """
    X = as_points(X, dim=model.dim)
    Ks = cross_covariance(model.kernel, X, model.data.X)
    mean = Ks @ model.alpha
    V = linalg.solve_triangular(model.chol, Ks.T, lower=True, check_finite=False)
    var = 1.0 - np.einsum('ij,ij->j', V, V)
    if var.size and float(var.min()) < -config.VARIANCE_CLAMP_TOLERANCE:
        raise GPConsistencyError(f"Posterior variance {var.min():.3g} is negative beyond tolerance")
    return mean, np.clip(var, 0.0, 1.0)


def predict_mean(model: GPModel, X) -> np.ndarray:
    """Posterior mean only (skips the triangular solve)."""
    X = as_points(X, dim=model.dim)
    return cross_covariance(model.kernel, X, model.data.X) @ model.alpha


def posterior_mean(model: GPModel, x) -> float:
    return float(predict_mean(model, as_point(x, dim=model.dim)[None, :])[0])


def posterior_var(model: GPModel, x) -> float:
    return float(predict(model, as_point(x, dim=model.dim)[None, :])[1][0])


def posterior_sd(model: GPModel, x) -> float:
    return float(np.sqrt(posterior_var(model, x)))


def update(model: GPModel, x_new, f_new: float) -> GPModel:
    """
    Add one observation by extending the Cholesky factor by a row.

    Falls back to a full refit when the extension is numerically degenerate.

    Raises:
        DuplicatePoints: If x_new duplicates a training point
        FactorizationFailure: If the fallback refit fails
    """
    data = model.data.extended(x_new, f_new)
    x_new = data.X[-1]
    k = cross_covariance(model.kernel, model.data.X, x_new[None, :])[:, 0]
    row = linalg.solve_triangular(model.chol, k, lower=True, check_finite=False)
    shift = model.lam + model.jitter_used
    pivot = 1.0 + shift - float(row @ row)

    if not np.isfinite(pivot) or pivot <= 0.5 * shift:
        logger.debug("Rank-one extension degenerate (pivot %.3g), refitting", pivot)
        return fit(model.kernel, data, model.lam)

    n = len(model.data)
    L = np.zeros((n + 1, n + 1))
    L[:n, :n] = model.chol
    L[n, :n] = row
    L[n, n] = np.sqrt(pivot)
    alpha = linalg.cho_solve((L, True), data.F)
    return GPModel(model.kernel, data, _frozen(L), _frozen(alpha), model.jitter_used, model.lam)
