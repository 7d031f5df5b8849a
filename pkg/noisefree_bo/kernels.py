"""
Stationary unit-amplitude kernels, Gram matrices and marginal-likelihood fitting.

Two families are supported: Matérn with smoothness nu and the squared
exponential. Both satisfy k(x, x) = 1.
"""
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist
from scipy.special import gammaln, kve

from . import config
from .errors import FactorizationFailure

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))


class KernelFamily(str, Enum):
    MATERN = 'matern'
    SQUARED_EXPONENTIAL = 'squared_exponential'


@dataclass(frozen=True)
class KernelSpec:
    """
    Prior covariance k.

    Attributes:
        family (KernelFamily): Matérn or squared exponential
        lengthscale (float): Lengthscale in input units, > 0
        nu (float): Matérn smoothness, > 0 (ignored for the squared exponential)
    """
    family: KernelFamily = KernelFamily.MATERN
    lengthscale: float = 1.0
    nu: float = 2.5

    def __post_init__(self):
        object.__setattr__(self, 'family', KernelFamily(self.family))
        if not np.isfinite(self.lengthscale) or self.lengthscale <= 0:
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")
        if self.family is KernelFamily.MATERN and (not np.isfinite(self.nu) or self.nu <= 0):
            raise ValueError(f"Matern smoothness nu must be positive, got {self.nu}")

    def with_lengthscale(self, lengthscale: float) -> 'KernelSpec':
        return replace(self, lengthscale=float(lengthscale))

    def to_dict(self) -> dict:
        return {'family': self.family.value, 'lengthscale': self.lengthscale, 'nu': self.nu}


def as_points(X, dim: Optional[int] = None) -> np.ndarray:
    """
    Coerce a point list to an (n, d) float array.

    A flat sequence is read as n one-dimensional points.

    Raises:
        ValueError: On non-finite coordinates or a dimension mismatch with ``dim``
    """
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[:, None]
    elif arr.ndim != 2:
        raise ValueError(f"Expected a list of points, got array of shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("Point coordinates must be finite")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"Dimension mismatch: expected {dim}, got {arr.shape[1]}")
    return arr


def as_point(x, dim: Optional[int] = None) -> np.ndarray:
    """Coerce a single point (scalar or vector) to a 1-d float array."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"Expected a single point, got array of shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("Point coordinates must be finite")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"Dimension mismatch: expected {dim}, got {arr.shape[0]}")
    return arr


def correlation(spec: KernelSpec, r: np.ndarray) -> np.ndarray:
    """
    Kernel value as a function of Euclidean distance.

    Args:
        spec (KernelSpec): The kernel
        r (np.ndarray): Non-negative distances

    Returns:
        np.ndarray: k at each distance, in (0, 1]; exactly 1 at r = 0
    """
    r = np.asarray(r, dtype=float)
    scaled = r / spec.lengthscale

    if spec.family is KernelFamily.SQUARED_EXPONENTIAL:
        return np.exp(-0.5 * scaled ** 2)

    nu = spec.nu
    if nu == 0.5:
        return np.exp(-scaled)
    if nu == 1.5:
        s = np.sqrt(3.0) * scaled
        return (1.0 + s) * np.exp(-s)
    if nu == 2.5:
        s = np.sqrt(5.0) * scaled
        return (1.0 + s + s ** 2 / 3.0) * np.exp(-s)
    return matern_bessel(nu, scaled)


def matern_bessel(nu: float, scaled: np.ndarray) -> np.ndarray:
    """
    Matérn correlation through the modified Bessel function of the second kind.

    Evaluated in log space with the exponentially scaled Bessel function so that
    neither the power term nor the Bessel term overflows.

    Args:
        nu (float): Smoothness
        scaled (np.ndarray): Distances divided by the lengthscale
    """
    s = np.sqrt(2.0 * nu) * np.asarray(scaled, dtype=float)
    out = np.ones_like(s)
    positive = s > 0
    sp = s[positive]
    with np.errstate(divide='ignore', over='ignore', invalid='ignore'):
        log_k = (1.0 - nu) * np.log(2.0) - gammaln(nu) + nu * np.log(sp) + np.log(kve(nu, sp)) - sp
        values = np.exp(log_k)
    # r -> 0 limit where the Bessel term is not representable
    values[~np.isfinite(values)] = 1.0
    out[positive] = np.minimum(values, 1.0)
    return out


def eval_kernel(spec: KernelSpec, x, y) -> float:
    """
    Evaluate k(x, y).

    Raises:
        ValueError: Dimension mismatch or non-finite coordinates
    """
    x = as_point(x)
    y = as_point(y, dim=x.shape[0])
    if spec.family is KernelFamily.SQUARED_EXPONENTIAL:
        sq = float(np.sum((x - y) ** 2))
        return float(np.exp(-0.5 * sq / spec.lengthscale ** 2))
    return float(correlation(spec, np.array([np.linalg.norm(x - y)]))[0])


def cross_covariance(spec: KernelSpec, X, Y) -> np.ndarray:
    """
    Cross-covariance matrix with entry (i, j) = k(X[i], Y[j]).
    """
    X = as_points(X)
    Y = as_points(Y, dim=X.shape[1])
    if spec.family is KernelFamily.SQUARED_EXPONENTIAL:
        return np.exp(-0.5 * cdist(X, Y, metric='sqeuclidean') / spec.lengthscale ** 2)
    return correlation(spec, cdist(X, Y, metric='euclidean'))


def gram_matrix(spec: KernelSpec, X) -> np.ndarray:
    """
    Gram matrix of a point list: symmetric with unit diagonal.
    """
    X = as_points(X)
    K = cross_covariance(spec, X, X)
    np.fill_diagonal(K, 1.0)
    return K


def factorize(K: np.ndarray, jitter: float = 0.0) -> Tuple[np.ndarray, float]:
    """
    Cholesky-factorize K + jitter * I, escalating the jitter along the ladder.

    The ladder levels are multiples of the mean diagonal of K; levels not above
    the requested jitter are skipped.

    Args:
        K (np.ndarray): Symmetric matrix
        jitter (float): First jitter level to try

    Returns:
        tuple: (lower-triangular factor, jitter actually used)

    Raises:
        FactorizationFailure: If every level fails
    """
    n = K.shape[0]
    scale = float(np.mean(np.diag(K))) or 1.0
    levels = [float(jitter)] + [c * scale for c in config.JITTER_LADDER if c * scale > jitter]
    eye = np.eye(n)

    for level in levels:
        try:
            L = linalg.cholesky(K + level * eye, lower=True)
        except linalg.LinAlgError:
            logger.debug("Cholesky failed at jitter %.3g (n=%d)", level, n)
            continue
        if level > levels[0]:
            logger.warning("Gram matrix needed jitter escalation to %.3g (n=%d)", level, n)
        return L, level

    raise FactorizationFailure(f"Cholesky failed for all jitter levels up to {levels[-1]:.3g} (n={n})")


def floor_jitter(K: np.ndarray) -> float:
    """Smallest ladder level for K (used by every noise-free fit)."""
    return config.JITTER_LADDER[0] * (float(np.mean(np.diag(K))) or 1.0)


def log_marginal_likelihood(spec: KernelSpec, X, F, jitter: float = 0.0) -> float:
    """
    Zero-mean GP log evidence of F at X.

    -1/2 F^T (K + jitter I)^{-1} F - 1/2 log|K + jitter I| - t/2 log 2 pi

    Raises:
        ValueError: If |X| != |F| or the data are empty
        FactorizationFailure: If the Gram matrix cannot be factorized
    """
    X = as_points(X)
    F = np.asarray(F, dtype=float).ravel()
    if X.shape[0] == 0 or X.shape[0] != F.shape[0]:
        raise ValueError(f"Need |X| = |F| >= 1, got {X.shape[0]} and {F.shape[0]}")

    L, _ = factorize(gram_matrix(spec, X), jitter)
    alpha = linalg.cho_solve((L, True), F)
    log_det = 2.0 * float(np.sum(np.log(np.diag(L))))
    return float(-0.5 * F @ alpha - 0.5 * log_det - 0.5 * F.shape[0] * LOG_2PI)


@dataclass(frozen=True)
class LengthscaleGrid:
    """Candidate lengthscales for the marginal-likelihood search."""
    values: Tuple[float, ...]

    def __post_init__(self):
        if not self.values:
            raise ValueError("Lengthscale grid must not be empty")
        if any(v <= 0 for v in self.values):
            raise ValueError("Lengthscale grid values must be positive")

    @classmethod
    def log_spaced(cls, lo: float, hi: float, n: int) -> 'LengthscaleGrid':
        return cls(tuple(float(v) for v in np.geomspace(lo, hi, n)))

    @classmethod
    def for_diameter(cls, diameter: float, n: int = config.LENGTHSCALE_GRID_SIZE) -> 'LengthscaleGrid':
        lo, hi = config.LENGTHSCALE_GRID_SPAN
        return cls.log_spaced(lo * diameter, hi * diameter, n)


def fit_hyperparameters(spec: KernelSpec, X, F, search: Optional[LengthscaleGrid] = None) -> KernelSpec:
    """
    Pick the lengthscale with the largest log marginal likelihood.

    nu stays at its input value. Ties go to the smallest lengthscale.

    Args:
        spec (KernelSpec): Current kernel (family and nu are kept)
        X: Training points, at least two distinct
        F: Observations
        search (LengthscaleGrid, optional): Candidates; defaults to 25 log-spaced
            values over [1e-2, 1e2] times the diameter of X

    Returns:
        KernelSpec: The best candidate

    Raises:
        ValueError: Fewer than two points
        FactorizationFailure: If every candidate fails
    """
    X = as_points(X)
    F = np.asarray(F, dtype=float).ravel()
    if X.shape[0] < 2:
        raise ValueError("Hyperparameter fitting needs at least two points")
    if search is None:
        diameter = float(np.linalg.norm(X.max(axis=0) - X.min(axis=0))) or 1.0
        search = LengthscaleGrid.for_diameter(diameter)

    best_spec, best_value = None, -np.inf
    for lengthscale in sorted(search.values):
        candidate = spec.with_lengthscale(lengthscale)
        try:
            value = log_marginal_likelihood(candidate, X, F, jitter=config.JITTER_LADDER[0])
        except FactorizationFailure:
            logger.debug("Skipping lengthscale %.4g: factorization failed", lengthscale)
            continue
        if best_spec is None or value > best_value:
            best_spec, best_value = candidate, value

    if best_spec is None:
        raise FactorizationFailure("All lengthscale candidates failed factorization")
    logger.debug("Selected lengthscale %.4g (log evidence %.4f)", best_spec.lengthscale, best_value)
    return best_spec
