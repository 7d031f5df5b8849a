"""
Regret curves, fill distance and empirical convergence rates.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import linregress

from .kernels import as_points

logger = logging.getLogger(__name__)

F_STAR_TOLERANCE = 1e-9


def _values(iterate_values) -> np.ndarray:
    values = np.asarray(iterate_values, dtype=float).ravel()
    if not np.all(np.isfinite(values)):
        raise ValueError("Iterate values must be finite")
    return values


def _check_optimum(f_star: float, values: np.ndarray):
    if values.size and float(values.max()) > f_star + F_STAR_TOLERANCE:
        raise ValueError(f"f_star = {f_star} is below an observed value {values.max()}")


def simple_regret(f_star: float, iterate_values) -> np.ndarray:
    """
    Simple regret after each iterate: f* minus the running maximum.

    Args:
        f_star (float): Known optimum
        iterate_values: f(x_1), ..., f(x_T)

    Returns:
        np.ndarray: Non-increasing regrets (empty for an empty input)

    Raises:
        ValueError: If an iterate value exceeds f_star by more than 1e-9
    """
    values = _values(iterate_values)
    _check_optimum(f_star, values)
    if values.size == 0:
        return values
    return np.maximum(f_star - np.maximum.accumulate(values), 0.0)


def cumulative_regret(f_star: float, iterate_values) -> np.ndarray:
    """Running sum of instantaneous regrets f* - f(x_t)."""
    values = _values(iterate_values)
    _check_optimum(f_star, values)
    return np.cumsum(np.maximum(f_star - values, 0.0))


@dataclass(frozen=True)
class RegretCurve:
    """Regret of a run indexed by iterate."""
    simple: np.ndarray
    cumulative: np.ndarray
    f_star: float

    @classmethod
    def from_values(cls, f_star: float, iterate_values) -> 'RegretCurve':
        return cls(simple_regret(f_star, iterate_values), cumulative_regret(f_star, iterate_values), float(f_star))

    def check(self):
        """
        Raises:
            AssertionError: If the curves are not monotone
        """
        assert np.all(np.diff(self.simple) <= 0), "simple regret increased"
        assert np.all(np.diff(self.cumulative) >= 0), "cumulative regret decreased"


def fill_distance(reference, design) -> float:
    """
    Largest distance from a reference point to its nearest design point.

    The reference set stands in for the whole domain.

    Raises:
        ValueError: Empty inputs or a dimension mismatch
    """
    reference = as_points(reference)
    if np.size(design) == 0 or reference.shape[0] == 0:
        raise ValueError("fill_distance needs non-empty reference and design sets")
    design = as_points(design, dim=reference.shape[1])
    distances, _ = cKDTree(design).query(reference, k=1)
    return float(np.max(distances))


def fill_distance_curve(reference, queried) -> np.ndarray:
    """Fill distance of each prefix of the query sequence."""
    queried = as_points(queried)
    return np.array([fill_distance(reference, queried[:n]) for n in range(1, queried.shape[0] + 1)])


def fit_rate(counts, values) -> float:
    """
    Least-squares slope of log(values) against log(counts).

    Raises:
        ValueError: Fewer than three points, a length mismatch or non-positive entries
    """
    counts = np.asarray(counts, dtype=float).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if counts.shape != values.shape or counts.size < 3:
        raise ValueError("fit_rate needs at least three (count, value) pairs")
    if np.any(counts <= 0) or np.any(values <= 0):
        raise ValueError("fit_rate needs positive counts and values")
    return float(linregress(np.log(counts), np.log(values)).slope)
