"""
Search domains and benchmark objectives.

Objectives are maximized. The classical minimization benchmarks are negated so
that their maximum value is f* = 0.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .kernels import KernelSpec, as_point, as_points, cross_covariance, gram_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchDomain:
    """
    Axis-aligned box [lo, hi] in R^d.

    Attributes:
        lo (tuple): Lower bounds per dimension
        hi (tuple): Upper bounds per dimension
    """
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) == 0 or len(lo) != len(hi):
            raise ValueError(f"Bounds must be non-empty and of equal length, got {len(lo)} and {len(hi)}")
        if not all(np.isfinite(lo + hi)):
            raise ValueError("Domain bounds must be finite")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"Degenerate domain: need lo < hi in every dimension, got {lo} and {hi}")
        object.__setattr__(self, 'lo', lo)
        object.__setattr__(self, 'hi', hi)

    @classmethod
    def cube(cls, lo: float, hi: float, dim: int) -> 'SearchDomain':
        return cls((lo,) * dim, (hi,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def lower(self) -> np.ndarray:
        return np.array(self.lo)

    @property
    def upper(self) -> np.ndarray:
        return np.array(self.hi)

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.widths))

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x) -> bool:
        x = as_point(x, dim=self.dim)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def clip(self, X) -> np.ndarray:
        return np.clip(X, self.lower, self.upper)

    def from_unit(self, U) -> np.ndarray:
        """Map points of the unit cube onto the domain."""
        return self.lower + np.asarray(U, dtype=float) * self.widths

    def sample(self, rng: np.random.Generator, n: Optional[int] = None) -> np.ndarray:
        """Uniform draws; a single point when n is None, else an (n, d) array."""
        if n is None:
            return self.from_unit(rng.random(self.dim))
        return self.from_unit(rng.random((n, self.dim)))

    def latin_hypercube(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Latin hypercube sample of n points."""
        if n <= 0:
            return np.zeros((0, self.dim))
        return self.from_unit(qmc.LatinHypercube(d=self.dim, seed=rng).random(n))

    def to_dict(self) -> dict:
        return {'lo': list(self.lo), 'hi': list(self.hi)}


class ObjectiveId(str, Enum):
    ACKLEY = 'ackley'
    RASTRIGIN = 'rastrigin'
    LEVY = 'levy'
    QUADRATIC_1D = 'quadratic1d'
    RKHS = 'rkhs'
    EXTERNAL_PROCESS = 'external'


# Standard search spaces for the benchmarks, per coordinate
BENCHMARK_BOUNDS = {
    ObjectiveId.ACKLEY: (-32.768, 32.768),
    ObjectiveId.RASTRIGIN: (-5.12, 5.12),
    ObjectiveId.LEVY: (-10.0, 10.0),
}


class Objective(ABC):
    """
    Base class for objective oracles point -> real.

    Subclasses implement ``evaluate`` on an (n, d) array. Calling the objective
    on a single point clips it into the domain (with a warning) and returns a float.
    """
    id: ObjectiveId

    def __init__(self, domain: SearchDomain, f_star: Optional[float] = None, x_star=None):
        self.domain = domain
        self.f_star = f_star
        self.x_star = None if x_star is None else as_point(x_star, dim=domain.dim)

    @abstractmethod
    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """
        Evaluate on each row of X.

        Args:
            X (np.ndarray): (n, d) points inside the domain

        Returns:
            np.ndarray: (n,) objective values
        """

    @property
    def name(self) -> str:
        return self.id.value

    def __call__(self, x) -> float:
        x = as_point(x, dim=self.domain.dim)
        if not self.domain.contains(x):
            logger.warning("Point %s outside the %s domain, clipping", x.tolist(), self.name)
            x = self.domain.clip(x)
        return float(self.evaluate(x[None, :])[0])


class Ackley(Objective):
    id = ObjectiveId.ACKLEY

    def __init__(self, dim: int = 10):
        super().__init__(domain_for(self.id, dim), 0.0, np.zeros(dim))

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = as_points(X, dim=self.domain.dim)
        radius = np.sqrt(np.mean(X ** 2, axis=1))
        waves = np.mean(np.cos(2.0 * np.pi * X), axis=1)
        # both terms are non-negative, so the value never exceeds 0
        return -(-20.0 * np.expm1(-0.2 * radius) + (np.e - np.exp(waves)))


class Rastrigin(Objective):
    id = ObjectiveId.RASTRIGIN

    def __init__(self, dim: int = 10):
        super().__init__(domain_for(self.id, dim), 0.0, np.zeros(dim))

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = as_points(X, dim=self.domain.dim)
        return -np.sum(X ** 2 + 10.0 * (1.0 - np.cos(2.0 * np.pi * X)), axis=1)


class Levy(Objective):
    id = ObjectiveId.LEVY

    def __init__(self, dim: int = 10):
        super().__init__(domain_for(self.id, dim), 0.0, np.ones(dim))

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = as_points(X, dim=self.domain.dim)
        w = 1.0 + (X - 1.0) / 4.0
        head = np.sin(np.pi * w[:, 0]) ** 2
        body = np.sum((w[:, :-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(np.pi * w[:, :-1] + 1.0) ** 2), axis=1)
        tail = (w[:, -1] - 1.0) ** 2 * (1.0 + np.sin(2.0 * np.pi * w[:, -1]) ** 2)
        return -(head + body + tail)


class Quadratic1D(Objective):
    """f(x) = -(x - 0.3)^2 on [0, 1]."""
    id = ObjectiveId.QUADRATIC_1D

    def __init__(self):
        super().__init__(SearchDomain((0.0,), (1.0,)), 0.0, [0.3])

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = as_points(X, dim=1)
        return -(X[:, 0] - 0.3) ** 2


class RKHSObjective(Objective):
    """
    Finite kernel expansion f = sum_i c_i k(., z_i), a member of the RKHS of k.

    Its RKHS norm is sqrt(c^T K_zz c); f* and x* are located numerically.
    """
    id = ObjectiveId.RKHS

    def __init__(self, kernel: KernelSpec, domain: SearchDomain, centers, coefficients):
        super().__init__(domain)
        self.kernel = kernel
        self.centers = as_points(centers, dim=domain.dim)
        self.coefficients = np.asarray(coefficients, dtype=float).ravel()
        if self.coefficients.shape[0] != self.centers.shape[0]:
            raise ValueError("Need one coefficient per center")
        gram = gram_matrix(kernel, self.centers)
        self.rkhs_norm = float(np.sqrt(max(self.coefficients @ gram @ self.coefficients, 0.0)))
        self.x_star, self.f_star = self._locate_maximum()

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = as_points(X, dim=self.domain.dim)
        return cross_covariance(self.kernel, X, self.centers) @ self.coefficients

    def _locate_maximum(self, n_candidates: int = 20000, n_polish: int = 5):
        rng = np.random.default_rng(0)
        if self.domain.dim == 1:
            candidates = np.linspace(self.domain.lo[0], self.domain.hi[0], n_candidates)[:, None]
        else:
            candidates = self.domain.latin_hypercube(n_candidates, rng)
        values = self.evaluate(candidates)
        bounds = list(zip(self.domain.lo, self.domain.hi))
        best_x, best_f = candidates[int(np.argmax(values))], float(np.max(values))
        for idx in np.argsort(-values, kind='stable')[:n_polish]:
            result = optimize.minimize(lambda z: -float(self.evaluate(z[None, :])[0]),
                                       candidates[idx], method='L-BFGS-B', bounds=bounds)
            if -result.fun > best_f:
                best_x, best_f = self.domain.clip(result.x), float(-result.fun)
        return best_x, best_f


def domain_for(objective_id, dim: int = 10) -> SearchDomain:
    """
    Standard search space for a benchmark.

    Raises:
        ValueError: Unknown id or an id without a fixed domain
    """
    objective_id = ObjectiveId(objective_id)
    if objective_id not in BENCHMARK_BOUNDS:
        raise ValueError(f"No fixed search domain for objective '{objective_id.value}'")
    if dim < 1:
        raise ValueError(f"Dimension must be >= 1, got {dim}")
    lo, hi = BENCHMARK_BOUNDS[objective_id]
    return SearchDomain.cube(lo, hi, dim)


def make_objective(objective_id, dim: int = 10) -> Objective:
    """Instantiate a benchmark objective by id."""
    objective_id = ObjectiveId(objective_id)
    if objective_id is ObjectiveId.ACKLEY:
        return Ackley(dim)
    if objective_id is ObjectiveId.RASTRIGIN:
        return Rastrigin(dim)
    if objective_id is ObjectiveId.LEVY:
        return Levy(dim)
    if objective_id is ObjectiveId.QUADRATIC_1D:
        return Quadratic1D()
    raise ValueError(f"Objective '{objective_id.value}' cannot be built from an id alone")


def eval_objective(objective: Objective, x) -> float:
    return objective(x)


def rkhs_objective(kernel: KernelSpec, domain: SearchDomain, n_centers: int,
                   rng: np.random.Generator) -> RKHSObjective:
    """Random RKHS member with uniformly placed centers and N(0, 1) coefficients."""
    return RKHSObjective(kernel, domain, domain.sample(rng, n_centers), rng.standard_normal(n_centers))
