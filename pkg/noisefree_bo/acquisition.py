"""
Acquisition functions and their maximizer.

Scores are UCB, posterior mean, posterior standard deviation, expected
improvement and probability of improvement. The maximizer scores a Latin
hypercube pool and refines the best candidates by a shrinking coordinate search.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.stats import norm

from . import config
from .gp import GPModel, predict, predict_mean
from .kernels import as_point, as_points
from .objectives import SearchDomain

logger = logging.getLogger(__name__)


class BetaKind(str, Enum):
    CONSTANT = 'constant'
    SUP_NORM = 'sup_norm'


@dataclass(frozen=True)
class BetaSchedule:
    """
    Exploration weight of UCB.

    Attributes:
        kind (BetaKind): Constant value, or squared sup-norm of f over ``points``
        beta (float): The constant beta (not its square root)
        points (np.ndarray, optional): Discretization X_D for the sup-norm estimate
    """
    kind: BetaKind = BetaKind.CONSTANT
    beta: float = 4.0
    points: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'kind', BetaKind(self.kind))
        if self.kind is BetaKind.CONSTANT and (not np.isfinite(self.beta) or self.beta < 0):
            raise ValueError(f"beta must be a non-negative number, got {self.beta}")
        if self.kind is BetaKind.SUP_NORM:
            if self.points is None or np.size(self.points) == 0:
                raise ValueError("Sup-norm beta needs a non-empty discretization")
            object.__setattr__(self, 'points', as_points(self.points))

    @classmethod
    def constant(cls, beta: float) -> 'BetaSchedule':
        return cls(BetaKind.CONSTANT, float(beta))

    @classmethod
    def from_sqrt(cls, beta_sqrt: float) -> 'BetaSchedule':
        return cls(BetaKind.CONSTANT, float(beta_sqrt) ** 2)

    @classmethod
    def sup_norm(cls, points) -> 'BetaSchedule':
        return cls(BetaKind.SUP_NORM, 0.0, points)

    @property
    def design_size(self) -> int:
        """Objective evaluations needed to resolve this schedule."""
        return 0 if self.points is None else self.points.shape[0]


def resolve_beta(schedule: BetaSchedule, objective: Callable) -> float:
    """
    Turn a schedule into a beta value.

    Sup-norm evaluations are design-budget evaluations, separate from the
    optimization budget.

    Returns:
        float: beta for a constant schedule, (max over X_D of |f|)^2 otherwise
    """
    if schedule.kind is BetaKind.CONSTANT:
        return schedule.beta
    values = np.array([objective(x) for x in schedule.points])
    logger.info("Spent %d design-budget evaluations on the sup-norm beta", len(values))
    return float(np.max(np.abs(values)) ** 2)


class AcquisitionKind(str, Enum):
    UCB = 'ucb'
    POSTERIOR_MEAN = 'posterior_mean'
    POSTERIOR_SD = 'posterior_sd'
    EI = 'ei'
    PI = 'pi'


@dataclass(frozen=True)
class AcquisitionSpec:
    """
    Attributes:
        kind (AcquisitionKind): Score to maximize
        beta (float): Resolved UCB weight; the score adds sqrt(beta) times the SD
        xi (float): Improvement margin for EI and PI
    """
    kind: AcquisitionKind
    beta: float = 0.0
    xi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'kind', AcquisitionKind(self.kind))
        if self.beta < 0 or self.xi < 0:
            raise ValueError(f"beta and xi must be non-negative, got {self.beta} and {self.xi}")

    @classmethod
    def ucb(cls, beta: float) -> 'AcquisitionSpec':
        return cls(AcquisitionKind.UCB, beta=float(beta))

    @classmethod
    def posterior_mean(cls) -> 'AcquisitionSpec':
        return cls(AcquisitionKind.POSTERIOR_MEAN)

    @classmethod
    def posterior_sd(cls) -> 'AcquisitionSpec':
        return cls(AcquisitionKind.POSTERIOR_SD)

    @classmethod
    def expected_improvement(cls, xi: float = 0.0) -> 'AcquisitionSpec':
        return cls(AcquisitionKind.EI, xi=float(xi))

    @classmethod
    def probability_of_improvement(cls, xi: float = 0.0) -> 'AcquisitionSpec':
        return cls(AcquisitionKind.PI, xi=float(xi))


def score_many(acq: AcquisitionSpec, model: GPModel, X, best: Optional[float] = None) -> np.ndarray:
    """
    Score every row of X.

    Args:
        acq (AcquisitionSpec): Acquisition to evaluate
        model (GPModel): Fitted model
        X: (n, d) candidate points
        best (float, optional): Incumbent for EI/PI; defaults to the largest
            observation in the model

    Returns:
        np.ndarray: (n,) scores
    """
    if acq.kind is AcquisitionKind.POSTERIOR_MEAN:
        return predict_mean(model, X)

    mean, var = predict(model, X)
    sd = np.sqrt(var)
    if acq.kind is AcquisitionKind.UCB:
        return mean + np.sqrt(acq.beta) * sd
    if acq.kind is AcquisitionKind.POSTERIOR_SD:
        return sd

    if best is None:
        best = float(np.max(model.data.F))
    gain = mean - best - acq.xi
    positive = sd > 0
    z = np.divide(gain, sd, out=np.zeros_like(gain), where=positive)
    if acq.kind is AcquisitionKind.EI:
        return np.where(positive, gain * norm.cdf(z) + sd * norm.pdf(z), np.maximum(gain, 0.0))
    return np.where(positive, norm.cdf(z), (gain > 0).astype(float))


def score(acq: AcquisitionSpec, model: GPModel, x, best: Optional[float] = None) -> float:
    """Score a single point."""
    return float(score_many(acq, model, as_point(x, dim=model.dim)[None, :], best)[0])


@dataclass(frozen=True)
class MaximizerBudget:
    """
    Attributes:
        pool (int): Latin hypercube candidates scored up front
        starts (int): Best candidates refined by coordinate search
        halvings (int): Step-size halvings of the coordinate search
    """
    pool: int = config.POOL_CAP
    starts: int = config.REFINE_STARTS
    halvings: int = config.REFINE_HALVINGS

    def __post_init__(self):
        if self.pool < 1 or self.starts < 0 or self.halvings < 0:
            raise ValueError(f"Invalid maximizer budget {self}")

    @classmethod
    def for_dimension(cls, dim: int) -> 'MaximizerBudget':
        return cls(pool=min(config.POOL_PER_DIMENSION * dim, config.POOL_CAP))

    def to_dict(self) -> dict:
        return {'pool': self.pool, 'starts': self.starts, 'halvings': self.halvings}


def _refine(objective: Callable[[np.ndarray], np.ndarray], x: np.ndarray, fx: float,
            domain: SearchDomain, halvings: int) -> Tuple[np.ndarray, float]:
    """
    Greedy coordinate search: at each step size, move to the best of the 2d
    axis neighbours while that strictly improves, then halve the step.
    """
    step = config.REFINE_INITIAL_STEP * domain.widths
    d = domain.dim
    for _ in range(halvings + 1):
        for _ in range(config.REFINE_MAX_SWEEPS):
            offsets = np.vstack([np.diag(step), -np.diag(step)])
            neighbours = domain.clip(x[None, :] + offsets)
            values = objective(neighbours)
            k = int(np.argmax(values))
            if not values[k] > fx:
                break
            x, fx = neighbours[k], float(values[k])
        step = step / 2.0
    logger.debug("Refined candidate to score %.6g in %d dimensions", fx, d)
    return x, fx


def maximize_with_score(acq: AcquisitionSpec, model: GPModel, domain: SearchDomain,
                        budget: Optional[MaximizerBudget] = None,
                        rng: Optional[np.random.Generator] = None,
                        best: Optional[float] = None) -> Tuple[np.ndarray, float]:
    """
    Like ``maximize`` but also returns the score of the returned point.
    """
    if domain.dim != model.dim:
        raise ValueError(f"Dimension mismatch: domain {domain.dim}, model {model.dim}")
    budget = budget or MaximizerBudget.for_dimension(domain.dim)
    rng = rng if rng is not None else np.random.default_rng()

    def objective(X):
        return score_many(acq, model, X, best)

    pool = domain.latin_hypercube(budget.pool, rng)
    values = objective(pool)
    order = np.argsort(-values, kind='stable')
    x_best, f_best = pool[order[0]], float(values[order[0]])

    for idx in order[:budget.starts]:
        x, fx = _refine(objective, pool[idx], float(values[idx]), domain, budget.halvings)
        if fx > f_best:
            x_best, f_best = x, fx
    return np.array(x_best), f_best


def maximize(acq: AcquisitionSpec, model: GPModel, domain: SearchDomain,
             budget: Optional[MaximizerBudget] = None,
             rng: Optional[np.random.Generator] = None,
             best: Optional[float] = None) -> np.ndarray:
    """
    Maximize an acquisition over the domain.

    Args:
        acq (AcquisitionSpec): What to maximize
        model (GPModel): Fitted model
        domain (SearchDomain): Search box
        budget (MaximizerBudget, optional): Defaults to a pool of 500 d
            candidates (at most 5000), 5 starts and 10 halvings
        rng (np.random.Generator, optional): Drives the candidate pool
        best (float, optional): Incumbent for EI/PI

    Returns:
        np.ndarray: The best point found; ties go to the lowest pool index
    """
    return maximize_with_score(acq, model, domain, budget, rng, best)[0]
