"""
Bayesian optimization drivers.

GP-UCB, GP-UCB+ (UCB point plus one draw from the exploration measure P),
EXPLOIT+ (posterior-mean point plus one draw from P), and the EXPLOIT,
EXPLORE, UNIFORM, EI and PI baselines all share one loop.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np

from . import config
from .acquisition import AcquisitionSpec, BetaSchedule, MaximizerBudget, maximize, resolve_beta
from .errors import BudgetExhausted, DuplicatePoints
from .gp import GPModel, TrainingSet, fit, update
from .kernels import KernelSpec, LengthscaleGrid, as_point, as_points, fit_hyperparameters
from .objectives import SearchDomain

logger = logging.getLogger(__name__)

MAX_RESAMPLE_ATTEMPTS = 1000


class Algorithm(str, Enum):
    GPUCB = 'gpucb'
    GPUCB_PLUS = 'gpucb-plus'
    EXPLOIT_PLUS = 'exploit-plus'
    EXPLOIT = 'exploit'
    EXPLORE = 'explore'
    UNIFORM = 'uniform'
    EI = 'ei'
    PI = 'pi'

    @property
    def queries_per_iteration(self) -> int:
        return 2 if self in (Algorithm.GPUCB_PLUS, Algorithm.EXPLOIT_PLUS) else 1

    @property
    def uses_beta(self) -> bool:
        return self in (Algorithm.GPUCB, Algorithm.GPUCB_PLUS)


@dataclass(frozen=True)
class ExplorationDistribution:
    """
    The exploration measure P on the domain.

    Attributes:
        domain (SearchDomain): Support of P
        sampler (callable, optional): ``rng -> point``; uniform on the domain when omitted
    """
    domain: SearchDomain
    sampler: Optional[Callable[[np.random.Generator], np.ndarray]] = None

    @property
    def kind(self) -> str:
        return 'uniform' if self.sampler is None else 'custom'

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        """
        Raises:
            ValueError: If a custom sampler returns a point outside the domain
        """
        if self.sampler is None:
            return self.domain.sample(rng)
        x = as_point(self.sampler(rng), dim=self.domain.dim)
        if not self.domain.contains(x):
            raise ValueError(f"Exploration sampler returned {x.tolist()} outside the domain")
        return x


@dataclass
class BOConfig:
    """
    Settings for one optimization run.

    Attributes:
        algorithm (Algorithm): Which driver
        T (int): Number of iterations
        domain (SearchDomain): Search box
        initial_design (np.ndarray, optional): X_0; a default LHS design is drawn when omitted
        kernel (KernelSpec): Prior covariance (starting point for re-fitting)
        beta (BetaSchedule): UCB weight, used by the UCB algorithms
        P (ExplorationDistribution, optional): Exploration measure, uniform by default
        refit_every (int): Lengthscale re-fit period in iterations
        maximizer_budget (MaximizerBudget, optional): Inner maximizer effort
        seed (int): Seed of the run's random stream
        mle (bool): Re-fit the lengthscale by marginal likelihood
        tail (int): Extra draws from P after the last iteration
        xi (float): EI/PI margin
    """
    algorithm: Algorithm
    T: int
    domain: SearchDomain
    initial_design: Optional[np.ndarray] = None
    kernel: KernelSpec = field(default_factory=KernelSpec)
    beta: BetaSchedule = field(default_factory=lambda: BetaSchedule.from_sqrt(2.0))
    P: Optional[ExplorationDistribution] = None
    refit_every: int = config.REFIT_EVERY
    maximizer_budget: Optional[MaximizerBudget] = None
    seed: int = 0
    mle: bool = True
    tail: int = 0
    xi: float = 0.0

    def __post_init__(self):
        self.algorithm = Algorithm(self.algorithm)
        if self.T < 0 or self.tail < 0:
            raise ValueError(f"T and tail must be non-negative, got {self.T} and {self.tail}")
        if self.refit_every < 1:
            raise ValueError(f"refit_every must be positive, got {self.refit_every}")
        if self.initial_design is not None:
            self.initial_design = as_points(self.initial_design, dim=self.domain.dim)
            if self.initial_design.shape[0] == 0:
                raise ValueError("initial_design must not be empty")
        if self.P is not None and self.P.domain != self.domain:
            raise ValueError("Exploration distribution lives on a different domain")


@dataclass
class BORun:
    """
    Recorded trace of a run.

    Attributes:
        iterates (np.ndarray): (T, d) acquisition points x_1..x_T
        exploration_points (np.ndarray): Draws from P (plus any tail draws)
        queried (np.ndarray): Every queried point in query order, initial design first
        observations (np.ndarray): Objective values aligned with ``queried``
        evaluations_used (int): Objective calls made by the loop
        per_iteration_best (np.ndarray): (T,) best observation through each iteration
        kernel (KernelSpec): Kernel after the last re-fit
        design_evaluations (int): Extra calls spent resolving a sup-norm beta
        iterate_indices (np.ndarray): Position of each iterate in ``queried``
        evaluations_by_iteration (np.ndarray): (T,) calls made through each iteration
        model (GPModel): Final model over all queried points
    """
    iterates: np.ndarray
    exploration_points: np.ndarray
    queried: np.ndarray
    observations: np.ndarray
    evaluations_used: int
    per_iteration_best: np.ndarray
    kernel: KernelSpec
    design_evaluations: int = 0
    iterate_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    evaluations_by_iteration: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    model: Optional[GPModel] = None

    @property
    def iterate_values(self) -> np.ndarray:
        return self.observations[self.iterate_indices]

    @property
    def n_initial(self) -> int:
        return self.evaluations_used - len(self.iterates) - len(self.exploration_points)


class BudgetedObjective:
    """
    Objective wrapper that counts calls and refuses to exceed a budget.

    Attributes:
        unwrapped: The raw objective, for evaluations accounted elsewhere
        budget (int): Allowed calls
        calls (int): Calls made so far
    """

    def __init__(self, objective: Callable, budget: int):
        if budget < 0:
            raise ValueError(f"budget must be non-negative, got {budget}")
        self.unwrapped = objective
        self.budget = int(budget)
        self.calls = 0

    @property
    def remaining(self) -> int:
        return self.budget - self.calls

    def __call__(self, x) -> float:
        if self.calls >= self.budget:
            raise BudgetExhausted(f"Evaluation budget of {self.budget} exhausted")
        self.calls += 1
        return self.unwrapped(x)


def evaluate_with_budget(objective: Callable, budget: int) -> BudgetedObjective:
    return BudgetedObjective(objective, budget)


def plan_iterations(algorithm, budget: int, n_initial: int = 0) -> Tuple[int, int]:
    """
    Split an observation budget into iterations.

    Args:
        algorithm (Algorithm): Two-query algorithms get half as many iterations
        budget (int): Total objective evaluations, initial design included
        n_initial (int): Size of the initial design

    Returns:
        tuple: (T, tail) where tail counts trailing draws from P that make the
            total exactly equal to the budget

    Raises:
        ValueError: If the budget cannot cover the initial design
    """
    algorithm = Algorithm(algorithm)
    remaining = budget - n_initial
    if remaining < 0:
        raise ValueError(f"Budget {budget} is smaller than the initial design ({n_initial})")
    per = algorithm.queries_per_iteration
    return remaining // per, remaining % per


def default_design_size(dim: int) -> int:
    return 2 if dim == 1 else max(2, dim)


def default_initial_design(domain: SearchDomain, rng: np.random.Generator, n: Optional[int] = None) -> np.ndarray:
    """Latin hypercube design of 2 points in 1-d and max(2, d) points otherwise."""
    return domain.latin_hypercube(default_design_size(domain.dim) if n is None else n, rng)


def _draw_fresh(P: ExplorationDistribution, data: TrainingSet, rng: np.random.Generator) -> np.ndarray:
    for _ in range(MAX_RESAMPLE_ATTEMPTS):
        x = P.draw(rng)
        if not data.is_duplicate(x):
            return x
    raise DuplicatePoints(f"No fresh exploration point after {MAX_RESAMPLE_ATTEMPTS} draws")


def _acquisition_for(algorithm: Algorithm, beta: float, xi: float) -> Optional[AcquisitionSpec]:
    if algorithm in (Algorithm.GPUCB, Algorithm.GPUCB_PLUS):
        return AcquisitionSpec.ucb(beta)
    if algorithm in (Algorithm.EXPLOIT, Algorithm.EXPLOIT_PLUS):
        return AcquisitionSpec.posterior_mean()
    if algorithm is Algorithm.EXPLORE:
        return AcquisitionSpec.posterior_sd()
    if algorithm is Algorithm.EI:
        return AcquisitionSpec.expected_improvement(xi)
    if algorithm is Algorithm.PI:
        return AcquisitionSpec.probability_of_improvement(xi)
    return None


class _Trace:
    """Mutable bookkeeping while a run is in progress."""

    def __init__(self, objective: Callable, data: TrainingSet):
        self.objective = objective
        self.data = data
        self.queried: List[np.ndarray] = []
        self.observations: List[float] = []
        self.iterate_indices: List[int] = []
        self.exploration_indices: List[int] = []

    def observe(self, x: np.ndarray) -> float:
        """
        Raises:
            DuplicatePoints: Before any evaluation, if x is already in the data
        """
        if self.data.is_duplicate(x):
            raise DuplicatePoints(f"Point {np.asarray(x).tolist()} duplicates an existing training point")
        f = float(self.objective(x))
        self.data = self.data.extended(x, f)
        self.queried.append(np.array(x))
        self.observations.append(f)
        return f

    def points(self, indices: List[int], dim: int) -> np.ndarray:
        if not indices:
            return np.zeros((0, dim))
        return np.array([self.queried[i] for i in indices])


def _refit(kernel: KernelSpec, data: TrainingSet, domain: SearchDomain) -> KernelSpec:
    if len(data) < 2:
        return kernel
    return fit_hyperparameters(kernel, data.X, data.F, LengthscaleGrid.for_diameter(domain.diameter))


def run(bo_config: BOConfig, objective: Callable) -> BORun:
    """
    Run one optimization.

    Within an iteration of the two-query algorithms the acquisition point is
    computed first, then the draw from P; both are observed before one model
    update. A proposal that duplicates a training point is replaced by a fresh
    draw from P.

    Args:
        bo_config (BOConfig): Run settings
        objective: Callable point -> float, possibly a BudgetedObjective

    Returns:
        BORun: The recorded trace

    Raises:
        BudgetExhausted: If a budgeted objective runs out
        FactorizationFailure: Propagated from the model
    """
    algorithm = bo_config.algorithm
    domain = bo_config.domain
    rng = np.random.default_rng(bo_config.seed)
    P = bo_config.P or ExplorationDistribution(domain)
    budget = bo_config.maximizer_budget or MaximizerBudget.for_dimension(domain.dim)

    beta, design_evaluations = 0.0, 0
    if algorithm.uses_beta:
        beta = resolve_beta(bo_config.beta, getattr(objective, 'unwrapped', objective))
        design_evaluations = bo_config.beta.design_size
    acq = _acquisition_for(algorithm, beta, bo_config.xi)

    initial = bo_config.initial_design
    if initial is None:
        initial = default_initial_design(domain, rng)

    trace = _Trace(objective, TrainingSet(np.zeros((0, domain.dim)), [], domain.diameter))
    for x in initial:
        trace.observe(x)

    kernel = _refit(bo_config.kernel, trace.data, domain) if bo_config.mle else bo_config.kernel
    model = fit(kernel, trace.data)
    per_iteration_best, evaluations_by_iteration = [], []

    for t in range(1, bo_config.T + 1):
        if acq is None:
            x = P.draw(rng)
        else:
            x = maximize(acq, model, domain, budget, rng)
        if trace.data.is_duplicate(x):
            logger.warning("Iteration %d proposed a duplicate point, resampling from P", t)
            x = _draw_fresh(P, trace.data, rng)
        trace.iterate_indices.append(len(trace.queried))
        trace.observe(x)

        if algorithm.queries_per_iteration == 2:
            trace.exploration_indices.append(len(trace.queried))
            trace.observe(_draw_fresh(P, trace.data, rng))

        for i in range(len(model.data), len(trace.data)):
            model = update(model, trace.data.X[i], trace.data.F[i])
        if bo_config.mle and t % bo_config.refit_every == 0:
            kernel = _refit(kernel, trace.data, domain)
            model = fit(kernel, trace.data)

        per_iteration_best.append(max(trace.observations))
        evaluations_by_iteration.append(len(trace.observations))

    for _ in range(bo_config.tail):
        trace.exploration_indices.append(len(trace.queried))
        trace.observe(_draw_fresh(P, trace.data, rng))
        model = update(model, trace.data.X[-1], trace.data.F[-1])

    logger.debug("Finished %s: %d iterations, %d evaluations", algorithm.value, bo_config.T, len(trace.observations))
    return BORun(
        iterates=trace.points(trace.iterate_indices, domain.dim),
        exploration_points=trace.points(trace.exploration_indices, domain.dim),
        queried=np.array(trace.queried).reshape(-1, domain.dim),
        observations=np.array(trace.observations),
        evaluations_used=len(trace.observations),
        per_iteration_best=np.array(per_iteration_best),
        kernel=kernel,
        design_evaluations=design_evaluations,
        iterate_indices=np.array(trace.iterate_indices, dtype=int),
        evaluations_by_iteration=np.array(evaluations_by_iteration, dtype=int),
        model=model,
    )
