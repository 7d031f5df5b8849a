"""
Surrogate posteriors for ODE parameter inference.

An energy V(x) (log-likelihood of moment data plus a Gaussian log-prior) is
optimized with one of the BO drivers; the GP mean of V over all queried points
defines the surrogate density exp(mu(x)) / Z. Diagnostics compare it with the
brute-force density exp(V(x)) / Z on a grid.
"""
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from . import config
from .acquisition import AcquisitionSpec, maximize_with_score
from .bo_loops import Algorithm, BOConfig, BORun, default_design_size, evaluate_with_budget, plan_iterations, run
from .dynamics import ForwardMapSpec, N_MOMENTS, forward_map
from .errors import GPConsistencyError, IntegrationError, SamplerError
from .gp import GPModel, TrainingSet, fit, predict_mean
from .kernels import LengthscaleGrid, as_point, as_points, fit_hyperparameters
from .objectives import SearchDomain

logger = logging.getLogger(__name__)

SURROGATE_STRATEGIES = (Algorithm.GPUCB, Algorithm.GPUCB_PLUS, Algorithm.EXPLOIT_PLUS, Algorithm.UNIFORM)
GRID_CHUNK = 20000
MAX_FAILED_NODE_FRACTION = 0.01

ROSSLER_DOMAIN = SearchDomain((1.0,), (14.0,))
ROSSLER_TRUTH = (5.7,)
ROSSLER_PRIOR_MEAN = (6.0,)
ROSSLER_PRIOR_VAR = (4.0,)

LORENZ_DOMAIN = SearchDomain((8.72, 24.66, 0.908), (11.28, 32.34, 4.492))
LORENZ_TRUTH = (10.0, 28.0, 8.0 / 3.0)
LORENZ_PRIOR_MEAN = (10.0, 28.5, 2.7)
LORENZ_PRIOR_VAR = (0.25, 2.25, 0.49)


class EnergyForm(str, Enum):
    ROSSLER = 'rossler'
    LORENZ = 'lorenz'


def _diagonal(cov, name: str) -> np.ndarray:
    diag = np.diag(cov) if np.ndim(cov) == 2 else np.atleast_1d(np.asarray(cov, dtype=float))
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise ValueError(f"{name} must be a positive diagonal covariance")
    return np.array(diag, dtype=float)


@dataclass(frozen=True, eq=False)
class EnergyFunction:
    """
    V(x) = -1/2 |D - G(x)|^2_gamma - 1/2 |x - m0|^2_P with diagonal gamma and P.

    Attributes:
        data (np.ndarray): Observed moments D
        gamma (np.ndarray): Diagonal of the noise covariance
        prior_mean (np.ndarray): m0
        prior_cov (np.ndarray): Diagonal of P
        forward (ForwardMapSpec): The forward map G
        form (EnergyForm): Which system the energy belongs to
    """
    data: np.ndarray
    gamma: np.ndarray
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    forward: ForwardMapSpec
    form: EnergyForm

    def __post_init__(self):
        object.__setattr__(self, 'form', EnergyForm(self.form))
        object.__setattr__(self, 'data', as_point(self.data, dim=N_MOMENTS))
        object.__setattr__(self, 'gamma', _diagonal(self.gamma, 'gamma'))
        object.__setattr__(self, 'prior_mean', as_point(self.prior_mean, dim=self.forward.n_params))
        object.__setattr__(self, 'prior_cov', _diagonal(self.prior_cov, 'prior covariance'))
        if self.gamma.shape != (N_MOMENTS,) or self.prior_cov.shape != self.prior_mean.shape:
            raise ValueError("Covariance diagonals do not match the data and parameter dimensions")

    @property
    def dim(self) -> int:
        return self.prior_mean.shape[0]

    def from_moments(self, x, moments) -> float:
        """V(x) given precomputed G(x)."""
        x = as_point(x, dim=self.dim)
        misfit = np.sum((self.data - np.asarray(moments, dtype=float)) ** 2 / self.gamma)
        prior = np.sum((x - self.prior_mean) ** 2 / self.prior_cov)
        return float(-0.5 * misfit - 0.5 * prior)

    def __call__(self, x) -> float:
        return energy(self, x)


def energy(V: EnergyFunction, x) -> float:
    """
    Evaluate the energy at x.

    Raises:
        IntegrationError: Propagated from the forward map
    """
    return V.from_moments(x, forward_map(x, V.forward))


def rossler_energy(data, gamma, forward: Optional[ForwardMapSpec] = None) -> EnergyFunction:
    """Rossler energy with the N(6, 2^2) prior."""
    return EnergyFunction(data, gamma, ROSSLER_PRIOR_MEAN, ROSSLER_PRIOR_VAR,
                          forward or ForwardMapSpec.rossler(), EnergyForm.ROSSLER)


def lorenz_energy(data, gamma, forward: Optional[ForwardMapSpec] = None) -> EnergyFunction:
    """Lorenz-63 energy with a diagonal Gaussian prior centred at (10, 28.5, 2.7)."""
    return EnergyFunction(data, gamma, LORENZ_PRIOR_MEAN, LORENZ_PRIOR_VAR,
                          forward or ForwardMapSpec.lorenz63(), EnergyForm.LORENZ)


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """
    Quadrature nodes and weights over a domain.

    Attributes:
        nodes (np.ndarray): (n, d) nodes
        weights (np.ndarray): (n,) non-negative weights summing to the domain volume
        kind (str): How the grid was built
    """
    nodes: np.ndarray
    weights: np.ndarray
    kind: str = 'custom'

    def __post_init__(self):
        nodes = as_points(self.nodes)
        weights = np.asarray(self.weights, dtype=float).ravel()
        if nodes.shape[0] == 0 or weights.shape[0] != nodes.shape[0]:
            raise ValueError("Grid needs one weight per node and at least one node")
        if np.any(weights < 0):
            raise ValueError("Quadrature weights must be non-negative")
        object.__setattr__(self, 'nodes', nodes)
        object.__setattr__(self, 'weights', weights)

    def __len__(self) -> int:
        return self.nodes.shape[0]

    @property
    def volume(self) -> float:
        return float(np.sum(self.weights))

    def describe(self) -> dict:
        return {'kind': self.kind, 'size': len(self), 'dim': self.nodes.shape[1]}


def trapezoid_grid_1d(domain: SearchDomain, n: int) -> DensityGrid:
    """Equispaced nodes including both ends with trapezoid weights."""
    if domain.dim != 1 or n < 2:
        raise ValueError("The trapezoid grid needs a 1-d domain and n >= 2")
    nodes = np.linspace(domain.lo[0], domain.hi[0], n)
    weights = np.full(n, (domain.hi[0] - domain.lo[0]) / (n - 1))
    weights[[0, -1]] *= 0.5
    return DensityGrid(nodes[:, None], weights, 'trapezoid')


def midpoint_grid(domain: SearchDomain, n_per_dim: int) -> DensityGrid:
    """Tensor grid of cell midpoints with n_per_dim cells per side."""
    if n_per_dim < 1:
        raise ValueError(f"n_per_dim must be positive, got {n_per_dim}")
    axes = [lo + (np.arange(n_per_dim) + 0.5) * (hi - lo) / n_per_dim for lo, hi in zip(domain.lo, domain.hi)]
    nodes = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, domain.dim)
    return DensityGrid(nodes, np.full(nodes.shape[0], domain.volume / nodes.shape[0]), 'midpoint')


def lhs_nodes(domain: SearchDomain, n: int, rng: np.random.Generator) -> DensityGrid:
    """Latin hypercube nodes with equal Monte Carlo weights."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    return DensityGrid(domain.latin_hypercube(n, rng), np.full(n, domain.volume / n), 'lhs')


def grid_mean(model: GPModel, nodes: np.ndarray) -> np.ndarray:
    """Posterior mean over many nodes, evaluated in chunks."""
    return np.concatenate([predict_mean(model, nodes[i:i + GRID_CHUNK])
                           for i in range(0, nodes.shape[0], GRID_CHUNK)])


def log_normalizer(log_values: np.ndarray, grid: DensityGrid) -> float:
    """log of sum_i w_i exp(log_values_i), stabilized by the maximum."""
    return float(logsumexp(log_values, b=grid.weights))


def normalize(surrogate_mean: Union[GPModel, Callable[[np.ndarray], np.ndarray]], domain: SearchDomain,
              grid: DensityGrid, log_scale: bool = False) -> float:
    """
    Z = integral of exp(mu) over the domain by quadrature on the grid.

    Args:
        surrogate_mean: GPModel whose posterior mean is mu, or a vectorized
            ``(n, d) -> (n,)`` callable giving mu directly
        domain (SearchDomain): Integration domain
        grid (DensityGrid): Quadrature nodes and weights
        log_scale (bool): Return log Z, which stays finite where Z itself would
            overflow or underflow

    Raises:
        GPConsistencyError: If Z is not a positive finite number
    """
    if isinstance(surrogate_mean, GPModel):
        mu = grid_mean(surrogate_mean, grid.nodes)
    else:
        mu = np.asarray(surrogate_mean(grid.nodes), dtype=float).ravel()
    log_Z = _checked_log_normalizer(mu, domain, grid)
    if log_scale:
        return log_Z
    Z = float(np.exp(log_Z))
    if not np.isfinite(Z) or Z <= 0:
        raise GPConsistencyError(f"Normalizing constant {Z} is not representable")
    return Z


def _checked_log_normalizer(mu: np.ndarray, domain: SearchDomain, grid: DensityGrid) -> float:
    log_Z = log_normalizer(mu, grid)
    log_volume = np.log(grid.volume)
    slack = 1e-9 * max(1.0, abs(log_Z))
    if not (np.isfinite(log_Z) and mu.min() + log_volume - slack <= log_Z <= mu.max() + log_volume + slack):
        raise GPConsistencyError(f"log Z = {log_Z} outside [{mu.min() + log_volume}, {mu.max() + log_volume}]")
    if abs(grid.volume - domain.volume) > 1e-6 * domain.volume:
        logger.warning("Grid volume %.6g differs from domain volume %.6g", grid.volume, domain.volume)
    return log_Z


@dataclass(frozen=True, eq=False)
class SurrogatePosterior:
    """
    Density exp(mu(x)) / Z with mu the GP mean of the energy.

    Attributes:
        model (GPModel): GP fitted to the energy at every queried point
        domain (SearchDomain): Parameter domain
        log_Z (float): log of the normalization estimate
        grid (DensityGrid): Grid Z was computed on
        run (BORun, optional): The design run that produced the data
    """
    model: GPModel
    domain: SearchDomain
    log_Z: float
    grid: DensityGrid
    run: Optional[BORun] = None

    @property
    def Z(self) -> float:
        return float(np.exp(self.log_Z))

    def log_unnormalized(self, X) -> np.ndarray:
        return grid_mean(self.model, as_points(X, dim=self.domain.dim))

    def log_density(self, X) -> np.ndarray:
        return self.log_unnormalized(X) - self.log_Z

    def density(self, X) -> np.ndarray:
        return np.exp(self.log_density(X))

    def log_max(self, rng: np.random.Generator) -> float:
        _, value = maximize_with_score(AcquisitionSpec.posterior_mean(), self.model, self.domain, rng=rng)
        return value


@dataclass(frozen=True, eq=False)
class LogDensityTarget:
    """
    Unnormalized density exp(log_fn(x)) on a domain, for sampling known targets.

    Attributes:
        domain (SearchDomain): Support
        log_fn (callable): Vectorized ``(n, d) -> (n,)`` log density
    """
    domain: SearchDomain
    log_fn: Callable[[np.ndarray], np.ndarray]

    def log_unnormalized(self, X) -> np.ndarray:
        return np.asarray(self.log_fn(as_points(X, dim=self.domain.dim)), dtype=float)

    def log_max(self, rng: np.random.Generator, n_candidates: int = 10000) -> float:
        candidates = self.domain.latin_hypercube(n_candidates, rng)
        values = self.log_unnormalized(candidates)
        start = candidates[int(np.argmax(values))]
        result = optimize.minimize(lambda z: -float(self.log_unnormalized(z[None, :])[0]), start,
                                   method='L-BFGS-B', bounds=list(zip(self.domain.lo, self.domain.hi)))
        return max(float(values.max()), float(-result.fun))


def build_surrogate(V: Callable, strategy: BOConfig, eval_budget: int,
                    grid: Optional[DensityGrid] = None) -> SurrogatePosterior:
    """
    Design with a BO driver on V, then fit the GP mean of V to every queried point.

    Args:
        V: Energy (any callable point -> float)
        strategy (BOConfig): Driver settings; T and tail are planned from the budget
        eval_budget (int): Total energy evaluations, initial design included
        grid (DensityGrid, optional): Normalization grid; 1401 trapezoid nodes in
            1-d and a 64^3 midpoint grid otherwise

    Returns:
        SurrogatePosterior: The fitted surrogate

    Raises:
        ValueError: Unsupported strategy or a budget below the initial design
    """
    if strategy.algorithm not in SURROGATE_STRATEGIES:
        raise ValueError(f"Strategy '{strategy.algorithm.value}' cannot build a surrogate posterior")
    domain = strategy.domain
    n_initial = (len(strategy.initial_design) if strategy.initial_design is not None
                 else default_design_size(domain.dim))
    T, tail = plan_iterations(strategy.algorithm, eval_budget, n_initial)
    objective = evaluate_with_budget(V, eval_budget)
    design = run(replace(strategy, T=T, tail=tail), objective)

    kernel = design.kernel
    if strategy.mle and design.queried.shape[0] >= 2:
        kernel = fit_hyperparameters(kernel, design.queried, design.observations,
                                     LengthscaleGrid.for_diameter(domain.diameter))
    model = fit(kernel, TrainingSet(design.queried, design.observations, domain.diameter))

    if grid is None:
        grid = trapezoid_grid_1d(domain, 1401) if domain.dim == 1 else midpoint_grid(domain, 64)
    log_Z = normalize(model, domain, grid, log_scale=True)
    logger.info("Built %s surrogate from %d evaluations (log Z = %.4f)",
                strategy.algorithm.value, objective.calls, log_Z)
    return SurrogatePosterior(model, domain, log_Z, grid, design)


def hellinger(p, q, weights) -> float:
    """
    Hellinger distance sqrt(1/2 sum_i w_i (sqrt(p_i) - sqrt(q_i))^2), clamped to [0, 1].

    Raises:
        ValueError: Negative or unnormalized densities, or a length mismatch
    """
    p, q, w = (np.asarray(a, dtype=float).ravel() for a in (p, q, weights))
    if not p.shape == q.shape == w.shape:
        raise ValueError("Densities and weights must have equal length")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("Densities must be non-negative")
    for name, values in (('p', p), ('q', q)):
        mass = float(np.sum(w * values))
        if abs(mass - 1.0) > 1e-3:
            raise ValueError(f"Density {name} integrates to {mass:.6f}, not 1")
    distance = np.sqrt(0.5 * np.sum(w * (np.sqrt(p) - np.sqrt(q)) ** 2))
    return float(np.clip(distance, 0.0, 1.0))


def l2_grid_difference(true_density, surrogate_density) -> float:
    """Euclidean norm of the pointwise difference of two density vectors."""
    a = np.asarray(true_density, dtype=float).ravel()
    b = np.asarray(surrogate_density, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"Length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.linalg.norm(a - b))


@dataclass(frozen=True)
class SampleSet:
    """
    Attributes:
        points (np.ndarray): (n, d) samples
        acceptance_rate (float): Accepted over proposed; NaN when nothing was proposed
        proposals (int): Proposals made
    """
    points: np.ndarray
    acceptance_rate: float
    proposals: int


def rejection_sample(target, n: int, rng: np.random.Generator) -> SampleSet:
    """
    i.i.d. samples by rejection from the uniform distribution on the domain.

    The envelope is the located maximum of the log density inflated by 1.05.

    Args:
        target: SurrogatePosterior or LogDensityTarget
        n (int): Number of samples
        rng (np.random.Generator): Random stream

    Raises:
        SamplerError: Acceptance below 1e-4 after 10^6 proposals
    """
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    domain = target.domain
    if n == 0:
        return SampleSet(np.zeros((0, domain.dim)), float('nan'), 0)
    log_envelope = target.log_max(rng) + np.log(config.ENVELOPE_INFLATION)
    batch = max(2 * n, 1000)
    accepted, proposals, warned = [], 0, False

    while sum(len(a) for a in accepted) < n:
        candidates = domain.sample(rng, batch)
        log_ratio = target.log_unnormalized(candidates) - log_envelope
        if not warned and np.any(log_ratio > 0):
            logger.warning("Envelope exceeded by the target (log ratio %.3g)", float(log_ratio.max()))
            warned = True
        keep = np.log(rng.random(batch)) < log_ratio
        accepted.append(candidates[keep])
        proposals += batch

        rate = sum(len(a) for a in accepted) / proposals
        if proposals >= config.MAX_REJECTION_PROPOSALS and rate < config.MIN_ACCEPTANCE_RATE:
            raise SamplerError(f"Rejection acceptance rate {rate:.2e} after {proposals} proposals; "
                               f"the target is too peaked for a uniform proposal")

    points = np.concatenate(accepted, axis=0)
    rate = points.shape[0] / proposals
    logger.debug("Rejection sampler accepted %d of %d proposals", points.shape[0], proposals)
    return SampleSet(points[:n], rate, proposals)


def rwmh_sample(target, n_iter: int = 20000, burn_in: int = 10000, step_cov=None,
                rng: Optional[np.random.Generator] = None, start=None) -> SampleSet:
    """
    Random-walk Metropolis-Hastings with Gaussian increments.

    Proposals outside the domain are rejected outright.

    Args:
        target: SurrogatePosterior or LogDensityTarget
        n_iter (int): Chain length including burn-in
        burn_in (int): Leading states discarded
        step_cov: Diagonal of the increment covariance (0.3 per dimension by default)
        rng (np.random.Generator, optional): Random stream
        start: Initial state; the domain centre by default

    Returns:
        SampleSet: The n_iter - burn_in retained states and the acceptance rate
    """
    if not 0 <= burn_in < n_iter:
        raise ValueError(f"Need 0 <= burn_in < n_iter, got {burn_in} and {n_iter}")
    domain = target.domain
    rng = rng if rng is not None else np.random.default_rng()
    step = np.sqrt(_diagonal(0.3 * np.ones(domain.dim) if step_cov is None else step_cov, 'step_cov'))
    if step.shape != (domain.dim,):
        raise ValueError(f"step_cov must have {domain.dim} entries")

    x = domain.center if start is None else as_point(start, dim=domain.dim)
    log_p = float(target.log_unnormalized(x[None, :])[0])
    increments = rng.standard_normal((n_iter, domain.dim)) * step
    log_u = np.log(rng.random(n_iter))
    chain = np.empty((n_iter, domain.dim))
    accepted = 0

    for i in range(n_iter):
        proposal = x + increments[i]
        if np.all(proposal >= domain.lower) and np.all(proposal <= domain.upper):
            log_q = float(target.log_unnormalized(proposal[None, :])[0])
            if log_u[i] < log_q - log_p:
                x, log_p = proposal, log_q
                accepted += 1
        chain[i] = x

    logger.debug("RW-MH acceptance rate %.3f over %d iterations", accepted / n_iter, n_iter)
    return SampleSet(chain[burn_in:], accepted / n_iter, n_iter)


def _safe_energy(V: EnergyFunction, x: np.ndarray) -> float:
    try:
        return V(x)
    except IntegrationError as e:
        logger.error("Energy failed at %s: %s", x.tolist(), e)
        return float('nan')


def grid_energies(V: EnergyFunction, grid: DensityGrid, cache_path: Optional[str] = None,
                  workers: int = 1) -> np.ndarray:
    """
    V at every grid node, loaded from or stored to an .npz cache.

    Raises:
        IntegrationError: If more than 1% of the nodes fail
    """
    if cache_path and os.path.exists(cache_path):
        with np.load(cache_path) as cached:
            if cached['nodes'].shape == grid.nodes.shape and np.array_equal(cached['nodes'], grid.nodes):
                logger.info("Loaded %d cached energies from %s", len(grid), cache_path)
                return np.array(cached['energies'])
        logger.warning("Cache %s was built on a different grid, recomputing", cache_path)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            energies = np.array(list(pool.map(_safe_energy, [V] * len(grid), grid.nodes,
                                              chunksize=max(1, len(grid) // (4 * workers)))))
    else:
        energies = np.array([_safe_energy(V, x) for x in grid.nodes])

    failed = int(np.sum(~np.isfinite(energies)))
    if failed > MAX_FAILED_NODE_FRACTION * len(grid):
        raise IntegrationError(f"{failed} of {len(grid)} grid energies failed")

    if cache_path:
        os.makedirs(os.path.dirname(os.path.abspath(cache_path)), exist_ok=True)
        np.savez(cache_path, nodes=grid.nodes, energies=energies)
        logger.info("Cached %d grid energies to %s", len(grid), cache_path)
    return energies


def density_from_energies(energies: np.ndarray, grid: DensityGrid, normalized: bool = True) -> np.ndarray:
    """exp(energies), divided by the quadrature normalizer when ``normalized``; failed nodes get 0."""
    log_values = np.where(np.isfinite(energies), energies, -np.inf)
    if normalized:
        log_values = log_values - log_normalizer(log_values, grid)
    return np.exp(log_values)


def true_density_oracle(V: EnergyFunction, grid: DensityGrid, normalized: bool = True,
                        cache_path: Optional[str] = None, workers: int = 1) -> np.ndarray:
    """Brute-force density exp(V) on the grid, one forward-map call per node."""
    return density_from_energies(grid_energies(V, grid, cache_path, workers), grid, normalized)


def surrogate_density(surrogate: SurrogatePosterior, grid: DensityGrid, normalized: bool = True) -> np.ndarray:
    """Surrogate density on a grid; normalized with the grid's own quadrature."""
    return density_from_energies(grid_mean(surrogate.model, grid.nodes), grid, normalized)
