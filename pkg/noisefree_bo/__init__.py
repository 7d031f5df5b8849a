"""
Noise-free Bayesian optimization: GP-UCB+, EXPLOIT+ and baselines, regret and
fill-distance metrics, and surrogate posteriors for ODE parameter inference.
"""
__version__ = '0.1.0'

from .kernels import KernelFamily, KernelSpec
from .gp import GPModel, TrainingSet, fit, predict, update
from .objectives import ObjectiveId, SearchDomain, make_objective
from .acquisition import AcquisitionSpec, BetaSchedule, maximize
from .bo_loops import Algorithm, BOConfig, BORun, ExplorationDistribution, evaluate_with_budget, plan_iterations, run
from .metrics import cumulative_regret, fill_distance, simple_regret
from .inference import build_surrogate, hellinger, rejection_sample, rwmh_sample

__all__ = [
    '__version__',
    'KernelFamily',
    'KernelSpec',
    'GPModel',
    'TrainingSet',
    'fit',
    'predict',
    'update',
    'ObjectiveId',
    'SearchDomain',
    'make_objective',
    'AcquisitionSpec',
    'BetaSchedule',
    'maximize',
    'Algorithm',
    'BOConfig',
    'BORun',
    'ExplorationDistribution',
    'evaluate_with_budget',
    'plan_iterations',
    'run',
    'cumulative_regret',
    'fill_distance',
    'simple_regret',
    'build_surrogate',
    'hellinger',
    'rejection_sample',
    'rwmh_sample',
]
