"""
End-to-end orderings at reduced scale. Slow; run with ``pytest --runslow``.
"""
import numpy as np
import pytest

from experiments.bench.bench_experiment import BenchExperiment
from experiments.filldist.filldist_experiment import FillDistanceExperiment
from experiments.infer.infer_experiment import InferExperiment
from noisefree_bo.bo_loops import Algorithm, BOConfig, default_initial_design, evaluate_with_budget, plan_iterations, run
from noisefree_bo.kernels import KernelSpec
from noisefree_bo.metrics import fit_rate, simple_regret
from noisefree_bo.objectives import SearchDomain, rkhs_objective
from noisefree_bo.settings import resolve_config

pytestmark = pytest.mark.slow

PLUS = ('gpucb-plus', 'exploit-plus')


def _summary(experiment_class, name, **values):
    cfg = resolve_config(name, cli_values=dict(values, dry_run=True))
    return experiment_class(cfg).run_and_write(dry_run=True)


def test_fill_distance_ordering():
    summary = _summary(FillDistanceExperiment, 'filldist',
                       algorithms=['gpucb', 'uniform', 'gpucb-plus', 'exploit-plus'])['rastrigin']
    for algorithm in ('uniform',) + PLUS:
        assert summary[algorithm]['mean'] < summary['gpucb']['mean'], algorithm
        assert summary[algorithm]['fraction_below_gpucb'] >= 0.8, algorithm


def test_benchmark_regret_ordering():
    summary = _summary(BenchExperiment, 'bench', budget=200,
                       algorithms=['gpucb-plus', 'exploit-plus', 'exploit', 'gpucb'])
    for algorithm in PLUS:
        means = {name: summary[name][algorithm]['mean'] for name in summary}
        assert all(means[name] < summary[name]['exploit']['mean'] for name in summary), algorithm
        beats_gpucb = sum(means[name] < summary[name]['gpucb']['mean'] for name in summary)
        assert beats_gpucb >= 2, algorithm


def test_exploit_plus_regret_rate():
    domain = SearchDomain((0.0,), (1.0,))
    kernel = KernelSpec(lengthscale=0.2, nu=2.5)
    budgets = [25, 50, 100, 200]
    medians = []
    for budget in budgets:
        finals = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            f = rkhs_objective(kernel, domain, 10, rng)
            initial = default_initial_design(domain, rng)
            T, tail = plan_iterations(Algorithm.EXPLOIT_PLUS, budget, len(initial))
            result = run(BOConfig(Algorithm.EXPLOIT_PLUS, T=T, domain=domain, initial_design=initial,
                                  kernel=kernel, mle=False, seed=seed, tail=tail), evaluate_with_budget(f, budget))
            values = result.iterate_values
            # the located optimum can sit a rounding error below an iterate
            finals.append(simple_regret(max(f.f_star, values.max()), values)[-1])
        medians.append(max(float(np.median(finals)), 1e-15))
    assert fit_rate(budgets, medians) <= -1.0


def _l2_means(name, **values):
    metrics = _summary(InferExperiment, name, **values)
    return {algorithm: metrics[algorithm]['l2_difference']['mean'] for algorithm in metrics}


def _assert_plus_beats_baselines(means):
    for algorithm in PLUS:
        assert means[algorithm] < means['gpucb'], algorithm
        assert means[algorithm] < means['uniform'], algorithm


def test_rossler_surrogate_ordering():
    _assert_plus_beats_baselines(_l2_means('infer-rossler', replications=20))


def test_lorenz_surrogate_ordering():
    _assert_plus_beats_baselines(_l2_means('infer-lorenz', budget=200, replications=5))


def test_rossler_hellinger_shrinks_with_budget():
    medians = []
    for budget in (20, 80, 320):
        metrics = _summary(InferExperiment, 'infer-rossler', algorithms=['uniform'], budget=budget, replications=10)
        medians.append(float(np.median(metrics['uniform']['hellinger']['values'])))
    assert medians[0] >= medians[1] >= medians[2]
