import logging
from typing import Any, Dict, List

import numpy as np

from noisefree_bo.bo_loops import BOConfig, default_design_size, evaluate_with_budget, plan_iterations, run
from noisefree_bo.experiment import Experiment, summarize
from noisefree_bo.metrics import cumulative_regret, simple_regret
from noisefree_bo.results import ResultWriter
from noisefree_bo.settings import ExperimentName

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ['replication', 'observations', 'best_value', 'simple_regret', 'cumulative_regret']


def _final(curve: List[float]) -> float:
    return curve[-1] if curve else float('nan')


class BenchExperiment(Experiment):
    """Regret curves of every algorithm on the benchmark objectives."""
    handles = (ExperimentName.BENCH,)

    def _run_algorithm(self, objective, algorithm, seed: int) -> Dict[str, Any]:
        cfg = self.config
        domain = objective.domain
        n_initial = cfg.initial_design or default_design_size(domain.dim)
        initial = domain.latin_hypercube(n_initial, np.random.default_rng([seed, 1]))
        reference = None
        if cfg.beta_sqrt == 'sup':
            reference = domain.latin_hypercube(cfg.reference_size, np.random.default_rng([seed, 2]))
        T, tail = plan_iterations(algorithm, cfg.budget, n_initial)

        budgeted = evaluate_with_budget(objective, cfg.budget)
        result = run(BOConfig(algorithm=algorithm, T=T, domain=domain, initial_design=initial,
                              kernel=cfg.kernel_spec, beta=cfg.beta_schedule(domain, reference),
                              refit_every=cfg.refit_every, seed=seed, tail=tail), budgeted)

        values = result.iterate_values
        if objective.f_star is None:
            simple = cumulative = np.full(values.shape, np.nan)
        else:
            simple = simple_regret(objective.f_star, values)
            cumulative = cumulative_regret(objective.f_star, values)
        return {
            'observations': result.evaluations_by_iteration.tolist(),
            'best_value': np.maximum.accumulate(values).tolist(),
            'simple_regret': simple.tolist(),
            'cumulative_regret': cumulative.tolist(),
            'evaluations': budgeted.calls,
            'design_evaluations': result.design_evaluations,
        }

    def run_replication(self, replication: int, seed: int) -> Dict[str, Any]:
        curves = {}
        for name in self.config.objectives:
            objective = self.config.build_objective(name)
            curves[name] = {}
            try:
                for algorithm in self.config.algorithm_ids:
                    curves[name][algorithm.value] = self._run_algorithm(objective, algorithm, seed)
                    logger.debug("Replication %d: %s on %s done", replication, algorithm.value, name)
            finally:
                close = getattr(objective, 'close', None)
                if close is not None:
                    close()
        return {'curves': curves}

    def format_results(self, replications: List[Dict[str, Any]], writer: ResultWriter) -> Dict[str, Any]:
        summary = {}
        for name in self.config.objectives:
            finals = {}
            for algorithm in self.config.algorithms:
                rows = []
                for rep in replications:
                    curve = rep['curves'][name][algorithm]
                    rows.extend(zip([rep['replication']] * len(curve['observations']), curve['observations'],
                                    curve['best_value'], curve['simple_regret'], curve['cumulative_regret']))
                writer.write_csv(f"bench_{name}_{algorithm}.csv", CURVE_COLUMNS, rows,
                                 meta={'objective': name, 'algorithm': algorithm})
                finals[algorithm] = summarize([_final(rep['curves'][name][algorithm]['simple_regret'])
                                               for rep in replications])

            worst = max((e['mean'] for e in finals.values() if np.isfinite(e['mean'])), default=0.0)
            for entry in finals.values():
                entry['normalized'] = entry['mean'] / worst if worst > 0 else None
            summary[name] = finals

        writer.write_json('bench_summary.json', summary)
        return summary
