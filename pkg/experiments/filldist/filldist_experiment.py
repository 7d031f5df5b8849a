import logging
from typing import Any, Dict, List

import numpy as np

from noisefree_bo.bo_loops import Algorithm, BOConfig, default_design_size, evaluate_with_budget, plan_iterations, run
from noisefree_bo.experiment import Experiment, summarize
from noisefree_bo.metrics import fill_distance_curve
from noisefree_bo.results import ResultWriter
from noisefree_bo.settings import ExperimentName

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ['replication', 'queries', 'fill_distance']


class FillDistanceExperiment(Experiment):
    """
    Fill distance of the query sets of each algorithm against a reference set.

    Within a replication every algorithm starts from the same initial design and
    uses the same reference set, which doubles as X_D for a sup-norm beta.
    """
    handles = (ExperimentName.FILLDIST,)

    def meta(self) -> Dict[str, Any]:
        return {'shared_initial_design': True}

    def run_replication(self, replication: int, seed: int) -> Dict[str, Any]:
        cfg = self.config
        curves = {}
        for name in cfg.objectives:
            objective = cfg.build_objective(name)
            domain = objective.domain
            n_initial = cfg.initial_design or default_design_size(domain.dim)
            initial = domain.latin_hypercube(n_initial, np.random.default_rng([seed, 1]))
            reference = domain.latin_hypercube(cfg.reference_size, np.random.default_rng([seed, 2]))
            beta = cfg.beta_schedule(domain, reference)

            curves[name] = {}
            try:
                for algorithm in cfg.algorithm_ids:
                    T, tail = plan_iterations(algorithm, cfg.budget, n_initial)
                    result = run(BOConfig(algorithm=algorithm, T=T, domain=domain, initial_design=initial,
                                          kernel=cfg.kernel_spec, beta=beta, refit_every=cfg.refit_every,
                                          seed=seed, tail=tail),
                                 evaluate_with_budget(objective, cfg.budget))
                    curves[name][algorithm.value] = fill_distance_curve(reference, result.queried).tolist()
            finally:
                close = getattr(objective, 'close', None)
                if close is not None:
                    close()
        return {'curves': curves}

    def format_results(self, replications: List[Dict[str, Any]], writer: ResultWriter) -> Dict[str, Any]:
        summary = {}
        baseline = Algorithm.GPUCB.value
        for name in self.config.objectives:
            summary[name] = {}
            for algorithm in self.config.algorithms:
                rows = []
                for rep in replications:
                    curve = rep['curves'][name][algorithm]
                    rows.extend((rep['replication'], n + 1, h) for n, h in enumerate(curve))
                writer.write_csv(f"filldist_{name}_{algorithm}.csv", CURVE_COLUMNS, rows,
                                 meta={'objective': name, 'algorithm': algorithm})

                finals = [rep['curves'][name][algorithm][-1] for rep in replications]
                entry = summarize(finals)
                if baseline in self.config.algorithms and algorithm != baseline:
                    reference = [rep['curves'][name][baseline][-1] for rep in replications]
                    entry['fraction_below_gpucb'] = float(np.mean(np.array(finals) < np.array(reference)))
                summary[name][algorithm] = entry

        writer.write_json('filldist_summary.json', summary)
        return summary
