import logging
import os
from typing import Any, Dict, List

import numpy as np

from noisefree_bo import config
from noisefree_bo.bo_loops import BOConfig
from noisefree_bo.dynamics import MOMENT_NAMES, ForwardMapSpec, estimate_gamma, forward_map, make_data
from noisefree_bo.experiment import Experiment, summarize
from noisefree_bo.inference import (
    LORENZ_DOMAIN, LORENZ_TRUTH, ROSSLER_DOMAIN, ROSSLER_TRUTH, build_surrogate, hellinger, l2_grid_difference,
    lhs_nodes, lorenz_energy, midpoint_grid, rejection_sample, rossler_energy, rwmh_sample, surrogate_density,
    trapezoid_grid_1d, true_density_oracle,
)
from noisefree_bo.results import ResultWriter
from noisefree_bo.settings import ExperimentName

logger = logging.getLogger(__name__)

# Windows the noise variances are estimated over, and their scale
ROSSLER_NOISE_WINDOW = (20.0, 500.0)
LORENZ_NOISE_WINDOW = (10.0, 2000.0)
LORENZ_NOISE_SCALE = 0.25


class InferExperiment(Experiment):
    """
    Surrogate posteriors of the Rossler or Lorenz-63 parameters.

    The data, the noise covariance and the brute-force density are built once in
    ``prepare`` and shared by every replication; replications differ only in the
    design and sampler streams. Rossler densities are compared normalized on a
    trapezoid grid, Lorenz densities unnormalized on Latin hypercube nodes.
    """
    handles = (ExperimentName.INFER_ROSSLER, ExperimentName.INFER_LORENZ)

    @property
    def is_rossler(self) -> bool:
        return self.config.experiment is ExperimentName.INFER_ROSSLER

    def prepare(self) -> None:
        cfg = self.config
        data_rng = np.random.default_rng([cfg.seed, 0])
        if self.is_rossler:
            self.forward = ForwardMapSpec.rossler()
            self.domain = ROSSLER_DOMAIN
            self.truth = ROSSLER_TRUTH
            self.gamma = estimate_gamma(self.forward, self.truth, ROSSLER_NOISE_WINDOW)
            self.data = make_data(self.forward, self.truth, self.gamma, data_rng)
            self.energy = rossler_energy(self.data, self.gamma, self.forward)
            self.comparison = trapezoid_grid_1d(self.domain, cfg.grid_size)
            self.normalizing_grid = self.comparison
        else:
            self.forward = ForwardMapSpec.lorenz63()
            self.domain = LORENZ_DOMAIN
            self.truth = LORENZ_TRUTH
            self.gamma = estimate_gamma(self.forward, self.truth, LORENZ_NOISE_WINDOW, LORENZ_NOISE_SCALE)
            self.data = make_data(self.forward, self.truth, self.gamma, data_rng)
            self.energy = lorenz_energy(self.data, self.gamma, self.forward)
            self.comparison = lhs_nodes(self.domain, cfg.comparison_nodes, np.random.default_rng([cfg.seed, 3]))
            self.normalizing_grid = midpoint_grid(self.domain, cfg.z_grid)

        cache_path = None
        if not cfg.dry_run:
            cache_path = os.path.join(cfg.output_dir, f"{cfg.experiment.value}_true_energies_seed{cfg.seed}.npz")
        self.true_density = true_density_oracle(self.energy, self.comparison, normalized=self.is_rossler,
                                                cache_path=cache_path, workers=config.THREADS)
        logger.info("Prepared %s: %d comparison nodes, noise variances %s",
                    cfg.experiment.value, len(self.comparison), np.round(np.diag(self.gamma), 6).tolist())

    def meta(self) -> Dict[str, Any]:
        return {
            'forward_map': self.forward.to_dict(),
            'data': self.data,
            'gamma': np.diag(self.gamma),
            'comparison_grid': self.comparison.describe(),
            'normalizing_grid': self.normalizing_grid.describe(),
        }

    def _sample(self, surrogate, rng: np.random.Generator):
        cfg = self.config
        if self.is_rossler:
            return rejection_sample(surrogate, cfg.n_samples, rng)
        return rwmh_sample(surrogate, cfg.mcmc_iterations, cfg.burn_in, [cfg.step_cov] * self.domain.dim, rng)

    def run_replication(self, replication: int, seed: int) -> Dict[str, Any]:
        cfg = self.config
        initial = self.domain.latin_hypercube(cfg.initial_design, np.random.default_rng([seed, 1]))
        reference = None
        if cfg.beta_sqrt == 'sup':
            reference = self.domain.latin_hypercube(cfg.reference_size, np.random.default_rng([seed, 2]))

        strategies = {}
        for algorithm in cfg.algorithm_ids:
            strategy = BOConfig(algorithm=algorithm, T=0, domain=self.domain, initial_design=initial,
                                kernel=cfg.kernel_spec, beta=cfg.beta_schedule(self.domain, reference),
                                refit_every=cfg.refit_every, seed=seed)
            surrogate = build_surrogate(self.energy, strategy, cfg.budget, grid=self.normalizing_grid)
            density = surrogate_density(surrogate, self.comparison, normalized=self.is_rossler)
            samples = self._sample(surrogate, np.random.default_rng([seed, 3]))

            entry = {
                'l2_difference': l2_grid_difference(self.true_density, density),
                'acceptance_rate': samples.acceptance_rate,
                'Z': surrogate.Z,
                'evaluations': surrogate.run.evaluations_used,
                'density': density,
                'samples': samples.points,
                'design': surrogate.run.queried,
                'energies': surrogate.run.observations,
            }
            if self.is_rossler:
                entry['hellinger'] = hellinger(self.true_density, density, self.comparison.weights)
            strategies[algorithm.value] = entry
            logger.debug("Replication %d: %s l2 difference %.6g", replication, algorithm.value, entry['l2_difference'])
        return {'strategies': strategies}

    def format_results(self, replications: List[Dict[str, Any]], writer: ResultWriter) -> Dict[str, Any]:
        prefix = self.config.experiment.value
        coords = [f"x{i + 1}" for i in range(self.domain.dim)]
        writer.write_csv(f"{prefix}_true_density.csv", coords + ['density'],
                         np.column_stack([self.comparison.nodes, self.true_density]))
        self._write_truth(prefix, writer)

        metric_names = ['l2_difference', 'acceptance_rate', 'Z']
        if self.is_rossler:
            metric_names.insert(1, 'hellinger')

        metrics = {}
        for algorithm in self.config.algorithms:
            entries = [(rep['replication'], rep['strategies'][algorithm]) for rep in replications]
            writer.write_csv(f"{prefix}_{algorithm}_samples.csv", ['replication'] + coords,
                             _tagged(entries, lambda e: e['samples']))
            writer.write_csv(f"{prefix}_{algorithm}_density.csv", ['replication'] + coords + ['density'],
                             _tagged(entries, lambda e: np.column_stack([self.comparison.nodes, e['density']])))
            writer.write_csv(f"{prefix}_{algorithm}_design.csv", ['replication'] + coords + ['energy'],
                             _tagged(entries, lambda e: np.column_stack([e['design'], e['energies']])))
            metrics[algorithm] = {name: summarize([e[name] for _, e in entries]) for name in metric_names}
            metrics[algorithm]['evaluations'] = [e['evaluations'] for _, e in entries]

        writer.write_json(f"{prefix}_metrics.json", metrics)
        return metrics

    def _write_truth(self, prefix: str, writer: ResultWriter) -> None:
        """The true-parameter trajectory over the averaging window, and its moments next to the noisy data."""
        traj = self.forward.trajectory(self.truth)
        writer.write_csv(f"{prefix}_truth_trajectory.csv", ['time', 'z1', 'z2', 'z3'],
                         np.column_stack([traj.times, traj.states]))
        writer.write_csv(f"{prefix}_truth_moments.csv", ['source'] + list(MOMENT_NAMES),
                         [['forward_map'] + forward_map(self.truth, self.forward).tolist(),
                          ['data'] + np.asarray(self.data).tolist()])


def _tagged(entries, table):
    """Rows of each replication's table prefixed by the replication index."""
    for replication, entry in entries:
        for row in table(entry):
            yield [replication] + list(row)
