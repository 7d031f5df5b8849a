"""
Base experiment class for standardizing replication runs and result output.
"""
import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from . import runner
from .results import ResultWriter, make_meta
from .settings import ExperimentConfig, ExperimentName

logger = logging.getLogger(__name__)


def summarize(values: Sequence[float]) -> Dict[str, Any]:
    """Mean and sample standard deviation across replications, with the raw values."""
    values = np.asarray(values, dtype=float)
    sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return {'mean': float(np.mean(values)), 'sd': sd, 'values': values.tolist()}


class Experiment(ABC):
    """
    Abstract base class for all experiments.

    Subclasses list the experiment names they handle and implement:
    - run_replication(): one independent replication, returning plain data
    - format_results(): write the merged replications and return a summary
    """
    handles: Tuple[ExperimentName, ...] = ()

    def __init__(self, config: ExperimentConfig):
        if config.experiment not in self.handles:
            raise ValueError(f"{self.name} cannot run experiment '{config.experiment.value}'")
        self.config = config

    @property
    def name(self) -> str:
        return self.__class__.__name__

    def prepare(self) -> None:
        """Build state shared by all replications (runs once, in the coordinator)."""

    def meta(self) -> Dict[str, Any]:
        """Extra header metadata for every result file."""
        return {}

    @abstractmethod
    def run_replication(self, replication: int, seed: int) -> Dict[str, Any]:
        """
        Run one replication.

        Args:
            replication (int): Replication index
            seed (int): Seed derived for this replication

        Returns:
            dict: Picklable per-replication results
        """

    @abstractmethod
    def format_results(self, replications: List[Dict[str, Any]], writer: ResultWriter) -> Dict[str, Any]:
        """
        Write result files for the merged replications.

        Args:
            replications (list): Results in replication order
            writer (ResultWriter): Output sink

        Returns:
            dict: Summary of the experiment
        """

    def safe_run(self, replication: int, seed: int) -> Dict[str, Any]:
        """
        Run a replication, logging any failure with its index before re-raising.
        """
        try:
            result = self.run_replication(replication, seed)
        except Exception as e:
            logger.error("Replication %d of %s failed: %s", replication, self.name, e)
            raise
        logger.info("Replication %d of %s finished", replication, self.name)
        return result

    def run_and_write(self, dry_run: bool = False) -> Dict[str, Any]:
        """
        Prepare, run all replications and write the results.

        Args:
            dry_run (bool): If True, log the summary without writing files

        Returns:
            dict: The experiment summary
        """
        self.prepare()
        replications = runner.run_replications(self, self.config.replications, self.config.seed)
        writer = ResultWriter(self.config.output_dir, make_meta(self.config.to_dict(), **self.meta()), dry_run)
        summary = self.format_results(replications, writer)

        if dry_run:
            logger.info("DRY RUN: %s summary: %s", self.name, summary)
        return summary
