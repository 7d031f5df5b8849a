"""
Replication worker pool.

Replications of an experiment run in a process pool capped by
NOISEFREE_BO_THREADS; results are merged by the coordinator in replication order.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional

from . import config

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1


def splitmix64(value: int) -> int:
    """One step of the splitmix64 mixer."""
    z = (value + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replication_seed(root_seed: int, replication: int) -> int:
    """64-bit seed of one replication, mixed from the root seed and the index."""
    return splitmix64((root_seed & MASK64) ^ splitmix64(replication))


def _run_one(experiment, replication: int, seed: int) -> Dict[str, Any]:
    return experiment.safe_run(replication, seed)


def run_replications(experiment, replications: int, root_seed: int,
                     workers: Optional[int] = None) -> List[Dict[str, Any]]:
    """
    Run every replication and return their results in index order.

    Args:
        experiment (Experiment): Picklable experiment instance
        replications (int): Number of replications
        root_seed (int): Seed every replication seed is derived from
        workers (int, optional): Pool size; defaults to the configured thread cap

    Returns:
        list: One result dict per replication, each tagged with its seed

    Raises:
        Exception: The first replication failure, re-raised in the coordinator
    """
    workers = min(workers or config.THREADS, replications)
    seeds = [replication_seed(root_seed, r) for r in range(replications)]
    logger.info("Running %d replication(s) of %s on %d worker(s)", replications, experiment.name, workers)

    if workers <= 1:
        results = [_run_one(experiment, r, s) for r, s in enumerate(seeds)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, experiment, r, s) for r, s in enumerate(seeds)]
            results = [future.result() for future in futures]

    for r, (result, seed) in enumerate(zip(results, seeds)):
        result.setdefault('replication', r)
        result.setdefault('seed', seed)
    return results
