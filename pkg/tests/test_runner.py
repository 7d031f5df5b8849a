import pytest

from noisefree_bo import runner
from noisefree_bo.runner import MASK64, replication_seed, run_replications, splitmix64


class RecordingExperiment:
    """Stand-in with the two members the runner touches."""
    name = 'RecordingExperiment'

    def safe_run(self, replication, seed):
        return {'value': replication * 10}


class FailingExperiment(RecordingExperiment):
    def safe_run(self, replication, seed):
        if replication == 2:
            raise RuntimeError("replication blew up")
        return {}


def test_splitmix64_known_value():
    # first output of the reference generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF


def test_replication_seeds_are_deterministic_and_distinct():
    seeds = [replication_seed(42, r) for r in range(1000)]
    assert seeds == [replication_seed(42, r) for r in range(1000)]
    assert len(set(seeds)) == 1000
    assert all(0 <= s <= MASK64 for s in seeds)
    assert replication_seed(43, 0) != seeds[0]


def test_negative_root_seed_is_masked():
    assert 0 <= replication_seed(-1, 0) <= MASK64


def test_results_come_back_in_order_with_seeds():
    results = run_replications(RecordingExperiment(), 4, root_seed=7, workers=1)
    assert [r['replication'] for r in results] == [0, 1, 2, 3]
    assert [r['value'] for r in results] == [0, 10, 20, 30]
    assert [r['seed'] for r in results] == [replication_seed(7, r) for r in range(4)]


def test_worker_count_defaults_to_thread_cap(monkeypatch):
    used = []
    monkeypatch.setattr(runner.config, 'THREADS', 1)
    monkeypatch.setattr(runner, '_run_one', lambda experiment, r, s: used.append(r) or {})
    run_replications(RecordingExperiment(), 3, root_seed=0)
    assert used == [0, 1, 2]


def test_failure_propagates():
    with pytest.raises(RuntimeError, match="blew up"):
        run_replications(FailingExperiment(), 4, root_seed=0, workers=1)
