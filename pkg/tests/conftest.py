import pytest

from noisefree_bo import config as bo_config


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow statistical checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    """Run replications and grid energies in-process."""
    monkeypatch.setattr(bo_config, "THREADS", 1)
