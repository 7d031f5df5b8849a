import numpy as np
import pytest

from noisefree_bo.kernels import KernelSpec
from noisefree_bo.objectives import (
    ObjectiveId, SearchDomain, domain_for, eval_objective, make_objective, rkhs_objective,
)


@pytest.mark.parametrize("objective_id", ["ackley", "rastrigin", "levy"])
def test_benchmark_maximum_is_zero_at_known_optimum(objective_id):
    objective = make_objective(objective_id, dim=10)
    assert objective.f_star == 0.0
    assert abs(eval_objective(objective, objective.x_star)) < 1e-12


@pytest.mark.parametrize("objective_id", ["ackley", "rastrigin", "levy"])
def test_benchmarks_never_exceed_their_optimum(objective_id):
    objective = make_objective(objective_id, dim=10)
    X = objective.domain.sample(np.random.default_rng(0), 2000)
    assert np.all(objective.evaluate(X) <= 1e-12)


def test_standard_benchmark_domains():
    assert domain_for("ackley").lo[0] == -32.768
    assert domain_for("rastrigin", dim=3).hi == (5.12, 5.12, 5.12)
    assert domain_for("levy").dim == 10


def test_domain_for_rejects_objectives_without_fixed_domain():
    with pytest.raises(ValueError):
        domain_for(ObjectiveId.RKHS)


def test_rastrigin_value_at_integer_point():
    objective = make_objective("rastrigin", dim=2)
    assert objective([1.0, 0.0]) == pytest.approx(-1.0)


def test_quadratic_1d():
    objective = make_objective("quadratic1d")
    assert objective.f_star == 0.0
    assert objective(0.3) == 0.0
    assert objective(0.8) == pytest.approx(-0.25)


def test_out_of_domain_point_is_clipped_with_warning(caplog):
    objective = make_objective("quadratic1d")
    assert objective(1.5) == pytest.approx(-0.49)
    assert "outside" in caplog.text


def test_unknown_objective_id():
    with pytest.raises(ValueError):
        make_objective("sphere")


@pytest.mark.parametrize("lo, hi", [((0.0,), (0.0,)), ((1.0, 0.0), (2.0,)), ((), ())])
def test_degenerate_domains_rejected(lo, hi):
    with pytest.raises(ValueError):
        SearchDomain(lo, hi)


def test_domain_geometry():
    domain = SearchDomain((0.0, -1.0), (3.0, 3.0))
    assert domain.volume == 12.0
    assert domain.diameter == 5.0
    np.testing.assert_array_equal(domain.center, [1.5, 1.0])
    assert domain.contains([3.0, -1.0])
    assert not domain.contains([3.1, 0.0])


def test_latin_hypercube_has_one_point_per_stratum():
    domain = SearchDomain((0.0, 10.0), (1.0, 20.0))
    X = domain.latin_hypercube(8, np.random.default_rng(1))
    assert X.shape == (8, 2)
    U = (X - domain.lower) / domain.widths
    for j in range(2):
        assert sorted(np.floor(U[:, j] * 8).astype(int)) == list(range(8))


def test_rkhs_objective_maximum_and_norm():
    kernel = KernelSpec(lengthscale=0.2)
    objective = rkhs_objective(kernel, SearchDomain((0.0,), (1.0,)), 5, np.random.default_rng(2))
    grid = np.linspace(0, 1, 5001)[:, None]
    assert objective.f_star >= objective.evaluate(grid).max() - 1e-9
    assert objective.rkhs_norm > 0
    assert eval_objective(objective, objective.x_star) == pytest.approx(objective.f_star)
