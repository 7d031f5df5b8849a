import logging

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import chisquare

from noisefree_bo.acquisition import MaximizerBudget
from noisefree_bo.bo_loops import Algorithm, BOConfig
from noisefree_bo.dynamics import ForwardMapSpec, IntegratorConfig, SystemKind, forward_map
from noisefree_bo.errors import GPConsistencyError, IntegrationError, SamplerError
from noisefree_bo.gp import TrainingSet, fit
from noisefree_bo.inference import (
    LORENZ_DOMAIN, ROSSLER_DOMAIN, EnergyFunction, LogDensityTarget, build_surrogate, density_from_energies,
    energy, grid_energies, hellinger, l2_grid_difference, lhs_nodes, midpoint_grid, normalize, rejection_sample,
    rossler_energy, rwmh_sample, surrogate_density, trapezoid_grid_1d, true_density_oracle,
)
from noisefree_bo.kernels import KernelSpec
from noisefree_bo.objectives import SearchDomain

SHORT_ROSSLER = ForwardMapSpec(SystemKind.ROSSLER, (1.0, 3.0), IntegratorConfig(output_dt=0.01))
LINE = SearchDomain((-5.0,), (5.0,))
UNIT = SearchDomain((0.0,), (1.0,))


def gaussian_target(mean=1.0, sd=1.0, domain=LINE):
    return LogDensityTarget(domain, lambda X: -0.5 * ((X[:, 0] - mean) / sd) ** 2)


def gaussian_density(x, mean, sd=1.0):
    return np.exp(-0.5 * ((x - mean) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))


def test_energy_combines_misfit_and_prior():
    V = EnergyFunction(np.ones(9), 2.0 * np.ones(9), (6.0,), (4.0,), SHORT_ROSSLER, 'rossler')
    assert V.from_moments(5.0, np.zeros(9)) == pytest.approx(-0.5 * 9 * 0.5 - 0.5 * 0.25)
    assert V.dim == 1


def test_energy_evaluates_forward_map():
    V = rossler_energy(np.zeros(9), np.ones(9), SHORT_ROSSLER)
    assert energy(V, 5.0) == pytest.approx(V.from_moments(5.0, forward_map(5.0, SHORT_ROSSLER)))
    assert V(5.0) == energy(V, 5.0)


def test_energy_rejects_bad_covariances():
    with pytest.raises(ValueError, match="positive diagonal"):
        rossler_energy(np.zeros(9), np.zeros(9), SHORT_ROSSLER)
    with pytest.raises(ValueError):
        rossler_energy(np.zeros(9), np.ones(4), SHORT_ROSSLER)


def test_trapezoid_grid_covers_the_interval():
    grid = trapezoid_grid_1d(ROSSLER_DOMAIN, 1401)
    assert len(grid) == 1401
    assert grid.volume == pytest.approx(13.0)
    assert grid.weights[0] == pytest.approx(0.5 * grid.weights[1])
    assert grid.nodes[0, 0] == 1.0 and grid.nodes[-1, 0] == 14.0


def test_trapezoid_grid_needs_one_dimension():
    with pytest.raises(ValueError):
        trapezoid_grid_1d(LORENZ_DOMAIN, 10)


def test_midpoint_grid_weights_sum_to_volume():
    grid = midpoint_grid(LORENZ_DOMAIN, 8)
    assert grid.nodes.shape == (512, 3)
    assert grid.volume == pytest.approx(LORENZ_DOMAIN.volume)
    assert np.all([LORENZ_DOMAIN.contains(x) for x in grid.nodes])


def test_lhs_nodes_have_equal_weights():
    grid = lhs_nodes(LORENZ_DOMAIN, 100, np.random.default_rng(0))
    assert grid.describe() == {'kind': 'lhs', 'size': 100, 'dim': 3}
    np.testing.assert_allclose(grid.weights, LORENZ_DOMAIN.volume / 100)


def test_hellinger_matches_closed_form_for_gaussians():
    grid = trapezoid_grid_1d(SearchDomain((-10.0,), (10.0,)), 4001)
    x = grid.nodes[:, 0]
    p, q = gaussian_density(x, 0.0), gaussian_density(x, 1.0)
    expected = np.sqrt(1.0 - np.exp(-1.0 / 8.0))
    assert hellinger(p, q, grid.weights) == pytest.approx(expected, abs=1e-4)


def test_hellinger_is_a_metric_on_examples():
    grid = trapezoid_grid_1d(SearchDomain((-10.0,), (10.0,)), 4001)
    x = grid.nodes[:, 0]
    p, q, r = (gaussian_density(x, m) for m in (0.0, 0.5, 1.0))
    w = grid.weights
    assert hellinger(p, p, w) == 0.0
    assert hellinger(p, r, w) == pytest.approx(hellinger(r, p, w))
    assert hellinger(p, r, w) <= hellinger(p, q, w) + hellinger(q, r, w)


def test_hellinger_rejects_unnormalized_density():
    w = np.full(4, 0.25)
    with pytest.raises(ValueError, match="integrates to"):
        hellinger(np.ones(4), 2 * np.ones(4), w)


def test_l2_grid_difference():
    assert l2_grid_difference([3.0, 0.0], [0.0, 4.0]) == 5.0
    with pytest.raises(ValueError):
        l2_grid_difference([1.0], [1.0, 2.0])


def test_rejection_sampler_reproduces_gaussian_moments():
    samples = rejection_sample(gaussian_target(), 20000, np.random.default_rng(0))
    assert samples.points.shape == (20000, 1)
    assert abs(samples.points.mean() - 1.0) < 3.0 / np.sqrt(20000)
    assert samples.points.var() == pytest.approx(1.0, rel=0.05)


def test_rejection_sampler_on_flat_target_accepts_at_envelope_rate():
    flat = LogDensityTarget(UNIT, lambda X: np.zeros(X.shape[0]))
    samples = rejection_sample(flat, 5000, np.random.default_rng(1))
    assert samples.acceptance_rate == pytest.approx(1 / 1.05, abs=0.02)


def test_rejection_samples_from_flat_target_are_uniform():
    flat = LogDensityTarget(UNIT, lambda X: np.zeros(X.shape[0]))
    samples = rejection_sample(flat, 5000, np.random.default_rng(5))
    counts, _ = np.histogram(samples.points[:, 0], bins=10, range=(0.0, 1.0))
    assert chisquare(counts).pvalue > 0.01


def test_rejection_sampler_gives_up_on_peaked_target():
    square = SearchDomain((0.0, 0.0), (1.0, 1.0))
    peaked = LogDensityTarget(square, lambda X: -1e8 * np.sum((X - 0.5) ** 2, axis=1))
    with pytest.raises(SamplerError):
        rejection_sample(peaked, 10, np.random.default_rng(2))


def test_random_walk_reproduces_gaussian_moments():
    samples = rwmh_sample(gaussian_target(), n_iter=60000, burn_in=10000, step_cov=[2.0],
                          rng=np.random.default_rng(3))
    assert samples.points.shape == (50000, 1)
    assert 0.2 < samples.acceptance_rate < 0.9
    assert samples.points.mean() == pytest.approx(1.0, abs=0.1)
    assert samples.points.var() == pytest.approx(1.0, rel=0.1)


def test_random_walk_never_leaves_the_domain():
    flat = LogDensityTarget(UNIT, lambda X: np.zeros(X.shape[0]))
    samples = rwmh_sample(flat, n_iter=2000, burn_in=0, step_cov=[1.0], rng=np.random.default_rng(4))
    assert np.all((samples.points >= 0.0) & (samples.points <= 1.0))
    assert samples.acceptance_rate < 1.0


def test_random_walk_with_tiny_steps_on_flat_target_accepts_almost_everything():
    flat = LogDensityTarget(SearchDomain((0.0, 0.0), (1.0, 1.0)), lambda X: np.zeros(X.shape[0]))
    samples = rwmh_sample(flat, n_iter=5000, burn_in=1000, step_cov=[1e-6, 1e-6], rng=np.random.default_rng(6))
    assert samples.acceptance_rate >= 0.95


def test_random_walk_validates_burn_in():
    with pytest.raises(ValueError):
        rwmh_sample(gaussian_target(), n_iter=100, burn_in=100)


def test_build_surrogate_spends_budget_and_normalizes():
    def V(x):
        return float(-2.0 * (x[0] - 0.3) ** 2)

    strategy = BOConfig(Algorithm.GPUCB_PLUS, T=0, domain=UNIT, maximizer_budget=MaximizerBudget(pool=200), seed=0)
    surrogate = build_surrogate(V, strategy, 12)
    assert surrogate.run.evaluations_used == 12
    assert len(surrogate.grid) == 1401

    expected_Z, _ = quad(lambda x: np.exp(-2.0 * (x - 0.3) ** 2), 0.0, 1.0)
    assert surrogate.Z == pytest.approx(expected_Z, rel=1e-2)

    assert surrogate.Z == pytest.approx(normalize(surrogate.model, UNIT, surrogate.grid))

    density = surrogate_density(surrogate, surrogate.grid)
    assert np.sum(surrogate.grid.weights * density) == pytest.approx(1.0)
    np.testing.assert_allclose(surrogate.density(surrogate.grid.nodes), density, rtol=1e-9)


def test_build_surrogate_rejects_improvement_strategies():
    with pytest.raises(ValueError, match="cannot build"):
        build_surrogate(lambda x: 0.0, BOConfig(Algorithm.EI, T=0, domain=UNIT), 10)


def test_grid_energies_are_cached(tmp_path, caplog):
    caplog.set_level(logging.INFO)
    calls = []

    def V(x):
        calls.append(x)
        return float(-x[0] ** 2)

    grid = trapezoid_grid_1d(UNIT, 11)
    path = str(tmp_path / "energies.npz")
    first = grid_energies(V, grid, cache_path=path)
    second = grid_energies(V, grid, cache_path=path)
    np.testing.assert_array_equal(first, second)
    assert len(calls) == 11
    assert "Loaded 11 cached energies" in caplog.text

    grid_energies(V, trapezoid_grid_1d(UNIT, 21), cache_path=path)
    assert len(calls) == 32
    assert "different grid" in caplog.text


def test_grid_energies_fail_when_too_many_nodes_fail():
    def V(x):
        raise IntegrationError("step size underflow")

    with pytest.raises(IntegrationError, match="grid energies failed"):
        grid_energies(V, trapezoid_grid_1d(UNIT, 5))


def test_zero_energy_gives_uniform_true_density():
    grid = trapezoid_grid_1d(ROSSLER_DOMAIN, 101)
    density = true_density_oracle(lambda x: 0.0, grid)
    np.testing.assert_allclose(density, 1.0 / 13.0)


def test_gaussian_energy_gives_gaussian_true_density():
    grid = trapezoid_grid_1d(LINE, 2001)
    density = true_density_oracle(lambda x: float(-0.5 * (x[0] - 1.0) ** 2), grid)
    np.testing.assert_allclose(density, gaussian_density(grid.nodes[:, 0], 1.0), rtol=1e-3, atol=1e-9)


def test_failed_nodes_get_zero_density():
    grid = trapezoid_grid_1d(UNIT, 3)
    density = density_from_energies(np.array([0.0, np.nan, 0.0]), grid)
    assert density[1] == 0.0
    assert np.sum(grid.weights * density) == pytest.approx(1.0)


def test_normalize_zero_mean_on_unit_interval():
    zero_mean = fit(KernelSpec(), TrainingSet([[0.5]], [0.0]))
    assert normalize(zero_mean, UNIT, trapezoid_grid_1d(UNIT, 1401)) == pytest.approx(1.0)


def test_normalize_constant_shift_scales_by_volume():
    domain = SearchDomain((0.0,), (3.0,))
    grid = trapezoid_grid_1d(domain, 1401)
    assert normalize(lambda X: np.full(len(X), 2.0), domain, grid) == pytest.approx(np.exp(2.0) * 3.0)


def test_normalize_gaussian_integral():
    domain = SearchDomain((-6.0,), (6.0,))
    Z = normalize(lambda X: -0.5 * X[:, 0] ** 2, domain, trapezoid_grid_1d(domain, 1401))
    assert abs(Z - np.sqrt(2 * np.pi)) <= 1e-6


def test_normalize_log_scale_survives_underflow():
    grid = trapezoid_grid_1d(UNIT, 101)
    assert normalize(lambda X: np.full(len(X), -2000.0), UNIT, grid, log_scale=True) == pytest.approx(-2000.0)
    with pytest.raises(GPConsistencyError):
        normalize(lambda X: np.full(len(X), -2000.0), UNIT, grid)


def test_rejection_sampler_with_no_samples_requested():
    flat = LogDensityTarget(UNIT, lambda X: np.zeros(X.shape[0]))
    samples = rejection_sample(flat, 0, np.random.default_rng(0))
    assert samples.points.shape == (0, 1)
    assert samples.proposals == 0


def test_rejection_and_random_walk_histograms_agree():
    target = gaussian_target()
    direct = rejection_sample(target, 40000, np.random.default_rng(7)).points[:, 0]
    chain = rwmh_sample(target, n_iter=210000, burn_in=10000, step_cov=[5.76],
                        rng=np.random.default_rng(8)).points[::5, 0]
    bins = np.linspace(-5.0, 5.0, 51)
    p = np.histogram(direct, bins=bins)[0] / len(direct)
    q = np.histogram(chain, bins=bins)[0] / len(chain)
    assert np.sum(np.abs(p - q)) <= 0.1
