import numpy as np
import pytest

from noisefree_bo.errors import FactorizationFailure
from noisefree_bo.kernels import (
    KernelFamily, KernelSpec, LengthscaleGrid, as_points, correlation, eval_kernel, factorize,
    fit_hyperparameters, gram_matrix, log_marginal_likelihood, matern_bessel,
)


def test_squared_exponential_matches_formula():
    spec = KernelSpec(KernelFamily.SQUARED_EXPONENTIAL, lengthscale=2.0)
    x, y = np.array([1.0, 2.0]), np.array([4.0, 6.0])
    expected = np.exp(-0.5 * 25.0 / 4.0)
    assert abs(eval_kernel(spec, x, y) - expected) < 1e-12


@pytest.mark.parametrize("nu", [0.5, 1.5, 2.5])
def test_closed_form_matern_matches_bessel_form(nu):
    """The half-integer shortcuts agree with the general Bessel expression."""
    r = np.linspace(0.01, 4.0, 50)
    closed = correlation(KernelSpec(lengthscale=0.7, nu=nu), r)
    np.testing.assert_allclose(closed, matern_bessel(nu, r / 0.7), rtol=1e-10, atol=1e-14)


def test_general_matern_is_one_at_zero_and_decreasing():
    spec = KernelSpec(lengthscale=1.0, nu=3.7)
    values = correlation(spec, np.array([0.0, 1e-12, 0.1, 1.0, 5.0, 50.0]))
    assert values[0] == 1.0
    assert np.all(np.diff(values) <= 1e-15)
    assert 0 <= values[-1] < 1e-20


def test_matern_bessel_survives_large_distances():
    values = matern_bessel(4.2, np.array([1e3, 1e5]))
    assert np.all(np.isfinite(values))
    assert np.all(values >= 0)


def test_eval_kernel_rejects_dimension_mismatch():
    with pytest.raises(ValueError, match="Dimension mismatch"):
        eval_kernel(KernelSpec(), [0.0, 1.0], [0.0])


def test_eval_kernel_rejects_non_finite_points():
    with pytest.raises(ValueError, match="finite"):
        eval_kernel(KernelSpec(), [np.nan], [0.0])


@pytest.mark.parametrize("kwargs", [{"lengthscale": 0.0}, {"lengthscale": -1.0}, {"nu": 0.0}])
def test_kernel_spec_validates(kwargs):
    with pytest.raises(ValueError):
        KernelSpec(**kwargs)


def test_gram_matrix_is_symmetric_with_unit_diagonal():
    rng = np.random.default_rng(3)
    X = rng.random((15, 3))
    K = gram_matrix(KernelSpec(lengthscale=0.4), X)
    np.testing.assert_allclose(K, K.T)
    np.testing.assert_array_equal(np.diag(K), np.ones(15))
    assert np.linalg.eigvalsh(K).min() > -1e-10


def test_as_points_reads_flat_sequences_as_one_dimensional():
    assert as_points([0.0, 0.5, 1.0]).shape == (3, 1)


def test_factorize_escalates_jitter_for_singular_matrix(caplog):
    K = np.ones((3, 3))
    L, jitter = factorize(K)
    assert jitter > 0
    np.testing.assert_allclose(L @ L.T, K + jitter * np.eye(3), atol=1e-12)
    assert "jitter escalation" in caplog.text


def test_factorize_raises_when_ladder_exhausted():
    K = -np.eye(2)
    with pytest.raises(FactorizationFailure):
        factorize(K)


def test_log_marginal_likelihood_matches_hand_computation():
    spec = KernelSpec(KernelFamily.SQUARED_EXPONENTIAL, lengthscale=1.0)
    X = np.array([[0.0], [1.0]])
    F = np.array([0.0, 1.0])
    K = np.array([[1.0, np.exp(-0.5)], [np.exp(-0.5), 1.0]])
    L = np.linalg.cholesky(K)
    alpha = np.linalg.solve(K, F)
    expected = -0.5 * F @ alpha - np.sum(np.log(np.diag(L))) - np.log(2 * np.pi)
    assert abs(log_marginal_likelihood(spec, X, F) - expected) < 1e-10


def test_log_marginal_likelihood_needs_matching_lengths():
    with pytest.raises(ValueError):
        log_marginal_likelihood(KernelSpec(), [[0.0], [1.0]], [1.0])


def test_lengthscale_grid_spans_diameter():
    grid = LengthscaleGrid.for_diameter(2.0)
    assert len(grid.values) == 25
    assert grid.values[0] == pytest.approx(0.02)
    assert grid.values[-1] == pytest.approx(200.0)


def test_fit_hyperparameters_prefers_smooth_lengthscale_for_smooth_data():
    X = np.linspace(0, 1, 12)[:, None]
    F = np.sin(2 * np.pi * X[:, 0])
    fitted = fit_hyperparameters(KernelSpec(nu=2.5), X, F, LengthscaleGrid.log_spaced(0.01, 10.0, 25))
    assert 0.05 < fitted.lengthscale < 2.0
    assert fitted.nu == 2.5


def test_fit_hyperparameters_breaks_ties_toward_smallest():
    X = np.array([[0.0], [1.0]])
    F = np.zeros(2)
    # identical evidence for any lengthscale so small that the points decorrelate
    fitted = fit_hyperparameters(KernelSpec(), X, F, LengthscaleGrid((1e-4, 1e-3)))
    assert fitted.lengthscale == 1e-4


def test_fit_hyperparameters_needs_two_points():
    with pytest.raises(ValueError):
        fit_hyperparameters(KernelSpec(), [[0.0]], [1.0])


def test_gram_matrix_is_positive_semidefinite_on_random_point_sets():
    rng = np.random.default_rng(21)
    for _ in range(100):
        n, d = rng.integers(1, 21), rng.integers(1, 4)
        spec = KernelSpec(lengthscale=float(rng.uniform(0.05, 2.0)), nu=float(rng.choice([0.5, 1.5, 2.5, 3.0])))
        K = gram_matrix(spec, rng.random((n, d)))
        assert np.linalg.eigvalsh(K).min() >= -1e-8


def test_fit_hyperparameters_recovers_lengthscale_of_gp_draws():
    search = LengthscaleGrid((0.25, 0.5, 1.0, 2.0, 4.0))
    truth = KernelSpec(lengthscale=1.0)
    hits = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        X = rng.uniform(0.0, 10.0, (30, 1))
        L = np.linalg.cholesky(gram_matrix(truth, X) + 1e-10 * np.eye(30))
        F = L @ rng.standard_normal(30)
        hits += fit_hyperparameters(KernelSpec(lengthscale=0.25), X, F, search).lengthscale == 1.0
    assert hits > 25
