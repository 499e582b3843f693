import math

import numpy as np
import pytest
from scipy import stats

from dagreg.core import OrderedDag
from dagreg.dag_wishart import (
    DagWishartParams,
    d_shape_rate,
    log_parent_set_target,
    log_prior_dag,
    log_zeta_j,
    posterior_mean_L_column,
    posterior_mode_d_j,
    sample_L_column,
    sample_d_j,
)
from dagreg.errors import CapExceeded, InvalidShape, ValidationError

from helpers import all_subsets, random_spd, zeta_importance_sample


class TestParams:
    def test_defaults(self):
        p = DagWishartParams.default(4)
        assert np.array_equal(p.U, np.eye(4))
        assert p.eta2 == 0.25 and p.c == 10.0

    def test_validation(self):
        with pytest.raises(ValidationError):
            DagWishartParams(np.eye(3), c=2.0)
        with pytest.raises(ValidationError):
            DagWishartParams(np.eye(3), eta2=1.0)
        with pytest.raises(ValidationError):
            DagWishartParams(-np.eye(3))


class TestLogZeta:
    def test_no_parents_unit_scale(self):
        # Gamma(4) * 2^4 = 96 with phi = 10, nu = 0, A_jj = 1
        dag = OrderedDag.empty(1)
        assert abs(log_zeta_j(np.eye(1), 10.0, dag, 0) - math.log(96.0)) < 1e-12

    def test_no_parents_scale_e(self):
        dag = OrderedDag.empty(1)
        got = log_zeta_j(np.array([[math.e]]), 10.0, dag, 0)
        assert abs(got - (math.log(96.0) - 4.0)) < 1e-12

    def test_one_parent_identity(self):
        dag = OrderedDag(2, ((1,), ()))
        got = log_zeta_j(np.eye(2), 11.0, dag, 0)
        want = math.lgamma(4.0) + 4.5 * math.log(2.0) + 0.5 * math.log(math.pi)
        assert abs(got - want) < 1e-12

    def test_invalid_shape(self):
        dag = OrderedDag(2, ((1,), ()))
        with pytest.raises(InvalidShape):
            log_zeta_j(np.eye(2), 3.0, dag, 0)  # phi - nu = 2

    def test_matches_importance_sampling(self):
        # smaller sibling of acceptance criterion 5
        rng = np.random.default_rng(42)
        U = random_spd(np.random.default_rng(5), 4, cond=3.0)
        for parents, j in [((), 0), ((2,), 0), ((1, 3), 0)]:
            nu = len(parents)
            phi = nu + 10.0
            dag_parents = [()] * 4
            dag_parents[j] = parents
            dag = OrderedDag(4, tuple(dag_parents))
            exact = log_zeta_j(U, phi, dag, j)
            approx = zeta_importance_sample(rng, U, phi, parents, j, 60_000)
            assert abs(math.exp(approx - exact) - 1.0) < 0.01


class TestLogPriorDag:
    def test_empty_dag_half(self):
        params = DagWishartParams(np.eye(3), eta2=0.5)
        got = log_prior_dag(OrderedDag.empty(3), params)
        assert abs(got - 3.0 * math.log(0.5)) < 1e-12

    def test_full_dag_half_symmetry(self):
        params = DagWishartParams(np.eye(3), eta2=0.5)
        full = OrderedDag(3, ((1, 2), (2,), ()))
        assert abs(log_prior_dag(full, params) - 3.0 * math.log(0.5)) < 1e-12

    def test_term_by_term(self):
        params = DagWishartParams(np.eye(3), eta2=0.1)
        dag = OrderedDag(3, ((2,), (), ()))
        want = math.log(0.1) + 2.0 * math.log(0.9)
        assert abs(log_prior_dag(dag, params) - want) < 1e-12

    def test_sums_to_one_over_all_dags(self):
        params = DagWishartParams(np.eye(3), eta2=0.3)
        total = 0.0
        for pa0 in all_subsets((1, 2)):
            for pa1 in all_subsets((2,)):
                dag = OrderedDag(3, (pa0, pa1, ()))
                total += math.exp(log_prior_dag(dag, params))
        assert abs(total - 1.0) < 1e-12

    def test_cap_exceeded(self):
        params = DagWishartParams(np.eye(3), eta2=0.3, max_parents=(1, 1, 0))
        with pytest.raises(CapExceeded):
            log_prior_dag(OrderedDag(3, ((1, 2), (), ())), params)


class TestDSamplers:
    def test_shape_rate_values(self):
        shape, rate = d_shape_rate(100, 10.0, 1.0)
        assert shape == 54.0 and rate == 50.0

    def test_mode_value_and_grid_oracle(self):
        dag = OrderedDag.empty(1)
        mode = posterior_mode_d_j(np.eye(1), dag, 0, 100, 10.0)
        assert abs(mode - 50.0 / 55.0) < 1e-12
        # grid maximization of the inverse-gamma log density
        grid = np.linspace(0.5, 1.5, 200_001)
        logpdf = stats.invgamma.logpdf(grid, 54.0, scale=50.0)
        assert abs(grid[np.argmax(logpdf)] - mode) < 1e-5

    def test_mode_scales_linearly_in_rate(self):
        dag = OrderedDag.empty(1)
        m1 = posterior_mode_d_j(np.array([[1.0]]), dag, 0, 50, 10.0)
        m2 = posterior_mode_d_j(np.array([[2.0]]), dag, 0, 50, 10.0)
        assert abs(m2 - 2.0 * m1) < 1e-12

    def test_mode_below_mean(self):
        shape, rate = d_shape_rate(100, 10.0, 2.0)
        assert rate / (shape + 1.0) < rate / (shape - 1.0)

    def test_monte_carlo_mean(self):
        rng = np.random.default_rng(3)
        dag = OrderedDag.empty(1)
        draws = np.array([sample_d_j(rng, np.eye(1), dag, 0, 100, 10.0) for _ in range(100_000)])
        shape, rate = d_shape_rate(100, 10.0, 1.0)
        assert abs(draws.mean() - rate / (shape - 1.0)) < 0.01 * rate / (shape - 1.0)
        assert (draws > 0).all()

    def test_last_vertex_forms_coincide(self):
        # nu_q = 0 so the step-3 and step-4 parameterizations agree
        dag = OrderedDag.empty(2)
        a = np.diag([2.0, 3.0])
        s1 = sample_d_j(np.random.default_rng(9), a, dag, 1, 50, 10.0)
        s2 = sample_d_j(np.random.default_rng(9), a, dag, 1, 50, 10.0)
        assert s1 == s2 > 0


class TestLColumn:
    def test_empty_parent_set(self):
        dag = OrderedDag.empty(2)
        rng = np.random.default_rng(0)
        assert sample_L_column(rng, np.eye(2), 1.0, dag, 0, 10).size == 0
        assert posterior_mean_L_column(np.eye(2), dag, 0).size == 0

    def test_posterior_mean_diagonal_scale(self):
        dag = OrderedDag(3, ((1, 2), (), ()))
        mean = posterior_mean_L_column(np.diag([1.0, 4.0, 2.0]), dag, 0)
        assert np.allclose(mean, np.zeros(2))

    def test_posterior_mean_direct_solve(self):
        # A^{>j} = diag(4, 2), A_{.j} = (2, -1) -> mean = (-0.5, 0.5)
        A = np.array([[1.0, 2.0, -1.0], [2.0, 4.0, 0.0], [-1.0, 0.0, 2.0]])
        dag = OrderedDag(3, ((1, 2), (), ()))
        assert np.allclose(posterior_mean_L_column(A, dag, 0), [-0.5, 0.5])

    def test_mean_one_parent(self):
        # A^{>j} = [[2]], A_{.j} = (1) -> mean -0.5
        A = np.array([[1.0, 1.0], [1.0, 2.0]])
        dag = OrderedDag(2, ((1,), ()))
        assert np.allclose(posterior_mean_L_column(A, dag, 0), [-0.5])

    def test_monte_carlo_moments_identity(self):
        rng = np.random.default_rng(17)
        dag = OrderedDag(3, ((1, 2), (), ()))
        n = 4
        draws = np.array([sample_L_column(rng, np.eye(3), 1.0, dag, 0, n) for _ in range(100_000)])
        se = math.sqrt(1.0 / n / draws.shape[0])
        assert np.abs(draws.mean(axis=0)).max() < 4.0 * se
        cov = np.cov(draws.T)
        assert np.allclose(cov, np.eye(2) / n, atol=0.02 / n + 0.01)


class TestPriorParameterization:
    """Drawing with the prior's (U, shapes) reproduces the prior moments."""

    def test_d_prior_moments(self):
        # prior: d ~ InvGamma(c/2 - 1, U_{j|pa}/2); realized by n = 1, c - 1
        rng = np.random.default_rng(23)
        c = 10.0
        U = np.array([[3.0, 0.5], [0.5, 2.0]])
        dag = OrderedDag(2, ((1,), ()))
        schur = 3.0 - 0.25 / 2.0
        draws = np.array([sample_d_j(rng, U, dag, 0, 1, c - 1.0) for _ in range(200_000)])
        a, b = c / 2.0 - 1.0, schur / 2.0
        mean = b / (a - 1.0)
        var = b**2 / ((a - 1.0) ** 2 * (a - 2.0))
        assert abs(draws.mean() - mean) < 4.0 * math.sqrt(var / draws.size) + 1e-3
        assert abs(draws.var() - var) / var < 0.05

    def test_L_prior_moments(self):
        # prior: L^> | d ~ N(-(U^{>j})^{-1} U_{.j}, d (U^{>j})^{-1}); n = 1
        rng = np.random.default_rng(29)
        U = np.array([[2.0, 0.6, 0.2], [0.6, 1.5, 0.3], [0.2, 0.3, 1.2]])
        dag = OrderedDag(3, ((1, 2), (), ()))
        d_j = 0.7
        block = U[1:, 1:]
        mean_true = -np.linalg.solve(block, U[1:, 0])
        cov_true = d_j * np.linalg.inv(block)
        draws = np.array([sample_L_column(rng, U, d_j, dag, 0, 1) for _ in range(100_000)])
        se = np.sqrt(np.diag(cov_true) / draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - mean_true) < 4.0 * se)
        assert np.allclose(np.cov(draws.T), cov_true, rtol=0.05, atol=0.01)


class TestParentSetTarget:
    def test_identity_fast_path_matches_generic_zeta(self):
        rng = np.random.default_rng(30)
        S = random_spd(rng, 4)
        n = 30
        params = DagWishartParams.default(4, eta2=0.2)
        scaled = DagWishartParams(2.0 * np.eye(4), eta2=0.2)  # generic path
        n_stilde = n * S + np.eye(4)
        for pa, j in [((), 0), ((2,), 0), ((1, 3), 0), ((3,), 1)]:
            dag_parents = [()] * 4
            dag_parents[j] = pa
            dag = OrderedDag(4, tuple(dag_parents))
            fast = log_parent_set_target(dag, j, n_stilde, params, n)
            # rebuild the fast-path value from the generic zeta on U = I
            phi = len(pa) + params.c
            want = (
                log_zeta_j(n_stilde, phi + n, dag, j)
                - log_zeta_j(np.eye(4), phi, dag, j)
                + len(pa) * math.log(params.eta2)
                + (4 - (j + 1) - len(pa)) * math.log1p(-params.eta2)
            )
            assert abs(fast - want) < 1e-12
            assert math.isfinite(log_parent_set_target(dag, j, n_stilde, scaled, n))

    def test_target_is_finite_and_cap_respected(self):
        rng = np.random.default_rng(31)
        q = 4
        S = random_spd(rng, q)
        n = 50
        params = DagWishartParams.default(q)
        n_stilde = n * S + params.U
        dag = OrderedDag(q, ((1, 2), (), (), ()))
        assert math.isfinite(log_parent_set_target(dag, 0, n_stilde, params, n))
        capped = DagWishartParams(np.eye(q), eta2=0.25, max_parents=(1, 1, 1, 0))
        assert log_parent_set_target(dag, 0, n_stilde, capped, n) == -math.inf
