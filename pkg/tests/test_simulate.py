import numpy as np
import pytest
from scipy import stats

from dagreg.core import mcd_compose
from dagreg.errors import CountTooLarge, ValidationError
from dagreg.rng import stream
from dagreg.simulate import SimSpec, generate, load_bundle, place_support, save_bundle


class TestSpec:
    def test_rejects_bad_scenario(self):
        with pytest.raises(ValidationError):
            SimSpec(scenario=6)
        with pytest.raises(ValidationError):
            SimSpec(scenario=1, setting=0)

    def test_dims_with_overrides(self):
        assert SimSpec(scenario=1).dims() == (100, 100, 50)
        assert SimSpec(scenario=1, n=10, p=20, q=5).dims() == (10, 20, 5)


class TestPlaceSupport:
    def test_zero_and_full(self):
        rng = stream(0, "s")
        assert place_support(rng, 3, 3, 0) == []
        cells = place_support(rng, 2, 3, 6)
        assert sorted(cells) == [(k, j) for k in range(2) for j in range(3)]

    def test_count_too_large(self):
        with pytest.raises(CountTooLarge):
            place_support(stream(0), 2, 2, 5)

    def test_chi_square_uniformity(self):
        # 10^4 single-cell placements on a 3x3 grid, 1% level
        rng = stream(123, "chi")
        counts = np.zeros(9)
        for _ in range(10_000):
            k, j = place_support(rng, 3, 3, 1)[0]
            counts[3 * k + j] += 1
        expected = 10_000 / 9.0
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        assert chi2 < stats.chi2.ppf(0.99, df=8)


class TestScenarios:
    def test_scenario1_counts(self):
        data, truth = generate(SimSpec(scenario=1, setting=1, seed=0))
        assert (data.n, data.p, data.q) == (100, 100, 50)
        assert truth.B0.Gamma.sum() == 20
        assert truth.dag0.n_edges == 10

    def test_scenario3_counts(self):
        data, truth = generate(SimSpec(scenario=3, setting=1, seed=1))
        assert (data.n, data.p, data.q) == (150, 300, 200)
        assert truth.B0.Gamma.sum() == 10
        assert truth.dag0.n_edges == 10

    def test_scenario2_counts(self):
        data, truth = generate(SimSpec(scenario=2, setting=1, seed=1))
        assert (data.n, data.p, data.q) == (100, 200, 200)
        assert truth.B0.Gamma.sum() == 40
        assert truth.dag0.n_edges == 40

    def test_scenario4_gamma_count(self):
        data, truth = generate(SimSpec(scenario=4, setting=1, seed=2, n=30, p=40, q=12))
        assert truth.B0.Gamma.sum() == 4  # p // 10

    def test_setting1_signal_range(self):
        _, truth = generate(SimSpec(scenario=1, setting=1, seed=2))
        nz = truth.B0.B[truth.B0.Gamma == 1]
        assert np.all((nz >= 1.5) & (nz <= 3.0))

    def test_setting2_signal_range(self):
        _, truth = generate(SimSpec(scenario=1, setting=2, seed=3))
        nz = np.abs(truth.B0.B[truth.B0.Gamma == 1])
        assert np.all((nz >= 1.5) & (nz <= 3.0))

    def test_setting4_asymmetric_union(self):
        _, truth = generate(SimSpec(scenario=2, setting=4, seed=4, n=20, p=400, q=5))
        nz = truth.B0.B[truth.B0.Gamma == 1]
        ok = ((nz >= -1.5) & (nz <= -0.5)) | ((nz >= 1.5) & (nz <= 3.0))
        assert ok.all()
        assert (nz < 0).any() and (nz > 0).any()

    def test_L0_entry_law_and_D0_range(self):
        _, truth = generate(SimSpec(scenario=1, setting=1, seed=5))
        mask = truth.dag0.edge_matrix().astype(bool)
        vals = np.abs(truth.L0D0.L[mask])
        assert np.all((vals >= 0.3) & (vals <= 0.7))
        assert np.all((truth.L0D0.d >= 2.0) & (truth.L0D0.d <= 5.0))

    def test_sigma0_is_inverse_of_composed_precision(self):
        _, truth = generate(SimSpec(scenario=1, setting=1, seed=6, n=20, p=10, q=8))
        omega0 = mcd_compose(truth.L0D0)
        assert np.allclose(truth.Sigma0 @ omega0, np.eye(8), atol=1e-8)

    def test_scenario4_lambda_min_is_exactly_floored(self):
        _, truth = generate(SimSpec(scenario=4, setting=1, seed=7, n=20, p=10))
        lam = np.linalg.eigvalsh(truth.Sigma0).min()
        assert abs(lam - 0.01) < 1e-10

    def test_scenario4_truth_matches_shuffled_covariance(self):
        _, truth = generate(SimSpec(scenario=4, setting=1, seed=8, n=30, p=10, q=20))
        omega0 = mcd_compose(truth.L0D0)
        assert np.allclose(omega0 @ truth.Sigma0, np.eye(20), atol=1e-6)

    def test_scenario5_mixed_values(self):
        _, truth = generate(SimSpec(scenario=5, setting=1, seed=9))
        nz = truth.B0.B[truth.B0.Gamma == 1]
        assert truth.B0.Gamma.sum() == 20
        assert (nz == 1.5).sum() == 5
        assert (nz == 1.0).sum() == 5
        small = nz[(nz != 1.5) & (nz != 1.0)]
        assert len(small) == 10 and np.all((small >= 0.0) & (small < 0.3))

    def test_error_covariance_converges(self):
        # long-run sample covariance of the simulated errors approaches Sigma0
        spec = SimSpec(scenario=1, setting=1, seed=10, n=5000, p=10, q=12)
        data, truth = generate(spec)
        e = data.Y - data.X @ truth.B0.B
        s = e.T @ e / data.n
        rel = np.linalg.norm(s - truth.Sigma0) / np.linalg.norm(truth.Sigma0)
        assert rel <= 0.15

    def test_determinism(self):
        d1, t1 = generate(SimSpec(scenario=1, setting=3, seed=11, n=15, p=8, q=4))
        d2, t2 = generate(SimSpec(scenario=1, setting=3, seed=11, n=15, p=8, q=4))
        assert np.array_equal(d1.X, d2.X) and np.array_equal(d1.Y, d2.Y)
        assert np.array_equal(t1.L0D0.L, t2.L0D0.L)
        d3, _ = generate(SimSpec(scenario=1, setting=3, seed=12, n=15, p=8, q=4))
        assert not np.array_equal(d1.Y, d3.Y)


class TestBundleIo:
    def test_roundtrip(self, tmp_path):
        spec = SimSpec(scenario=1, setting=2, seed=3, n=12, p=6, q=4)
        data, truth = generate(spec)
        root = save_bundle(tmp_path, spec, data, truth)
        assert root.name == "1_2_3"
        data2, truth2, manifest = load_bundle(root)
        assert np.array_equal(data.X, data2.X)
        assert np.array_equal(truth.B0.B, truth2.B0.B)
        assert truth.dag0 == truth2.dag0
        assert np.array_equal(truth.Sigma0, truth2.Sigma0)
        assert manifest["scenario"] == 1 and manifest["seed"] == 3
