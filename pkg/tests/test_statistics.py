import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import chi2

from spikedcov.estimators import ModelDims, SampleCovariances, SpikeEstimates
from spikedcov.montecarlo import (
    _group_factors,
    _sample_groups,
    _trial_rng,
    sample_complex_gaussian,
    scenario_preset,
)
from spikedcov.statistics import (
    Calibration,
    DegenerateSpike,
    IllConditioned,
    SingularCovariance,
    calibrate_threshold,
    chi2_statistic,
    compute_statistic,
    contrast_matrix,
    fisher_consistency_thresholds,
    fisher_edges,
    fisher_statistic,
    gaussian_quadratic_quantiles,
    glr_limit,
    glr_lr_limit,
    glr_lr_statistic,
    glr_statistic,
    theta_determinant,
    theta_matrix,
    upsilon_hat,
    wishart_statistic,
)

DIMS_EQUAL = ModelDims(M=10, N=(20, 20), K=1)  # c_groups = 0.5, c_pooled = 0.25


def _estimates(sigma2, gamma_pooled, gamma_per_group):
    gamma_pooled = np.asarray(gamma_pooled, dtype=float)
    gamma_per_group = np.asarray(gamma_per_group, dtype=float)
    diff = (gamma_pooled[:, None] - gamma_per_group).ravel()
    return SpikeEstimates(
        sigma2_hat=sigma2,
        gamma_pooled=gamma_pooled,
        gamma_per_group=gamma_per_group,
        diff_vector=diff,
    )


def _covs_from_eigvals(eig_groups, eig_pooled):
    eig_groups = np.asarray(eig_groups, dtype=float)
    m = eig_groups.shape[1]
    eye = np.eye(m, dtype=complex)
    return SampleCovariances(
        per_group=tuple(eye for _ in range(eig_groups.shape[0])),
        pooled=eye,
        eigvals_per_group=eig_groups,
        eigvals_pooled=np.asarray(eig_pooled, dtype=float),
    )


class TestWishartStatistic:
    def test_squared_norm(self):
        est = _estimates(0.5, [3.0], [[2.0, 0.0]])
        # diff = (1, 3) -> 1 + 9
        assert wishart_statistic(est) == pytest.approx(10.0)

    def test_zero_at_equality(self):
        est = _estimates(0.5, [3.0, 1.5], [[3.0, 3.0], [1.5, 1.5]])
        assert wishart_statistic(est) == 0.0


class TestContrastMatrix:
    def test_hand_rows(self):
        h = contrast_matrix(2, 2)
        expected = np.array(
            [
                [1, -1, 0, 0, 0, 0],
                [1, 0, -1, 0, 0, 0],
                [0, 0, 0, 1, -1, 0],
                [0, 0, 0, 1, 0, -1],
            ],
            dtype=float,
        )
        assert_allclose(h, expected)

    def test_maps_stacked_deviations_to_differences(self):
        rng = np.random.default_rng(0)
        k_spikes, n_groups = 3, 4
        pooled = rng.standard_normal(k_spikes)
        groups = rng.standard_normal((k_spikes, n_groups))
        stacked = np.concatenate(
            [np.r_[pooled[k], groups[k]] for k in range(k_spikes)]
        )
        h = contrast_matrix(k_spikes, n_groups)
        assert_allclose(h @ stacked, (pooled[:, None] - groups).ravel(), rtol=1e-14)


class TestThetaMatrix:
    def test_frozen_single_spike(self):
        clt = theta_matrix([2.0], 0.5, DIMS_EQUAL)
        t = clt.theta
        assert t.shape == (3, 3)
        assert t[1, 1] == pytest.approx(3.02734375, rel=1e-14)
        assert t[2, 2] == pytest.approx(3.02734375, rel=1e-14)
        assert t[0, 0] == pytest.approx(1.5380859375, rel=1e-14)
        assert t[0, 1] == pytest.approx(1.513671875, rel=1e-14)
        assert t[1, 0] == t[0, 1]
        assert t[1, 2] == 0.0  # groups are asymptotically independent

    def test_two_spikes_block_diagonal(self):
        clt = theta_matrix([2.0, 1.0], 0.5, DIMS_EQUAL)
        assert clt.theta.shape == (6, 6)
        assert clt.block_size == 3
        assert clt.n_blocks == 2
        assert_allclose(clt.theta[:3, 3:], 0.0)
        assert_allclose(clt.block(0), theta_matrix([2.0], 0.5, DIMS_EQUAL).theta)
        assert clt.block(1)[1, 1] == pytest.approx(0.984375, rel=1e-14)
        assert clt.block(1)[0, 0] == pytest.approx(0.52734375, rel=1e-14)

    def test_positive_semidefinite(self):
        dims = ModelDims(M=10, N=(20, 30, 50), K=2)
        clt = theta_matrix([4.0, 2.0], 1.0, dims)
        assert np.linalg.eigvalsh(clt.theta).min() > -1e-12

    def test_rejects_nondecreasing_strengths(self):
        with pytest.raises(ValueError, match="decreasing"):
            theta_matrix([1.0, 2.0], 0.5, DIMS_EQUAL)

    def test_rejects_subcritical_strength(self):
        # floor = 0.5 * sqrt(0.5) ~ 0.354
        with pytest.raises(ValueError, match="exceed"):
            theta_matrix([0.3], 0.5, DIMS_EQUAL)


class TestThetaDeterminant:
    @pytest.mark.parametrize(
        "gammas,sigma2,dims",
        [
            ([2.0], 0.5, DIMS_EQUAL),
            ([3.0, 1.5], 1.0, ModelDims(M=12, N=(24, 36), K=2)),
            ([5.0, 2.5, 1.2], 0.5, ModelDims(M=10, N=(20, 20, 40), K=3)),
        ],
    )
    def test_matches_numeric_determinant(self, gammas, sigma2, dims):
        closed = theta_determinant(gammas, sigma2, dims)
        numeric = np.linalg.det(theta_matrix(gammas, sigma2, dims).theta)
        assert closed == pytest.approx(numeric, rel=1e-8)

    def test_single_group_is_singular(self):
        dims = ModelDims(M=10, N=(40,), K=1)
        assert theta_determinant([2.0], 0.5, dims) == 0.0
        numeric = np.linalg.det(theta_matrix([2.0], 0.5, dims).theta)
        assert numeric == pytest.approx(0.0, abs=1e-10)


class TestUpsilonHat:
    def test_frozen_values(self):
        est = _estimates(0.5, [2.0], [[2.0, 2.0]])
        ups = upsilon_hat(est, DIMS_EQUAL)
        assert ups.shape == (3, 3)
        xi = 6.25 / 3.9375  # pooled entry, c = 1/4
        assert ups[0, 0] == pytest.approx(xi, rel=1e-14)
        assert ups[1, 1] == pytest.approx(12.5 / 3.875, rel=1e-14)
        assert ups[0, 1] == pytest.approx(xi, rel=1e-14)
        assert ups[1, 0] == pytest.approx(xi, rel=1e-14)
        assert ups[1, 2] == 0.0
        assert_allclose(ups, ups.T)

    def test_degenerate_spike_raises(self):
        # gamma^2 = sigma^4 * c_group exactly: denominator 0 at block position 1
        est = _estimates(1.0, [math.sqrt(0.5)], [[1.0, 1.0]])
        with pytest.raises(DegenerateSpike) as exc:
            upsilon_hat(est, DIMS_EQUAL)
        assert exc.value.k == 0
        assert exc.value.ell == 1

    def test_scaled_theta_relation(self):
        """Upsilon = J Theta J with J = diag(gamma^2 / (gamma^2 - sigma^4 c))."""
        dims = ModelDims(M=10, N=(20, 30), K=2)
        sigma2, gammas = 0.5, np.array([2.0, 1.0])
        est = _estimates(sigma2, gammas, np.repeat(gammas[:, None], 2, axis=1))
        ups = upsilon_hat(est, dims)
        theta = theta_matrix(gammas, sigma2, dims).theta
        cs = np.concatenate(([dims.c_pooled], dims.c_groups))
        j = np.diag(
            np.concatenate([g * g / (g * g - sigma2**2 * cs) for g in gammas])
        )
        assert_allclose(ups, j @ theta @ j, rtol=1e-12)


class TestGaussianQuadraticQuantiles:
    def test_matches_chi_square_for_identity_form(self):
        q = gaussian_quadratic_quantiles(
            np.array([[1.0]]), [0.05, 0.5], 200_000, np.random.default_rng(0)
        )
        assert q[0] == pytest.approx(chi2.ppf(0.95, df=1), rel=0.02)
        assert q[1] == pytest.approx(chi2.ppf(0.50, df=1), rel=0.02)

    def test_decreasing_in_alpha(self):
        alphas = [0.01, 0.05, 0.1, 0.5]
        q = gaussian_quadratic_quantiles(
            np.diag([2.0, 3.0]), alphas, 50_000, np.random.default_rng(1)
        )
        assert np.all(np.diff(q) < 0)

    def test_deterministic_given_seed(self):
        xi = np.diag([2.0, 3.0])
        a = gaussian_quadratic_quantiles(xi, 0.05, 10_000, np.random.default_rng(7))
        b = gaussian_quadratic_quantiles(xi, 0.05, 10_000, np.random.default_rng(7))
        assert a[0] == b[0]

    def test_order_statistic_index(self):
        """With alpha = 0.05 and n samples, the quantile is the ceil(0.95 n)-th
        order statistic — reproduced here by full sorting."""
        rng = np.random.default_rng(3)
        xi = np.array([[1.0]])
        n = 1000
        q = gaussian_quadratic_quantiles(xi, 0.05, n, np.random.default_rng(3))
        x = rng.standard_normal((n, 1))
        vals = np.sort((x * x).ravel())
        assert q[0] == vals[math.ceil(0.95 * n) - 1]

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
    def test_rejects_bad_alpha(self, alpha):
        with pytest.raises(ValueError):
            gaussian_quadratic_quantiles(np.eye(1), alpha, 2000, 0)

    def test_rejects_tiny_sample_count(self):
        with pytest.raises(ValueError):
            gaussian_quadratic_quantiles(np.eye(1), 0.05, 999, 0)


class TestCalibrateThreshold:
    def test_identity_upsilon_hand_value(self):
        # H = (1, -1), Upsilon = I: the quadratic form is 2 * chi^2_1
        h = contrast_matrix(1, 1)
        cal = calibrate_threshold(np.eye(2), h, M=10, alpha=0.05, seed=0)
        assert cal.epsilon_hat == pytest.approx(2.0 * chi2.ppf(0.95, 1) / 10.0, rel=0.02)
        assert cal.alpha == 0.05
        assert cal.quantile_samples == 200_000
        assert cal.h.shape == (1, 2)

    def test_deterministic(self):
        h = contrast_matrix(1, 2)
        a = calibrate_threshold(np.eye(3), h, 50, 0.1, n_samples=20_000, seed=4)
        b = calibrate_threshold(np.eye(3), h, 50, 0.1, n_samples=20_000, seed=4)
        assert a.epsilon_hat == b.epsilon_hat

    def test_threshold_scales_inversely_with_m(self):
        h = contrast_matrix(1, 2)
        a = calibrate_threshold(np.eye(3), h, 10, 0.05, n_samples=20_000, seed=2)
        b = calibrate_threshold(np.eye(3), h, 100, 0.05, n_samples=20_000, seed=2)
        assert a.epsilon_hat == pytest.approx(10.0 * b.epsilon_hat, rel=1e-12)


class TestChi2Statistic:
    def test_identity_whitening_hand_value(self):
        est = _estimates(0.5, [2.3], [[2.0]])  # diff = 0.3, one group
        dims = ModelDims(M=10, N=(40,), K=1)
        cal = Calibration(
            upsilon_hat=np.eye(2),
            h=contrast_matrix(1, 1),
            quantile_samples=1000,
            alpha=0.05,
            epsilon_hat=1.0,
        )
        # xi = H H^T = [[2]]; statistic = M * 0.3^2 / 2
        assert chi2_statistic(est, cal, dims) == pytest.approx(0.45, rel=1e-12)

    def test_singular_form_raises(self):
        est = _estimates(0.5, [2.0], [[2.0, 2.0]])
        rank_one = np.ones((3, 3))
        cal = Calibration(
            upsilon_hat=rank_one,
            h=contrast_matrix(1, 2),
            quantile_samples=1000,
            alpha=0.05,
            epsilon_hat=1.0,
        )
        with pytest.raises(IllConditioned):
            chi2_statistic(est, cal, DIMS_EQUAL)


class TestFisherEdges:
    def test_frozen_values(self):
        nu_minus, nu_plus = fisher_edges(0.5, 0.5)
        assert nu_minus == pytest.approx(((1 - math.sqrt(0.75)) / 0.5) ** 2, rel=1e-14)
        assert nu_plus == pytest.approx(((1 + math.sqrt(0.75)) / 0.5) ** 2, rel=1e-14)
        assert nu_minus == pytest.approx(0.0717967697, rel=1e-8)
        assert nu_plus == pytest.approx(13.9282032303, rel=1e-8)

    def test_edges_bracket_one(self):
        nu_minus, nu_plus = fisher_edges(0.2, 0.3)
        assert 0 < nu_minus < 1 < nu_plus

    @pytest.mark.parametrize("c", [0.0, 1.0, 1.5, -0.2])
    def test_rejects_bad_whitening_ratio(self, c):
        with pytest.raises(ValueError):
            fisher_edges(c, 0.5)


class TestFisherStatistic:
    def test_zero_under_equal_covariances(self):
        dims = ModelDims(M=20, N=(200, 200), K=2)
        ys = [
            sample_complex_gaussian(np.eye(20, dtype=complex), 200, [0, g])
            for g in range(2)
        ]
        covs = SampleCovariances.from_samples(ys, dims)
        assert fisher_statistic(covs, dims) == 0.0

    def test_positive_under_strong_spike_change(self):
        dims = ModelDims(M=20, N=(200, 200), K=2)
        u = np.zeros((20, 1))
        u[0] = 1.0
        r_spiked = np.eye(20, dtype=complex) + 8.0 * (u @ u.T)
        ys = [
            sample_complex_gaussian(np.eye(20, dtype=complex), 200, [9, 0]),
            sample_complex_gaussian(r_spiked, 200, [9, 1]),
        ]
        covs = SampleCovariances.from_samples(ys, dims)
        assert fisher_statistic(covs, dims) > 5.0

    def test_rejects_fat_data(self):
        dims = ModelDims(M=10, N=(10, 20), K=1)
        covs = _covs_from_eigvals(np.ones((2, 10)), np.ones(10))
        with pytest.raises(ValueError, match="M < min"):
            fisher_statistic(covs, dims)

    def test_singular_group_raises(self):
        dims = ModelDims(M=4, N=(8, 8), K=1)
        singular = np.zeros((4, 4), dtype=complex)
        good = np.eye(4, dtype=complex)
        covs = SampleCovariances(
            per_group=(singular, good),
            pooled=0.5 * good,
            eigvals_per_group=np.ones((2, 4)),
            eigvals_pooled=np.ones(4),
        )
        with pytest.raises(SingularCovariance):
            fisher_statistic(covs, dims)


class TestFisherConsistencyThresholds:
    def test_frozen_values(self):
        p = fisher_consistency_thresholds(0.25, 4.0)
        assert p.beta_subspace == pytest.approx(1.0 + math.sqrt(3.0), rel=1e-12)
        assert p.beta_subspace == pytest.approx(2.7320508, rel=1e-7)
        assert p.delta_min == p.beta_subspace
        nu_minus, nu_plus = fisher_edges(0.5, 0.5)
        assert p.nu_minus == nu_minus
        assert p.nu_plus == nu_plus
        assert p.beta_eigenvalue == pytest.approx(2.1547005384, rel=1e-9)

    def test_unattainable_change_gives_infinity(self):
        p = fisher_consistency_thresholds(0.25, 0.1)
        assert p.beta_eigenvalue == math.inf

    def test_validation(self):
        with pytest.raises(ValueError):
            fisher_consistency_thresholds(0.5, 1.0)
        with pytest.raises(ValueError):
            fisher_consistency_thresholds(0.25, 0.0)


class TestGlrStatistic:
    def test_hand_value_diagonal_scms(self):
        dims = ModelDims(M=2, N=(10, 10), K=1)
        covs = SampleCovariances.from_scms(
            [np.eye(2, dtype=complex), 2.0 * np.eye(2, dtype=complex)], dims
        )
        # pooled = 1.5 I; whitened eigenvalues 1.5 (group 1) and 0.75 (group 2)
        assert glr_statistic(covs, dims) == pytest.approx(0.5 * math.log(1.125), rel=1e-12)

    def test_zero_when_groups_equal_pooled(self):
        dims = ModelDims(M=3, N=(10, 10), K=1)
        covs = SampleCovariances.from_scms(
            [np.eye(3, dtype=complex), np.eye(3, dtype=complex)], dims
        )
        assert glr_statistic(covs, dims) == pytest.approx(0.0, abs=1e-14)

    def test_rejects_fat_data(self):
        dims = ModelDims(M=10, N=(10, 20), K=1)
        covs = _covs_from_eigvals(np.ones((2, 10)), np.ones(10))
        with pytest.raises(ValueError, match="M < min"):
            glr_statistic(covs, dims)


class TestGlrLimit:
    def test_matches_pure_noise_statistic(self):
        """The quadrature limit agrees with the statistic on one large noise draw."""
        dims = ModelDims(M=400, N=(1600, 1600), K=2)
        r = 0.5 * np.eye(400, dtype=complex)
        ys = [sample_complex_gaussian(r, 1600, [5, g]) for g in range(2)]
        covs = SampleCovariances.from_samples(ys, dims)
        assert glr_statistic(covs, dims) == pytest.approx(glr_limit(dims), rel=0.02)

    def test_insensitive_to_low_rank_change(self):
        """The same limit holds on data with unequal spikes — the property that
        makes the statistic powerless against low-rank alternatives."""
        preset = scenario_preset(1, "H1", 300)
        dims = preset.dims
        factors = [_group_factors(preset, g) for g in range(dims.L)]
        vals = []
        for t in range(4):
            ys = _sample_groups(preset, factors, _trial_rng(3, t))
            vals.append(glr_statistic(SampleCovariances.from_samples(ys, dims), dims))
        assert np.mean(vals) == pytest.approx(glr_limit(dims), rel=0.05)

    def test_positive_for_unequal_ratios(self):
        assert glr_limit(ModelDims(M=50, N=(100, 200), K=1)) > 0


class TestGlrLrStatistic:
    def test_hand_value(self):
        covs = _covs_from_eigvals(
            [[5.0, 1.0, 1.0], [3.0, 1.0, 1.0]], [4.0, 2.0, 2.0]
        )
        dims = ModelDims(M=3, N=(10, 10), K=1)
        expected = 10.0 * math.log(16.0 / 15.0) + 40.0 * math.log(2.0)
        assert glr_lr_statistic(covs, dims) == pytest.approx(expected, rel=1e-12)

    def test_zero_when_spectra_match(self):
        covs = _covs_from_eigvals(
            [[5.0, 1.0, 1.0], [5.0, 1.0, 1.0]], [5.0, 1.0, 1.0]
        )
        dims = ModelDims(M=3, N=(10, 10), K=1)
        assert glr_lr_statistic(covs, dims) == pytest.approx(0.0, abs=1e-12)

    def test_singular_eigenvalues_raise(self):
        covs = _covs_from_eigvals([[0.0, 0.0, 0.0]] * 2, [1.0, 1.0, 1.0])
        dims = ModelDims(M=3, N=(10, 10), K=1)
        with pytest.raises(SingularCovariance):
            glr_lr_statistic(covs, dims)


class TestGlrLrLimit:
    def test_statistic_converges_to_minus_n_times_limit(self):
        preset = scenario_preset(2, "H0", 300)
        dims = preset.dims
        factors = [_group_factors(preset, g) for g in range(dims.L)]
        vals = []
        for t in range(6):
            ys = _sample_groups(preset, factors, _trial_rng(7, t))
            covs = SampleCovariances.from_samples(ys, dims)
            vals.append(glr_lr_statistic(covs, dims) / dims.N_total)
        lim = glr_lr_limit(
            np.array([2.0, 1.5]),
            np.array([[2.0, 2.0], [1.5, 1.5]]),
            preset.sigma2,
            dims,
        )
        assert np.mean(vals) == pytest.approx(-lim, rel=0.05)

    def test_zero_for_single_group(self):
        dims = ModelDims(M=10, N=(40,), K=1)
        assert glr_lr_limit([2.0], [[2.0]], 0.5, dims) == pytest.approx(0.0, abs=1e-14)


@pytest.fixture(scope="module")
def sampled():
    dims = ModelDims(M=12, N=(48, 48), K=2)
    ys = [
        sample_complex_gaussian(0.5 * np.eye(12, dtype=complex), 48, [13, g])
        for g in range(2)
    ]
    return SampleCovariances.from_samples(ys, dims), dims


class TestComputeStatistic:
    def test_dispatch_matches_direct_calls(self, sampled):
        covs, dims = sampled
        from spikedcov.estimators import spike_estimates

        assert compute_statistic("wishart", covs, dims) == wishart_statistic(
            spike_estimates(covs, dims)
        )
        assert compute_statistic("glr", covs, dims) == glr_statistic(covs, dims)
        assert compute_statistic("glr_lr", covs, dims) == glr_lr_statistic(covs, dims)
        assert compute_statistic("fisher", covs, dims) == fisher_statistic(covs, dims)

    def test_unknown_name(self, sampled):
        covs, dims = sampled
        with pytest.raises(ValueError, match="unknown statistic"):
            compute_statistic("anova", covs, dims)
