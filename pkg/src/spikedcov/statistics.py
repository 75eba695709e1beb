"""Test statistics for covariance equality under the spiked model.

Four statistics are provided: the spike-difference ("Wishart") statistic with its
asymptotically calibrated threshold, a chi-square-whitened variant, the extreme
eigenvalues of whitened two-sample matrices ("Fisher"), and two likelihood-ratio
statistics (full-covariance and low-rank). The calibration machinery — the limit
covariance of the leading eigenvalues, its plug-in estimate, the contrast matrix,
and the Gaussian-quadratic-form quantile sampler — lives here too.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.linalg import block_diag, cholesky, solve_triangular

from .estimators import ModelDims, SampleCovariances, SpikeEstimates, spike_estimates
from .rmt import MpParams, spike_forward, wachter_edges

__all__ = [
    "CltCovariance",
    "Calibration",
    "FisherParams",
    "NumericalDegeneracy",
    "DegenerateSpike",
    "IllConditioned",
    "SingularCovariance",
    "wishart_statistic",
    "theta_matrix",
    "theta_determinant",
    "upsilon_hat",
    "contrast_matrix",
    "gaussian_quadratic_quantiles",
    "calibrate_threshold",
    "chi2_statistic",
    "fisher_edges",
    "fisher_statistic",
    "fisher_consistency_thresholds",
    "glr_statistic",
    "glr_limit",
    "glr_lr_statistic",
    "glr_lr_limit",
    "compute_statistic",
]

CONDITION_CAP = 1e12  # beyond this the whitened variant refuses to invert


class NumericalDegeneracy(RuntimeError):
    """Base class for failures where a statistic is numerically meaningless."""


class DegenerateSpike(NumericalDegeneracy):
    """A spike estimate sits at (or below) the detectability floor, so the
    plug-in covariance has a vanishing denominator. Carries the offending
    spike index k (0-based) and block position ell (0 = pooled)."""

    def __init__(self, k: int, ell: int, value: float):
        self.k = k
        self.ell = ell
        super().__init__(
            f"spike estimate {k + 1} is too close to the detectability floor "
            f"(denominator {value:.3e} at block position {ell}); "
            "calibration would be invalid"
        )


class IllConditioned(NumericalDegeneracy):
    """The whitening matrix is too ill-conditioned to invert reliably."""

    def __init__(self, cond: float):
        self.cond = cond
        super().__init__(
            f"condition number {cond:.3e} exceeds the cap {CONDITION_CAP:.0e}"
        )


class SingularCovariance(NumericalDegeneracy):
    """An SCM that must be inverted (or log-transformed) is singular."""


@dataclass(frozen=True)
class CltCovariance:
    """Limit covariance of sqrt(M) * (leading-eigenvalue deviations), block
    diagonal with one (L+1) x (L+1) block per spike; position 0 of each block is
    the pooled matrix."""

    theta: np.ndarray  # (K*(L+1), K*(L+1))
    block_size: int

    @property
    def n_blocks(self) -> int:
        return self.theta.shape[0] // self.block_size

    def block(self, k: int) -> np.ndarray:
        b = self.block_size
        return self.theta[k * b : (k + 1) * b, k * b : (k + 1) * b]


@dataclass(frozen=True)
class Calibration:
    """Plug-in covariance, contrast matrix, and the sampled rejection threshold."""

    upsilon_hat: np.ndarray  # (K*(L+1), K*(L+1))
    h: np.ndarray  # (K*L, K*(L+1))
    quantile_samples: int
    alpha: float
    epsilon_hat: float


@dataclass(frozen=True)
class FisherParams:
    """Spectrum edges and consistency thresholds for the extreme-eigenvalue test
    (two groups, equal sample counts, so both group ratios equal 2c).

    beta_eigenvalue is +inf when the required SNR condition is unattainable for
    the given relative change delta."""

    nu_plus: float
    nu_minus: float
    beta_subspace: float
    beta_eigenvalue: float
    delta_min: float


def wishart_statistic(est: SpikeEstimates) -> float:
    """Squared norm of the pooled-minus-per-group spike difference vector."""
    return float(est.diff_vector @ est.diff_vector)


def _check_supercritical(gammas: np.ndarray, sigma2: float, dims: ModelDims) -> None:
    floor = sigma2 * math.sqrt(max(dims.c_pooled, dims.c_groups.max()))
    if gammas.size > 1 and not np.all(np.diff(gammas) < 0):
        raise ValueError(f"spike strengths must be strictly decreasing, got {gammas}")
    if not np.all(gammas > floor):
        raise ValueError(
            f"every spike strength must exceed sigma2 * sqrt(max c) = {floor:.6g}, "
            f"got {gammas}"
        )


def theta_matrix(gammas, sigma2: float, dims: ModelDims) -> CltCovariance:
    """Limit covariance of the sqrt(M)-scaled leading-eigenvalue deviations.

    Entry pattern per spike k: diagonal c_ell*(g^2 - s^4 c_ell)*(g+s^2)^2/g^2 for
    ell = 0..L (0 = pooled), first row/column c_0*(g^2 - s^4 c_ell)*(g+s^2)^2/g^2.
    Only valid when all strengths are supercritical for every ratio and strictly
    decreasing.
    """
    gammas = np.asarray(gammas, dtype=float)
    _check_supercritical(gammas, sigma2, dims)
    s4 = sigma2 * sigma2
    cs = np.concatenate(([dims.c_pooled], dims.c_groups))  # ell = 0..L
    blocks = []
    for g in gammas:
        common = (g * g - s4 * cs) * (g + sigma2) ** 2 / (g * g)
        block = np.diag(cs * common)
        block[0, 1:] = dims.c_pooled * common[1:]
        block[1:, 0] = block[0, 1:]
        blocks.append(block)
    return CltCovariance(theta=block_diag(*blocks), block_size=dims.L + 1)


def theta_determinant(gammas, sigma2: float, dims: ModelDims) -> float:
    """Closed-form determinant of theta_matrix (zero when L = 1)."""
    gammas = np.asarray(gammas, dtype=float)
    _check_supercritical(gammas, sigma2, dims)
    s4 = sigma2 * sigma2
    c0 = dims.c_pooled
    det = (s4 * c0 * c0 * (dims.L - 1)) ** len(gammas)
    for g in gammas:
        det *= ((g + sigma2) / g) ** (2 * (dims.L + 1))
        det *= np.prod(dims.c_groups * (g * g - s4 * dims.c_groups))
    return float(det)


def upsilon_hat(est: SpikeEstimates, dims: ModelDims) -> np.ndarray:
    """Plug-in limit covariance for calibration, from the pooled spike estimates.

    Block diagonal, one (L+1) x (L+1) block per spike: diagonal entries
    c_ell*g^2*(g+s2)^2/(g^2 - s2^2*c_ell) for ell = 0..L, first row/column the
    ell = 0 value. Raises DegenerateSpike when a denominator falls below
    1e-6 * sigma2_hat^2 (the estimate sits too close to the detectability floor).
    """
    s2 = est.sigma2_hat
    s4 = s2 * s2
    cs = np.concatenate(([dims.c_pooled], dims.c_groups))
    blocks = []
    for k, g in enumerate(est.gamma_pooled):
        den = g * g - s4 * cs
        bad = np.flatnonzero(den < 1e-6 * s4)
        if bad.size:
            raise DegenerateSpike(k, int(bad[0]), float(den[bad[0]]))
        vals = cs * g * g * (g + s2) ** 2 / den
        block = np.diag(vals)
        block[0, 1:] = vals[0]
        block[1:, 0] = vals[0]
        blocks.append(block)
    return block_diag(*blocks)


def contrast_matrix(K: int, L: int) -> np.ndarray:
    """K*L x K*(L+1) block-diagonal matrix mapping per-spike (pooled, groups)
    eigenvalue deviations to pooled-minus-group differences; row ell of each
    block is (1, 0, ..., -1 at column ell+1, ..., 0)."""
    tilde = np.hstack([np.ones((L, 1)), -np.eye(L)])
    return block_diag(*([tilde] * K))


def gaussian_quadratic_quantiles(
    xi: np.ndarray, alphas, n_samples: int, rng
) -> np.ndarray:
    """Empirical (1-alpha)-quantiles of x^T xi x over standard-normal x.

    The quadratic form is evaluated directly (no matrix factorization); the
    quantile is the order statistic at index ceil((1-alpha) * n).
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    if np.any(alphas <= 0) or np.any(alphas >= 1):
        raise ValueError(f"alpha values must lie strictly in (0, 1), got {alphas}")
    if n_samples < 1000:
        raise ValueError(f"n_samples must be >= 1000, got {n_samples}")
    rng = np.random.default_rng(rng)
    x = rng.standard_normal((n_samples, xi.shape[0]))
    q = np.einsum("ni,ni->n", x @ xi, x)
    # the small backoff keeps ceil exact when (1 - alpha) * n is an integer
    idx = np.ceil((1.0 - alphas) * n_samples - 1e-9).astype(int) - 1
    return np.partition(q, idx)[idx]


def calibrate_threshold(
    upsilon: np.ndarray,
    h: np.ndarray,
    M: int,
    alpha: float,
    n_samples: int = 200_000,
    seed=0,
) -> Calibration:
    """Rejection threshold for the spike-difference statistic at level alpha.

    Samples the Gaussian quadratic form x^T (H Upsilon H^T) x and returns its
    empirical (1-alpha)-quantile divided by M. Deterministic given the seed.
    """
    xi = h @ upsilon @ h.T
    xi = (xi + xi.T) / 2.0
    t = gaussian_quadratic_quantiles(xi, alpha, n_samples, seed)[0]
    return Calibration(
        upsilon_hat=upsilon,
        h=h,
        quantile_samples=n_samples,
        alpha=alpha,
        epsilon_hat=float(t) / M,
    )


def chi2_statistic(est: SpikeEstimates, cal: Calibration, dims: ModelDims) -> float:
    """Whitened variant M * ||(H Upsilon_hat H^T)^(-1/2) diff||^2.

    Under equal covariances this converges to a chi-square with K*L degrees of
    freedom, but the whitening matrix becomes ill-conditioned at high SNR;
    IllConditioned is raised above the condition cap.
    """
    xi = cal.h @ cal.upsilon_hat @ cal.h.T
    xi = (xi + xi.T) / 2.0
    vals, vecs = np.linalg.eigh(xi)
    cond = np.inf if vals[0] <= 0 else vals[-1] / vals[0]
    if cond > CONDITION_CAP:
        raise IllConditioned(cond)
    v = vecs.T @ est.diff_vector
    return float(dims.M * np.sum(v * v / vals))


def fisher_edges(c_ell: float, c_ellp: float) -> tuple[float, float]:
    """Bulk-spectrum edges nu-/nu+ of the whitened two-sample matrix for group
    ratios (c_ell, c_ellp); all its eigenvalues fall inside (nu-, nu+) when the
    two covariances are equal."""
    if not 0 < c_ell < 1:
        raise ValueError(f"need 0 < c_ell < 1 (whitening group), got {c_ell}")
    root = math.sqrt(c_ell + c_ellp - c_ell * c_ellp)
    return ((1.0 - root) / (1.0 - c_ell)) ** 2, ((1.0 + root) / (1.0 - c_ell)) ** 2


def _whitened_eigvals(r_base: np.ndarray, r_other: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of r_base^-1 r_other via Cholesky whitening."""
    try:
        low = cholesky(r_base, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(f"cannot factor group SCM: {exc}") from exc
    tmp = solve_triangular(low, r_other, lower=True)
    white = solve_triangular(low, tmp.conj().T, lower=True).conj().T
    return np.linalg.eigvalsh((white + white.conj().T) / 2.0)


def fisher_statistic(covs: SampleCovariances, dims: ModelDims) -> float:
    """Total escape of the K extreme eigenvalues of each whitened pair beyond the
    equal-covariance bulk edges; 0 when every eigenvalue stays inside."""
    if dims.M >= min(dims.N):
        raise ValueError(
            f"need M < min(N) for invertible group SCMs, got M={dims.M}, N={dims.N}"
        )
    cs = dims.c_groups
    total = 0.0
    for ell in range(dims.L):
        for ellp in range(dims.L):
            if ellp == ell:
                continue
            w = _whitened_eigvals(covs.per_group[ell], covs.per_group[ellp])
            nu_minus, nu_plus = fisher_edges(cs[ell], cs[ellp])
            for k in range(dims.K):
                total += max(w[-1 - k] - nu_plus, 0.0)
                total += max(nu_minus - w[k], 0.0)
    return total


def fisher_consistency_thresholds(c: float, delta: float) -> FisherParams:
    """Minimal-SNR thresholds for the extreme-eigenvalue test to be consistent
    (two groups, equal sample counts, pooled ratio c, relative change delta)."""
    if not 0 < c < 0.5:
        raise ValueError(f"need 0 < c < 1/2, got {c}")
    if not delta > 0:
        raise ValueError(f"need delta > 0, got {delta}")
    root = math.sqrt(c - c * c)
    beta_subspace = 2.0 * (c + root) / (1.0 - 2.0 * c)
    den = (1.0 + delta) * (1.0 - 2.0 * c) - (1.0 + 2.0 * root)
    beta_eigenvalue = 2.0 * (c + root) / den if den > 0 else math.inf
    nu_minus, nu_plus = fisher_edges(2.0 * c, 2.0 * c)
    return FisherParams(
        nu_plus=nu_plus,
        nu_minus=nu_minus,
        beta_subspace=beta_subspace,
        beta_eigenvalue=beta_eigenvalue,
        delta_min=beta_subspace,
    )


def glr_statistic(covs: SampleCovariances, dims: ModelDims) -> float:
    """Log-spectrum statistic sum_ell (N_ell/N) (1/M) sum_k log lambda_k of the
    whitened pooled-vs-group matrices."""
    if dims.M >= min(dims.N):
        raise ValueError(
            f"need M < min(N) for invertible group SCMs, got M={dims.M}, N={dims.N}"
        )
    total = 0.0
    for w, r in zip(dims.weights, covs.per_group):
        vals = _whitened_eigvals(r, covs.pooled)
        if vals[0] <= 0:
            raise SingularCovariance("whitened pooled matrix has a nonpositive eigenvalue")
        total += w * np.log(vals).sum() / dims.M
    return float(total)


def _edge_regularized_quad(f, lo: float, hi: float) -> float:
    """Integral of f over [lo, hi] after the substitution x = lo + (hi-lo) sin^2 t,
    which absorbs square-root edge behavior."""
    span = hi - lo

    def g(t):
        s, co = math.sin(t), math.cos(t)
        return f(lo + span * s * s) * span * 2.0 * s * co

    val, _ = quad(g, 0.0, math.pi / 2.0, epsabs=1e-9, limit=200)
    return val


def glr_limit(dims: ModelDims) -> float:
    """Limit of the log-spectrum statistic; identical under equal and unequal
    low-rank components, which is what disqualifies it in this regime."""
    c = dims.c_pooled
    total = 0.0
    for c_ell in dims.c_groups:
        lo, hi = wachter_edges(c_ell, c)
        ratio = c / c_ell

        def f(x, c_ell=c_ell, lo=lo, hi=hi, ratio=ratio):
            dens = (
                (1.0 / c_ell - 1.0)
                * math.sqrt(max((x - lo) * (hi - x), 0.0))
                / (2.0 * math.pi * x * (1.0 + x))
            )
            return math.log(ratio * (1.0 + x)) * dens

        total += ratio * _edge_regularized_quad(f, lo, hi)
    return total


def glr_lr_statistic(covs: SampleCovariances, dims: ModelDims) -> float:
    """Likelihood-ratio statistic for the low-rank model: per-group spike
    log-ratios against the pooled spikes, plus the pooled noise-floor log-ratio."""
    K, N = dims.K, dims.N_total
    top_pooled = covs.eigvals_pooled[:K]
    top_groups = covs.eigvals_per_group[:, :K]
    if np.any(top_pooled <= 0) or np.any(top_groups <= 0):
        raise SingularCovariance("leading eigenvalues must be positive")
    spike_term = 0.0
    for n_ell, tg in zip(dims.N, top_groups):
        spike_term += n_ell * np.log(tg / top_pooled).sum()
    tail_groups = float(dims.weights @ covs.eigvals_per_group[:, K:].mean(axis=1))
    tail_pooled = float(covs.eigvals_pooled[K:].mean())
    if tail_groups <= 0 or tail_pooled <= 0:
        raise SingularCovariance("eigenvalue tails must be positive")
    noise_term = N * (dims.M - K) * math.log(tail_groups / tail_pooled)
    return float(-spike_term - noise_term)


def compute_statistic(name: str, covs: SampleCovariances, dims: ModelDims) -> float:
    """Evaluate one of the four statistics by name: 'wishart', 'glr', 'glr_lr',
    or 'fisher'."""
    if name == "wishart":
        return wishart_statistic(spike_estimates(covs, dims))
    if name == "glr":
        return glr_statistic(covs, dims)
    if name == "glr_lr":
        return glr_lr_statistic(covs, dims)
    if name == "fisher":
        return fisher_statistic(covs, dims)
    raise ValueError(
        f"unknown statistic {name!r}; choose from ('wishart', 'glr', 'glr_lr', 'fisher')"
    )


def glr_lr_limit(
    gamma_pooled, gamma_per_group, sigma2: float, dims: ModelDims
) -> float:
    """Limit of the low-rank likelihood-ratio statistic divided by -N.

    With psi(x) = x - log(x):
    sum_ell (c/c_ell) sum_k [psi(phi_c(gamma_k)/s2) - psi(phi_c_ell(gamma_kl)/s2)].
    (The statistic itself converges to -N times this value.)
    """
    gamma_pooled = np.asarray(gamma_pooled, dtype=float)
    gamma_per_group = np.asarray(gamma_per_group, dtype=float)

    def psi(x):
        return x - math.log(x)

    c = dims.c_pooled
    pooled_params = MpParams(sigma2, c)
    total = 0.0
    for ell, c_ell in enumerate(dims.c_groups):
        group_params = MpParams(sigma2, c_ell)
        for k in range(dims.K):
            loc_pooled = spike_forward(gamma_pooled[k], pooled_params).location
            loc_group = spike_forward(gamma_per_group[k, ell], group_params).location
            total += (c / c_ell) * (psi(loc_pooled / sigma2) - psi(loc_group / sigma2))
    return total
