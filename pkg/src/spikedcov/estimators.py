"""Sample-covariance construction, spectra, and spike-strength estimation.

The estimation chain: per-group sample covariance matrices (SCMs) -> pooled SCM ->
noise-variance estimate from the eigenvalue tails -> spike strengths recovered by
inverting the spike map on the leading eigenvalues, pooled and per group.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg.blas import zherk

from .rmt import MpParams, spike_inverse

__all__ = [
    "ModelDims",
    "SampleCovariances",
    "SpikeEstimates",
    "compute_scm",
    "pool_scms",
    "noise_variance_hat",
    "spike_estimates",
    "rank_estimate",
    "energy_ratio",
]


@dataclass(frozen=True)
class ModelDims:
    """Problem dimensions: observation dimension M, per-group sample counts N,
    assumed spike rank K. The group count L is len(N)."""

    M: int
    N: tuple[int, ...]
    K: int

    def __post_init__(self):
        object.__setattr__(self, "N", tuple(int(n) for n in np.atleast_1d(self.N)))
        if self.M < 2:
            raise ValueError(f"M must be >= 2, got {self.M}")
        if not self.N or any(n < 1 for n in self.N):
            raise ValueError(f"every group needs at least one sample, got N={self.N}")
        if not 1 <= self.K < self.M:
            raise ValueError(f"need 1 <= K < M, got K={self.K}, M={self.M}")

    @property
    def L(self) -> int:
        return len(self.N)

    @property
    def N_total(self) -> int:
        return sum(self.N)

    @property
    def weights(self) -> np.ndarray:
        """Pooling weights N_ell / N."""
        return np.asarray(self.N, dtype=float) / self.N_total

    @property
    def c_groups(self) -> np.ndarray:
        """Per-group ratios c_ell = M / N_ell (computed from the actual counts)."""
        return self.M / np.asarray(self.N, dtype=float)

    @property
    def c_pooled(self) -> float:
        """Pooled ratio c = (sum 1/c_ell)^-1 = M / N."""
        return self.M / self.N_total


def compute_scm(samples: np.ndarray) -> np.ndarray:
    """SCM (1/N) * sum_i y_i y_i^H of the columns of an M x N complex matrix.

    Only one triangle is accumulated (rank-k Hermitian update), then mirrored, so
    the result is Hermitian by construction.
    """
    y = np.asarray(samples)
    if y.ndim != 2:
        raise ValueError(f"samples must be an M x N matrix, got shape {y.shape}")
    m, n = y.shape
    a = np.asfortranarray(y, dtype=np.complex128)
    r = zherk(1.0 / n, a, lower=0)
    r += np.triu(r, 1).conj().T
    return r


def pool_scms(scms, dims: ModelDims) -> np.ndarray:
    """Sample-size-weighted average of the per-group SCMs."""
    if len(scms) != dims.L:
        raise ValueError(f"expected {dims.L} matrices, got {len(scms)}")
    shape = (dims.M, dims.M)
    if any(s.shape != shape for s in scms):
        raise ValueError(
            f"all SCMs must have shape {shape}, got {[s.shape for s in scms]}"
        )
    pooled = np.zeros(shape, dtype=np.complex128)
    for w, s in zip(dims.weights, scms):
        pooled += w * s
    return pooled


def _eigvals_descending(r: np.ndarray) -> np.ndarray:
    """Eigenvalues of a Hermitian matrix, sorted descending, clamped to >= 0."""
    vals = np.linalg.eigvalsh(r)[::-1]
    if vals[0] > 0 and vals[-1] < -1e-8 * vals[0]:
        warnings.warn(
            f"clamping negative eigenvalue {vals[-1]:.3e} "
            f"(below -1e-8 * lambda_1 = {-1e-8 * vals[0]:.3e})",
            stacklevel=3,
        )
    return np.maximum(vals, 0.0)


@dataclass(frozen=True)
class SampleCovariances:
    """Per-group and pooled SCMs with their descending eigenvalue lists."""

    per_group: tuple[np.ndarray, ...]
    pooled: np.ndarray
    eigvals_per_group: np.ndarray  # (L, M), each row descending
    eigvals_pooled: np.ndarray  # (M,), descending

    @classmethod
    def from_scms(cls, scms, dims: ModelDims) -> "SampleCovariances":
        pooled = pool_scms(scms, dims)
        return cls(
            per_group=tuple(scms),
            pooled=pooled,
            eigvals_per_group=np.stack([_eigvals_descending(s) for s in scms]),
            eigvals_pooled=_eigvals_descending(pooled),
        )

    @classmethod
    def from_samples(cls, samples_per_group, dims: ModelDims) -> "SampleCovariances":
        """Build from raw M x N_ell sample matrices, one per group."""
        if len(samples_per_group) != dims.L:
            raise ValueError(
                f"expected {dims.L} sample groups, got {len(samples_per_group)}"
            )
        for y, n in zip(samples_per_group, dims.N):
            if y.shape != (dims.M, n):
                raise ValueError(
                    f"group sample matrix has shape {y.shape}, expected {(dims.M, n)}"
                )
        return cls.from_scms([compute_scm(y) for y in samples_per_group], dims)


@dataclass(frozen=True)
class SpikeEstimates:
    """Noise variance and spike strengths (pooled and per group).

    diff_vector stacks gamma_pooled[k] - gamma_per_group[k, ell] in k-major,
    ell-minor order — the layout the calibration contrast matrix assumes.
    """

    sigma2_hat: float
    gamma_pooled: np.ndarray  # (K,)
    gamma_per_group: np.ndarray  # (K, L)
    diff_vector: np.ndarray  # (K*L,)


def noise_variance_hat(covs: SampleCovariances, dims: ModelDims) -> float:
    """Pooled average of the per-group eigenvalue tails beyond the first K."""
    tails = covs.eigvals_per_group[:, dims.K :].mean(axis=1)
    return float(dims.weights @ tails)


def spike_estimates(covs: SampleCovariances, dims: ModelDims) -> SpikeEstimates:
    """Invert the spike map on the K leading eigenvalues, pooled and per group."""
    s2 = noise_variance_hat(covs, dims)
    pooled_params = MpParams(s2, dims.c_pooled)
    gamma_pooled = np.array(
        [spike_inverse(lam, pooled_params) for lam in covs.eigvals_pooled[: dims.K]]
    )
    gamma_per_group = np.empty((dims.K, dims.L))
    for ell, c_ell in enumerate(dims.c_groups):
        group_params = MpParams(s2, c_ell)
        gamma_per_group[:, ell] = [
            spike_inverse(lam, group_params)
            for lam in covs.eigvals_per_group[ell, : dims.K]
        ]
    diff = (gamma_pooled[:, None] - gamma_per_group).ravel()
    return SpikeEstimates(
        sigma2_hat=s2,
        gamma_pooled=gamma_pooled,
        gamma_per_group=gamma_per_group,
        diff_vector=diff,
    )


def rank_estimate(
    covs: SampleCovariances, sigma2: float, dims: ModelDims, margin: float
) -> np.ndarray:
    """Per-group count of eigenvalues exceeding the bulk edge by at least margin."""
    if not margin > 0:
        raise ValueError(f"margin must be > 0, got {margin}")
    edges = sigma2 * (1.0 + np.sqrt(dims.c_groups)) ** 2 + margin
    return (covs.eigvals_per_group > edges[:, None]).sum(axis=1)


def energy_ratio(covs: SampleCovariances, k: int) -> float:
    """Fraction of the first group's total spectrum energy in its top k eigenvalues."""
    vals = covs.eigvals_per_group[0]
    if not 1 <= k <= vals.size:
        raise ValueError(f"need 1 <= k <= {vals.size}, got {k}")
    total = vals.sum()
    return float(vals[:k].sum() / total)
