"""Monte-Carlo harness: scenario presets, complex-Gaussian data generation, and
deterministic trial loops for type-I error tables, power tables, and checks of
the eigenvalue central limit theorem.

Trials are reproducible bit-exactly: each trial gets its own generator derived
from (seed, trial index) — or (seed, phase, trial index) for the two-phase power
runs — so results do not depend on how trials are chunked across workers.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .estimators import ModelDims, SampleCovariances, spike_estimates
from .rmt import MpParams, spike_forward
from .statistics import (
    DegenerateSpike,
    compute_statistic,
    contrast_matrix,
    gaussian_quadratic_quantiles,
    theta_matrix,
    upsilon_hat,
    wishart_statistic,
)

__all__ = [
    "ScenarioPreset",
    "TrialReport",
    "Type1Result",
    "PowerResult",
    "CltResult",
    "DEFAULT_ALPHAS",
    "STATISTIC_NAMES",
    "orthogonal_pair_angles",
    "type1_preset",
    "scenario_preset",
    "steering_vector",
    "build_covariance",
    "sample_complex_gaussian",
    "run_type1",
    "run_power",
    "run_clt_check",
    "single_trial",
    "synthetic_change_pair",
]

DEFAULT_ALPHAS = (0.005, 0.01, 0.02, 0.05, 0.10)
STATISTIC_NAMES = ("wishart", "glr", "glr_lr", "fisher")
QUANTILE_SAMPLES = 200_000


@dataclass(frozen=True)
class ScenarioPreset:
    """A fully specified simulation setting: dimensions, noise floor, and the
    per-spike, per-group steering angles and strengths, under one hypothesis."""

    name: str
    hypothesis: str  # "H0" or "H1"
    dims: ModelDims
    sigma2: float
    strengths: np.ndarray  # (K, L)
    angles: np.ndarray  # (K, L), radians

    def __post_init__(self):
        if self.hypothesis not in ("H0", "H1"):
            raise ValueError(f"hypothesis must be 'H0' or 'H1', got {self.hypothesis!r}")
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        shape = (self.dims.K, self.dims.L)
        strengths = np.asarray(self.strengths, dtype=float)
        angles = np.asarray(self.angles, dtype=float)
        if strengths.shape != shape or angles.shape != shape:
            raise ValueError(
                f"strengths and angles must have shape {shape}, got "
                f"{strengths.shape} and {angles.shape}"
            )
        if np.any(strengths < 0):
            raise ValueError("spike strengths must be nonnegative")
        for g in range(self.dims.L):
            col = strengths[:, g]
            pos = col[col > 0]
            if np.any(np.diff(col) > 0) or np.any(np.diff(pos) >= 0):
                raise ValueError(
                    f"strengths in group {g + 1} must be strictly decreasing "
                    f"(zeros only at the tail), got {col}"
                )
        object.__setattr__(self, "strengths", strengths)
        object.__setattr__(self, "angles", angles)


@dataclass(frozen=True)
class TrialReport:
    """Outcome of a single detection run: statistic values, thresholds where a
    calibrated one exists, and the accept/reject decisions. Reproducible
    bit-exactly from (preset, seed); wall time is excluded from serialization."""

    values: dict
    thresholds: dict
    decisions: dict
    seed: int
    wall_time_s: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "values": self.values,
                "thresholds": self.thresholds,
                "decisions": self.decisions,
                "seed": self.seed,
            },
            indent=2,
            sort_keys=True,
        )


def orthogonal_pair_angles(M: int) -> tuple[float, float]:
    """Two steering angles on the length-M Fourier grid, so the corresponding
    unit vectors are exactly orthogonal; the second sits near pi/8 for large M."""
    return 0.0, 2.0 * math.pi * max(1, round(M / 16)) / M


def type1_preset(M: int, sigma2: float = 0.5) -> ScenarioPreset:
    """Null setting used for the type-I error tables: two groups of N = 2M
    samples sharing a rank-2 component with strengths (3, 1.5)."""
    th1, th2 = orthogonal_pair_angles(M)
    return ScenarioPreset(
        name="type1",
        hypothesis="H0",
        dims=ModelDims(M=M, N=(2 * M, 2 * M), K=2),
        sigma2=sigma2,
        strengths=np.array([[3.0, 3.0], [1.5, 1.5]]),
        angles=np.array([[th1, th1], [th2, th2]]),
    )


def scenario_preset(
    scenario: int, hypothesis: str, M: int, sigma2: float = 0.5
) -> ScenarioPreset:
    """The two power-study settings.

    Scenario 1 (change of subspace): strengths (2, 1) in both groups, N = 2M;
    under H1 the second group's angles rotate by pi/2.
    Scenario 2 (change of eigenvalues): shared orthogonal angles, N = 4M;
    strengths (2, 1.5) in both groups under H0, (5, 4) in the second under H1.
    """
    if scenario == 1:
        dims = ModelDims(M=M, N=(2 * M, 2 * M), K=2)
        strengths = np.array([[2.0, 2.0], [1.0, 1.0]])
        if hypothesis == "H0":
            angles = np.array([[0.0, 0.0], [math.pi / 8, math.pi / 8]])
        else:
            angles = np.array(
                [[0.0, math.pi / 2], [math.pi / 8, math.pi / 2 + math.pi / 8]]
            )
    elif scenario == 2:
        dims = ModelDims(M=M, N=(4 * M, 4 * M), K=2)
        th1, th2 = orthogonal_pair_angles(M)
        angles = np.array([[th1, th1], [th2, th2]])
        if hypothesis == "H0":
            strengths = np.array([[2.0, 2.0], [1.5, 1.5]])
        else:
            strengths = np.array([[2.0, 5.0], [1.5, 4.0]])
    else:
        raise ValueError(f"scenario must be 1 or 2, got {scenario}")
    return ScenarioPreset(
        name=f"scenario{scenario}-{hypothesis}",
        hypothesis=hypothesis,
        dims=dims,
        sigma2=sigma2,
        strengths=strengths,
        angles=angles,
    )


def steering_vector(theta: float, M: int) -> np.ndarray:
    """Unit-norm complex exponential (1/sqrt(M)) (1, e^{i theta}, ..., e^{i (M-1) theta})."""
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    return np.exp(1j * theta * np.arange(M)) / math.sqrt(M)


def build_covariance(preset: ScenarioPreset, group: int) -> np.ndarray:
    """Population covariance of one group: sigma2 * I plus the rank-<=K sum of
    strength-weighted steering-vector outer products."""
    M = preset.dims.M
    r = preset.sigma2 * np.eye(M, dtype=complex)
    for k in range(preset.dims.K):
        g = preset.strengths[k, group]
        if g > 0:
            a = steering_vector(preset.angles[k, group], M)
            r += g * np.outer(a, a.conj())
    return r


def _standard_complex(rng: np.random.Generator, shape) -> np.ndarray:
    """Circular complex normal entries with unit total variance (1/2 per part)."""
    z = rng.standard_normal(shape + (2,))
    return z.view(np.complex128)[..., 0] * math.sqrt(0.5)


def sample_complex_gaussian(R: np.ndarray, N: int, seed) -> np.ndarray:
    """N i.i.d. columns with circular complex normal law of covariance R."""
    R = np.asarray(R)
    vals, vecs = np.linalg.eigh(R)
    scale = max(vals[-1], 1.0)
    if vals[0] < -1e-10 * scale:
        raise ValueError(
            f"covariance is not positive semidefinite (min eigenvalue {vals[0]:.3e})"
        )
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T
    rng = np.random.default_rng(seed)
    return root @ _standard_complex(rng, (R.shape[0], N))


def _group_factors(preset: ScenarioPreset, group: int):
    """Thin factorization of one group's covariance square root: R^{1/2} =
    sigma * I + U diag(d) U^H with U the orthonormal eigenvectors of the
    low-rank part. Columns with zero strength drop out."""
    M = preset.dims.M
    cols = []
    for k in range(preset.dims.K):
        g = preset.strengths[k, group]
        if g > 0:
            cols.append(math.sqrt(g) * steering_vector(preset.angles[k, group], M))
    if not cols:
        return None, None
    a = np.column_stack(cols)
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    keep = s > 1e-12 * s[0]
    u, lam = u[:, keep], s[keep] ** 2
    d = np.sqrt(lam + preset.sigma2) - math.sqrt(preset.sigma2)
    return u, d


def _low_rank_eigs(preset: ScenarioPreset, group: int) -> np.ndarray:
    """Descending nonzero eigenvalues of the group's low-rank component, padded
    with zeros to length K (they equal the strengths when angles are orthogonal)."""
    u, d = _group_factors(preset, group)
    out = np.zeros(preset.dims.K)
    if u is not None:
        lam = (d + math.sqrt(preset.sigma2)) ** 2 - preset.sigma2
        out[: lam.size] = np.sort(lam)[::-1]
    return out


def _pooled_low_rank_eigs(preset: ScenarioPreset) -> np.ndarray:
    """Descending top-K eigenvalues of the sample-size-weighted average of the
    group low-rank components, via the Gram matrix of the stacked factors."""
    cols = []
    for g in range(preset.dims.L):
        w = preset.dims.weights[g]
        for k in range(preset.dims.K):
            s = preset.strengths[k, g]
            if s > 0:
                cols.append(
                    math.sqrt(w * s) * steering_vector(preset.angles[k, g], preset.dims.M)
                )
    out = np.zeros(preset.dims.K)
    if cols:
        a = np.column_stack(cols)
        lam = np.linalg.eigvalsh(a.conj().T @ a)[::-1]
        n = min(preset.dims.K, lam.size)
        out[:n] = np.clip(lam[:n], 0.0, None)
    return out


def _sample_groups(preset: ScenarioPreset, factors, rng) -> list[np.ndarray]:
    """Draw all group sample matrices for one trial, in group order."""
    sigma = math.sqrt(preset.sigma2)
    ys = []
    for g, n in enumerate(preset.dims.N):
        w = _standard_complex(rng, (preset.dims.M, n))
        y = sigma * w
        u, d = factors[g]
        if u is not None:
            y += u @ (d[:, None] * (u.conj().T @ w))
        ys.append(y)
    return ys


def _trial_rng(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))


def _chunk_ranges(trials: int, workers: int):
    n_chunks = min(trials, max(1, workers) * 4)
    bounds = np.linspace(0, trials, n_chunks + 1, dtype=int)
    return [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]


def _run_chunks(fn, args: tuple, trials: int, workers: int) -> list:
    """Run fn(*args, lo, hi) over a partition of range(trials), in order."""
    if workers <= 1:
        return [fn(*args, 0, trials)]
    ranges = _chunk_ranges(trials, workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *args, lo, hi) for lo, hi in ranges]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# type-I error
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Type1Result:
    """Empirical rejection rates of the calibrated test under the null."""

    preset_name: str
    M: int
    alphas: tuple
    trials: int
    seed: int
    rejection_rates: np.ndarray  # (n_alphas,)
    stderrs: np.ndarray  # (n_alphas,)
    degenerate_trials: int
    statistic_values: np.ndarray  # (trials,)

    def to_tsv(self) -> str:
        rows = [
            ("wishart", self.M, a, r, s)
            for a, r, s in zip(self.alphas, self.rejection_rates, self.stderrs)
        ]
        return _tsv_table(rows)

    def to_json(self) -> str:
        return json.dumps(
            {
                "preset": self.preset_name,
                "M": self.M,
                "alphas": list(self.alphas),
                "trials": self.trials,
                "seed": self.seed,
                "rejection_rates": self.rejection_rates.tolist(),
                "stderrs": self.stderrs.tolist(),
                "degenerate_trials": self.degenerate_trials,
            },
            indent=2,
            sort_keys=True,
        )


def _tsv_table(rows) -> str:
    lines = ["statistic\tM\talpha\tvalue\tstderr"]
    for stat, m, a, v, s in rows:
        lines.append(f"{stat}\t{m}\t{a:g}\t{v:.6g}\t{s:.6g}")
    return "\n".join(lines) + "\n"


def _check_alphas(alphas) -> np.ndarray:
    alphas = np.asarray(alphas, dtype=float)
    if alphas.ndim != 1 or alphas.size == 0:
        raise ValueError("alphas must be a nonempty 1-d sequence")
    if np.any(alphas <= 0) or np.any(alphas >= 1):
        raise ValueError(f"alpha values must lie strictly in (0, 1), got {alphas}")
    return alphas


def _type1_chunk(preset, alphas, seed, n_samples, lo, hi):
    dims = preset.dims
    factors = [_group_factors(preset, g) for g in range(dims.L)]
    h = contrast_matrix(dims.K, dims.L)
    values = np.empty(hi - lo)
    degenerate = np.zeros(hi - lo, dtype=bool)
    rejected = np.zeros((hi - lo, len(alphas)), dtype=bool)
    for i, trial in enumerate(range(lo, hi)):
        rng = _trial_rng(seed, trial)
        ys = _sample_groups(preset, factors, rng)
        covs = SampleCovariances.from_samples(ys, dims)
        est = spike_estimates(covs, dims)
        t = wishart_statistic(est)
        values[i] = t
        try:
            ups = upsilon_hat(est, dims)
        except DegenerateSpike:
            degenerate[i] = True
            continue
        xi = h @ ups @ h.T
        q = gaussian_quadratic_quantiles((xi + xi.T) / 2.0, alphas, n_samples, rng)
        rejected[i] = t > q / dims.M
    return values, degenerate, rejected


def run_type1(
    preset: ScenarioPreset,
    alphas=DEFAULT_ALPHAS,
    trials: int = 10_000,
    seed: int = 0,
    n_quantile_samples: int = QUANTILE_SAMPLES,
    workers: int = 1,
) -> Type1Result:
    """Rejection frequency of the calibrated test at each level under the null.

    Each trial draws fresh data, re-estimates the plug-in covariance, and
    samples its own threshold. Trials where a spike estimate collapses to the
    detectability floor cannot be calibrated; they are counted as
    non-rejections and tallied in degenerate_trials.
    """
    alphas = _check_alphas(alphas)
    if trials < 100:
        raise ValueError(f"trials must be >= 100, got {trials}")
    parts = _run_chunks(
        _type1_chunk, (preset, alphas, seed, n_quantile_samples), trials, workers
    )
    values = np.concatenate([p[0] for p in parts])
    degenerate = np.concatenate([p[1] for p in parts])
    rejected = np.concatenate([p[2] for p in parts])
    rates = rejected.mean(axis=0)
    return Type1Result(
        preset_name=preset.name,
        M=preset.dims.M,
        alphas=tuple(float(a) for a in alphas),
        trials=trials,
        seed=seed,
        rejection_rates=rates,
        stderrs=np.sqrt(rates * (1.0 - rates) / trials),
        degenerate_trials=int(degenerate.sum()),
        statistic_values=values,
    )


# ---------------------------------------------------------------------------
# power
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerResult:
    """Empirical power with thresholds calibrated on the null replicates."""

    preset_name: str
    M: int
    statistics: tuple
    alphas: tuple
    trials: int
    seed: int
    thresholds: np.ndarray  # (n_stats, n_alphas)
    power: np.ndarray  # (n_stats, n_alphas)
    h0_values: np.ndarray  # (trials, n_stats)
    h1_values: np.ndarray  # (trials, n_stats)

    def power_of(self, statistic: str, alpha: float) -> float:
        i = self.statistics.index(statistic)
        j = self.alphas.index(alpha)
        return float(self.power[i, j])

    def to_tsv(self) -> str:
        rows = []
        for i, stat in enumerate(self.statistics):
            for j, a in enumerate(self.alphas):
                p = self.power[i, j]
                rows.append(
                    (stat, self.M, a, p, math.sqrt(p * (1.0 - p) / self.trials))
                )
        return _tsv_table(rows)

    def to_json(self) -> str:
        return json.dumps(
            {
                "preset": self.preset_name,
                "M": self.M,
                "statistics": list(self.statistics),
                "alphas": list(self.alphas),
                "trials": self.trials,
                "seed": self.seed,
                "thresholds": self.thresholds.tolist(),
                "power": self.power.tolist(),
            },
            indent=2,
            sort_keys=True,
        )


def _statistic_values(covs: SampleCovariances, dims: ModelDims, names) -> list[float]:
    return [compute_statistic(name, covs, dims) for name in names]


def _power_chunk(preset, names, seed, phase, lo, hi):
    dims = preset.dims
    factors = [_group_factors(preset, g) for g in range(dims.L)]
    values = np.empty((hi - lo, len(names)))
    for i, trial in enumerate(range(lo, hi)):
        rng = _trial_rng(seed, phase, trial)
        ys = _sample_groups(preset, factors, rng)
        covs = SampleCovariances.from_samples(ys, dims)
        values[i] = _statistic_values(covs, dims, names)
    return values


def empirical_threshold(values: np.ndarray, alpha: float) -> float:
    """Order statistic at the one-based index ceil((1 - alpha) * n)."""
    n = values.shape[0]
    # the small backoff keeps ceil exact when (1 - alpha) * n is an integer
    idx = math.ceil((1.0 - alpha) * n - 1e-9) - 1
    return float(np.partition(values, idx)[idx])


def run_power(
    preset_h0: ScenarioPreset,
    preset_h1: ScenarioPreset,
    statistics=STATISTIC_NAMES,
    alphas=DEFAULT_ALPHAS,
    trials: int = 2000,
    seed: int = 0,
    workers: int = 1,
) -> PowerResult:
    """Two-phase power estimate: thresholds are the empirical (1-alpha)
    quantiles of each statistic over the H0 replicates, and power is the
    fraction of H1 replicates exceeding them. All statistics share the same
    data, so columns of the value arrays are directly comparable.
    """
    alphas = _check_alphas(alphas)
    if trials < 100:
        raise ValueError(f"trials must be >= 100, got {trials}")
    names = tuple(statistics)
    if preset_h0.dims != preset_h1.dims:
        raise ValueError("H0 and H1 presets must share dimensions")
    phases = []
    for phase, preset in ((0, preset_h0), (1, preset_h1)):
        parts = _run_chunks(_power_chunk, (preset, names, seed, phase), trials, workers)
        phases.append(np.concatenate(parts))
    h0_values, h1_values = phases
    thresholds = np.empty((len(names), alphas.size))
    power = np.empty_like(thresholds)
    for i in range(len(names)):
        for j, a in enumerate(alphas):
            thresholds[i, j] = empirical_threshold(h0_values[:, i], a)
            power[i, j] = np.mean(h1_values[:, i] > thresholds[i, j])
    return PowerResult(
        preset_name=preset_h1.name,
        M=preset_h1.dims.M,
        statistics=names,
        alphas=tuple(float(a) for a in alphas),
        trials=trials,
        seed=seed,
        thresholds=thresholds,
        power=power,
        h0_values=h0_values,
        h1_values=h1_values,
    )


# ---------------------------------------------------------------------------
# CLT diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CltResult:
    """Empirical vs theoretical covariance of the scaled eigenvalue deviations.

    Relative errors are reported on entries whose theoretical value exceeds 10%
    of the largest in-block entry; entries outside the diagonal blocks are
    theoretically zero and summarized by their largest z-score.
    """

    M: int
    trials: int
    seed: int
    theta_theory: np.ndarray
    theta_empirical: np.ndarray
    rel_errors: np.ndarray  # NaN outside the compared support
    max_offblock_z: float
    max_mean_z: float
    block_size: int

    @property
    def max_rel_error(self) -> float:
        return float(np.nanmax(np.abs(self.rel_errors)))

    @property
    def median_rel_error(self) -> float:
        return float(np.nanmedian(np.abs(self.rel_errors)))

    def to_json(self) -> str:
        return json.dumps(
            {
                "M": self.M,
                "trials": self.trials,
                "seed": self.seed,
                "max_rel_error": self.max_rel_error,
                "median_rel_error": self.median_rel_error,
                "max_offblock_z": self.max_offblock_z,
                "max_mean_z": self.max_mean_z,
                "theta_theory": self.theta_theory.tolist(),
                "theta_empirical": self.theta_empirical.tolist(),
            },
            indent=2,
            sort_keys=True,
        )


def _clt_chunk(preset, limits, seed, lo, hi):
    dims = preset.dims
    factors = [_group_factors(preset, g) for g in range(dims.L)]
    sqrt_m = math.sqrt(dims.M)
    devs = np.empty((hi - lo, dims.K * (dims.L + 1)))
    for i, trial in enumerate(range(lo, hi)):
        rng = _trial_rng(seed, trial)
        ys = _sample_groups(preset, factors, rng)
        covs = SampleCovariances.from_samples(ys, dims)
        stacked = np.concatenate(
            (covs.eigvals_pooled[None, : dims.K], covs.eigvals_per_group[:, : dims.K])
        )  # (L+1, K), row 0 pooled
        devs[i] = sqrt_m * (stacked.T - limits).ravel()  # k-major
    return devs


def run_clt_check(
    preset: ScenarioPreset, trials: int = 2000, seed: int = 0, workers: int = 1
) -> CltResult:
    """Compare the empirical covariance of sqrt(M) * (leading eigenvalues minus
    their limits) against the closed-form limit covariance, under the null."""
    if preset.hypothesis != "H0":
        raise ValueError("the covariance comparison is defined under the null preset")
    if trials < 100:
        raise ValueError(f"trials must be >= 100, got {trials}")
    dims = preset.dims
    K, L = dims.K, dims.L
    gammas = _pooled_low_rank_eigs(preset)
    if np.any(gammas <= 0):
        raise ValueError("all K spikes must be present (positive strengths)")
    # limiting locations, row 0 pooled then one row per group: (L+1, K) -> (K, L+1)
    limits = np.empty((K, L + 1))
    for k in range(K):
        limits[k, 0] = spike_forward(
            gammas[k], MpParams(preset.sigma2, dims.c_pooled)
        ).location
    for g in range(L):
        group_gammas = _low_rank_eigs(preset, g)
        for k in range(K):
            limits[k, g + 1] = spike_forward(
                group_gammas[k], MpParams(preset.sigma2, dims.c_groups[g])
            ).location
    parts = _run_chunks(_clt_chunk, (preset, limits, seed), trials, workers)
    devs = np.concatenate(parts)
    theory = theta_matrix(gammas, preset.sigma2, dims).theta
    empirical = np.cov(devs, rowvar=False)
    block = np.kron(np.eye(K, dtype=bool), np.ones((L + 1, L + 1), dtype=bool))
    support = np.abs(theory) > 0.1 * np.abs(theory[block]).max()
    rel = np.full_like(theory, np.nan)
    rel[support] = (empirical[support] - theory[support]) / theory[support]
    # z-scores: sampling s.e. of a covariance entry for Gaussian data
    se = np.sqrt(
        (np.outer(np.diag(theory), np.diag(theory)) + theory**2) / trials
    )
    off = ~block
    max_off_z = float(np.max(np.abs(empirical[off]) / se[off])) if off.any() else 0.0
    mean_se = np.sqrt(np.diag(theory) / trials)
    max_mean_z = float(np.max(np.abs(devs.mean(axis=0)) / mean_se))
    return CltResult(
        M=dims.M,
        trials=trials,
        seed=seed,
        theta_theory=theory,
        theta_empirical=empirical,
        rel_errors=rel,
        max_offblock_z=max_off_z,
        max_mean_z=max_mean_z,
        block_size=L + 1,
    )


# ---------------------------------------------------------------------------
# single-shot and synthetic-scene helpers
# ---------------------------------------------------------------------------


def single_trial(
    preset: ScenarioPreset,
    alpha: float = 0.05,
    seed: int = 0,
    statistics=STATISTIC_NAMES,
    n_quantile_samples: int = QUANTILE_SAMPLES,
) -> TrialReport:
    """One draw from the preset, all requested statistics, and the calibrated
    decision for the spike-difference statistic."""
    start = time.perf_counter()
    dims = preset.dims
    names = tuple(statistics)
    rng = _trial_rng(seed, 0)
    factors = [_group_factors(preset, g) for g in range(dims.L)]
    ys = _sample_groups(preset, factors, rng)
    covs = SampleCovariances.from_samples(ys, dims)
    values = dict(zip(names, _statistic_values(covs, dims, names)))
    thresholds, decisions = {}, {}
    if "wishart" in names:
        est = spike_estimates(covs, dims)
        ups = upsilon_hat(est, dims)
        h = contrast_matrix(dims.K, dims.L)
        xi = h @ ups @ h.T
        q = gaussian_quadratic_quantiles(
            (xi + xi.T) / 2.0, [alpha], n_quantile_samples, rng
        )[0]
        thresholds["wishart"] = float(q) / dims.M
        decisions["wishart"] = bool(values["wishart"] > thresholds["wishart"])
    return TrialReport(
        values={k: float(v) for k, v in values.items()},
        thresholds=thresholds,
        decisions=decisions,
        seed=seed,
        wall_time_s=time.perf_counter() - start,
    )


def synthetic_change_pair(
    height: int = 48,
    width: int = 48,
    M: int = 12,
    K: int = 5,
    sigma2: float = 0.5,
    seed: int = 0,
    region: tuple = ((12, 36), (12, 36)),
):
    """Co-registered multichannel image pair for change-map evaluation.

    Both images draw i.i.d. per-pixel complex normal vectors from a rank-K
    spiked background covariance; inside the rectangular region the second
    image switches to a covariance with larger spike strengths (same subspace).
    Returns (image_a, image_b, mask) with images of shape (M, height, width)
    and mask True on the changed rectangle.
    """
    base = np.array([2.0, 1.8, 1.7, 1.6, 1.5])
    changed = np.array([5.0, 4.5, 4.2, 4.1, 4.0])
    if K > min(base.size, M - 1):
        raise ValueError(f"K must be <= {min(base.size, M - 1)}, got {K}")
    angles = 2.0 * math.pi * np.arange(K) / M
    a = np.column_stack([steering_vector(th, M) for th in angles])

    def lift(strengths, w):
        d = np.sqrt(strengths[:K] + sigma2) - math.sqrt(sigma2)
        return math.sqrt(sigma2) * w + a @ (d[:, None] * (a.conj().T @ w))

    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    n_pix = height * width
    image_a = lift(base, _standard_complex(rng, (M, n_pix)))
    wb = _standard_complex(rng, (M, n_pix))
    mask = np.zeros((height, width), dtype=bool)
    (r0, r1), (c0, c1) = region
    mask[r0:r1, c0:c1] = True
    flat = mask.ravel()
    image_b = lift(base, wb)
    image_b[:, flat] = lift(changed, wb[:, flat])
    return (
        image_a.reshape(M, height, width),
        image_b.reshape(M, height, width),
        mask,
    )
