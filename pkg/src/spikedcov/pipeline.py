"""End-to-end detection pipelines: multi-file equality tests, sliding-window
change maps over co-registered image pairs, and ROC evaluation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimators import ModelDims, SampleCovariances, spike_estimates
from .io import ChangeMap, DataFormatError, read_cmx
from .montecarlo import QUANTILE_SAMPLES
from .statistics import (
    DegenerateSpike,
    calibrate_threshold,
    compute_statistic,
    contrast_matrix,
    upsilon_hat,
    wishart_statistic,
)

__all__ = ["detect", "changemap", "roc", "RocCurve"]


def detect(
    paths,
    K: int,
    alpha: float = 0.05,
    seed: int = 0,
    n_quantile_samples: int = QUANTILE_SAMPLES,
) -> dict:
    """Test whether the groups stored in the given matrix files share a
    covariance. Each file holds one group's M x N_ell sample matrix; the report
    carries the calibrated decision plus competitor statistic values."""
    if len(paths) < 2:
        raise ValueError(f"need at least two groups, got {len(paths)} file(s)")
    mats = [read_cmx(p) for p in paths]
    rows = {m.shape[0] for m in mats}
    if len(rows) != 1:
        raise DataFormatError(
            f"files disagree on the observation dimension: {sorted(rows)}"
        )
    dims = ModelDims(M=rows.pop(), N=tuple(m.shape[1] for m in mats), K=K)
    covs = SampleCovariances.from_samples(mats, dims)
    est = spike_estimates(covs, dims)
    statistic = wishart_statistic(est)
    cal = calibrate_threshold(
        upsilon_hat(est, dims),
        contrast_matrix(dims.K, dims.L),
        dims.M,
        alpha,
        n_quantile_samples,
        seed,
    )
    competitors = {}
    for name in ("glr", "glr_lr", "fisher"):
        if name != "glr_lr" and dims.M >= min(dims.N):
            competitors[name] = None  # needs invertible group SCMs
            continue
        competitors[name] = float(compute_statistic(name, covs, dims))
    return {
        "M": dims.M,
        "N": list(dims.N),
        "K": dims.K,
        "alpha": alpha,
        "seed": seed,
        "statistic": float(statistic),
        "epsilon_hat": cal.epsilon_hat,
        "decision": "reject" if statistic > cal.epsilon_hat else "accept",
        "sigma2_hat": float(est.sigma2_hat),
        "gamma_pooled": est.gamma_pooled.tolist(),
        "gamma_per_group": est.gamma_per_group.tolist(),
        "competitors": competitors,
    }


def changemap(
    image_a: np.ndarray,
    image_b: np.ndarray,
    window: int = 5,
    K: int = 5,
    statistic: str = "wishart",
    alpha: float | None = None,
    n_quantile_samples: int = QUANTILE_SAMPLES,
    seed: int = 0,
) -> ChangeMap:
    """Slide a window x window patch over a co-registered pair of
    (channels, height, width) images and evaluate the chosen statistic on each
    pixel's two patch sample sets. Border pixels are flagged invalid; passing
    alpha additionally computes per-pixel calibrated decisions (only meaningful
    for the 'wishart' statistic)."""
    image_a = np.asarray(image_a, dtype=complex)
    image_b = np.asarray(image_b, dtype=complex)
    if image_a.shape != image_b.shape or image_a.ndim != 3:
        raise ValueError(
            f"images must share a (channels, height, width) shape, got "
            f"{image_a.shape} and {image_b.shape}"
        )
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    channels, height, width = image_a.shape
    n = window * window
    if statistic in ("glr", "fisher") and n <= channels:
        raise ValueError(
            f"statistic {statistic!r} inverts group covariances and needs "
            f"window^2 > channels ({n} <= {channels}); use 'wishart' or 'glr_lr'"
        )
    dims = ModelDims(M=channels, N=(n, n), K=K)
    half = window // 2
    values = np.full((height, width), np.nan)
    valid = np.zeros((height, width), dtype=bool)
    decisions = np.zeros((height, width), dtype=bool) if alpha is not None else None
    h = contrast_matrix(dims.K, dims.L) if alpha is not None else None
    for r in range(half, height - half):
        for c in range(half, width - half):
            ya = image_a[:, r - half : r + half + 1, c - half : c + half + 1]
            yb = image_b[:, r - half : r + half + 1, c - half : c + half + 1]
            covs = SampleCovariances.from_samples(
                [ya.reshape(channels, n), yb.reshape(channels, n)], dims
            )
            values[r, c] = compute_statistic(statistic, covs, dims)
            valid[r, c] = True
            if alpha is not None:
                try:
                    est = spike_estimates(covs, dims)
                    ups = upsilon_hat(est, dims)
                except DegenerateSpike:
                    valid[r, c] = False
                    values[r, c] = np.nan
                    continue
                cal = calibrate_threshold(
                    ups, h, dims.M, alpha, n_quantile_samples, seed
                )
                decisions[r, c] = values[r, c] > cal.epsilon_hat
    return ChangeMap(
        width=width, height=height, values=values, valid=valid, decisions=decisions
    )


@dataclass(frozen=True)
class RocCurve:
    """Detection rate vs false-alarm rate over a sweep of the sorted unique
    statistic values, plus the area under the staircase."""

    false_alarm: np.ndarray
    detection: np.ndarray
    thresholds: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.false_alarm.tolist(), self.detection.tolist()))

    def to_tsv(self) -> str:
        lines = [f"# auc\t{self.auc:.6g}", "false_alarm\tdetection\tthreshold"]
        for fa, dr, th in zip(self.false_alarm, self.detection, self.thresholds):
            lines.append(f"{fa:.6g}\t{dr:.6g}\t{th:.6g}")
        return "\n".join(lines) + "\n"


def roc(change_map: ChangeMap) -> RocCurve:
    """Receiver operating characteristic of a change map against its
    ground-truth mask, declaring change where the statistic is >= threshold."""
    if change_map.mask is None:
        raise ValueError("change map has no ground-truth mask")
    vals = change_map.values[change_map.valid]
    labels = change_map.mask[change_map.valid].astype(bool)
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError(
            f"mask must contain both classes over valid pixels "
            f"(positives={n_pos}, negatives={n_neg})"
        )
    order = np.argsort(-vals, kind="stable")
    v = vals[order]
    y = labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    last_of_run = np.r_[np.nonzero(np.diff(v))[0], v.size - 1]
    detection = np.r_[0.0, tp[last_of_run] / n_pos]
    false_alarm = np.r_[0.0, fp[last_of_run] / n_neg]
    thresholds = np.r_[np.inf, v[last_of_run]]
    auc = float(np.trapezoid(detection, false_alarm))
    return RocCurve(
        false_alarm=false_alarm, detection=detection, thresholds=thresholds, auc=auc
    )
