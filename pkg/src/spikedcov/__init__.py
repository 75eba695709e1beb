"""Equality tests for high-dimensional spiked covariance matrices.

The package tests whether L groups of complex Gaussian observations share a
covariance of the form (low-rank) + sigma2 * I. The main test compares spike
strengths recovered from each group's sample covariance against those of the
pooled one, with a threshold calibrated from the eigenvalue central limit
theorem; classical likelihood-ratio and extreme-eigenvalue competitors are
included for comparison, together with a Monte-Carlo harness and a
sliding-window change-map pipeline for image pairs.
"""
from .estimators import (
    ModelDims,
    SampleCovariances,
    SpikeEstimates,
    compute_scm,
    energy_ratio,
    noise_variance_hat,
    pool_scms,
    rank_estimate,
    spike_estimates,
)
from .io import ChangeMap, DataFormatError, read_cmx, read_image, write_cmx, write_image
from .montecarlo import (
    CltResult,
    PowerResult,
    ScenarioPreset,
    TrialReport,
    Type1Result,
    build_covariance,
    orthogonal_pair_angles,
    run_clt_check,
    run_power,
    run_type1,
    sample_complex_gaussian,
    scenario_preset,
    single_trial,
    steering_vector,
    synthetic_change_pair,
    type1_preset,
)
from .pipeline import RocCurve, changemap, detect, roc
from .rmt import (
    MpParams,
    SpikeLocation,
    StieltjesValues,
    mp_density,
    mp_edges,
    mp_point_mass,
    spike_forward,
    spike_inverse,
    stieltjes_at_spike,
    wachter_density,
    wachter_edges,
)
from .statistics import (
    Calibration,
    CltCovariance,
    DegenerateSpike,
    FisherParams,
    IllConditioned,
    NumericalDegeneracy,
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

__version__ = "0.1.0"

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
    "MpParams",
    "SpikeLocation",
    "StieltjesValues",
    "mp_edges",
    "mp_point_mass",
    "mp_density",
    "spike_forward",
    "spike_inverse",
    "stieltjes_at_spike",
    "wachter_edges",
    "wachter_density",
    "NumericalDegeneracy",
    "DegenerateSpike",
    "IllConditioned",
    "SingularCovariance",
    "CltCovariance",
    "Calibration",
    "FisherParams",
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
    "ScenarioPreset",
    "TrialReport",
    "Type1Result",
    "PowerResult",
    "CltResult",
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
    "DataFormatError",
    "ChangeMap",
    "write_cmx",
    "read_cmx",
    "write_image",
    "read_image",
    "detect",
    "changemap",
    "roc",
    "RocCurve",
    "__version__",
]
