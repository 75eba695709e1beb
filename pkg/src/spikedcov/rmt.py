"""Closed-form limit-spectrum functions for noise-plus-low-rank sample covariances.

Everything here is deterministic scalar math: the limiting bulk law of a pure-noise
sample covariance matrix, the map between a population spike strength and the
location its sample eigenvalue converges to, the values of the associated Stieltjes
transforms at such a location, and the limiting density of whitened two-sample
(Fisher-type) spectra. All functions are pure and safe to call concurrently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
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
]


@dataclass(frozen=True)
class MpParams:
    """Bulk-spectrum parameters.

    Attributes
    ----------
    sigma2 : float
        Noise variance (power units), > 0.
    c : float
        Dimension-to-sample ratio M/N, > 0.
    """

    sigma2: float
    c: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ValueError(f"sigma2 must be finite and > 0, got {self.sigma2}")
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValueError(f"c must be finite and > 0, got {self.c}")

    @property
    def detectability(self) -> float:
        """Minimal spike strength sigma2*sqrt(c) separable from the bulk."""
        return self.sigma2 * math.sqrt(self.c)

    @property
    def bulk_edge(self) -> float:
        """Upper edge sigma2*(1+sqrt(c))^2 of the bulk support."""
        return self.sigma2 * (1.0 + math.sqrt(self.c)) ** 2


@dataclass(frozen=True)
class SpikeLocation:
    """A spike strength together with the limit position of its sample eigenvalue."""

    gamma: float
    location: float


@dataclass(frozen=True)
class StieltjesValues:
    """Values of the transforms m, m~, their derivatives, tau = z*m*m~ and tau',
    all evaluated at the sample-eigenvalue location of a supercritical spike."""

    m: float
    m_tilde: float
    m_prime: float
    m_tilde_prime: float
    tau: float
    tau_prime: float


def mp_edges(params: MpParams) -> tuple[float, float]:
    """Support edges sigma2*(1 -/+ sqrt(c))^2 of the continuous bulk."""
    s, r = params.sigma2, math.sqrt(params.c)
    return s * (1.0 - r) ** 2, s * (1.0 + r) ** 2


def mp_point_mass(params: MpParams) -> float:
    """Mass (1 - 1/c)+ of the atom at zero (nonzero only when c > 1)."""
    return max(1.0 - 1.0 / params.c, 0.0)


def mp_density(x, params: MpParams):
    """Continuous bulk density at x; zero outside the open support interval.

    The atom at zero is not included here — query it with mp_point_mass. Accepts
    scalars or arrays.
    """
    lo, hi = mp_edges(params)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > lo) & (x < hi) & (x > 0)
    xi = x[inside]
    out[inside] = np.sqrt((xi - lo) * (hi - xi)) / (
        2.0 * np.pi * params.sigma2 * params.c * xi
    )
    return out if out.ndim else float(out)


def spike_forward(gamma: float, params: MpParams) -> SpikeLocation:
    """Limit position of the sample eigenvalue induced by a spike of strength gamma.

    Above the detectability threshold sigma2*sqrt(c) the position is
    (gamma+sigma2)(gamma+sigma2*c)/gamma; at or below it the eigenvalue sticks to
    the bulk edge sigma2*(1+sqrt(c))^2.
    """
    if not (math.isfinite(gamma) and gamma >= 0):
        raise ValueError(f"gamma must be finite and >= 0, got {gamma}")
    s, c = params.sigma2, params.c
    if gamma > params.detectability:
        loc = (gamma + s) * (gamma + s * c) / gamma
    else:
        loc = params.bulk_edge
    return SpikeLocation(gamma=float(gamma), location=float(loc))


def spike_inverse(lam: float, params: MpParams) -> float:
    """Largest spike strength whose sample eigenvalue converges to lam.

    Inverts spike_forward in closed form (larger root of
    g^2 + g(sigma2 + sigma2*c - lam) + sigma2^2*c = 0); inputs at or below the
    bulk edge are clamped to the detectability floor sigma2*sqrt(c).
    """
    s, c = params.sigma2, params.c
    if not (lam > params.bulk_edge):
        return params.detectability
    b = s + s * c - lam
    disc = b * b - 4.0 * s * s * c
    return 0.5 * (-b + math.sqrt(disc))


def stieltjes_at_spike(gamma: float, params: MpParams) -> StieltjesValues:
    """Closed forms of m, m~, m', m~', tau, tau' at the location of a spike.

    Only defined for supercritical spikes (gamma > sigma2*sqrt(c)); the formulas
    are singular at gamma^2 = sigma2^2*c.
    """
    s, c = params.sigma2, params.c
    if not gamma > params.detectability:
        raise ValueError(
            f"gamma={gamma} is not above the detectability threshold "
            f"{params.detectability}; the transforms are singular there"
        )
    g2 = gamma * gamma
    gap = g2 - s * s * c
    return StieltjesValues(
        m=-1.0 / (gamma + s * c),
        m_tilde=-1.0 / (gamma + s),
        m_prime=g2 / ((gamma + s * c) ** 2 * gap),
        m_tilde_prime=g2 / ((gamma + s) ** 2 * gap),
        tau=1.0 / gamma,
        tau_prime=-1.0 / gap,
    )


def _wachter_check(c_ell: float, c: float) -> None:
    if not (0.0 < c < c_ell < 1.0):
        raise ValueError(f"need 0 < c < c_ell < 1, got c={c}, c_ell={c_ell}")


def wachter_edges(c_ell: float, c: float) -> tuple[float, float]:
    """Support edges of the whitened two-sample limit law with ratios (c_ell, c)."""
    _wachter_check(c_ell, c)
    gap = c_ell - c
    root = math.sqrt(c_ell + c * c_ell / gap - c * c_ell**2 / gap)
    scale = gap / (c * (1.0 - c_ell) ** 2)
    return scale * (1.0 - root) ** 2, scale * (1.0 + root) ** 2


def wachter_density(x, c_ell: float, c: float):
    """Limit density of whitened two-sample spectra; zero outside its support.

    Accepts scalars or arrays.
    """
    lo, hi = wachter_edges(c_ell, c)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > lo) & (x < hi)
    xi = x[inside]
    out[inside] = (
        (1.0 / c_ell - 1.0)
        * np.sqrt((xi - lo) * (hi - xi))
        / (2.0 * np.pi * xi * (1.0 + xi))
    )
    return out if out.ndim else float(out)
