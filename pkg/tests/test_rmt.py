import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from spikedcov.rmt import (
    MpParams,
    mp_density,
    mp_edges,
    mp_point_mass,
    spike_forward,
    spike_inverse,
    stieltjes_at_spike,
    wachter_density,
    wachter_edges,
)

from oracles import bulk_integral, central_diff, companion_quad, edge_integral, stieltjes_quad

PARAM_GRID = [(1.0, 0.5), (0.5, 0.25), (1.0, 0.8), (2.0, 0.1), (1.0, 2.0)]


def test_params_validation():
    with pytest.raises(ValueError):
        MpParams(sigma2=0.0, c=0.5)
    with pytest.raises(ValueError):
        MpParams(sigma2=-1.0, c=0.5)
    with pytest.raises(ValueError):
        MpParams(sigma2=1.0, c=0.0)
    with pytest.raises(ValueError):
        MpParams(sigma2=1.0, c=math.inf)


def test_edges_square_case():
    # c = 1: support is [0, 4 sigma2]
    lo, hi = mp_edges(MpParams(sigma2=1.0, c=1.0))
    assert lo == 0.0
    assert hi == 4.0


def test_edges_hand_value():
    lo, hi = mp_edges(MpParams(sigma2=1.0, c=0.5))
    assert_allclose(lo, (1.0 - math.sqrt(0.5)) ** 2, rtol=1e-15)
    assert_allclose(hi, (1.0 + math.sqrt(0.5)) ** 2, rtol=1e-15)
    assert_allclose(lo, 0.0857864376, rtol=1e-8)
    assert_allclose(hi, 2.9142135624, rtol=1e-8)


def test_point_mass():
    assert mp_point_mass(MpParams(1.0, 0.5)) == 0.0
    assert mp_point_mass(MpParams(1.0, 1.0)) == 0.0
    assert mp_point_mass(MpParams(1.0, 2.0)) == 0.5


@pytest.mark.parametrize("sigma2,c", PARAM_GRID)
def test_density_normalizes(sigma2, c):
    """Continuous part plus the atom at zero carries unit mass."""
    params = MpParams(sigma2, c)
    lo, hi = mp_edges(params)
    mass = edge_integral(lambda x: mp_density(x, params), lo, hi)
    assert_allclose(mass + mp_point_mass(params), 1.0, atol=1e-6)


def test_density_outside_support():
    params = MpParams(1.0, 0.5)
    lo, hi = mp_edges(params)
    assert mp_density(lo - 1e-9, params) == 0.0
    assert mp_density(hi + 1e-9, params) == 0.0
    assert mp_density(-1.0, params) == 0.0
    x = np.linspace(lo + 1e-12, hi - 1e-12, 64)
    d = mp_density(x, params)
    assert d.shape == x.shape
    assert np.all(d >= 0.0)


def test_spike_forward_hand_values():
    # (gamma + s2)(gamma + s2 c)/gamma at gamma=1, s2=1, c=0.5 -> 3
    assert_allclose(spike_forward(1.0, MpParams(1.0, 0.5)).location, 3.0, rtol=1e-15)
    assert_allclose(
        spike_forward(3.0, MpParams(0.5, 0.25)).location, 3.5 * 3.125 / 3.0, rtol=1e-15
    )


def test_spike_forward_subcritical_clamps():
    params = MpParams(1.0, 0.25)
    _, hi = mp_edges(params)
    for gamma in (0.0, 0.1, params.detectability):
        assert spike_forward(gamma, params).location == hi
    # just above the threshold the location leaves the edge continuously
    loc = spike_forward(params.detectability * (1.0 + 1e-8), params).location
    assert loc == pytest.approx(hi, rel=1e-7)


def test_spike_forward_monotone():
    params = MpParams(0.5, 0.3)
    gammas = params.detectability * np.linspace(1.01, 20.0, 50)
    locs = [spike_forward(g, params).location for g in gammas]
    assert np.all(np.diff(locs) > 0)


def test_spike_forward_rejects_negative():
    with pytest.raises(ValueError):
        spike_forward(-0.5, MpParams(1.0, 0.5))


@pytest.mark.parametrize("sigma2,c", PARAM_GRID)
def test_spike_round_trip(sigma2, c):
    params = MpParams(sigma2, c)
    for mult in (1.001, 1.5, 3.0, 10.0, 100.0):
        gamma = params.detectability * mult
        lam = spike_forward(gamma, params).location
        assert_allclose(spike_inverse(lam, params), gamma, rtol=1e-12)


def test_spike_inverse_clamps_at_edge():
    params = MpParams(1.0, 0.5)
    _, hi = mp_edges(params)
    assert spike_inverse(hi, params) == pytest.approx(params.detectability, rel=1e-12)
    assert spike_inverse(hi - 0.3, params) == params.detectability
    assert spike_inverse(0.0, params) == params.detectability


def test_stieltjes_hand_values():
    """Exact values at gamma=1, sigma2=1, c=0.5 (sample location z = 3)."""
    vals = stieltjes_at_spike(1.0, MpParams(1.0, 0.5))
    assert_allclose(vals.m, -2.0 / 3.0, rtol=1e-14)
    assert_allclose(vals.m_tilde, -0.5, rtol=1e-14)
    assert_allclose(vals.m_prime, 8.0 / 9.0, rtol=1e-14)
    assert_allclose(vals.m_tilde_prime, 0.5, rtol=1e-14)
    assert_allclose(vals.tau, 1.0, rtol=1e-14)
    assert_allclose(vals.tau_prime, -2.0, rtol=1e-14)


@pytest.mark.parametrize("sigma2,c", PARAM_GRID)
@pytest.mark.parametrize("mult", [1.5, 3.0, 10.0])
def test_stieltjes_against_quadrature(sigma2, c, mult):
    """Closed forms of m, m~, their derivatives, tau and tau' agree with direct
    quadrature of the bulk law and central differences thereof."""
    params = MpParams(sigma2, c)
    gamma = params.detectability * mult
    z = spike_forward(gamma, params).location
    vals = stieltjes_at_spike(gamma, params)

    m_quad = stieltjes_quad(z, sigma2, c)
    mt_quad = companion_quad(z, sigma2, c)
    assert_allclose(vals.m, m_quad, rtol=1e-4)
    assert_allclose(vals.m_tilde, mt_quad, rtol=1e-4)
    assert_allclose(vals.tau, z * m_quad * mt_quad, rtol=1e-4)

    assert_allclose(
        vals.m_prime, central_diff(lambda u: stieltjes_quad(u, sigma2, c), z), rtol=1e-4
    )
    assert_allclose(
        vals.m_tilde_prime,
        central_diff(lambda u: companion_quad(u, sigma2, c), z),
        rtol=1e-4,
    )
    assert_allclose(
        vals.tau_prime,
        central_diff(
            lambda u: u * stieltjes_quad(u, sigma2, c) * companion_quad(u, sigma2, c), z
        ),
        rtol=1e-4,
    )


def test_stieltjes_self_consistency():
    """The closed-form m satisfies the fixed-point equation of the bulk law,
    m~ = -1/(z (1 + sigma2 c m)), at several spike locations."""
    for sigma2, c in PARAM_GRID:
        params = MpParams(sigma2, c)
        gamma = 2.5 * params.detectability
        z = spike_forward(gamma, params).location
        vals = stieltjes_at_spike(gamma, params)
        assert_allclose(vals.m_tilde, -1.0 / (z * (1.0 + sigma2 * c * vals.m)), rtol=1e-13)


def test_stieltjes_rejects_subcritical():
    params = MpParams(1.0, 0.5)
    with pytest.raises(ValueError):
        stieltjes_at_spike(params.detectability, params)
    with pytest.raises(ValueError):
        stieltjes_at_spike(0.1, params)


def test_wachter_edges_validation():
    with pytest.raises(ValueError):
        wachter_edges(0.5, 0.6)  # needs c < c_ell
    with pytest.raises(ValueError):
        wachter_edges(1.2, 0.5)


@pytest.mark.parametrize("c_ell,c", [(0.5, 0.25), (0.4, 0.2), (0.8, 0.1), (0.6, 0.3)])
def test_wachter_density_normalizes(c_ell, c):
    lo, hi = wachter_edges(c_ell, c)
    assert 0.0 < lo < hi
    mass = edge_integral(lambda x: wachter_density(x, c_ell, c), lo, hi)
    assert_allclose(mass, 1.0, atol=1e-6)


def test_wachter_density_outside_support():
    lo, hi = wachter_edges(0.5, 0.25)
    assert wachter_density(lo - 1e-9, 0.5, 0.25) == 0.0
    assert wachter_density(hi + 1e-9, 0.5, 0.25) == 0.0
    x = np.linspace(lo, hi, 33)
    assert np.all(wachter_density(x, 0.5, 0.25) >= 0.0)
