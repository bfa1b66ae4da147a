from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from madelung_bvp.errors import ContractViolation, DegenerateStateError
from madelung_bvp.gridfields import PhysParams, SpaceTimeGrid, gaussian_density, integrate_slice
from madelung_bvp.oracle import (
    gaussian_state,
    harmonic_ground_state,
    madelung_compose,
    madelung_decompose,
    norms,
    phase_reliability,
    propagate,
)

P = PhysParams()
G = SpaceTimeGrid(-20.0, 20.0, 512, 0.0, 2.0, 401)


def width(rho, grid):
    m = integrate_slice(rho * grid.x, grid)
    return np.sqrt(integrate_slice(rho * (grid.x - m) ** 2, grid))


def test_decompose_real_state():
    rho = gaussian_density(G, 1.0)
    r, S = madelung_decompose(np.sqrt(rho).astype(complex), P)
    np.testing.assert_allclose(S, 0.0, atol=1e-15)
    np.testing.assert_allclose(r, rho, rtol=1e-14)


def test_plane_wave_phase():
    g = SpaceTimeGrid(0.0, 10.0, 1001, 0.0, 1.0, 2)
    psi = np.exp(2j * g.x) / np.sqrt(10.0)
    _, S = madelung_decompose(psi, P)
    np.testing.assert_allclose(S, 2 * (g.x - g.x[0]), atol=1e-9)


@given(st.floats(0.5, 2.0), st.floats(-3, 3), st.floats(-2, 2), st.floats(0.3, 3))
def test_round_trip(sigma, center, k0, hbar):
    p = PhysParams(hbar=hbar)
    psi = gaussian_state(G, sigma, center, k0)
    rho, S = madelung_decompose(psi, p)
    back = madelung_compose(rho, S, p, G).values
    ok = phase_reliability(psi)
    ph = np.vdot(back[ok], psi[ok])
    ph /= abs(ph)
    assert np.max(np.abs(back * ph - psi)) < 1e-12


def test_decompose_degenerate():
    with pytest.raises(DegenerateStateError):
        madelung_decompose(np.zeros(G.nx, complex), P)
    with pytest.raises(ContractViolation):
        madelung_compose(-np.ones(G.nx), np.zeros(G.nx), P, G)


def test_free_spreading_width():
    states = propagate(gaussian_state(G, 1.0), P, G)
    s = width(np.abs(states[-1]) ** 2, G)
    assert abs(s - np.sqrt(2)) / np.sqrt(2) < 5e-3


def test_norm_conservation():
    states = propagate(gaussian_state(G, 1.0, 2.0, 1.5), P, G)
    n = norms(states, G)
    assert np.max(np.abs(n - 1.0)) < 1e-8
    assert np.max(np.abs(np.diff(n))) < 1e-10


def test_harmonic_stationarity():
    g = SpaceTimeGrid(-8.0, 8.0, 321, 0.0, 3.0, 151)
    p = PhysParams(potential="harmonic(1.0)")
    gs = harmonic_ground_state(p, g)
    st_ = propagate(gs, p, g)
    assert np.max(np.abs(np.abs(st_) ** 2 - np.abs(gs) ** 2)) < 1e-6
    cont = harmonic_ground_state(p, g, discrete=False)
    st2 = propagate(cont, p, g)
    assert np.max(np.abs(np.abs(st2) ** 2 - np.abs(cont) ** 2)) < 1e-3


def test_time_reversal():
    psi0 = gaussian_state(G, 1.0, 0.5, 1.0)
    fwd = propagate(psi0, P, G, store_all=False)
    back = propagate(np.conj(fwd), P, G, store_all=False)
    err = np.sqrt(integrate_slice(np.abs(np.conj(back) - psi0) ** 2, G))
    assert err < 1e-6
    back2 = propagate(fwd, P, G, direction=-1, store_all=False)
    assert np.sqrt(integrate_slice(np.abs(back2 - psi0) ** 2, G)) < 1e-6


def test_dt_second_order():
    psi0 = gaussian_state(G, 1.0)
    finals = {}
    for nt in (51, 101, 801):
        g = SpaceTimeGrid(-20.0, 20.0, 512, 0.0, 2.0, nt)
        finals[nt] = propagate(psi0, P, g, store_all=False)
    e1 = np.max(np.abs(finals[51] - finals[801]))
    e2 = np.max(np.abs(finals[101] - finals[801]))
    # reference error at dt/16 relative to dt contributes ~1/256 of e1
    factor = e1 / e2
    assert 3.5 <= factor <= 4.5


def test_propagate_validation():
    with pytest.raises(ContractViolation):
        propagate(np.ones(7, complex), P, G)
