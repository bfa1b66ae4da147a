from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import chebyshev

from madelung_bvp.action import (
    augmented_action,
    continuity_residual,
    fisher_functional_derivative,
    fisher_information,
    guidance_residual,
    kkt_residuals,
    primal_action,
    qhj_residual,
    quantum_potential,
)
from madelung_bvp.errors import ContractViolation, IncompleteHistoryError
from madelung_bvp.gridfields import (
    History,
    PhysParams,
    SpaceTimeGrid,
    gaussian_density,
    integrate_slice,
    spatial_gradient,
)
from madelung_bvp.oracle import harmonic_ground_state
from madelung_bvp.trajectories import GaussianParams, gaussian_history

G = SpaceTimeGrid(-10.0, 10.0, 801, 0.0, 1.0, 11)
P = PhysParams()


def static(rho, grid, current=None, phase=None):
    rho = np.tile(rho, (grid.nt, 1))
    j = np.zeros_like(rho) if current is None else current
    return History(grid, rho, j, phase)


def test_fisher_examples():
    assert fisher_information(gaussian_density(G, 1.0), G) == pytest.approx(1.0, abs=1e-3)
    assert fisher_information(gaussian_density(G, 2.0), G) == pytest.approx(0.25, abs=1e-3)
    assert fisher_information(np.full(G.nx, 0.05), G) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ContractViolation):
        fisher_information(2 * gaussian_density(G, 1.0), G)


def test_fisher_scaling_slope():
    g = SpaceTimeGrid(-10.0, 10.0, 4001, 0.0, 1.0, 2)
    sig = np.array([1.0, 0.5, 0.25, 0.125])
    F = [fisher_information(gaussian_density(g, s), g) for s in sig]
    slope = np.polyfit(np.log(sig), np.log(F), 1)[0]
    assert abs(slope + 2.0) < 0.05


def test_fisher_additivity():
    gx = SpaceTimeGrid(-10.0, 10.0, 401, 0.0, 1.0, 2)
    gy = SpaceTimeGrid(-8.0, 8.0, 321, 0.0, 1.0, 2)
    rx, ry = gaussian_density(gx, 1.0), gaussian_density(gy, 0.7, 0.5)
    f2 = fisher_information(np.outer(ry, rx), gx, gy)
    f1 = fisher_information(rx, gx) + fisher_information(ry, gy)
    assert abs(f2 - f1) / f1 < 1e-6


def test_quantum_potential_examples():
    g = SpaceTimeGrid(-10 * np.sqrt(2), 10 * np.sqrt(2), 2001, 0.0, 1.0, 2)  # √2 is a node
    q = quantum_potential(gaussian_density(g, 1.0), P, g)
    i0 = g.nx // 2
    assert q.values[i0] == pytest.approx(0.25, abs=1e-12)
    i1 = int(np.argmin(np.abs(g.x - np.sqrt(2))))
    assert abs(g.x[i1] - np.sqrt(2)) < 1e-12
    assert abs(q.values[i1]) < 1e-6
    np.testing.assert_allclose(quantum_potential(np.full(G.nx, 0.05), P, G).values, 0.0, atol=1e-12)
    assert q.flagged.any() and not q.flagged[i0]


def test_functional_derivative_examples():
    dF = fisher_functional_derivative(gaussian_density(G, 1.0), G)
    assert dF[G.nx // 2] == pytest.approx(2.0, abs=1e-3)
    np.testing.assert_allclose(fisher_functional_derivative(np.full(G.nx, 0.05), G), 0.0, atol=1e-10)


@given(st.floats(0.3, 3.0), st.floats(-2, 2), st.floats(0.2, 5), st.floats(0.2, 5))
def test_q_fisher_identity(sigma, center, mass, hbar):
    p = PhysParams(mass, hbar)
    rho = gaussian_density(G, sigma, center)
    q = quantum_potential(rho, p, G)
    lhs = -(hbar ** 2 / (8 * mass)) * fisher_functional_derivative(rho, G) + q.values
    assert np.max(np.abs(lhs[1:-1])) < 1e-8


def test_directional_derivative():
    g = SpaceTimeGrid(-10.0, 10.0, 8001, 0.0, 1.0, 2)
    rho = gaussian_density(g, 1.0, 0.3)
    dF = fisher_functional_derivative(rho, g)
    rng = np.random.default_rng(0)
    for _ in range(20):
        p = chebyshev.chebval(g.x / 10, rng.normal(size=6))
        eta = rho * (p - integrate_slice(rho * p, g))
        eps = 1e-4
        fd = (fisher_information(rho + eps * eta, g) - fisher_information(rho - eps * eta, g)) / (2 * eps)
        an = integrate_slice(dF * eta, g)
        assert abs(fd - an) / abs(an) < 1e-5


def test_primal_action_examples():
    a = primal_action(static(gaussian_density(G, 1.0), G), P)
    assert a.kinetic == 0.0 and a.potential == 0.0
    assert a.fisher == pytest.approx(-0.125, abs=1e-3)
    assert a.primal_total == pytest.approx(-0.125, abs=1e-3)
    assert a.primal_total == a.kinetic + a.potential + a.fisher
    flat = static(np.full(G.nx, 0.05), G)
    assert primal_action(flat, P).primal_total == pytest.approx(0.0, abs=1e-12)
    g2 = SpaceTimeGrid(-10.0, 10.0, 801, 0.0, 2.0, 21)
    V1 = PhysParams(potential=np.ones(g2.nx))
    assert primal_action(static(np.full(g2.nx, 0.05), g2), V1).primal_total == pytest.approx(-2.0, abs=1e-9)
    with pytest.raises(IncompleteHistoryError):
        primal_action(History(G, np.tile(gaussian_density(G, 1.0), (G.nt, 1)), None), P)


def test_augmented_action_examples():
    rho = gaussian_density(G, 1.0)
    h = static(rho, G, phase=np.zeros((G.nt, G.nx)))
    a = augmented_action(h, P)
    assert a.augmented_total == a.primal_total
    j = np.full((G.nt, G.nx), 0.3)
    S = np.tile(G.x, (G.nt, 1))
    h = static(rho, G, current=j, phase=S)
    a = augmented_action(h, P)
    assert a.augmented_total == a.primal_total + a.coupling
    # independent summation: S ∇·j is nonzero only through the one-sided wall stencils (zero here)
    div = np.gradient(j, G.dx, axis=1, edge_order=2)
    w = np.full(G.nx, G.dx)
    w[[0, -1]] *= 0.5
    wt = np.full(G.nt, G.dt)
    wt[[0, -1]] *= 0.5
    assert a.coupling == pytest.approx(float(wt @ ((S * div) @ w)), abs=1e-12)
    with pytest.raises(IncompleteHistoryError):
        augmented_action(static(rho, G), P)


def test_augmented_coupling_nonuniform_current():
    rho = gaussian_density(G, 1.0)
    j = np.tile(0.1 * np.sin(G.x), (G.nt, 1))
    S = np.tile(G.x, (G.nt, 1))
    a = augmented_action(static(rho, G, current=j, phase=S), P)
    div = np.gradient(j, G.dx, axis=1, edge_order=2)
    w = np.full(G.nx, G.dx)
    w[[0, -1]] *= 0.5
    wt = np.full(G.nt, G.dt)
    wt[[0, -1]] *= 0.5
    assert a.coupling == pytest.approx(float(wt @ ((S * div) @ w)), rel=1e-12)


def test_residual_examples():
    rho = gaussian_density(G, 1.0)
    assert continuity_residual(static(rho, G)).rms < 1e-15
    j = np.tile(G.x * rho, (G.nt, 1))
    r = continuity_residual(static(rho, G, current=j)).field
    exact = rho + G.x * np.gradient(rho, G.dx)  # ∇·(xρ) = ρ + xρ'
    assert np.max(np.abs(r[:, 1:-1] - exact[1:-1])) < 5e-3
    S = np.tile(0.5 * G.x ** 2, (G.nt, 1))
    h = static(rho, G, current=np.tile(rho, (G.nt, 1)) * spatial_gradient(S, G), phase=S)
    assert np.max(np.abs(guidance_residual(h, P).field)) < 1e-12
    S = np.tile(G.x, (G.nt, 1))
    np.testing.assert_allclose(guidance_residual(static(rho, G, phase=S), P).field, -1.0, atol=1e-12)
    flat = static(np.full(G.nx, 0.05), G, phase=np.zeros((G.nt, G.nx)))
    assert qhj_residual(flat, P).rms == pytest.approx(0.0, abs=1e-12)


def test_gaussian_history_residuals():
    g = SpaceTimeGrid(-12.0, 12.0, 401, 0.0, 2.0, 201)
    r = kkt_residuals(gaussian_history(GaussianParams(1.0), P, g), P)
    assert r["continuity"] < 1e-4 and r["guidance"] < 1e-6 and r["qhj"] < 1e-3


def test_harmonic_ground_state_qhj():
    g = SpaceTimeGrid(-8.0, 8.0, 321, 0.0, 1.0, 21)
    p = PhysParams(potential="harmonic(1.0)")
    sigma = np.sqrt(p.hbar / (2 * p.mass * 1.0))
    rho = np.tile(gaussian_density(g, sigma), (g.nt, 1))
    S = np.tile(-(p.hbar * 1.0 / 2) * g.t[:, None], (1, g.nx))
    h = History(g, rho, np.zeros_like(rho), S)
    res = qhj_residual(h, p)
    assert res.rms < 1e-6
    assert 0 < res.masked_fraction < 1
    # the discrete eigenvector also works as input (flagging excludes its tails)
    gs = np.abs(harmonic_ground_state(p, g)) ** 2
    assert integrate_slice(gs, g) == pytest.approx(1.0, abs=1e-9)


def test_qhj_branch_validation():
    flat = static(np.full(G.nx, 0.05), G, phase=np.zeros((G.nt, G.nx)))
    with pytest.raises(ContractViolation):
        qhj_residual(flat, P, branch="other")
