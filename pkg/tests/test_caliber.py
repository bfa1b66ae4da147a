from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from madelung_bvp.bvp import BoundaryData, SolverConfig, solve_bvp_primal_dual
from madelung_bvp.caliber import (
    OutcomeConstraint,
    cost_of_history,
    min_action_to_outcome,
    node_suppression_demo,
    outcome_weights,
)
from madelung_bvp.errors import ContractViolation, UsageError
from madelung_bvp.gridfields import PhysParams, SpaceTimeGrid, gaussian_density, normalize_slice
from madelung_bvp.oracle import gaussian_state, propagate
from madelung_bvp.trajectories import GaussianParams, gaussian_history

P = PhysParams()
G = SpaceTimeGrid(-12.0, 12.0, 401, 0.0, 2.0, 201)
costs_st = st.lists(st.floats(-50, 50), min_size=1, max_size=6)


def test_weights_examples():
    d = outcome_weights([("a", 1.0), ("b", 1.0)], P)
    assert d.probabilities == [0.5, 0.5]
    d = outcome_weights([("a", 0.0), ("b", math.log(10.0))], P)
    assert abs(d.probability("a") - 10 / 11) < 1e-12 and abs(d.probability("b") - 1 / 11) < 1e-12
    d = outcome_weights([("a", 0.0), ("b", 1.0), ("c", 2.0)], P)
    ref = [1.0, math.exp(-1), math.exp(-2)]
    assert np.allclose(d.probabilities, [r / sum(ref) for r in ref], atol=1e-12, rtol=0)
    assert d.Z == pytest.approx(sum(ref), rel=1e-12)


def test_weights_errors_and_nonfinite():
    with pytest.raises(UsageError):
        outcome_weights([], P)
    with pytest.raises(UsageError):
        outcome_weights([("a", float("nan"))], P)
    d = outcome_weights([("a", 0.0), ("b", float("inf"))], P)
    assert d.probabilities == [1.0, 0.0] and d.warnings
    d = outcome_weights([("a", -1e4), ("b", -1e4)], P)
    assert d.Z == math.inf and d.log_Z == pytest.approx(1e4 + math.log(2), rel=1e-15)


@given(costs_st, st.floats(-1e3, 1e3))
def test_shift_invariance(costs, c):
    a = outcome_weights([(str(i), v) for i, v in enumerate(costs)], P)
    b = outcome_weights([(str(i), v + c) for i, v in enumerate(costs)], P)
    assert np.max(np.abs(np.array(a.probabilities) - b.probabilities)) < 1e-12
    assert abs(sum(a.probabilities) - 1) < 1e-12
    assert min(a.probabilities) >= 0


@given(costs_st, st.floats(0.1, 10))
def test_monotone_and_beta(costs, hbar):
    p = PhysParams(hbar=hbar)
    d = outcome_weights([(str(i), v) for i, v in enumerate(costs)], p)
    assert d.beta == 1.0 / hbar
    for i, ci in enumerate(costs):
        for j, cj in enumerate(costs):
            if ci < cj and d.probabilities[i] > 0:
                assert d.probabilities[i] >= d.probabilities[j]
                if (cj - ci) / hbar > 1e-9 and d.probabilities[j] > 0:
                    assert d.probabilities[i] > d.probabilities[j]


def test_outcome_constraint():
    prof = gaussian_density(G, 2.0)
    o = OutcomeConstraint.from_window("w", prof, G, -1.0, 1.0)
    o.validate(G)
    assert o.rhok[0] > 0 and o.rhok[0] < 1e-9 * o.rhok.max()
    with pytest.raises(ContractViolation):
        OutcomeConstraint.from_window("w", prof, G, 1.0, -1.0)
    with pytest.raises(ContractViolation):
        OutcomeConstraint("w", o.rhok, (-20.0, 1.0)).validate(G)


def test_free_endpoint_cost():
    exact = gaussian_history(GaussianParams(1.0), P, G)
    rhof = exact.rho[-1]
    free = OutcomeConstraint("free", rhof, (G.x_min, G.x_max))
    # eq2: the Schrödinger-stationary solution is the free evolution itself
    _, c_eq2, rep = min_action_to_outcome(exact.rho[0], free, P, G, cost="eq2")
    ref = cost_of_history(exact, P, "eq2")
    assert rep.converged
    assert abs(c_eq2 - ref) / abs(ref) < 1e-2
    # positive: wrapping the endpoint in a full-screen window leaves the constraint inactive
    windowed = OutcomeConstraint.from_window("free", rhof, G, G.x_min, G.x_max)
    _, c_pos, rep = min_action_to_outcome(exact.rho[0], windowed, P, G)
    _, direct = solve_bvp_primal_dual(BoundaryData(exact.rho[0], rhof), P, G, SolverConfig(scheme="bridge"))
    assert rep.converged and not rep.extra["upper_bound"]
    assert abs(c_pos - direct.extra["dual_cost"]) / abs(c_pos) < 1e-2
    # the closed-form cost agrees with the quadrature of the returned history for smooth targets
    assert abs(c_pos - rep.extra["history_cost"]) / abs(c_pos) < 1e-2


def test_mirror_outcomes_equal():
    psi0 = gaussian_state(G, 1.0)
    rho0 = normalize_slice(np.abs(psi0) ** 2, G)
    prof = np.abs(propagate(psi0, P, G, store_all=False)) ** 2
    left = OutcomeConstraint.from_window("left", prof, G, -6.0, 0.0)
    right = OutcomeConstraint.from_window("right", prof, G, 0.0, 6.0)
    _, cl, _ = min_action_to_outcome(rho0, left, P, G)
    _, cr, _ = min_action_to_outcome(rho0, right, P, G)
    assert abs(cl - cr) / abs(cl) < 5e-3
    d = outcome_weights([("left", cl), ("right", cr)], P)
    assert d.probabilities == pytest.approx([0.5, 0.5], abs=5e-3 * abs(cl))


def test_narrower_target_costs_more():
    exact = gaussian_history(GaussianParams(1.0), P, G)
    sf = exact.meta["sigma"][-1]
    costs = []
    for s in (sf, sf / 2, sf / 4):
        target = OutcomeConstraint(f"s={s:.3f}", gaussian_density(G, s), (G.x_min, G.x_max))
        costs.append(min_action_to_outcome(exact.rho[0], target, P, G)[1])
    assert costs[0] < costs[1] < costs[2]


def test_zero_separation_costs_equal():
    g = SpaceTimeGrid(-16.0, 16.0, 321, 0.0, 2.0, 101)
    rep = node_suppression_demo(P, g, separation=0.0, wide_check=False)
    assert not rep["preset"]["fringes_found"]
    a, n = rep["costs"]["antinode"], rep["costs"]["node"]
    assert abs(n - a) / abs(a) < 5e-2


def test_cost_mode_validation():
    o = OutcomeConstraint("w", gaussian_density(G, 1.0), (G.x_min, G.x_max))
    with pytest.raises(ContractViolation):
        min_action_to_outcome(gaussian_density(G, 1.0), o, P, G, cost="signed")
