"""Deterministic invariant suite behind ``madelung-bvp verify``.

Every check is seeded and single-threaded, and the result carries no wall
times, so repeated runs serialize to identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev

from .action import (
    fisher_functional_derivative,
    fisher_information,
    kkt_residuals,
    primal_action,
    quantum_potential,
)
from .bvp import BoundaryData, SolverConfig, l1_distance, solve_bvp_primal_dual
from .caliber import outcome_weights
from .gridfields import PhysParams, SpaceTimeGrid, gaussian_density, integrate_slice, normalize_slice
from .oracle import (
    gaussian_state,
    harmonic_ground_state,
    madelung_compose,
    madelung_decompose,
    norms,
    propagate,
)
from .trajectories import (
    GaussianParams,
    analytic_free_sigma,
    envelope_energy,
    envelope_states,
    gaussian_history,
    integrate_trajectories,
)

GAUSSIAN_GRID = SpaceTimeGrid(-12.0, 12.0, 401, 0.0, 2.0, 201)


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "threshold": self.threshold,
                "passed": self.passed, "detail": self.detail}


def _below(name, value, threshold, detail=""):
    value = float(value)
    return Check(name, value, threshold, bool(value < threshold), detail)


def check_grid_reproducible() -> list[Check]:
    g = SpaceTimeGrid(-3.0, 7.0, 123, 0.0, 1.5, 17)
    h = SpaceTimeGrid(**{k: getattr(g, k) for k in ("x_min", "x_max", "nx", "t0", "tf", "nt")})
    same = np.array_equal(g.x, h.x) and np.array_equal(g.t, h.t) and g.x[-1] == 7.0
    return [Check("grid_bit_exact", float(not same), 0.5, bool(same))]


def check_gaussian_regression() -> list[Check]:
    p = PhysParams()
    hist = gaussian_history(GaussianParams(1.0), p, GAUSSIAN_GRID)
    r = kkt_residuals(hist, p)
    x0 = np.linspace(-3, 3, 13)
    x0 = x0[x0 != 0]
    sig = hist.meta["sigma"]
    worst = 0.0
    for tr, a in zip(integrate_trajectories(hist, p, x0), x0):
        worst = max(worst, float(np.max(np.abs(tr.x / a - sig[: tr.x.size] / sig[0]))))
    return [_below("gaussian_continuity_rms", r["continuity"], 1e-4),
            _below("gaussian_guidance_rms", r["guidance"], 1e-6),
            _below("gaussian_qhj_rms", r["qhj"], 1e-3),
            _below("trajectory_scaling_error", worst, 1e-3)]


def check_envelope() -> list[Check]:
    p = PhysParams()
    g = GaussianParams(1.0, 0.0)
    t = np.linspace(0.0, 2.0, 201)
    s, sd, _ = envelope_states(g, p, t)
    e = envelope_energy(s, sd, p)
    return [_below("envelope_sigma_T", abs(s[-1] - np.sqrt(2.0)), 1e-6),
            _below("envelope_energy_drift", np.max(np.abs(e - e[0])), 1e-8),
            _below("envelope_vs_closed_form", np.max(np.abs(s - analytic_free_sigma(g, p, t))), 1e-6)]


def check_fisher_identities() -> list[Check]:
    g = SpaceTimeGrid(-10.0, 10.0, 8001, 0.0, 1.0, 2)
    rho = gaussian_density(g, 1.0, 0.3)
    rng = np.random.default_rng(0)
    worst = 0.0
    dF = fisher_functional_derivative(rho, g)
    for _ in range(20):
        p = chebyshev.chebval(g.x / 10, rng.normal(size=6))
        eta = rho * (p - integrate_slice(rho * p, g))
        eps = 1e-4
        fd = (fisher_information(rho + eps * eta, g) - fisher_information(rho - eps * eta, g)) / (2 * eps)
        an = integrate_slice(dF * eta, g)
        worst = max(worst, abs(fd - an) / abs(an))
    params = PhysParams(mass=1.3, hbar=0.7)
    q = quantum_potential(rho, params, g)
    ident = np.max(np.abs(q.values - params.hbar ** 2 / (8 * params.mass) * dF)[~q.flagged])
    return [_below("fisher_directional_derivative", worst, 1e-5, "20 seeded perturbations, nx=8001"),
            _below("q_vs_fisher_derivative", ident, 1e-8)]


def check_fisher_scaling() -> list[Check]:
    g = SpaceTimeGrid(-10.0, 10.0, 4001, 0.0, 1.0, 2)
    sig = np.array([1.0, 0.5, 0.25, 0.125])
    F = np.array([fisher_information(gaussian_density(g, s), g) for s in sig])
    slope = np.polyfit(np.log(sig), np.log(F), 1)[0]
    gy = SpaceTimeGrid(-8.0, 8.0, 321, 0.0, 1.0, 2)
    gx = SpaceTimeGrid(-10.0, 10.0, 401, 0.0, 1.0, 2)
    rx, ry = gaussian_density(gx, 1.0), gaussian_density(gy, 0.7, 0.5)
    f2 = fisher_information(np.outer(ry, rx), gx, gy)
    f1 = fisher_information(rx, gx) + fisher_information(ry, gy)
    return [_below("fisher_slope_deviation", abs(slope + 2.0), 0.05, f"slope={slope!r}"),
            _below("fisher_additivity", abs(f2 - f1) / f1, 1e-6)]


def check_oracle() -> list[Check]:
    g = SpaceTimeGrid(-20.0, 20.0, 512, 0.0, 2.0, 401)
    p = PhysParams()
    states = propagate(gaussian_state(g, 1.0), p, g)
    n = norms(states, g)
    rho, S = madelung_decompose(states[-1], p)
    back = madelung_compose(rho, S, p, g).values
    phase = np.vdot(back, states[-1])
    phase /= abs(phase)
    trip = np.max(np.abs(back * phase - states[-1]))
    gh = SpaceTimeGrid(-8.0, 8.0, 321, 0.0, 3.0, 151)
    ph = PhysParams(potential="harmonic(1.0)")
    gs = harmonic_ground_state(ph, gh)
    st = propagate(gs, ph, gh)
    stat = np.max(np.abs(np.abs(st) ** 2 - np.abs(gs) ** 2))
    return [_below("cn_norm_drift", np.max(np.abs(n - n[0])), 1e-12),
            _below("madelung_round_trip", trip, 1e-10),
            _below("harmonic_stationarity", stat, 1e-10)]


def check_weights() -> list[Check]:
    p = PhysParams()
    d = outcome_weights([("a", 0.0), ("b", np.log(10.0))], p)
    d3 = outcome_weights([("a", 0.0), ("b", 1.0), ("c", 2.0)], p)
    ref = np.exp(-np.arange(3.0))
    ref /= ref.sum()
    shift = outcome_weights([("a", 1e3), ("b", 1e3 + 1.0), ("c", 1e3 + 2.0)], p)
    return [_below("weights_ln10", max(abs(d.probabilities[0] - 10 / 11), abs(d.probabilities[1] - 1 / 11)), 1e-12),
            _below("weights_direct_sum", np.max(np.abs(np.array(d3.probabilities) - ref)), 1e-12),
            _below("weights_shift_invariance", np.max(np.abs(np.array(shift.probabilities) - ref)), 1e-12)]


def check_bvp_spreading() -> list[Check]:
    """Spreading-Gaussian BVP: certification, oracle agreement and the analytic action."""
    p = PhysParams()
    g = GAUSSIAN_GRID
    exact = gaussian_history(GaussianParams(1.0), p, g)
    boundary = BoundaryData(exact.rho[0], exact.rho[-1], "spreading")
    hist, rep = solve_bvp_primal_dual(boundary, p, g, SolverConfig())
    states = propagate(madelung_compose(hist.rho[0], hist.phase[0], p, g), p, g)
    l1 = float(np.max(l1_distance(normalize_slice(np.abs(states) ** 2, g), hist.rho, g)))
    a_ref = primal_action(exact, p).primal_total
    a_rel = abs(rep.action.primal_total - a_ref) / abs(a_ref)
    return [Check("bvp_spreading_converged", float(not rep.converged), 0.5, bool(rep.converged), rep.message),
            _below("bvp_spreading_continuity", rep.continuity_rms, SolverConfig().continuity_tolerance),
            _below("bvp_spreading_guidance", rep.guidance_rms, SolverConfig().stationarity_tolerance),
            _below("bvp_spreading_qhj", rep.qhj_rms, SolverConfig().stationarity_tolerance),
            _below("bvp_vs_oracle_l1", l1, 1e-2),
            _below("bvp_action_vs_analytic", a_rel, 2e-2)]


CHECKS: list[Callable[[], list[Check]]] = [
    check_grid_reproducible, check_gaussian_regression, check_envelope, check_fisher_identities,
    check_fisher_scaling, check_oracle, check_weights, check_bvp_spreading,
]


def run_verify() -> dict:
    checks = [c for fn in CHECKS for c in fn()]
    return {"passed": all(c.passed for c in checks), "n_checks": len(checks),
            "n_failed": sum(not c.passed for c in checks), "checks": [c.to_dict() for c in checks]}
