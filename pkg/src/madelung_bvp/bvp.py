"""Two-time boundary value solvers: ρ(t0), ρ(tf) given, find the stationary history.

Three routes are provided:

* ``alternating`` (default primal-dual scheme): the multiplier S is carried as
  the phase of ψ = √ρ e^{iS/ħ}.  Each outer iteration propagates forward with
  the current initial phase, projects the terminal density onto ρf, propagates
  back and projects onto ρ0 (keeping the phase), with a ρ-weighted smoothness
  prior on the recovered phase.  The converged history is then made exactly
  continuity-feasible by a minimal current correction in the kinetic metric.
* ``gradient``: the literal first-order scheme — closed-form j, log-space
  descent on ρ along the QHJ residual, dual ascent on S along the continuity
  residual.  Kept for comparison; it is linearly unstable on slow,
  short-wavelength modes and typically reports non-convergence.
* ``bridge``: exact minimizer of the positive-definite cost (kinetic +
  ħ²/8m Fisher + ∫Vρ).  That problem is a Schrödinger bridge with diffusivity
  ħ/m, solved by log-domain Fortet/Sinkhorn iteration on the Euclidean
  propagator; it reaches any positive target, which the Schrödinger-stationary
  schemes cannot when the target is outside the reachable set.
* ``solve_bvp_shooting``: Chebyshev initial phase + Nelder–Mead on the terminal
  L1 mismatch (independent cross-check).
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import chebyshev
from scipy.optimize import minimize
from scipy.sparse.linalg import spsolve
from scipy.special import logsumexp

from .action import ActionBreakdown, guidance_residual, primal_action, qhj_residual, continuity_residual
from .errors import ContractViolation, NumericalDivergenceError
from .gridfields import (
    History,
    PhysParams,
    SpaceTimeGrid,
    apply_floor,
    d1,
    integrate_slice,
    normalize_slice,
    rho_floor,
    spatial_gradient,
    time_derivative,
)
from .oracle import propagate, unwrap_phase
from .action import quantum_potential

SCHEMES = ("alternating", "gradient", "bridge")


@dataclass(frozen=True)
class BoundaryData:
    rho0: np.ndarray
    rhof: np.ndarray
    label: str | None = None

    @classmethod
    def from_densities(cls, rho0, rhof, grid: SpaceTimeGrid, label: str | None = None) -> "BoundaryData":
        return cls(normalize_slice(rho0, grid), normalize_slice(rhof, grid), label)

    def validate(self, grid: SpaceTimeGrid, tol: float = 1e-9):
        for name in ("rho0", "rhof"):
            r = np.asarray(getattr(self, name), dtype=float)
            if r.shape != (grid.nx,):
                raise ContractViolation(f"{name} has shape {r.shape}; grid needs ({grid.nx},)")
            if np.any(r < rho_floor(r) * (1 - 1e-12)):
                raise ContractViolation(f"{name} is not floored")
            mass = integrate_slice(r, grid)
            if abs(mass - 1) > tol:
                raise ContractViolation(f"{name} integrates to {mass!r}, not 1")


@dataclass(frozen=True)
class SolverConfig:
    max_outer_iterations: int = 5000
    primal_step: float = 1e-3
    dual_step: float = 1e-2
    continuity_tolerance: float = 1e-6
    stationarity_tolerance: float = 5e-2
    seed: int = 0
    scheme: str = "alternating"
    terminal_tolerance: float = 1e-3
    chebyshev_degree: int = 8
    phase_smoothing: float = 1e-2
    init_perturbation: float = 0.0
    check_every: int = 50

    def __post_init__(self):
        for name in ("primal_step", "dual_step", "continuity_tolerance", "stationarity_tolerance",
                     "terminal_tolerance", "phase_smoothing"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ContractViolation(f"{name} must be > 0 (got {v})")
        if self.max_outer_iterations < 1 or self.check_every < 1:
            raise ContractViolation("iteration counts must be positive")
        if self.chebyshev_degree < 1:
            raise ContractViolation("chebyshev_degree must be >= 1")
        if self.scheme not in SCHEMES:
            raise ContractViolation(f"scheme must be one of {SCHEMES} (got {self.scheme!r})")
        if self.init_perturbation < 0:
            raise ContractViolation("init_perturbation must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    continuity_rms: float
    guidance_rms: float
    qhj_rms: float
    action: ActionBreakdown
    wall_time: float
    method: str
    terminal_mismatch: float = float("nan")
    qhj_masked_fraction: float = 0.0
    message: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self, include_wall_time: bool = True) -> dict:
        d = {"converged": bool(self.converged), "iterations": int(self.iterations), "method": self.method,
             "residuals": {"continuity": self.continuity_rms, "guidance": self.guidance_rms,
                           "qhj": self.qhj_rms, "qhj_masked_fraction": self.qhj_masked_fraction},
             "terminal_mismatch": self.terminal_mismatch, "action": self.action.to_dict(),
             "message": self.message}
        if self.extra:
            d["extra"] = self.extra
        if include_wall_time:
            d["wall_time"] = self.wall_time
        return d


# ----------------------------------------------------------------------------
# shared helpers

def l1_distance(a, b, grid: SpaceTimeGrid):
    return integrate_slice(np.abs(np.asarray(a) - np.asarray(b)), grid)


def _smooth_phase(theta: np.ndarray, weight: np.ndarray, lam: float) -> np.ndarray:
    """argmin Σ w(φ−θ)² + λ Σ (Δ³φ)²: trusts θ where ρ is large, extrapolates quadratically elsewhere."""
    n = theta.size
    D3 = sp.diags([-1.0, 3.0, -3.0, 1.0], [0, 1, 2, 3], shape=(n - 3, n))
    A = (sp.diags(weight) + lam * (D3.T @ D3)).tocsc()
    return spsolve(A, weight * theta)


def project_continuity(rho: np.ndarray, current: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    """Smallest correction δj (in the metric Σ δj²/ρ) making ∂tρ + ∇·j vanish slice by slice.

    Walls stay at j = 0.  The kinetic metric puts the correction where the
    density is large, so the implied velocity change δj/ρ stays small.
    """
    nx = grid.nx
    h = grid.dx
    r = time_derivative(rho, grid) + d1(current, h)
    # first-derivative operator acting on interior currents (nx × nx-2)
    G = sp.lil_matrix((nx, nx))
    for i in range(1, nx - 1):
        G[i, i - 1] = -1 / (2 * h)
        G[i, i + 1] = 1 / (2 * h)
    G[0, 0:3] = np.array([-3, 4, -1]) / (2 * h)
    G[nx - 1, nx - 3:] = np.array([1, -4, 3]) / (2 * h)
    A = G.tocsc()[:, 1:-1]
    out = np.array(current, dtype=float, copy=True)
    for n in range(grid.nt):
        W = sp.diags(apply_floor(rho[n])[1:-1])
        M = (A @ W @ A.T).tocsc()
        eps = 1e-13 * abs(M.diagonal()).max()
        lam = spsolve((M + eps * sp.identity(nx, format="csc")).tocsc(), -r[n])
        out[n, 1:-1] += W @ (A.T @ lam)
    out[:, 0] = out[:, -1] = 0.0
    return out


def history_from_states(states: np.ndarray, boundary: BoundaryData, params: PhysParams,
                        grid: SpaceTimeGrid, project: bool = True, meta: dict | None = None) -> History:
    """Madelung-decompose a ψ sequence into (ρ, j, S); boundary slices are the given ρ0, ρf."""
    states = np.asarray(states)
    rho = normalize_slice(np.abs(states) ** 2, grid)
    rho[0] = boundary.rho0
    rho[-1] = boundary.rhof
    theta = unwrap_phase(np.angle(states))
    # make the phase continuous in time at the node carrying the most mass
    ref = int(np.argmax(rho.mean(axis=0)))
    theta += (np.unwrap(theta[:, ref]) - theta[:, ref])[:, None]
    S = params.hbar * theta
    S -= S[0, 0]
    j = rho * spatial_gradient(S, grid) / params.mass
    j[:, 0] = j[:, -1] = 0.0
    if project:
        j = project_continuity(rho, j, grid)
    return History(grid, rho, j, S, dict(meta or {}))


def _residual_summary(history: History, params: PhysParams, branch: str = "schrodinger"):
    c = continuity_residual(history).rms
    g = guidance_residual(history, params).rms
    q = qhj_residual(history, params, branch)
    return c, g, q.rms, q.masked_fraction


def _certify(c, g, q, config: SolverConfig) -> bool:
    return (c <= config.continuity_tolerance and g <= config.stationarity_tolerance
            and q <= config.stationarity_tolerance)


def _finish(history: History, params: PhysParams, config: SolverConfig, method: str, iterations: int,
            started: float, mismatch: float, extra_ok: bool, message: str, extra: dict | None = None,
            branch: str = "schrodinger"):
    c, g, q, frac = _residual_summary(history, params, branch)
    ok = bool(extra_ok and _certify(c, g, q, config))
    if not ok and not message:
        message = "residuals above tolerance"
    act = primal_action(history, params, label=history.meta.get("label"))
    report = SolveReport(ok, iterations, c, g, q, act, time.perf_counter() - started, method,
                         float(mismatch), frac, message or "converged", dict(extra or {}))
    return history, report


def _initial_phase(grid: SpaceTimeGrid, config: SolverConfig) -> np.ndarray:
    if config.init_perturbation == 0:
        return np.zeros(grid.nx)
    rng = np.random.default_rng(config.seed)
    xi = (2 * grid.x - grid.x_min - grid.x_max) / (grid.x_max - grid.x_min)
    coef = np.concatenate([[0.0], rng.normal(scale=config.init_perturbation, size=4)])
    return chebyshev.chebval(xi, coef)


# ----------------------------------------------------------------------------
# primal-dual solvers

def solve_bvp_primal_dual(boundary: BoundaryData, params: PhysParams, grid: SpaceTimeGrid,
                          config: SolverConfig | None = None) -> tuple[History, SolveReport]:
    config = config or SolverConfig()
    boundary.validate(grid)
    if config.scheme == "gradient":
        return _solve_gradient(boundary, params, grid, config)
    if config.scheme == "bridge":
        return _solve_bridge(boundary, params, grid, config)
    return _solve_alternating(boundary, params, grid, config)


def _solve_alternating(boundary, params, grid, config):
    started = time.perf_counter()
    hb = params.hbar
    a0 = np.sqrt(boundary.rho0)
    af = np.sqrt(boundary.rhof)
    weight = boundary.rho0 / boundary.rho0.max()
    theta = _initial_phase(grid, config) / hb
    mismatches = []
    best = (np.inf, theta)
    it = 0
    for it in range(1, config.max_outer_iterations + 1):
        psiT = propagate(a0 * np.exp(1j * theta), params, grid, store_all=False)
        mis = l1_distance(np.abs(psiT) ** 2, boundary.rhof, grid)
        if not np.isfinite(mis):
            raise NumericalDivergenceError(f"non-finite terminal mismatch at iteration {it}", it)
        mismatches.append(mis)
        if mis < best[0]:
            best = (mis, theta)
        if mis < 1e-10:
            break
        if it > 20 and mismatches[-11] - mis < 1e-3 * mis:
            break
        back = propagate(af * np.exp(1j * np.angle(psiT)), params, grid, direction=-1, store_all=False)
        theta = _smooth_phase(unwrap_phase(np.angle(back)), weight, config.phase_smoothing)
    mis, theta = best
    states = propagate(a0 * np.exp(1j * theta), params, grid)
    history = history_from_states(states, boundary, params, grid,
                                  meta={"label": boundary.label, "initial_phase": hb * theta})
    ok = mis <= config.terminal_tolerance
    msg = "" if ok else f"terminal mismatch {mis:.3e} above tolerance {config.terminal_tolerance:g}"
    return _finish(history, params, config, "alternating", it, started, mis, ok, msg)


def euclidean_log_kernel(params: PhysParams, grid: SpaceTimeGrid, tau: float) -> np.ndarray:
    """log of the imaginary-time propagator e^{−τH/ħ} between nodes, including the dx weight."""
    if not isinstance(params.potential, str):
        raise ContractViolation("the bridge scheme needs a 'free' or 'harmonic(ω)' potential")
    x = grid.x
    hb, m, w = params.hbar, params.mass, params.omega
    if w is None:
        D = hb * tau / m
        return -((x[:, None] - x[None, :]) ** 2) / (2 * D) + np.log(grid.dx / np.sqrt(2 * np.pi * D))
    sh, ch = np.sinh(w * tau), np.cosh(w * tau)
    c = m * w / (2 * hb * sh)
    return (-c * ((x[:, None] ** 2 + x[None, :] ** 2) * ch - 2 * x[:, None] * x[None, :])
            + 0.5 * np.log(m * w / (2 * np.pi * hb * sh)) + np.log(grid.dx))


def _solve_bridge(boundary, params, grid, config):
    started = time.perf_counter()
    hb = params.hbar
    T = grid.duration
    LK = euclidean_log_kernel(params, grid, T)
    l0, lf = np.log(boundary.rho0), np.log(boundary.rhof)
    lphi0 = np.zeros(grid.nx)
    mis = np.inf
    it = 0
    for it in range(1, config.max_outer_iterations + 1):
        lhatf = logsumexp(LK + (l0 - lphi0)[None, :], axis=1)
        lphif = lf - lhatf
        lphi0 = logsumexp(LK + lphif[None, :], axis=1)   # kernel is symmetric
        lhat0 = l0 - lphi0
        # after the sweep ρ(t0) is exact; the mismatch sits at tf
        mis = float(l1_distance(np.exp(lphif + logsumexp(LK + lhat0[None, :], axis=1)), boundary.rhof, grid))
        if not np.isfinite(mis):
            raise NumericalDivergenceError(f"non-finite bridge marginal at iteration {it}", it)
        if mis < 1e-12:
            break
    lhat0 = l0 - lphi0
    lphif = lf - logsumexp(LK + lhat0[None, :], axis=1)
    # exact minimum from the potentials: ħ·KL(bridge ‖ reference) minus the entropy terms
    entropy = integrate_slice(boundary.rho0 * l0, grid) + integrate_slice(boundary.rhof * lf, grid)
    dual_cost = hb * (integrate_slice(boundary.rho0 * lhat0, grid) + integrate_slice(boundary.rhof * lphif, grid)
                      - 0.5 * entropy)
    lphi = np.empty((grid.nt, grid.nx))
    lhat = np.empty_like(lphi)
    lhat[0], lphi[-1] = lhat0, lphif
    for n in range(1, grid.nt):
        tau = n * grid.dt
        lhat[n] = logsumexp(euclidean_log_kernel(params, grid, tau) + lhat0[None, :], axis=1)
        lphi[grid.nt - 1 - n] = logsumexp(euclidean_log_kernel(params, grid, tau) + lphif[None, :], axis=1)
    rho = normalize_slice(np.exp(lphi + lhat), grid)
    rho[0], rho[-1] = boundary.rho0, boundary.rhof
    S = 0.5 * hb * (lphi - lhat)
    S -= S[0, 0]
    j = rho * spatial_gradient(S, grid) / params.mass
    j[:, 0] = j[:, -1] = 0.0
    j = project_continuity(rho, j, grid)
    history = History(grid, rho, j, S, {"label": boundary.label, "kind": "bridge"})
    ok = mis <= config.terminal_tolerance
    msg = "" if ok else f"terminal mismatch {mis:.3e} above tolerance {config.terminal_tolerance:g}"
    return _finish(history, params, config, "bridge", it, started, mis, ok, msg,
                   {"dual_cost": float(dual_cost)}, branch="bridge")


def _solve_gradient(boundary, params, grid, config):
    started = time.perf_counter()
    m = params.mass
    s = ((grid.t - grid.t0) / grid.duration)[:, None]
    rho = normalize_slice((1 - s) * boundary.rho0[None, :] + s * boundary.rhof[None, :], grid)
    rho[0], rho[-1] = boundary.rho0, boundary.rhof
    S = np.zeros((grid.nt, grid.nx))
    j = np.zeros_like(S)
    V = params.V(grid)[None, :]
    converged = False
    it = 0
    for it in range(1, config.max_outer_iterations + 1):
        gS = spatial_gradient(S, grid)
        # (b) descent on interior slices along −δÃ/δρ, taken in log space
        step_dir = gS * gS / (2 * m) + V + time_derivative(S, grid) + quantum_potential(rho, params, grid).values
        with np.errstate(over="ignore", invalid="ignore"):
            log_rho = np.log(rho[1:-1]) + config.primal_step * step_dir[1:-1]
            inner = np.exp(log_rho)
        if not np.all(np.isfinite(inner)):
            raise NumericalDivergenceError(f"primal update diverged at iteration {it}", it)
        rho[1:-1] = normalize_slice(inner, grid)
        # (a) closed-form current
        j = rho * gS / m
        j[:, 0] = j[:, -1] = 0.0
        # (c) dual ascent on the continuity residual
        r = time_derivative(rho, grid) + spatial_gradient(j, grid)
        S = S + config.dual_step * grid.dt * r
        if not np.all(np.isfinite(S)):
            raise NumericalDivergenceError(f"dual update diverged at iteration {it}", it)
        if it % config.check_every == 0:
            h = History(grid, rho, j, S - S[0, 0])
            c, g, q, _ = _residual_summary(h, params)
            if _certify(c, g, q, config):
                converged = True
                break
    history = History(grid, rho.copy(), j, S - S[0, 0], {"label": boundary.label})
    msg = "" if converged else f"iteration limit {config.max_outer_iterations} reached"
    return _finish(history, params, config, "gradient", it, started, float("nan"), converged, msg)


# ----------------------------------------------------------------------------
# shooting

def chebyshev_phase(coeffs, grid: SpaceTimeGrid, params: PhysParams, offset: float = 0.0) -> np.ndarray:
    """S0(x) = ħ(offset + Σ_{k≥1} c_k T_k(ξ)), ξ ∈ [−1, 1] across the domain."""
    xi = (2 * grid.x - grid.x_min - grid.x_max) / (grid.x_max - grid.x_min)
    return params.hbar * chebyshev.chebval(xi, np.concatenate([[offset], np.asarray(coeffs, dtype=float)]))


def solve_bvp_shooting(boundary: BoundaryData, params: PhysParams, grid: SpaceTimeGrid,
                       config: SolverConfig | None = None, phase_offset: float = 0.0,
                       initial_step: float = 0.5) -> tuple[History, SolveReport]:
    config = config or SolverConfig()
    boundary.validate(grid)
    started = time.perf_counter()
    a0 = np.sqrt(boundary.rho0)
    deg = config.chebyshev_degree

    def mismatch(c):
        S0 = chebyshev_phase(c, grid, params, phase_offset)
        psiT = propagate(a0 * np.exp(1j * S0 / params.hbar), params, grid, store_all=False)
        return l1_distance(np.abs(psiT) ** 2, boundary.rhof, grid)

    x0 = np.zeros(deg)
    simplex = np.vstack([x0, x0 + initial_step * np.eye(deg)])
    res = minimize(mismatch, x0, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "xatol": 1e-7, "fatol": 1e-10,
                            "maxfev": max(200 * deg, config.max_outer_iterations), "adaptive": True})
    coeffs = res.x
    mis = float(res.fun)
    S0 = chebyshev_phase(coeffs, grid, params, phase_offset)
    states = propagate(a0 * np.exp(1j * S0 / params.hbar), params, grid)
    history = history_from_states(states, boundary, params, grid,
                                  meta={"label": boundary.label, "initial_phase": S0, "coefficients": coeffs})
    ok = mis <= config.terminal_tolerance
    msg = "" if ok else f"optimizer stagnated at mismatch {mis:.3e} ({res.message})"
    return _finish(history, params, config, "shooting", int(res.nfev), started, mis, ok, msg,
                   {"coefficients": [float(c) for c in coeffs]})


def action_of_history(history: History, params: PhysParams, label: str | None = None) -> ActionBreakdown:
    return primal_action(history, params, label=label if label is not None else history.meta.get("label"))


def with_scheme(config: SolverConfig, scheme: str) -> SolverConfig:
    return replace(config, scheme=scheme)
