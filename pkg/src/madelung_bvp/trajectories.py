"""Velocity field, flow-line integration and the Gaussian packet machinery."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc

from . import kernels
from .errors import ContractViolation, DomainError, IncompleteHistoryError
from .gridfields import History, PhysParams, SpaceTimeGrid, fmt, normalize_slice, spatial_gradient

BOUNDARY_MASS_MAX = 1e-8
ENVELOPE_MAX_STEP = 1e-3
ENVELOPE_MIN_STEP = 1e-6


@dataclass(frozen=True)
class GaussianParams:
    sigma0: float
    sigma_dot0: float = 0.0
    center: float = 0.0

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise ContractViolation(f"sigma0 must be > 0 (got {self.sigma0})")


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    exited: bool = False
    exit_index: int | None = None   # first slice that could not be reached


def velocity_field(history: History, params: PhysParams) -> np.ndarray:
    if history.phase is None:
        raise IncompleteHistoryError("velocity_field needs a phase")
    return spatial_gradient(history.phase, history.grid) / params.mass


def integrate_trajectories(history: History, params: PhysParams, x0s, backend: str | None = None) -> list[Trajectory]:
    """RK4 on dx/dt = v(x,t), v bilinear in (x,t); one step per time slice."""
    grid = history.grid
    x0s = np.atleast_1d(np.asarray(x0s, dtype=float))
    bad = (x0s < grid.x_min) | (x0s > grid.x_max)
    if np.any(bad):
        raise DomainError(f"start point {x0s[bad][0]!r} outside [{grid.x_min}, {grid.x_max}]")
    v = np.ascontiguousarray(velocity_field(history, params))
    pos, status = kernels.rk4_bilinear(v, grid.x_min, grid.dx, grid.dt, x0s, backend)
    t = grid.t
    out = []
    for p in range(x0s.size):
        s = int(status[p])
        if s < 0:
            out.append(Trajectory(t.copy(), pos[p].copy()))
        else:
            out.append(Trajectory(t[:s].copy(), pos[p, :s].copy(), True, s))
    return out


def integrate_trajectory(history: History, params: PhysParams, x0: float, backend: str | None = None) -> Trajectory:
    return integrate_trajectories(history, params, [x0], backend)[0]


# ----------------------------------------------------------------------------
# Gaussian envelope

def _omega2(params: PhysParams) -> float:
    if isinstance(params.potential, str):
        w = params.omega
        return 0.0 if w is None else w * w
    raise ContractViolation("the Gaussian envelope needs a 'free' or 'harmonic(ω)' potential")


def envelope_states(g: GaussianParams, params: PhysParams, times) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(σ, σ̇, γ) at ``times`` from RK4 on σ̈ = ħ²/4m²σ³ − ω²σ, γ̇ = −ħ²/4mσ².

    Each output interval is split into equal substeps no longer than
    ENVELOPE_MAX_STEP or 1% of the shortest envelope time scale.  γ is the x-independent phase with γ(t0) = 0.
    """
    times = np.asarray(times, dtype=float)
    hb, m = params.hbar, params.mass
    w2 = _omega2(params)
    a = hb * hb / (4 * m * m)
    b = hb * hb / (4 * m)

    def f(y):
        s, sd, _ = y
        return np.array([sd, a / s ** 3 - w2 * s, -b / s ** 2])

    # shortest time scale 2mσ²/ħ at the narrowest width: σ0 for a free packet that is not
    # contracting, else the energy bound σ ≥ ħ/(m√(8E))
    if w2 == 0 and g.sigma_dot0 >= 0:
        s_min = g.sigma0
    else:
        s_min = hb / (m * np.sqrt(8 * float(envelope_energy(g.sigma0, g.sigma_dot0, params))))
    max_step = max(ENVELOPE_MIN_STEP, min(ENVELOPE_MAX_STEP, 0.01 * 2 * m * s_min ** 2 / hb))
    y = np.array([g.sigma0, g.sigma_dot0, 0.0])
    out = np.empty((times.size, 3))
    out[0] = y
    for n in range(1, times.size):
        span = times[n] - times[n - 1]
        k = max(1, int(np.ceil(abs(span) / max_step)))
        h = span / k
        for _ in range(k):
            k1 = f(y)
            k2 = f(y + 0.5 * h * k1)
            k3 = f(y + 0.5 * h * k2)
            k4 = f(y + h * k3)
            y = y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
            if not y[0] > 0:
                raise DomainError(f"envelope width reached {y[0]!r} near t={times[n]!r}; step too coarse")
        out[n] = y
    return out[:, 0], out[:, 1], out[:, 2]


def gaussian_envelope(g: GaussianParams, params: PhysParams, times) -> np.ndarray:
    return envelope_states(g, params, times)[0]


def envelope_energy(sigma, sigma_dot, params: PhysParams) -> np.ndarray:
    """Conserved σ̇²/2 + ħ²/8m²σ² (+ ω²σ²/2 in a harmonic trap)."""
    sigma = np.asarray(sigma)
    return (0.5 * np.asarray(sigma_dot) ** 2 + params.hbar ** 2 / (8 * params.mass ** 2 * sigma ** 2)
            + 0.5 * _omega2(params) * sigma ** 2)


def analytic_free_sigma(g: GaussianParams, params: PhysParams, t) -> np.ndarray:
    """Closed form σ(t) for the free envelope from (σ0, σ̇0)."""
    t = np.asarray(t, dtype=float)
    c = params.hbar / (2 * params.mass * g.sigma0)
    return np.sqrt((g.sigma0 + g.sigma_dot0 * t) ** 2 + (c * t) ** 2)


def envelope_two_point(sigma0: float, sigmaf: float, params: PhysParams, times) -> np.ndarray:
    """σ(t) with σ(t0) = sigma0 and σ(tf) = sigmaf, by shooting on σ̇0.

    σ(tf) is not monotone in σ̇0 (strong contraction bounces back), so two
    roots can exist.  The scan starts at a fast-expansion rate and walks
    toward contraction; the first sign change is the shallow branch, closest
    to free spreading.
    """
    times = np.asarray(times, dtype=float)
    rel = times - times[0]
    T = rel[-1]

    def miss(v):
        return envelope_states(GaussianParams(sigma0, v), params, [0.0, T])[0][-1] - sigmaf

    step = 0.05 * max(abs(sigmaf - sigma0) / T, params.hbar / (params.mass * sigma0))
    hi = (sigmaf - sigma0) / T + params.hbar / (params.mass * sigma0)
    while miss(hi) <= 0:
        hi += 10 * step
    lo = hi
    for _ in range(4000):
        lo -= step
        try:
            if miss(lo) < 0:
                break
        except DomainError:
            break
        hi = lo
    else:
        raise DomainError("no envelope connects the requested widths")
    v0 = brentq(miss, lo, hi, xtol=1e-14, rtol=1e-14)
    return envelope_states(GaussianParams(sigma0, v0), params, rel)[0]


def gaussian_history(g: GaussianParams, params: PhysParams, grid: SpaceTimeGrid) -> History:
    """ρ Gaussian with σ(t) from the envelope ODE, j = ρ(σ̇/σ)(x−c), S = (mσ̇/2σ)(x−c)² + γ."""
    sigma, sdot, gamma = envelope_states(g, params, grid.t - grid.t0)
    smax = float(sigma.max())
    left = 0.5 * erfc((g.center - grid.x_min) / (np.sqrt(2) * smax))
    right = 0.5 * erfc((grid.x_max - g.center) / (np.sqrt(2) * smax))
    if left + right >= BOUNDARY_MASS_MAX:
        raise DomainError(f"boundary mass {left + right:.3e} >= {BOUNDARY_MASS_MAX:g} at sigma={smax:.4g}; widen the domain")
    xc = grid.x[None, :] - g.center
    s = sigma[:, None]
    rho = normalize_slice(np.exp(-0.5 * (xc / s) ** 2) / (np.sqrt(2 * np.pi) * s), grid)
    rate = (sdot / sigma)[:, None]
    j = rho * rate * xc
    j[:, 0] = j[:, -1] = 0.0
    S = params.mass * rate / 2 * xc ** 2 + gamma[:, None]
    S = S - S[0, 0]
    meta = {"kind": "gaussian", "sigma": sigma, "sigma_dot": sdot, "gamma": gamma}
    return History(grid, rho, j, S, meta)


# ----------------------------------------------------------------------------
# flow tubes and ensembles

def cumulative_mass(rho: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    c = np.zeros_like(rho)
    c[..., 1:] = np.cumsum(0.5 * (rho[..., 1:] + rho[..., :-1]) * grid.dx, axis=-1)
    return c


def flow_tube_mass(history: History, a: Trajectory, b: Trajectory) -> np.ndarray:
    """∫ρ dx between two trajectories at each common slice (linear-in-x cumulative)."""
    n = min(a.x.size, b.x.size)
    grid = history.grid
    x = grid.x
    C = cumulative_mass(history.rho[:n], grid)
    return np.array([np.interp(b.x[k], x, C[k]) - np.interp(a.x[k], x, C[k]) for k in range(n)])


def fan_start_points(rho0: np.ndarray, grid: SpaceTimeGrid, count: int, lo: float = 0.02, hi: float = 0.98) -> np.ndarray:
    """Start points at evenly spaced mass quantiles of ρ(t0) (the gray tube fan)."""
    C = cumulative_mass(rho0, grid)
    C = C / C[-1]
    return np.interp(np.linspace(lo, hi, count), C, grid.x)


def write_trajectories_csv(path, trajectories: list[Trajectory]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("trajectory_id,t,x\n")
        for k, tr in enumerate(trajectories):
            fh.write("".join(f"{k},{fmt(t)},{fmt(x)}\n" for t, x in zip(tr.t.tolist(), tr.x.tolist())))
    return path
