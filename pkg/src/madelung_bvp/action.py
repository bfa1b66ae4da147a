"""Action functionals, quantum potential, Fisher derivative and KKT residuals.

Sign convention follows the primal action
    A = ∫∫ m j²/2ρ − Vρ − (ħ²/8m)|∇ρ|²/ρ,
with the multiplier coupling ∫∫ S(∂tρ + ∇·j) added for the augmented form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DimensionError, IncompleteHistoryError
from .gridfields import (
    History,
    PhysParams,
    SpaceTimeGrid,
    apply_floor,
    d1,
    d2,
    density_mask,
    integrate_slice,
    spatial_gradient,
    time_derivative,
    trapezoid_weights,
)

NORMALIZATION_TOL = 1e-6


@dataclass(frozen=True)
class ActionBreakdown:
    kinetic: float
    potential: float
    fisher: float
    coupling: float
    primal_total: float
    augmented_total: float
    label: str | None = None

    @classmethod
    def from_parts(cls, kinetic, potential, fisher, coupling=0.0, label=None) -> "ActionBreakdown":
        kinetic, potential, fisher, coupling = map(float, (kinetic, potential, fisher, coupling))
        primal = kinetic + potential + fisher
        return cls(kinetic, potential, fisher, coupling, primal, primal + coupling, label)

    def to_dict(self, grid: SpaceTimeGrid | None = None) -> dict:
        d = {"kinetic": self.kinetic, "potential": self.potential, "fisher": self.fisher,
             "coupling": self.coupling, "primal_total": self.primal_total,
             "augmented_total": self.augmented_total}
        if self.label is not None:
            d["label"] = self.label
        if grid is not None:
            d["grid"] = grid.to_dict()
        return d


@dataclass(frozen=True)
class Residual:
    field: np.ndarray
    rms: float
    masked_fraction: float = 0.0


@dataclass(frozen=True)
class FlaggedField:
    values: np.ndarray
    flagged: np.ndarray   # True where rho is within MASK_FACTOR of the floor

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _check_normalized(rho, grid, what="density"):
    mass = np.atleast_1d(integrate_slice(rho, grid))
    bad = np.abs(mass - 1.0) > NORMALIZATION_TOL
    if np.any(bad):
        raise ContractViolation(f"{what} is not normalized (slice integral {mass[bad][0]!r})")


def _log_amplitude(rho):
    """u = ½ ln ρ on the floored density."""
    return 0.5 * np.log(apply_floor(rho))


def _amplitude_curvature(rho, h):
    """∇²√ρ/√ρ, evaluated as ∇²u + |∇u|² with u = ½ ln ρ.

    Identical to the amplitude ratio in the continuum; the log form is exact
    on Gaussians for the second-order stencils, which keeps the certification
    residuals at round-off instead of truncation error.
    """
    u = _log_amplitude(rho)
    du = d1(u, h)
    return d2(u, h) + du * du


def fisher_density(rho, h: float, axis: int = -1) -> np.ndarray:
    """|∂ρ|²/ρ evaluated as 4|∂√ρ|².

    Same integrand in the continuum; the amplitude form stays bounded next to
    floored nodes (hard-edged supports), where the literal ratio divides an
    O(ρ/dx) gradient by ρ_floor.
    """
    a = np.sqrt(apply_floor(rho))
    g = d1(a, h, axis)
    return 4.0 * g * g


def fisher_information(rho, grid: SpaceTimeGrid, y_grid: SpaceTimeGrid | None = None) -> float:
    """∫|∇ρ|²/ρ (1-D), or ∫∫(|∂xρ|² + |∂yρ|²)/ρ on a tensor grid with rho[y, x]."""
    rho = np.asarray(rho, dtype=float)
    if y_grid is None:
        if rho.ndim != 1:
            raise DimensionError("1-D fisher_information expects a single slice")
        _check_normalized(rho, grid)
        return float(integrate_slice(fisher_density(rho, grid.dx), grid))
    if rho.shape != (y_grid.nx, grid.nx):
        raise DimensionError(f"2-D density must have shape (ny, nx) = {(y_grid.nx, grid.nx)}")
    wx = trapezoid_weights(grid.nx, grid.dx)
    wy = trapezoid_weights(y_grid.nx, y_grid.dx)
    total = float(wy @ rho @ wx)
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise ContractViolation(f"2-D density is not normalized (integral {total!r})")
    r = np.maximum(rho, 1e-12 * rho.max())
    a = np.sqrt(r)
    gx = d1(a, grid.dx, axis=1)
    gy = d1(a, y_grid.dx, axis=0)
    return float(wy @ (4.0 * (gx * gx + gy * gy)) @ wx)


def quantum_potential(rho, params: PhysParams, grid: SpaceTimeGrid) -> FlaggedField:
    """Q = −(ħ²/2m) ∇²√ρ/√ρ; nodes within MASK_FACTOR of the floor are flagged."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape[-1] != grid.nx:
        raise DimensionError(f"density length {rho.shape[-1]} does not match nx={grid.nx}")
    q = -(params.hbar ** 2 / (2 * params.mass)) * _amplitude_curvature(rho, grid.dx)
    return FlaggedField(q, ~density_mask(rho))


def fisher_functional_derivative(rho, grid: SpaceTimeGrid) -> np.ndarray:
    """δF/δρ = −4 ∇²√ρ/√ρ (same evaluation as quantum_potential)."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape[-1] != grid.nx:
        raise DimensionError(f"density length {rho.shape[-1]} does not match nx={grid.nx}")
    return -4.0 * _amplitude_curvature(rho, grid.dx)


# ----------------------------------------------------------------------------
# action

def _require(history: History, phase: bool = False):
    if history.rho is None or history.current is None:
        raise IncompleteHistoryError("history needs rho and current")
    if phase and history.phase is None:
        raise IncompleteHistoryError("history has no phase field")


def _time_integral(per_slice: np.ndarray, grid: SpaceTimeGrid) -> float:
    return float(trapezoid_weights(grid.nt, grid.dt) @ per_slice)


def action_densities(history: History, params: PhysParams):
    """Per-slice spatial integrals of the three primal integrands."""
    grid = history.grid
    r = apply_floor(history.rho)
    j = history.current
    V = params.V(grid)
    kin = integrate_slice(params.mass * j * j / (2 * r), grid)
    pot = -integrate_slice(V[None, :] * history.rho, grid)
    fis = integrate_slice(fisher_density(history.rho, grid.dx), grid)
    return kin, pot, fis


def primal_action(history: History, params: PhysParams, label: str | None = None) -> ActionBreakdown:
    _require(history)
    _check_normalized(history.rho, history.grid, "history density")
    grid = history.grid
    kin, pot, fis = action_densities(history, params)
    c = params.hbar ** 2 / (8 * params.mass)
    return ActionBreakdown.from_parts(_time_integral(kin, grid), _time_integral(pot, grid),
                                      -c * _time_integral(fis, grid), 0.0, label)


def augmented_action(history: History, params: PhysParams, label: str | None = None) -> ActionBreakdown:
    _require(history, phase=True)
    base = primal_action(history, params)
    grid = history.grid
    r = continuity_residual(history).field
    coupling = _time_integral(integrate_slice(history.phase * r, grid), grid)
    return ActionBreakdown.from_parts(base.kinetic, base.potential, base.fisher, coupling, label)


# ----------------------------------------------------------------------------
# KKT residuals

def continuity_residual(history: History) -> Residual:
    _require(history)
    grid = history.grid
    r = time_derivative(history.rho, grid) + spatial_gradient(history.current, grid)
    return Residual(r, float(np.sqrt(np.mean(r * r))), 0.0)


def _stationarity_mask(rho: np.ndarray) -> np.ndarray:
    mask = density_mask(rho)
    mask[..., 0] = False
    mask[..., -1] = False
    return mask


def guidance_residual(history: History, params: PhysParams) -> Residual:
    """r = m j/ρ − ∇S.  RMS over trusted nodes (see ``qhj_residual``), walls excluded."""
    _require(history, phase=True)
    grid = history.grid
    r = params.mass * history.current / apply_floor(history.rho) - spatial_gradient(history.phase, grid)
    mask = _stationarity_mask(history.rho)
    rms = float(np.sqrt(np.mean(r[mask] ** 2))) if mask.any() else 0.0
    return Residual(r, rms, float(1.0 - mask.mean()))


BRANCHES = ("schrodinger", "bridge")


def qhj_residual(history: History, params: PhysParams, branch: str = "schrodinger") -> Residual:
    """r = ∂tS + |∇S|²/2m + V + Q; RMS over nodes with ρ > 1e3·ρ_floor (walls excluded).

    ``branch="bridge"`` gives the stationarity condition of the positive-definite
    cost instead, where V and Q enter with the opposite sign.
    """
    if branch not in BRANCHES:
        raise ContractViolation(f"branch must be one of {BRANCHES} (got {branch!r})")
    _require(history, phase=True)
    grid = history.grid
    S = history.phase
    gS = spatial_gradient(S, grid)
    Q = quantum_potential(history.rho, params, grid).values
    sign = 1.0 if branch == "schrodinger" else -1.0
    r = time_derivative(S, grid) + gS * gS / (2 * params.mass) + sign * (params.V(grid)[None, :] + Q)
    mask = _stationarity_mask(history.rho)
    rms = float(np.sqrt(np.mean(r[mask] ** 2))) if mask.any() else 0.0
    return Residual(r, rms, float(1.0 - mask.mean()))


def kkt_residuals(history: History, params: PhysParams, branch: str = "schrodinger") -> dict:
    return {"continuity": continuity_residual(history).rms,
            "guidance": guidance_residual(history, params).rms,
            "qhj": qhj_residual(history, params, branch).rms}
