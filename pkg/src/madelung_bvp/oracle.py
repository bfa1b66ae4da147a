"""Madelung map and Crank–Nicolson Schrödinger propagation (reference dynamics)."""

from __future__ import annotations

import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import kernels
from .errors import ContractViolation, DegenerateStateError, NumericalDivergenceError
from .gridfields import ComplexState, PhysParams, SpaceTimeGrid, integrate_slice

AMPLITUDE_FLOOR_REL = 1e-6   # |ψ| below this × max|ψ| → phase unreliable


def madelung_compose(rho, phase, params: PhysParams, grid: SpaceTimeGrid) -> ComplexState:
    """ψ = √ρ · exp(iS/ħ)."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ContractViolation("density must be nonnegative")
    return ComplexState(grid, np.sqrt(rho) * np.exp(1j * np.asarray(phase, dtype=float) / params.hbar))


def unwrap_phase(theta: np.ndarray) -> np.ndarray:
    """Sequential left-to-right unwrapping: add 2π corrections on jumps larger than π."""
    return np.unwrap(np.asarray(theta, dtype=float), axis=-1)


def phase_reliability(psi) -> np.ndarray:
    """True where the amplitude is large enough for the argument to be trusted."""
    a = np.abs(np.asarray(psi))
    return a > AMPLITUDE_FLOOR_REL * np.max(a, axis=-1, keepdims=True)


def madelung_decompose(psi, params: PhysParams) -> tuple[np.ndarray, np.ndarray]:
    """Inverse map: ρ = |ψ|², S = ħ·unwrap(arg ψ) with S(x_ref) = 0 at the leftmost node."""
    values = psi.values if isinstance(psi, ComplexState) else np.asarray(psi, dtype=np.complex128)
    a = np.abs(values)
    if not np.all(np.isfinite(a)) or np.any(np.max(a, axis=-1) <= 0):
        raise DegenerateStateError("state modulus vanishes across the whole domain")
    S = params.hbar * unwrap_phase(np.angle(values))
    return a * a, S - S[..., :1]


def propagate(psi0, params: PhysParams, grid: SpaceTimeGrid, direction: int = 1,
              store_all: bool = True, backend: str | None = None) -> np.ndarray:
    """Crank–Nicolson with Dirichlet walls over all slices of ``grid``.

    Returns an (nt, nx) complex array (or only the final state when
    ``store_all`` is False).  ``direction=-1`` runs the backward-in-time map.
    """
    values = psi0.values if isinstance(psi0, ComplexState) else np.asarray(psi0, dtype=np.complex128)
    if values.shape != (grid.nx,):
        raise ContractViolation(f"initial state length {values.shape} does not match nx={grid.nx}")
    try:
        return kernels.cn_propagate(values, params.V(grid), grid.dx, grid.dt, params.hbar,
                                    params.mass, grid.nt - 1, direction, store_all, backend)
    except ArithmeticError as exc:
        raise NumericalDivergenceError(str(exc)) from exc


def norms(states, grid: SpaceTimeGrid) -> np.ndarray:
    return np.atleast_1d(integrate_slice(np.abs(np.asarray(states)) ** 2, grid))


def harmonic_ground_state(params: PhysParams, grid: SpaceTimeGrid, discrete: bool = True) -> np.ndarray:
    """Ground state of the potential; ``discrete`` uses the eigenvector of the CN Hamiltonian.

    The discrete eigenvector is stationary under CN to round-off, which is
    what a stationarity oracle needs; the continuum Gaussian is only
    stationary up to O(dx²).
    """
    x = grid.x
    if not discrete:
        w = params.omega
        if w is None:
            raise ContractViolation("continuum ground state is only defined for harmonic presets")
        s2 = params.hbar / (2 * params.mass * w)
        psi = np.exp(-x * x / (4 * s2)).astype(np.complex128)
        psi[0] = psi[-1] = 0
    else:
        a = params.hbar ** 2 / (2 * params.mass * grid.dx ** 2)
        V = params.V(grid)[1:-1]
        vals, vecs = eigh_tridiagonal(2 * a + V, -a * np.ones(grid.nx - 3), select="i", select_range=(0, 0))
        psi = np.zeros(grid.nx, dtype=np.complex128)
        v = vecs[:, 0]
        psi[1:-1] = v * np.sign(v[np.argmax(np.abs(v))])
    psi /= np.sqrt(integrate_slice(np.abs(psi) ** 2, grid))
    return psi


def gaussian_state(grid: SpaceTimeGrid, sigma: float, center: float = 0.0, k0: float = 0.0,
                   chirp: float = 0.0) -> np.ndarray:
    """Normalized Gaussian packet √ρ·exp(i(k0 x + chirp x²)) with walls set to zero."""
    x = grid.x
    psi = np.exp(-((x - center) ** 2) / (4 * sigma ** 2) + 1j * (k0 * x + chirp * (x - center) ** 2))
    psi[0] = psi[-1] = 0
    return psi / np.sqrt(integrate_slice(np.abs(psi) ** 2, grid))
