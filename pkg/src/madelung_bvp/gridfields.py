"""Grids, field containers, quadrature and second-order finite differences.

All spatial operators act along the last axis, so they accept either a single
slice of length ``nx`` or a whole ``(nt, nx)`` history array.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ContractViolation, DegenerateDensityError, DimensionError

RHO_FLOOR_REL = 1e-12   # rho_floor = RHO_FLOOR_REL * max(slice)
MASK_FACTOR = 1e3       # certification mask: rho > MASK_FACTOR * rho_floor
NORM_TOL = 1e-9

PotentialSpec = Union[str, np.ndarray]

_HARMONIC = re.compile(r"^harmonic\(\s*([-+0-9.eE]+)\s*\)$")


@dataclass(frozen=True)
class SpaceTimeGrid:
    x_min: float
    x_max: float
    nx: int
    t0: float
    tf: float
    nt: int

    def __post_init__(self):
        if int(self.nx) != self.nx or self.nx < 8:
            raise DimensionError(f"nx must be an integer >= 8 (got {self.nx})")
        if int(self.nt) != self.nt or self.nt < 2:
            raise DimensionError(f"nt must be an integer >= 2 (got {self.nt})")
        if not self.x_max > self.x_min:
            raise DimensionError(f"x_max must exceed x_min (got {self.x_min}, {self.x_max})")
        if not self.tf > self.t0:
            raise DimensionError(f"tf must exceed t0 (got {self.t0}, {self.tf})")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dt(self) -> float:
        return (self.tf - self.t0) / (self.nt - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(self.t0, self.tf, self.nt)

    @property
    def duration(self) -> float:
        return self.tf - self.t0

    def with_time(self, t0: float | None = None, tf: float | None = None, nt: int | None = None) -> "SpaceTimeGrid":
        return SpaceTimeGrid(self.x_min, self.x_max, self.nx,
                             self.t0 if t0 is None else t0,
                             self.tf if tf is None else tf,
                             self.nt if nt is None else nt)

    def to_dict(self) -> dict:
        return {"x_min": float(self.x_min), "x_max": float(self.x_max), "nx": int(self.nx),
                "t0": float(self.t0), "tf": float(self.tf), "nt": int(self.nt),
                "dx": self.dx, "dt": self.dt}


@dataclass(frozen=True)
class PhysParams:
    mass: float = 1.0
    hbar: float = 1.0
    potential: PotentialSpec = "free"

    def __post_init__(self):
        if not (np.isfinite(self.mass) and self.mass > 0):
            raise ContractViolation(f"mass must be > 0 (got {self.mass})")
        if not (np.isfinite(self.hbar) and self.hbar > 0):
            raise ContractViolation(f"hbar must be > 0 (got {self.hbar})")
        if isinstance(self.potential, str):
            if self.potential != "free" and not _HARMONIC.match(self.potential.strip()):
                raise ContractViolation(f"unknown potential preset {self.potential!r}; "
                                        "use 'free', 'harmonic(omega)' or a tabulated array")
        else:
            arr = np.asarray(self.potential, dtype=float)
            if arr.ndim != 1 or not np.all(np.isfinite(arr)):
                raise ContractViolation("tabulated potential must be a finite 1-D array")

    @property
    def omega(self) -> float | None:
        if isinstance(self.potential, str):
            m = _HARMONIC.match(self.potential.strip())
            if m:
                return float(m.group(1))
        return None

    @property
    def label(self) -> str:
        return self.potential if isinstance(self.potential, str) else "tabulated"

    def V(self, grid: SpaceTimeGrid) -> np.ndarray:
        """Potential sampled on the spatial nodes."""
        x = grid.x
        if isinstance(self.potential, str):
            if self.potential == "free":
                return np.zeros_like(x)
            w = self.omega
            return 0.5 * self.mass * w * w * x * x
        arr = np.asarray(self.potential, dtype=float)
        if arr.shape != (grid.nx,):
            raise DimensionError(f"tabulated potential has {arr.size} values, grid has {grid.nx} nodes")
        return arr.copy()

    def to_dict(self) -> dict:
        return {"mass": float(self.mass), "hbar": float(self.hbar), "potential": self.label}


# ----------------------------------------------------------------------------
# quadrature and stencils

def _check_len(f: np.ndarray, n: int, what: str = "field"):
    if f.shape[-1] != n:
        raise DimensionError(f"{what} length {f.shape[-1]} does not match grid nx={n}")


def integrate_slice(f, grid: SpaceTimeGrid) -> np.ndarray | float:
    """Trapezoidal integral over [x_min, x_max] (last axis)."""
    f = np.asarray(f, dtype=float)
    _check_len(f, grid.nx)
    val = grid.dx * (np.sum(f[..., 1:-1], axis=-1) + 0.5 * (f[..., 0] + f[..., -1]))
    return float(val) if np.ndim(val) == 0 else val


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def d1(f: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """Second-order first derivative: central inside, one-sided (-3,4,-1)/2h at the ends."""
    f = np.moveaxis(np.asarray(f, dtype=float), axis, -1)
    n = f.shape[-1]
    if n < 2:
        raise DimensionError("need at least 2 points for a derivative")
    out = np.empty_like(f)
    if n == 2:
        out[..., 0] = out[..., 1] = (f[..., 1] - f[..., 0]) / h
    else:
        out[..., 1:-1] = (f[..., 2:] - f[..., :-2]) / (2 * h)
        out[..., 0] = (-3 * f[..., 0] + 4 * f[..., 1] - f[..., 2]) / (2 * h)
        out[..., -1] = (3 * f[..., -1] - 4 * f[..., -2] + f[..., -3]) / (2 * h)
    return np.moveaxis(out, -1, axis)


def d2(f: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """Three-point second derivative; ends use the one-sided (2,-5,4,-1)/h^2 stencil."""
    f = np.moveaxis(np.asarray(f, dtype=float), axis, -1)
    n = f.shape[-1]
    if n < 3:
        raise DimensionError("need at least 3 points for a second derivative")
    out = np.empty_like(f)
    out[..., 1:-1] = (f[..., 2:] - 2 * f[..., 1:-1] + f[..., :-2]) / (h * h)
    if n >= 4:
        out[..., 0] = (2 * f[..., 0] - 5 * f[..., 1] + 4 * f[..., 2] - f[..., 3]) / (h * h)
        out[..., -1] = (2 * f[..., -1] - 5 * f[..., -2] + 4 * f[..., -3] - f[..., -4]) / (h * h)
    else:
        out[..., 0] = out[..., -1] = out[..., 1]
    return np.moveaxis(out, -1, axis)


def spatial_gradient(f, grid: SpaceTimeGrid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[-1] < 3:
        raise DimensionError(f"spatial_gradient needs nx >= 3 (got {f.shape[-1]})")
    _check_len(f, grid.nx)
    return d1(f, grid.dx)


def spatial_laplacian(f, grid: SpaceTimeGrid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[-1] < 3:
        raise DimensionError(f"spatial_laplacian needs nx >= 3 (got {f.shape[-1]})")
    _check_len(f, grid.nx)
    return d2(f, grid.dx)


def time_derivative(F, grid: SpaceTimeGrid) -> np.ndarray:
    """d/dt over slices (axis 0): central inside, one-sided second order at t0, tf."""
    F = np.asarray(F, dtype=float)
    if F.ndim < 1 or F.shape[0] < 2:
        raise DimensionError("time_derivative needs nt >= 2 slices")
    if F.shape[0] != grid.nt:
        raise DimensionError(f"field has {F.shape[0]} slices, grid has nt={grid.nt}")
    return d1(F, grid.dt, axis=0)


# ----------------------------------------------------------------------------
# densities

def rho_floor(rho: np.ndarray) -> np.ndarray:
    """Per-slice floor value, shaped to broadcast against ``rho``."""
    rho = np.asarray(rho, dtype=float)
    return RHO_FLOOR_REL * np.max(rho, axis=-1, keepdims=True)


def apply_floor(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    return np.maximum(rho, rho_floor(rho))


def density_mask(rho) -> np.ndarray:
    """Nodes where rho > MASK_FACTOR * rho_floor (where Q and S are trusted)."""
    rho = np.asarray(rho, dtype=float)
    return rho > MASK_FACTOR * rho_floor(rho)


def normalize_slice(rho, grid: SpaceTimeGrid) -> np.ndarray:
    """Floor at rho_floor, then scale so the trapezoidal integral is 1."""
    rho = np.asarray(rho, dtype=float)
    _check_len(rho, grid.nx, "density")
    if not np.all(np.isfinite(rho)):
        raise ContractViolation("density contains non-finite values")
    if np.any(rho < 0):
        raise ContractViolation("density must be nonnegative")
    if np.any(np.max(rho, axis=-1) <= 0):
        raise DegenerateDensityError("density slice is identically zero")
    out = apply_floor(rho)
    mass = integrate_slice(out, grid)
    return out / np.asarray(mass)[..., None] if out.ndim > 1 else out / mass


def gaussian_density(grid: SpaceTimeGrid, sigma: float, center: float = 0.0, normalize: bool = True) -> np.ndarray:
    x = grid.x
    rho = np.exp(-0.5 * ((x - center) / sigma) ** 2) / (np.sqrt(2 * np.pi) * sigma)
    return normalize_slice(rho, grid) if normalize else rho


# ----------------------------------------------------------------------------
# field containers

@dataclass
class DensityField:
    grid: SpaceTimeGrid
    values: np.ndarray

    def validate(self, tol: float = NORM_TOL):
        v = np.asarray(self.values)
        _check_len(v, self.grid.nx, "density")
        if np.any(v < rho_floor(v) * (1 - 1e-12)):
            raise ContractViolation("density below rho_floor")
        mass = np.atleast_1d(integrate_slice(v, self.grid))
        if np.max(np.abs(mass - 1.0)) > tol:
            raise ContractViolation(f"density slice integrates to {mass[np.argmax(np.abs(mass - 1))]!r}, not 1")


@dataclass
class CurrentField:
    grid: SpaceTimeGrid
    values: np.ndarray

    def validate(self):
        v = np.asarray(self.values)
        _check_len(v, self.grid.nx, "current")
        if not np.all(np.isfinite(v)):
            raise ContractViolation("current contains non-finite values")
        if np.any(v[..., 0] != 0) or np.any(v[..., -1] != 0):
            raise ContractViolation("current must vanish at the spatial walls")


@dataclass
class PhaseField:
    grid: SpaceTimeGrid
    values: np.ndarray

    def validate(self, tol: float = 0.0):
        v = np.asarray(self.values)
        _check_len(v, self.grid.nx, "phase")
        ref = v[0, 0] if v.ndim == 2 else v[0]
        if abs(ref) > tol:
            raise ContractViolation(f"phase not gauge-fixed: S(x_ref, t0) = {ref!r}")


@dataclass
class History:
    """rho, j and (optionally) S sampled on every node of ``grid``; arrays are (nt, nx)."""

    grid: SpaceTimeGrid
    rho: np.ndarray
    current: np.ndarray
    phase: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = (self.grid.nt, self.grid.nx)
        for name in ("rho", "current", "phase"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v, dtype=float)
            if v.shape != shape:
                raise DimensionError(f"{name} has shape {v.shape}, grid needs {shape}")
            setattr(self, name, v)

    def validate(self):
        DensityField(self.grid, self.rho).validate(tol=1e-8)
        CurrentField(self.grid, self.current).validate()
        if self.phase is not None:
            PhaseField(self.grid, self.phase).validate(tol=1e-12)

    def gauge_fixed(self) -> "History":
        if self.phase is None:
            return self
        return History(self.grid, self.rho, self.current, self.phase - self.phase[0, 0], dict(self.meta))


@dataclass
class ComplexState:
    grid: SpaceTimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        _check_len(self.values, self.grid.nx, "state")

    def norm(self) -> float:
        return float(integrate_slice(np.abs(self.values) ** 2, self.grid))

    def validate(self, tol: float = NORM_TOL):
        n = self.norm()
        if abs(n - 1.0) > tol:
            raise ContractViolation(f"state norm {n!r} differs from 1")


# ----------------------------------------------------------------------------
# CSV serialization (shortest round-trip floats via repr)

def fmt(v) -> str:
    return repr(float(v))


def write_field_csv(path, grid: SpaceTimeGrid, values) -> Path:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[None, :]
        times = [grid.t0]
    else:
        times = grid.t.tolist()
    xs = [fmt(v) for v in grid.x]
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("t,x,value\n")
        for n, tn in enumerate(times):
            ts = fmt(tn)
            row = values[n].tolist()
            fh.write("".join(f"{ts},{xs[i]},{fmt(row[i])}\n" for i in range(len(xs))))
    return path


def read_field_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (t values, x values, (nt, nx) array)."""
    with Path(path).open() as fh:
        rdr = csv.reader(fh)
        header = next(rdr)
        if header != ["t", "x", "value"]:
            raise ValueError(f"unexpected header {header}")
        rows = np.array([[float(a) for a in r] for r in rdr])
    ts = np.unique(rows[:, 0])
    xs = rows[rows[:, 0] == ts[0], 1]
    return ts, xs, rows[:, 2].reshape(len(ts), len(xs))


def write_state_csv(path, grid: SpaceTimeGrid, psi) -> Path:
    psi = np.asarray(psi, dtype=np.complex128)
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("x,re,im\n")
        for xv, z in zip(grid.x.tolist(), psi.tolist()):
            fh.write(f"{fmt(xv)},{fmt(z.real)},{fmt(z.imag)}\n")
    return path


def write_states_long_csv(path, grid: SpaceTimeGrid, states) -> Path:
    states = np.asarray(states, dtype=np.complex128)
    path = Path(path)
    xs = [fmt(v) for v in grid.x]
    with path.open("w", newline="") as fh:
        fh.write("t,x,re,im\n")
        for tn, row in zip(grid.t.tolist(), states.tolist()):
            ts = fmt(tn)
            fh.write("".join(f"{ts},{xs[i]},{fmt(z.real)},{fmt(z.imag)}\n" for i, z in enumerate(row)))
    return path
