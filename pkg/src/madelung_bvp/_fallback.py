"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``.

Used when the extension is not built.  The trajectory integrator follows the
compiled operation order exactly; the CN step hands the tridiagonal solve to
LAPACK, so the two backends agree to round-off rather than bit-for-bit.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded


def cn_propagate(psi0, V, h, dt, hbar, mass, nsteps, direction, store_all):
    psi0 = np.asarray(psi0, dtype=np.complex128)
    V = np.asarray(V, dtype=np.float64)
    nx = psi0.shape[0]
    n = nx - 2
    a = hbar * hbar / (2.0 * mass * h * h)
    tau = direction * dt / (2.0 * hbar)
    # off-diagonal of (1 + i tau H); H has off-diagonal -a
    e = 1j * tau * (-a)
    ab = np.empty((3, n), dtype=np.complex128)
    ab[0, :] = e
    ab[1, :] = 1.0 + 1j * tau * (2.0 * a + V[1:-1])
    ab[2, :] = e
    r = 1.0 - 1j * tau * (2.0 * a + V[1:-1])

    cur = np.zeros(nx, dtype=np.complex128)
    cur[1:-1] = psi0[1:-1]
    out = None
    if store_all:
        out = np.zeros((nsteps + 1, nx), dtype=np.complex128)
        out[0] = cur
    for k in range(nsteps):
        rhs = r * cur[1:-1] - e * (cur[:-2] + cur[2:])
        try:
            cur[1:-1] = solve_banded((1, 1), ab, rhs, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise ArithmeticError(f"tridiagonal solve failed at step {k + 1}: {exc}") from exc
        if np.isnan(cur).any():
            raise ArithmeticError(f"tridiagonal solve produced NaN at step {k + 1}")
        if store_all:
            out[k + 1] = cur
    return out if store_all else cur


def _interp(v, n, frac_t, x, x_min, dx, nx):
    s = (x - x_min) / dx
    i = np.clip(s.astype(np.int64), 0, nx - 2)
    fx = s - i
    a = v[n, i] * (1.0 - fx) + v[n, i + 1] * fx
    if frac_t == 0.0:
        return a
    b = v[n + 1, i] * (1.0 - fx) + v[n + 1, i + 1] * fx
    return a * (1.0 - frac_t) + b * frac_t


def rk4_bilinear(v, x_min, dx, dt, x0):
    v = np.asarray(v, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    nt, nx = v.shape
    x_max = x_min + dx * (nx - 1)
    pos = np.full((x0.size, nt), np.nan)
    status = np.full(x0.size, -1, dtype=np.int64)

    def outside(z):
        return (z < x_min) | (z > x_max)

    alive = ~outside(x0)
    status[~alive] = 0
    x = x0.copy()
    pos[alive, 0] = x[alive]
    for n in range(nt - 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        xa = x[idx]
        ok = np.ones(idx.size, dtype=bool)
        k1 = _interp(v, n, 0.0, xa, x_min, dx, nx)
        xs = xa + 0.5 * dt * k1
        ok &= ~outside(xs)
        k2 = _interp(v, n, 0.5, np.where(ok, xs, xa), x_min, dx, nx)
        xs = xa + 0.5 * dt * k2
        ok &= ~outside(xs)
        k3 = _interp(v, n, 0.5, np.where(ok, xs, xa), x_min, dx, nx)
        xs = xa + dt * k3
        ok &= ~outside(xs)
        k4 = _interp(v, n + 1, 0.0, np.where(ok, xs, xa), x_min, dx, nx)
        xn = xa + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        ok &= ~outside(xn)
        dead = idx[~ok]
        status[dead] = n + 1
        alive[dead] = False
        live = idx[ok]
        x[live] = xn[ok]
        pos[live, n + 1] = xn[ok]
    return pos, status
