# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: Crank-Nicolson stepping and RK4 flow-line integration.

Both functions mirror ``_fallback`` exactly (same operation order), so the
selector in ``kernels`` may swap them freely.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def cn_propagate(const double complex[:] psi0, const double[:] V, double h, double dt,
                 double hbar, double mass, Py_ssize_t nsteps, int direction, bint store_all):
    cdef Py_ssize_t nx = psi0.shape[0]
    cdef Py_ssize_t n = nx - 2
    cdef Py_ssize_t i, k
    cdef double a = hbar * hbar / (2.0 * mass * h * h)
    cdef double tau = direction * dt / (2.0 * hbar)
    cdef double complex I = 1j
    # off-diagonal of (1 + i tau H); H has off-diagonal -a
    cdef double complex e = I * tau * (-a)
    cdef double complex[:] d = np.empty(n, dtype=np.complex128)
    cdef double complex[:] r = np.empty(n, dtype=np.complex128)
    cdef double complex[:] cp = np.empty(n, dtype=np.complex128)
    cdef double complex[:] inv = np.empty(n, dtype=np.complex128)
    cdef double complex[:] rhs = np.empty(n, dtype=np.complex128)
    cdef double complex[:] cur = np.zeros(nx, dtype=np.complex128)
    cdef double complex denom, left, right
    cdef cnp.ndarray out_arr
    cdef double complex[:, :] out

    for i in range(n):
        d[i] = 1.0 + I * tau * (2.0 * a + V[i + 1])
        r[i] = 1.0 - I * tau * (2.0 * a + V[i + 1])
    # Thomas factorisation of the (constant) left-hand matrix
    for i in range(n):
        if i == 0:
            denom = d[0]
        else:
            denom = d[i] - e * cp[i - 1]
        if denom == 0:
            raise ArithmeticError("tridiagonal solve failed: zero pivot at step 0")
        inv[i] = 1.0 / denom
        cp[i] = e * inv[i]

    for i in range(1, nx - 1):
        cur[i] = psi0[i]
    if store_all:
        out_arr = np.zeros((nsteps + 1, nx), dtype=np.complex128)
        out = out_arr
        for i in range(nx):
            out[0, i] = cur[i]

    for k in range(nsteps):
        for i in range(n):
            left = cur[i]
            right = cur[i + 2]
            rhs[i] = r[i] * cur[i + 1] - e * (left + right)
        # forward sweep
        rhs[0] = rhs[0] * inv[0]
        for i in range(1, n):
            rhs[i] = (rhs[i] - e * rhs[i - 1]) * inv[i]
        # back substitution
        for i in range(n - 2, -1, -1):
            rhs[i] = rhs[i] - cp[i] * rhs[i + 1]
        for i in range(n):
            cur[i + 1] = rhs[i]
            if cur[i + 1] != cur[i + 1]:
                raise ArithmeticError(f"tridiagonal solve produced NaN at step {k + 1}")
        if store_all:
            for i in range(nx):
                out[k + 1, i] = cur[i]

    if store_all:
        return out_arr
    return np.asarray(cur)


cdef inline double _interp(const double[:, :] v, Py_ssize_t n, double frac_t,
                           double x, double x_min, double dx, Py_ssize_t nx) nogil:
    cdef double s = (x - x_min) / dx
    cdef Py_ssize_t i = <Py_ssize_t>s
    if i >= nx - 1:
        i = nx - 2
    if i < 0:
        i = 0
    cdef double fx = s - i
    cdef double a = v[n, i] * (1.0 - fx) + v[n, i + 1] * fx
    if frac_t == 0.0:
        return a
    cdef double b = v[n + 1, i] * (1.0 - fx) + v[n + 1, i + 1] * fx
    return a * (1.0 - frac_t) + b * frac_t


def rk4_bilinear(const double[:, :] v, double x_min, double dx, double dt,
                 const double[:] x0):
    cdef Py_ssize_t nt = v.shape[0]
    cdef Py_ssize_t nx = v.shape[1]
    cdef Py_ssize_t ntraj = x0.shape[0]
    cdef double x_max = x_min + dx * (nx - 1)
    pos_arr = np.full((ntraj, nt), np.nan)
    status_arr = np.full(ntraj, -1, dtype=np.int64)
    cdef double[:, :] pos = pos_arr
    cdef long long[:] status = status_arr
    cdef Py_ssize_t p, n
    cdef double x, k1, k2, k3, k4, xs
    for p in range(ntraj):
        x = x0[p]
        if x < x_min or x > x_max:
            status[p] = 0
            continue
        pos[p, 0] = x
        for n in range(nt - 1):
            k1 = _interp(v, n, 0.0, x, x_min, dx, nx)
            xs = x + 0.5 * dt * k1
            if xs < x_min or xs > x_max:
                status[p] = n + 1
                break
            k2 = _interp(v, n, 0.5, xs, x_min, dx, nx)
            xs = x + 0.5 * dt * k2
            if xs < x_min or xs > x_max:
                status[p] = n + 1
                break
            k3 = _interp(v, n, 0.5, xs, x_min, dx, nx)
            xs = x + dt * k3
            if xs < x_min or xs > x_max:
                status[p] = n + 1
                break
            k4 = _interp(v, n + 1, 0.0, xs, x_min, dx, nx)
            x = x + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
            if x < x_min or x > x_max:
                status[p] = n + 1
                break
            pos[p, n + 1] = x
    return pos_arr, status_arr
