"""Backend selection for the hot loops (compiled if available, else Python).

Set ``MADELUNG_BVP_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _fallback

try:
    from . import _kernels as _compiled  # type: ignore[attr-defined]
    HAVE_COMPILED = True
except ImportError:  # extension not built
    _compiled = None
    HAVE_COMPILED = False

BACKEND = "compiled" if HAVE_COMPILED and os.environ.get("MADELUNG_BVP_BACKEND", "").lower() != "python" else "python"


def _pick(backend):
    name = backend or BACKEND
    if name == "compiled":
        if not HAVE_COMPILED:
            raise ImportError("compiled kernels are not built; reinstall with Cython available")
        return _compiled
    if name == "python":
        return _fallback
    raise ValueError(f"unknown backend {backend!r}")


def cn_propagate(psi0, V, h, dt, hbar, mass, nsteps, direction=1, store_all=True, backend=None):
    return _pick(backend).cn_propagate(psi0, V, float(h), float(dt), float(hbar), float(mass),
                                       int(nsteps), int(direction), bool(store_all))


def rk4_bilinear(v, x_min, dx, dt, x0, backend=None):
    return _pick(backend).rk4_bilinear(v, float(x_min), float(dx), float(dt), x0)
