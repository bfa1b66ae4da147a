"""Two-time boundary value solver for the Fisher-regularized hydrodynamic action."""

from __future__ import annotations

__version__ = "0.1.0"

from .gridfields import PhysParams, SpaceTimeGrid  # noqa: E402

__all__ = ["PhysParams", "SpaceTimeGrid", "__version__"]
