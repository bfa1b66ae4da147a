"""Flat ``key = value`` run configuration: defaults ← preset ← file ← flags."""

from __future__ import annotations

import difflib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .bvp import SCHEMES, SolverConfig
from .caliber import COST_MODES
from .errors import MadelungError, UsageError
from .gridfields import PhysParams, SpaceTimeGrid


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("auto", "none", "") else float(text)


@dataclass(frozen=True)
class Key:
    name: str
    conv: Callable[[str], Any]
    default: Any
    help: str


KEYS: dict[str, Key] = {k.name: k for k in [
    # grid
    Key("x_min", float, -12.0, "left wall"),
    Key("x_max", float, 12.0, "right wall"),
    Key("nx", int, 401, "spatial nodes (>= 8)"),
    Key("t0", float, 0.0, "initial time"),
    Key("tf", float, 2.0, "final time"),
    Key("nt", int, 201, "time slices (>= 2)"),
    # physics
    Key("mass", float, 1.0, "particle mass (> 0)"),
    Key("hbar", float, 1.0, "reduced Planck constant (> 0)"),
    Key("potential", str, "free", "'free', 'harmonic(omega)' or a file with one V value per node"),
    # solver
    Key("scheme", str, "alternating", f"BVP scheme: {', '.join(SCHEMES)}"),
    Key("max_outer_iterations", int, 5000, "outer iteration cap"),
    Key("primal_step", float, 1e-3, "primal step (gradient scheme)"),
    Key("dual_step", float, 1e-2, "dual step (gradient scheme)"),
    Key("continuity_tolerance", float, 1e-6, "continuity RMS tolerance"),
    Key("stationarity_tolerance", float, 5e-2, "guidance/QHJ RMS tolerance"),
    Key("terminal_tolerance", float, 1e-3, "terminal L1 mismatch tolerance"),
    Key("phase_smoothing", float, 1e-2, "phase prior weight (alternating scheme)"),
    Key("init_perturbation", float, 0.0, "random initial-phase amplitude"),
    Key("chebyshev_degree", int, 8, "shooting phase degree"),
    Key("seed", int, 0, "RNG seed"),
    Key("shooting", _bool, False, "also run the shooting cross-check (solve-bvp)"),
    # Gaussian scenarios
    Key("preset", str, "spreading", "solve-bvp boundaries: spreading | bounce"),
    Key("sigma0", float, 1.0, "initial Gaussian width"),
    Key("sigma_dot0", float, 0.0, "initial width rate"),
    Key("center", float, 0.0, "Gaussian center"),
    Key("k0", float, 0.0, "initial wavenumber (propagate)"),
    Key("x0", str, "auto", "comma-separated trajectory start points, or 'auto' (mass-quantile fan)"),
    Key("n_traj", int, 21, "trajectories in the automatic fan"),
    Key("red_tube", str, "0.5,1.0", "x0 pair bounding the highlighted flow tube (gaussian-demo)"),
    Key("state_format", str, "long", "propagate state CSV: long (one file) | per-slice"),
    # caliber
    Key("cost", str, "positive", f"caliber cost: {', '.join(COST_MODES)}"),
    Key("outcomes", str, "-6:0,0:6", "caliber outcome windows lo:hi, comma separated"),
    Key("separation", float, 4.0, "slit separation (node-demo)"),
    Key("sigma_slit", float, 0.5, "slit width (node-demo)"),
    Key("window_width", _opt_float, None, "outcome window width; 'auto' = half the fringe spacing"),
    Key("wide_check", _bool, True, "run the full-screen Born-mass check (node-demo)"),
]}

# per-subcommand overrides of the global defaults
PRESETS: dict[str, dict[str, Any]] = {
    "node-demo": {"x_min": -16.0, "x_max": 16.0, "nx": 641, "nt": 201},
    "bounce": {"nx": 801},
}

RESOLUTION_ORDER = ["default", "preset", "file", "flag"]


def valid_keys_message() -> str:
    return "valid keys: " + ", ".join(sorted(KEYS))


def parse_value(name: str, text: str, where: str = "") -> Any:
    if name not in KEYS:
        close = difflib.get_close_matches(name, KEYS, n=1)
        hint = f" (did you mean {close[0]!r}?)" if close else ""
        raise UsageError(f"{where}unknown key {name!r}{hint}; {valid_keys_message()}")
    try:
        return KEYS[name].conv(text)
    except ValueError as exc:
        raise UsageError(f"{where}bad value for {name!r}: {exc}") from exc


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise UsageError(f"{source}:{lineno}: missing key")
        out[key] = parse_value(key, value, f"{source}:{lineno}: ")
    return out


def load_config(path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {str(path)!r}: {exc.strerror}") from exc
    return parse_config_text(text, str(path))


@dataclass
class Resolved:
    values: dict[str, Any]
    provenance: dict[str, str]
    notices: list[str]

    def __getitem__(self, key: str):
        return self.values[key]

    def to_dict(self) -> dict:
        return {"values": dict(self.values), "provenance": dict(self.provenance),
                "resolution_order": RESOLUTION_ORDER, "notices": list(self.notices)}


def resolve(file_values: dict | None = None, flag_values: dict | None = None,
            presets: list[str] | None = None) -> Resolved:
    values = {k: key.default for k, key in KEYS.items()}
    prov = {k: "default" for k in KEYS}
    for name in presets or []:
        for k, v in PRESETS.get(name, {}).items():
            values[k], prov[k] = v, "preset"
    notices = []
    for k, v in (file_values or {}).items():
        values[k], prov[k] = v, "file"
    for k, v in (flag_values or {}).items():
        if k in (file_values or {}) and file_values[k] != v:
            notices.append(f"{k}: flag value {v!r} overrides config file value {file_values[k]!r}")
        values[k], prov[k] = v, "flag"
    res = Resolved(values, prov, notices)
    validate(res)
    return res


def validate(res: Resolved):
    v = res.values
    try:
        build_grid(res)
        build_params(res, None)
        build_solver_config(res)
    except MadelungError as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc
    if v["cost"] not in COST_MODES:
        raise UsageError(f"cost must be one of {COST_MODES} (got {v['cost']!r})")
    if v["preset"] not in ("spreading", "bounce"):
        raise UsageError(f"preset must be 'spreading' or 'bounce' (got {v['preset']!r})")
    for k in ("sigma0", "sigma_slit"):
        if not v[k] > 0:
            raise UsageError(f"{k} must be > 0 (got {v[k]})")
    if v["separation"] < 0:
        raise UsageError(f"separation must be >= 0 (got {v['separation']})")
    if v["window_width"] is not None and not v["window_width"] > 0:
        raise UsageError(f"window_width must be > 0 (got {v['window_width']})")
    if v["n_traj"] < 1:
        raise UsageError(f"n_traj must be >= 1 (got {v['n_traj']})")
    if v["state_format"] not in ("long", "per-slice"):
        raise UsageError(f"state_format must be 'long' or 'per-slice' (got {v['state_format']!r})")
    x0_list(res)
    red_tube(res)
    outcome_windows(res)


def build_grid(res: Resolved) -> SpaceTimeGrid:
    v = res.values
    return SpaceTimeGrid(v["x_min"], v["x_max"], v["nx"], v["t0"], v["tf"], v["nt"])


def build_params(res: Resolved, grid: SpaceTimeGrid | None = None) -> PhysParams:
    v = res.values
    pot = v["potential"].strip()
    if pot == "free" or pot.startswith("harmonic"):
        return PhysParams(v["mass"], v["hbar"], pot)
    path = Path(pot)
    if not path.is_file():
        raise UsageError(f"potential {pot!r} is neither a preset nor a readable file")
    try:
        table = np.loadtxt(path, delimiter=",", ndmin=1)
    except ValueError as exc:
        raise UsageError(f"cannot parse tabulated potential {pot!r}: {exc}") from exc
    params = PhysParams(v["mass"], v["hbar"], table.astype(float))
    if grid is not None:
        params.V(grid)
    return params


def build_solver_config(res: Resolved) -> SolverConfig:
    v = res.values
    return SolverConfig(
        max_outer_iterations=v["max_outer_iterations"], primal_step=v["primal_step"],
        dual_step=v["dual_step"], continuity_tolerance=v["continuity_tolerance"],
        stationarity_tolerance=v["stationarity_tolerance"], seed=v["seed"], scheme=v["scheme"],
        terminal_tolerance=v["terminal_tolerance"], chebyshev_degree=v["chebyshev_degree"],
        phase_smoothing=v["phase_smoothing"], init_perturbation=v["init_perturbation"])


def x0_list(res: Resolved) -> list[float] | None:
    text = res.values["x0"].strip()
    if text.lower() == "auto":
        return None
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"x0 must be 'auto' or a comma-separated list of numbers ({exc})") from exc


def outcome_windows(res: Resolved) -> list[tuple[float, float]]:
    out = []
    for part in res.values["outcomes"].split(","):
        try:
            lo, hi = (float(s) for s in part.split(":"))
        except ValueError as exc:
            raise UsageError(f"outcome window {part.strip()!r} must look like lo:hi") from exc
        if not lo < hi:
            raise UsageError(f"outcome window {part.strip()!r} needs lo < hi")
        out.append((lo, hi))
    if not out:
        raise UsageError("outcomes must list at least one window")
    return out


def red_tube(res: Resolved) -> tuple[float, float]:
    try:
        a, b = (float(s) for s in res.values["red_tube"].split(","))
    except ValueError as exc:
        raise UsageError("red_tube must be two comma-separated numbers a,b with a < b") from exc
    if not a < b:
        raise UsageError("red_tube must be two comma-separated numbers a,b with a < b")
    return a, b
