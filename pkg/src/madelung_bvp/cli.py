"""``madelung-bvp`` command line: presets, solves, data products and the verify suite.

Exit status: 0 success, 1 usage error, 2 numerical failure, 3 verification failure.
"""

from __future__ import annotations

import argparse
import difflib
import logging
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .action import kkt_residuals, primal_action, quantum_potential
from .bvp import BoundaryData, solve_bvp_primal_dual, solve_bvp_shooting, l1_distance
from .caliber import OutcomeConstraint, min_action_to_outcome, node_suppression_demo, outcome_weights, COST_NOTE
from .config import (
    KEYS,
    Resolved,
    build_grid,
    build_params,
    build_solver_config,
    load_config,
    outcome_windows,
    parse_value,
    red_tube,
    resolve,
    x0_list,
)
from .errors import (
    ContractViolation,
    DimensionError,
    DomainError,
    MadelungError,
    NumericalDivergenceError,
    UsageError,
)
from .gridfields import (
    fmt,
    gaussian_density,
    integrate_slice,
    normalize_slice,
    write_field_csv,
    write_state_csv,
    write_states_long_csv,
)
from .manifest import RunManifest, output_dir
from .oracle import gaussian_state, madelung_compose, norms, propagate
from .trajectories import (
    GaussianParams,
    envelope_energy,
    envelope_states,
    fan_start_points,
    flow_tube_mass,
    gaussian_history,
    integrate_trajectories,
    velocity_field,
    write_trajectories_csv,
)
from .verify import run_verify

log = logging.getLogger("madelung_bvp")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3
SUBCOMMANDS = ("propagate", "solve-bvp", "gaussian-demo", "trajectories", "caliber", "node-demo", "verify")


class UsageExit(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """argparse with exit status 1 and a close-match suggestion for unknown flags."""

    def error(self, message):
        hint = ""
        if "unrecognized arguments" in message:
            bad = message.split(":", 1)[1].split()
            opts = [o for a in self._actions for o in a.option_strings]
            for sp in self._subparsers._group_actions if self._subparsers else []:
                for p in sp.choices.values():
                    opts += [o for a in p._actions for o in a.option_strings]
            for b in bad:
                close = difflib.get_close_matches(b.split("=")[0], opts, n=1)
                if close:
                    hint = f" (did you mean {close[0]}?)"
                    break
        elif "invalid choice" in message:
            word = message.split("'")[1] if "'" in message else ""
            close = difflib.get_close_matches(word, SUBCOMMANDS, n=1)
            if close:
                hint = f" (did you mean {close[0]}?)"
        self.print_usage(sys.stderr)
        raise UsageExit(f"{self.prog}: error: {message}{hint}")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> Parser:
    parser = Parser(prog="madelung-bvp", description=__doc__.splitlines()[0], allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, allow_abbrev=False)
        p.add_argument("--config", help="flat key = value file")
        p.add_argument("--out", help="output directory (else $MADELUNG_BVP_OUT)")
        p.add_argument("--backend", choices=("compiled", "python"), help="kernel backend override")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "verify":
            continue
        for key in KEYS.values():
            p.add_argument(_flag(key.name), dest=f"key_{key.name}", metavar=key.name.upper(), help=key.help)
    return parser


def _resolve(args, presets: list[str]) -> Resolved:
    file_values = load_config(args.config) if args.config else {}
    flags = {k[4:]: parse_value(k[4:], v, "flag: ") for k, v in vars(args).items()
             if k.startswith("key_") and v is not None}
    if flags.get("preset", file_values.get("preset")) == "bounce":
        presets = presets + ["bounce"]
    res = resolve(file_values, flags, presets)
    for note in res.notices:
        log.warning(note)
    return res


# ----------------------------------------------------------------------------
# subcommands

def cmd_propagate(res, run, backend):
    grid = build_grid(res)
    params = build_params(res, grid)
    v = res.values
    psi0 = gaussian_state(grid, v["sigma0"], v["center"], v["k0"])
    states = propagate(psi0, params, grid, backend=backend)
    n = norms(states, grid)
    if v["state_format"] == "long":
        write_states_long_csv(run.path("states.csv"), grid, states)
    else:
        width = len(str(grid.nt - 1))
        for k in range(grid.nt):
            write_state_csv(run.path(f"state_{k:0{width}d}.csv"), grid, states[k])
    write_field_csv(run.path("density.csv"), grid, np.abs(states) ** 2)
    run.json("report.json", {"grid": grid.to_dict(), "params": params.to_dict(),
                             "norm_initial": n[0], "norm_max_drift": float(np.max(np.abs(n - n[0])))})
    return EXIT_OK


def _gaussian_boundary(res, grid, params):
    v = res.values
    g = GaussianParams(v["sigma0"], v["sigma_dot0"], v["center"])
    if v["preset"] == "bounce":
        rho0 = gaussian_density(grid, g.sigma0, g.center)
        return BoundaryData(rho0, rho0.copy(), "bounce"), None
    exact = gaussian_history(g, params, grid)
    return BoundaryData(exact.rho[0], exact.rho[-1], "spreading"), exact


def _write_history(run, hist, prefix="history"):
    grid = hist.grid
    write_field_csv(run.path(f"{prefix}_rho.csv"), grid, hist.rho)
    write_field_csv(run.path(f"{prefix}_current.csv"), grid, hist.current)
    if hist.phase is not None:
        write_field_csv(run.path(f"{prefix}_phase.csv"), grid, hist.phase)


def cmd_solve_bvp(res, run, backend):
    grid = build_grid(res)
    params = build_params(res, grid)
    config = build_solver_config(res)
    boundary, exact = _gaussian_boundary(res, grid, params)
    hist, rep = solve_bvp_primal_dual(boundary, params, grid, config)
    _write_history(run, hist)
    states = propagate(madelung_compose(hist.rho[0], hist.phase[0], params, grid), params, grid, backend=backend)
    oracle_l1 = l1_distance(normalize_slice(np.abs(states) ** 2, grid), hist.rho, grid)
    out = {"preset": boundary.label, "report": rep.to_dict(include_wall_time=False),
           "wall_time": rep.wall_time, "oracle_l1_max": float(np.max(oracle_l1)),
           "rms_width": np.sqrt(integrate_slice(hist.rho * grid.x ** 2, grid)).tolist()}
    if config.init_perturbation > 0:
        # perturbed starts may land on a different KKT point; report the unperturbed one alongside
        _, rep0 = solve_bvp_primal_dual(boundary, params, grid, replace(config, init_perturbation=0.0))
        out["alternate_solutions"] = [{"init_perturbation": 0.0, "converged": rep0.converged,
                                       "primal_total": rep0.action.primal_total}]
    if exact is not None:
        out["analytic_action"] = primal_action(exact, params).to_dict()
    if res["shooting"]:
        sh, srep = solve_bvp_shooting(boundary, params, grid, config)
        out["shooting"] = srep.to_dict(include_wall_time=False)
        out["shooting_action_rel_diff"] = (abs(srep.action.primal_total - rep.action.primal_total)
                                           / abs(rep.action.primal_total))
    run.json("report.json", out)
    if not rep.converged:
        log.error("solve did not converge: %s", rep.message)
        return EXIT_NUMERICAL
    return EXIT_OK


def _trajectory_starts(res, hist):
    xs = x0_list(res)
    if xs is None:
        return fan_start_points(hist.rho[0], hist.grid, res["n_traj"])
    return np.array(xs)


def cmd_gaussian_demo(res, run, backend):
    grid = build_grid(res)
    params = build_params(res, grid)
    v = res.values
    g = GaussianParams(v["sigma0"], v["sigma_dot0"], v["center"])
    hist = gaussian_history(g, params, grid)
    s, sd, gam = envelope_states(g, params, grid.t - grid.t0)
    e = envelope_energy(s, sd, params)
    with run.path("envelope.csv").open("w") as fh:
        fh.write("t,sigma,sigma_dot,gamma,energy\n")
        for row in zip(grid.t.tolist(), s.tolist(), sd.tolist(), gam.tolist(), e.tolist()):
            fh.write(",".join(fmt(c) for c in row) + "\n")
    _write_history(run, hist)
    write_field_csv(run.path("velocity.csv"), grid, velocity_field(hist, params))
    write_field_csv(run.path("quantum_potential.csv"), grid, quantum_potential(hist.rho, params, grid).values)
    trajs = integrate_trajectories(hist, params, _trajectory_starts(res, hist), backend)
    write_trajectories_csv(run.path("trajectories.csv"), trajs)
    red = integrate_trajectories(hist, params, list(red_tube(res)), backend)
    write_trajectories_csv(run.path("red_tube.csv"), red)
    tube = flow_tube_mass(hist, red[0], red[1])
    # x(t) − c = (x0 − c)·σ(t)/σ0; the ratio form is ill-conditioned for x0 ≈ c, so those
    # start points report an absolute drift instead
    scale, drift = 0.0, 0.0
    for tr in trajs:
        a = tr.x[0] - g.center
        dev = np.abs(tr.x - g.center - a * s[: tr.x.size] / s[0])
        if abs(a) >= 0.1 * g.sigma0:
            scale = max(scale, float(np.max(dev)) / abs(a))
        else:
            drift = max(drift, float(np.max(dev)))
    run.json("report.json", {"residuals": kkt_residuals(hist, params), "action": primal_action(hist, params).to_dict(),
                             "sigma_final": s[-1], "energy_drift": float(np.max(np.abs(e - e[0]))),
                             "trajectory_scaling_error": scale, "near_center_drift": drift,
                             "red_tube_mass": {"initial": tube[0], "max_relative_drift": float(np.max(np.abs(tube / tube[0] - 1)))},
                             "exited": [i for i, tr in enumerate(trajs) if tr.exited]})
    return EXIT_OK


def cmd_trajectories(res, run, backend):
    grid = build_grid(res)
    params = build_params(res, grid)
    v = res.values
    hist = gaussian_history(GaussianParams(v["sigma0"], v["sigma_dot0"], v["center"]), params, grid)
    trajs = integrate_trajectories(hist, params, _trajectory_starts(res, hist), backend)
    write_trajectories_csv(run.path("trajectories.csv"), trajs)
    run.json("report.json", {"n": len(trajs), "exited": [i for i, tr in enumerate(trajs) if tr.exited],
                             "final_positions": [tr.x[-1] for tr in trajs]})
    return EXIT_OK


def cmd_caliber(res, run, backend):
    grid = build_grid(res)
    params = build_params(res, grid)
    config = build_solver_config(res)
    v = res.values
    psi0 = gaussian_state(grid, v["sigma0"], v["center"], v["k0"])
    rho0 = normalize_slice(np.abs(psi0) ** 2, grid)
    rho_t = normalize_slice(np.abs(propagate(psi0, params, grid, store_all=False, backend=backend)) ** 2, grid)
    costs, solves = [], {}
    for lo, hi in outcome_windows(res):
        o = OutcomeConstraint.from_window(f"[{fmt(lo)},{fmt(hi)}]", rho_t, grid, lo, hi)
        label, c, rep = min_action_to_outcome(rho0, o, params, grid, config, v["cost"])
        costs.append((label, c))
        solves[label] = rep.to_dict(include_wall_time=False)
    dist = outcome_weights(costs, params)
    for w in dist.warnings:
        log.warning(w)
    run.json("distribution.json", {**dist.to_dict(), "cost_mode": v["cost"], "cost_note": COST_NOTE,
                                   "solves": solves})
    return EXIT_OK


def cmd_node_demo(res, run, backend):
    grid = build_grid(res)
    params = build_params(res, grid)
    v = res.values
    rep = node_suppression_demo(params, grid, build_solver_config(res), v["separation"], v["sigma_slit"],
                                v["window_width"], v["cost"], v["wide_check"])
    prof = rep.pop("profile")
    a, n = rep["preset"]["antinode_center"], rep["preset"]["node_center"]
    w = rep["preset"]["window_width"]
    with run.path("interference_profile.csv").open("w") as fh:
        fh.write("x,rho0,rho_tf,in_antinode,in_node\n")
        for x, r0, rt in zip(prof["x"].tolist(), prof["rho0"].tolist(), prof["rho_tf"].tolist()):
            fh.write(f"{fmt(x)},{fmt(r0)},{fmt(rt)},{int(abs(x - a) <= w / 2)},{int(abs(x - n) <= w / 2)}\n")
    log.warning("cost convention: %s", COST_NOTE)
    run.json("report.json", rep)
    return EXIT_OK


def cmd_verify(args, run):
    result = run_verify()
    run.json("verify.json", result)
    for c in result["checks"]:
        log.info("%s %s value=%r threshold=%r", "PASS" if c["passed"] else "FAIL", c["name"], c["value"], c["threshold"])
    return EXIT_OK if result["passed"] else EXIT_VERIFY


HANDLERS = {"propagate": cmd_propagate, "solve-bvp": cmd_solve_bvp, "gaussian-demo": cmd_gaussian_demo,
            "trajectories": cmd_trajectories, "caliber": cmd_caliber, "node-demo": cmd_node_demo}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageExit as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    if not args.verbose:
        log.setLevel(logging.WARNING)
    try:
        res = None if args.command == "verify" else _resolve(args, [args.command])
        if res is not None:
            build_params(res, build_grid(res))
    except MadelungError as exc:
        print(f"madelung-bvp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out, out_source = output_dir(args.out, args.command)
    run = RunManifest(out, args.command, argv)
    run.sections["output_dir_source"] = out_source
    if res is not None:
        run.sections["parameters"] = res.to_dict()
        run.sections["grid"] = build_grid(res).to_dict()
        run.sections["seed"] = res["seed"]
    try:
        code = cmd_verify(args, run) if args.command == "verify" else HANDLERS[args.command](res, run, args.backend)
    except (UsageError, ContractViolation, DimensionError, DomainError) as exc:
        print(f"madelung-bvp: error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    except (NumericalDivergenceError, MadelungError) as exc:
        print(f"madelung-bvp: numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    run.finalize(code)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
