"""Command line interface.

    discvar simulate CONFIG [--out DIR]
    discvar solve    CONFIG [--out DIR] [--tol T] [--max-iter K] [--retraction R]
    discvar verify   CONFIG DIR [--tol T]

CONFIG is a JSON file; see the README for the schema.  Outputs are
trajectory.csv (node states), controls.csv (per-interval data) and
report.json.  Exit codes: 0 success, 1 configuration or usage error,
2 solve/verification failure (artifacts still written from the best
iterate).

The environment variable DISCVAR_LOG sets the log level (e.g. DEBUG).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import lgoc, lie, mech, systems, tboc
from .errors import ConfigError, DiscvarError, NoConvergence

log = logging.getLogger("discvar")


def _fmt(x):
    return format(float(x), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    return header, data


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict) or "system" not in cfg:
        raise ConfigError("config must be a JSON object with a 'system' section")
    return cfg


def _group_element(group, value):
    """Parse a group element: raw nested list, or axis/angle/translation dict."""
    if isinstance(value, list):
        return group.check(np.asarray(value, dtype=float))
    if not isinstance(value, dict):
        raise ConfigError("group elements must be lists or objects")
    if group.name == "Rn":
        return np.asarray(value.get("position", np.zeros(group.dim)), dtype=float)
    if "rotation" in value:
        R = np.asarray(value["rotation"], dtype=float)
    else:
        angle = float(value.get("rotation_angle", 0.0))
        axis = np.asarray(value.get("rotation_axis", [0.0, 0.0, 1.0]), dtype=float)
        nrm = np.linalg.norm(axis)
        if nrm == 0.0:
            raise ConfigError("rotation axis must be nonzero")
        R = lie._so3_exp(axis / nrm * angle)
    if group.name == "SO3":
        return group.check(R, tol=1e-8)
    t = np.asarray(value.get("translation", [0.0, 0.0, 0.0]), dtype=float)
    return group.check(lie._se3_build(R, t), tol=1e-8)


def _build_cost(cfg):
    kind = cfg.get("kind", "l2").lower()
    if kind == "l2":
        return systems.L2Cost()
    if kind == "smoothed_l1":
        return systems.SmoothedL1Cost(
            eps=float(cfg.get("eps", 1e-4)),
            u_min=cfg.get("u_min"),
            u_max=cfg.get("u_max"),
            weight=float(cfg.get("weight", 1e3)),
        )
    raise ConfigError(f"unknown cost kind {kind!r}")


def build_setup(cfg, retraction_override=None):
    """Returns ("lie", problem) or ("rn", problem) from a config dict."""
    sys_cfg = cfg["system"]
    prob_cfg = cfg.get("problem", {})
    stype = sys_cfg.get("type")
    retraction = retraction_override or prob_cfg.get("retraction", lie.CAYLEY)
    if retraction not in (lie.CAYLEY, lie.EXPONENTIAL):
        raise ConfigError(f"unknown retraction {retraction!r}")
    try:
        N = int(prob_cfg["N"])
        h = float(prob_cfg["h"])
    except KeyError as exc:
        raise ConfigError(f"problem section is missing {exc}") from exc
    bnd = prob_cfg.get("boundary", {})

    if stype == "point_mass":
        n = int(sys_cfg.get("n", 1))
        lagrangian, forces = systems.make_point_mass(
            n, mass=sys_cfg.get("mass", 1.0), h=h,
            force_convention=sys_cfg.get("force_convention", "trapezoidal"),
        )
        cost = tboc.QuadraticControlCost(h)
        try:
            problem = tboc.OcProblemRn(
                lagrangian=lagrangian, forces=forces, cost=cost,
                x0=bnd["x0"], p0=bnd["p0"], xT=bnd["xT"], pT=bnd["pT"], N=N,
            )
        except KeyError as exc:
            raise ConfigError(f"boundary section is missing {exc}") from exc
        return "rn", problem

    if stype == "rigid_body_so3":
        system = systems.make_rigid_body_so3(
            np.asarray(sys_cfg.get("inertia", [1.0, 1.0, 1.0]), dtype=float),
            actuated=tuple(sys_cfg.get("actuated", [0, 1, 2])),
            retraction=retraction,
        )
    elif stype == "uuv_se3":
        params = systems.UuvParams(
            mass=float(sys_cfg.get("mass", 3.0)),
            radius=float(sys_cfg.get("radius", 0.1)),
            length=float(sys_cfg.get("length", 0.6)),
            c=float(sys_cfg.get("c", 0.3)),
            d=float(sys_cfg.get("d", 0.3)),
        )
        system = systems.make_uuv_system(params, retraction=retraction)
    else:
        raise ConfigError(f"unknown system type {stype!r}")

    group = system.group
    try:
        problem = lgoc.OcProblemLie(
            system=system,
            g0=_group_element(group, bnd.get("g0", group.identity().tolist())),
            xi0=np.asarray(bnd.get("xi0", np.zeros(group.dim)), dtype=float),
            gT=_group_element(group, bnd["gT"]),
            xiT=np.asarray(bnd.get("xiT", np.zeros(group.dim)), dtype=float),
            N=N, h=h, cost=_build_cost(prob_cfg.get("cost", {})),
        )
    except KeyError as exc:
        raise ConfigError(f"boundary section is missing {exc}") from exc
    return "lie", problem


# ---------------------------------------------------------------------------
# output writers
# ---------------------------------------------------------------------------

def _write_lie_solution(problem, sol, outdir):
    n = problem.system.n
    m = problem.system.m
    gsize = problem.system.group.matrix_size
    header = ["k", "t"]
    header += [f"g{i}{j}" for i in range(gsize) for j in range(gsize)]
    header += [f"nu{i}" for i in range(n)]
    rows = []
    for k in range(problem.N + 1):
        rows.append(
            [k, k * problem.h, *sol.gs[k].reshape(-1), *sol.nus[k]]
        )
    _write_csv(os.path.join(outdir, "trajectory.csv"), header, rows)

    header = ["k"] + [f"xi{i}" for i in range(n)]
    header += [f"um{i}" for i in range(m)] + [f"up{i}" for i in range(m)]
    nl = n - m
    header += [f"lm{i}" for i in range(nl)] + [f"lp{i}" for i in range(nl)]
    rows = []
    for k in range(problem.N):
        row = [k, *sol.xis[k], *sol.controls[k, 0], *sol.controls[k, 1]]
        if sol.lambdas is not None:
            row += [*sol.lambdas[k, 0], *sol.lambdas[k, 1]]
        rows.append(row)
    _write_csv(os.path.join(outdir, "controls.csv"), header, rows)


def _write_rn_solution(problem, sol, outdir):
    n, m = problem.n, problem.m
    header = ["k", "t"] + [f"x{i}" for i in range(n)] + [f"p{i}" for i in range(n)]
    rows = [
        [k, k * problem.h, *sol.qs[k], *sol.ps[k]] for k in range(problem.N + 1)
    ]
    _write_csv(os.path.join(outdir, "trajectory.csv"), header, rows)
    header = ["k"] + [f"um{i}" for i in range(m)] + [f"up{i}" for i in range(m)]
    nl = n - m
    header += [f"lm{i}" for i in range(nl)] + [f"lp{i}" for i in range(nl)]
    rows = []
    for k in range(problem.N):
        row = [k, *sol.controls[k, 0], *sol.controls[k, 1]]
        if sol.lambdas is not None:
            row += [*sol.lambdas[k, 0], *sol.lambdas[k, 1]]
        rows.append(row)
    _write_csv(os.path.join(outdir, "controls.csv"), header, rows)


def _write_report(outdir, payload):
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _perturbed_guess(problem, kind, solver_cfg):
    """Optional seeded perturbation of the initial guess (study aid)."""
    scale = float(solver_cfg.get("guess_perturbation", 0.0))
    if scale == 0.0:
        return None
    rng = np.random.default_rng(int(solver_cfg.get("seed", 0)))
    if kind == "lie":
        first, second, lams = lgoc.initial_guess(problem)
    else:
        first, second, lams = tboc.initial_guess(problem)
    first = first + scale * rng.normal(size=np.shape(first))
    second = second + scale * rng.normal(size=np.shape(second))
    return first, second, lams


def cmd_solve(args):
    cfg = load_config(args.config)
    kind, problem = build_setup(cfg, retraction_override=args.retraction)
    solver_cfg = cfg.get("solver", {})
    tol = args.tol if args.tol is not None else float(solver_cfg.get("tol", 1e-6))
    max_iter = args.max_iter if args.max_iter is not None else int(
        solver_cfg.get("max_iter", 100)
    )
    method = solver_cfg.get("method", "auto")
    guess = _perturbed_guess(problem, kind, solver_cfg)
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    t0 = time.perf_counter()
    failed = None
    try:
        if kind == "lie":
            sol = lgoc.solve(problem, tol=tol, max_iter=max_iter, method=method,
                             guess=guess)
        else:
            sol = tboc.solve(problem, tol=tol, max_iter=max_iter, guess=guess)
    except NoConvergence as exc:
        failed = exc
        # artifacts are still written from the best iterate
        if kind == "lie":
            sol = lgoc.assemble_solution(problem, exc.best_x, report=exc.report)
        else:
            sol = tboc.assemble_solution(problem, exc.best_x, report=exc.report)
    elapsed = time.perf_counter() - t0
    if kind == "lie":
        _write_lie_solution(problem, sol, outdir)
    else:
        _write_rn_solution(problem, sol, outdir)
    converged = failed is None and bool(sol.report.converged)
    _write_report(outdir, {
        "command": "solve",
        "converged": converged,
        "iterations": int(sol.report.iterations),
        "residual_norm": float(sol.report.residual_norm),
        "method": sol.report.method,
        "cost": float(sol.cost),
        "elapsed_s": elapsed,
    })
    if failed is not None:
        log.error("solve failed: %s", failed)
        return 2
    log.info("solved in %d iterations, residual %.3e, cost %.6f",
             sol.report.iterations, sol.report.residual_norm, sol.cost)
    return 0 if converged else 2


def cmd_simulate(args):
    cfg = load_config(args.config)
    kind, problem = build_setup(cfg, retraction_override=args.retraction)
    sim_cfg = cfg.get("simulate", {})
    steps = int(sim_cfg.get("steps", cfg["problem"]["N"]))
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    t0 = time.perf_counter()
    if kind == "lie":
        system = problem.system
        gs, xis, mus = lgoc.integrate_reduced(
            system, problem.g0, problem.xi0, problem.h, steps
        )
        n = system.n
        gsize = system.group.matrix_size
        header = ["k", "t"] + [f"g{i}{j}" for i in range(gsize) for j in range(gsize)]
        rows = [[k, k * problem.h, *gs[k].reshape(-1)] for k in range(steps + 1)]
        _write_csv(os.path.join(outdir, "trajectory.csv"), header, rows)
        header = ["k"] + [f"xi{i}" for i in range(n)] + [f"mu{i}" for i in range(n)]
        rows = [[k, *xis[k], *mus[k]] for k in range(steps)]
        _write_csv(os.path.join(outdir, "controls.csv"), header, rows)
    else:
        lagrangian, forces = problem.lagrangian, problem.forces
        x0 = problem.x0
        v0 = lagrangian.mass_inv @ problem.p0
        x1 = np.asarray(sim_cfg.get("x1", x0 + problem.h * v0), dtype=float)
        qs = mech.integrate(lagrangian, forces, x0, x1, steps)
        ps = mech.node_momenta(lagrangian, forces, qs)
        n = problem.n
        header = ["k", "t"] + [f"x{i}" for i in range(n)] + [f"p{i}" for i in range(n)]
        rows = [[k, k * problem.h, *qs[k], *ps[k]] for k in range(steps + 1)]
        _write_csv(os.path.join(outdir, "trajectory.csv"), header, rows)
    _write_report(outdir, {
        "command": "simulate", "steps": steps,
        "elapsed_s": time.perf_counter() - t0,
    })
    return 0


def _verify_lie(problem, args):
    _, traj = _read_csv(os.path.join(args.directory, "trajectory.csv"))
    _, ctrl = _read_csv(os.path.join(args.directory, "controls.csv"))
    sys_ = problem.system
    n, m, N = sys_.n, sys_.m, problem.N
    gsize = sys_.group.matrix_size
    if traj.shape[0] != N + 1 or ctrl.shape[0] != N:
        raise ConfigError("trajectory/controls row counts do not match N")
    gs = traj[:, 2 : 2 + gsize * gsize].reshape(N + 1, gsize, gsize)
    nus = traj[:, 2 + gsize * gsize : 2 + gsize * gsize + n]
    xis = ctrl[:, 1 : 1 + n]
    lambdas = None
    if not sys_.fully_actuated:
        nl = n - m
        lambdas = ctrl[:, 1 + n + 2 * m :].reshape(N, 2, nl)
    res = lgoc.general_residual(problem, xis, nus[1:-1], lambdas)
    checks = {
        "optimality_residual": float(np.max(np.abs(res))),
        "boundary_nu0": float(np.max(np.abs(nus[0] - problem.nu0))),
        "boundary_nuN": float(np.max(np.abs(nus[-1] - problem.nuN))),
        "reconstruction_gT": float(np.max(np.abs(
            lgoc.reconstruct(sys_.group, problem.g0, problem.h, xis)[-1] - problem.gT
        ))),
    }
    if not sys_.fully_actuated:
        full_nus = np.vstack([problem.nu0[None], nus[1:-1], problem.nuN[None]])
        z, _, mu, transported, _, _ = lgoc._controls_from_momenta(problem, xis, full_nus)
        d = sys_.drift_values(z)
        sigma = list(sys_.unactuated)
        phim = (mu - full_nus[:-1] - (problem.h / 2.0) * d)[:, sigma]
        phip = (full_nus[1:] - transported - (problem.h / 2.0) * d)[:, sigma]
        checks["constraint_phi"] = float(max(np.max(np.abs(phim)), np.max(np.abs(phip))))
    return checks


def _verify_rn(problem, args):
    _, traj = _read_csv(os.path.join(args.directory, "trajectory.csv"))
    _, ctrl = _read_csv(os.path.join(args.directory, "controls.csv"))
    n, m, N = problem.n, problem.m, problem.N
    qs = traj[:, 2 : 2 + n]
    ps = traj[:, 2 + n : 2 + 2 * n]
    lambdas = None
    if not problem.fully_actuated:
        lambdas = ctrl[:, 1 + 2 * m :].reshape(N, 2, n - m)
    res = tboc.optimality_residual(problem, qs, ps, lambdas)
    um = ctrl[:, 1 : 1 + m]
    up = ctrl[:, 1 + m : 1 + 2 * m]
    # dynamics: forced discrete Euler-Lagrange at interior nodes
    dyn = 0.0
    for k in range(1, N):
        r = mech.forced_del_residual(
            problem.lagrangian, problem.forces,
            qs[k - 1], qs[k], qs[k + 1], up[k - 1], um[k],
        )
        dyn = max(dyn, float(np.max(np.abs(r))))
    return {
        "optimality_residual": float(np.max(np.abs(res))),
        "dynamics_residual": dyn,
        "boundary_x0": float(np.max(np.abs(qs[0] - problem.x0))),
        "boundary_xT": float(np.max(np.abs(qs[-1] - problem.xT))),
        "boundary_p0": float(np.max(np.abs(ps[0] - problem.p0))),
        "boundary_pT": float(np.max(np.abs(ps[-1] - problem.pT))),
    }


def cmd_verify(args):
    cfg = load_config(args.config)
    kind, problem = build_setup(cfg)
    tol = args.tol if args.tol is not None else 1e-6
    checks = _verify_lie(problem, args) if kind == "lie" else _verify_rn(problem, args)
    ok = all(v <= tol for v in checks.values())
    for name, value in sorted(checks.items()):
        print(f"{name}: {value:.3e} {'ok' if value <= tol else 'FAIL'}")
    payload = {"command": "verify", "passed": bool(ok), "tolerance": tol,
               "checks": checks}
    _write_report(args.directory, payload)
    return 0 if ok else 2


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def make_parser():
    parser = argparse.ArgumentParser(
        prog="discvar",
        description="discrete variational optimal control on R^n and Lie groups",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="JSON configuration file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--max-iter", type=int, default=None)
        p.add_argument("--retraction", choices=[lie.CAYLEY, lie.EXPONENTIAL],
                       default=None)

    p = sub.add_parser("simulate", help="integrate the forced dynamics forward")
    common(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("solve", help="solve the two-point optimal control problem")
    common(p)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("verify", help="re-check residuals of a saved solution")
    p.add_argument("config")
    p.add_argument("directory", help="directory holding trajectory.csv etc.")
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None):
    logging.basicConfig(
        level=os.environ.get("DISCVAR_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ConfigError as exc:
        log.error("%s", exc)
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DiscvarError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
