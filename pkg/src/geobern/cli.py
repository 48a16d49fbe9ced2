"""Command-line front end.

Every command reads one JSON config file (``--scenario``) holding the
scenario, solver options and per-command settings; flags and
``--set dotted.path=value`` override fields without touching the file.

Exit codes: 0 success, 1 usage or configuration error, 2 the solver did not
certify a solution (``plan`` only), 3 internal error or failed derivative
check.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
import traceback
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench
from .problems import ConfigurationError, OCPSpec, Variant, build_nlp, decode_solution, initial_guess
from .solver import SolverOptions, Status, gradient_errors, solve
from .surface import GaussianField, field_value, gaussian_curvature_2d, sample_lattice
from .svg import render_plan


EXIT_OK, EXIT_CONFIG, EXIT_NOT_SOLVED, EXIT_INTERNAL = 0, 1, 2, 3

DEFAULTS = {
    "scenario": {
        "layout": "canned-2d",
        "dim": None,
        "obstacles": None,
        "amplitude": 1000.0,
        "sharpness": 10.0,
        "rho": None,
        "enclosure_radius": None,
        "trials": 25,
        "K_list": [9, 21, 45],
        "M": 3,
        "seed": 0,
        "variants": ["geodesic-like"],
        "objective": "knots",
    },
    "solver": {},
    "plan": {
        "variant": "geodesic-like",
        "K": 45,
        "M": 3,
        "p0": None,
        "pf": None,
        "seed": 0,
        "tf": None,
        "samples_per_segment": 20,
    },
    "bench": {"trial_set": True, "warmstart": False, "jobs": None},
    "surface": {"res": 200, "bounds": None},
}


class ConfigError(Exception):
    """Unusable configuration; reported with exit code 1."""


# -- configuration -----------------------------------------------------------


def _merge(base, update, path=""):
    for key, val in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config field {where!r}")
        if isinstance(base[key], dict) and key != "solver":
            if not isinstance(val, dict):
                raise ConfigError(f"config field {where!r} must be an object")
            _merge(base[key], val, where + ".")
        elif key == "solver":
            if not isinstance(val, dict):
                raise ConfigError("config field 'solver' must be an object")
            base[key].update(val)
        else:
            base[key] = val


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg, dotted: str, value):
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(f"unknown config field {dotted!r}")
        node = node[k]
    if not isinstance(node, dict) or (keys[-1] not in node and node is not cfg.get("solver")):
        raise ConfigError(f"unknown config field {dotted!r}")
    node[keys[-1]] = value


def load_config(path, overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    _merge(cfg, data)
    for dotted, value in overrides:
        apply_override(cfg, dotted, value)
    return cfg


def build_field(sc: dict) -> GaussianField:
    kw = dict(amplitude=float(sc["amplitude"]), sharpness=float(sc["sharpness"]), rho=sc["rho"])
    if sc["obstacles"] is not None:
        obs = sc["obstacles"]
        try:
            centers = [o["center"] for o in obs]
            radii = [o["radius"] for o in obs]
        except (TypeError, KeyError):
            raise ConfigError("obstacles must be objects with 'center' and 'radius'") from None
        if not obs:
            if sc["dim"] not in (2, 3):
                raise ConfigError("an empty obstacle list needs scenario.dim (2 or 3)")
            return GaussianField((), dim=int(sc["dim"]), **kw)
        return GaussianField.from_arrays(centers, radii, **kw)
    layouts = {"canned-2d": 2, "canned-3d": 3}
    if sc["layout"] not in layouts:
        raise ConfigError(f"unknown layout {sc['layout']!r}; use canned-2d, canned-3d or give obstacles")
    return bench.canned_field(layouts[sc["layout"]], **kw)


def build_scenario(cfg: dict) -> bench.Scenario:
    sc = cfg["scenario"]
    try:
        return bench.Scenario(
            build_field(sc),
            enclosure_radius=sc["enclosure_radius"],
            trials=int(sc["trials"]),
            K_list=tuple(sc["K_list"]),
            M=int(sc["M"]),
            seed=int(sc["seed"]),
            variants=tuple(sc["variants"]),
            objective=sc["objective"],
            solver=SolverOptions(**cfg["solver"]),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from None


# -- commands ----------------------------------------------------------------


def _vector(text, name):
    if text is None:
        return None
    if isinstance(text, str):
        try:
            text = [float(v) for v in text.split(",")]
        except ValueError:
            raise ConfigError(f"{name} must be comma-separated numbers") from None
    return np.asarray(text, dtype=float)


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def cmd_plan(cfg, out: Path) -> int:
    scenario = build_scenario(cfg)
    pc = cfg["plan"]
    p0, pf = _vector(pc["p0"], "p0"), _vector(pc["pf"], "pf")
    if (p0 is None) != (pf is None):
        raise ConfigError("give both p0 and pf, or neither")
    if p0 is None:
        p0, pf = bench.trial_pair(replace(scenario, seed=int(pc["seed"])), 0)
    try:
        spec = OCPSpec(p0, pf, int(pc["K"]), pc["variant"], M=int(pc["M"]), tf=pc["tf"],
                       objective=scenario.objective)
        nlp = build_nlp(spec, scenario.field)
    except ConfigurationError as exc:
        raise ConfigError(str(exc)) from None
    rep = solve(nlp, initial_guess(nlp), scenario.solver)
    traj = decode_solution(nlp, rep.x_opt, int(pc["samples_per_segment"]))
    out.mkdir(parents=True, exist_ok=True)

    axes = "xyz"[: spec.D]
    f_samples = field_value(scenario.field, traj.positions)
    with open(out / "trajectory.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *axes, *(f"v{a}" for a in axes), "f"])
        for t, p, v, f in zip(traj.times, traj.positions, traj.velocities, f_samples):
            w.writerow([repr(float(t)), *map(repr, map(float, p)), *map(repr, map(float, v)), repr(float(f))])

    knots = nlp.knots(rep.x_opt, 0)
    f_knots = field_value(scenario.field, knots)
    report = {
        "status": rep.status.value,
        "message": rep.message,
        "variant": spec.variant.value,
        "K": spec.K,
        "M": spec.M,
        "objective_kind": spec.objective,
        "p0": spec.p0.tolist(),
        "pf": spec.pf.tolist(),
        "tf": spec.tf,
        "objective": rep.objective,
        "max_eq_violation": rep.max_eq_violation,
        "max_ineq_violation": rep.max_ineq_violation,
        "stationarity": rep.stationarity,
        "outer_iters": rep.outer_iters,
        "inner_iters": rep.inner_iters,
        "wall_time": rep.wall_time,
        "rho": nlp.rho,
        "max_knot_f": float(f_knots.max()),
        "knots": knots.tolist(),
        "x_opt": rep.x_opt.tolist(),
    }
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    if spec.D == 2:
        svg = render_plan(scenario.field, [traj.positions], [knots], title=f"{spec.variant.value} K={spec.K}")
        (out / "plan.svg").write_text(svg)
    print(f"{rep.status.value}: objective {rep.objective:.6g}, violation {rep.max_violation:.3g}, "
          f"{rep.wall_time:.3f} s -> {out}")
    return EXIT_OK if rep.status is Status.OPTIMAL else EXIT_NOT_SOLVED


def cmd_bench(cfg, out: Path) -> int:
    scenario = build_scenario(cfg)
    bc = cfg["bench"]
    jobs = bc["jobs"] or bench.default_jobs()
    out.mkdir(parents=True, exist_ok=True)
    runs = []
    if bc["trial_set"]:
        runs.append(("trials", bench.run_trial_set(scenario, jobs)))
    if bc["warmstart"]:
        if scenario.dim != 2:
            raise ConfigError("the warmstart experiment needs a 2-D scenario")
        runs.append(("warmstart", bench.warmstart_experiment(scenario, jobs)))
    if not runs:
        raise ConfigError("nothing to run: enable bench.trial_set or bench.warmstart")
    for name, rows in runs:
        (out / f"{name}.csv").write_text(bench.emit_report(rows, "csv", level="trials"))
        (out / f"{name}_summary.csv").write_text(bench.emit_report(rows, "csv"))
        (out / f"{name}.json").write_text(bench.emit_report(rows, "json"))
        table = bench.emit_report(rows, "markdown")
        if name == "warmstart":
            table += "\n" + bench.comparison_table(rows)
        (out / f"{name}.md").write_text(table)
        print(table)
    return EXIT_OK


def cmd_surface(cfg, out: Path) -> int:
    scenario = build_scenario(cfg)
    field = scenario.field
    if field.dim != 2:
        raise ConfigError("surface export needs a 2-D scenario")
    res = int(cfg["surface"]["res"])
    if res < 2:
        raise ConfigError("surface resolution must be at least 2")
    bounds = cfg["surface"]["bounds"]
    if bounds is None:
        c, R = scenario.centroid, scenario.enclosure_radius
        bounds = [c[0] - R, c[0] + R, c[1] - R, c[1] + R]
    if len(bounds) != 4:
        raise ConfigError("surface.bounds must be [xmin, xmax, ymin, ymax]")
    xs = np.linspace(bounds[0], bounds[1], res)
    ys = np.linspace(bounds[2], bounds[3], res)
    X, Y, F, G = sample_lattice(field, xs, ys)
    single = field.n_obstacles == 1
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "f", "g"] + (["curvature"] if single else []))
        for x, y, f, g in zip(X.ravel(), Y.ravel(), F.ravel(), G.ravel()):
            row = [repr(float(x)), repr(float(y)), repr(float(f)), repr(float(g))]
            if single:
                row.append(repr(gaussian_curvature_2d(field, np.array([x, y]))))
            w.writerow(row)
    print(f"{res}x{res} lattice -> {out}")
    return EXIT_OK


def cmd_check_gradients(cfg, K: int, seed: int, tol: float = 1e-5) -> int:
    scenario = build_scenario(cfg)
    p0, pf = bench.trial_pair(replace(scenario, seed=seed), 0)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for variant in Variant:
        try:
            nlp = build_nlp(OCPSpec(p0, pf, K, variant, M=scenario.M, objective=scenario.objective),
                            scenario.field)
        except ConfigurationError as exc:
            raise ConfigError(str(exc)) from None
        x = initial_guess(nlp) + 0.1 * rng.standard_normal(nlp.n_vars)
        obj, eq, ineq = gradient_errors(nlp, x)
        err = float(max(obj, eq.max(initial=0.0), ineq.max(initial=0.0)))
        worst = max(worst, err)
        print(f"{variant.value:14s} objective {obj:.3e}  equality {eq.max(initial=0.0):.3e}  "
              f"inequality {ineq.max(initial=0.0):.3e}")
    print(f"max relative error {worst:.3e}")
    return EXIT_OK if worst <= tol else EXIT_INTERNAL


# -- argument parsing ----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _override(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected dotted.path=value, got {text!r}")
    key, val = text.split("=", 1)
    return key.strip(), _parse_value(val)


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="geobern", description="Trajectory planning on Gaussian cost surfaces.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--scenario", required=True, help="JSON config file")
        sp.add_argument("--set", dest="overrides", action="append", type=_override, default=[],
                        metavar="PATH=VALUE", help="override a config field by dotted path")

    sp = sub.add_parser("plan", help="solve one trajectory")
    common(sp)
    sp.add_argument("--variant", choices=[v.value for v in Variant])
    sp.add_argument("--k", type=int)
    sp.add_argument("--m", type=int)
    sp.add_argument("--p0")
    sp.add_argument("--pf")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True, type=Path, help="output directory")

    sp = sub.add_parser("bench", help="run seeded trial batches")
    common(sp)
    sp.add_argument("--k-list", type=_int_list)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--warmstart", action="store_true", help="also run the warmstart comparison")
    sp.add_argument("--warmstart-only", action="store_true", help="run only the warmstart comparison")
    sp.add_argument("--out", required=True, type=Path, help="output directory")
    sp.add_argument("--jobs", type=int, help="worker processes (default: available processors)")

    sp = sub.add_parser("surface", help="export the cost surface on a lattice")
    common(sp)
    sp.add_argument("--res", type=int)
    sp.add_argument("--out", required=True, type=Path, help="output CSV file")

    sp = sub.add_parser("check-gradients", help="compare analytic and finite-difference derivatives")
    common(sp)
    sp.add_argument("--k", type=int, default=15)
    sp.add_argument("--seed", type=int, default=0)
    return p


def _flag_overrides(args) -> list:
    pairs = []
    if args.command == "plan":
        for flag, path in (("variant", "plan.variant"), ("k", "plan.K"), ("m", "plan.M"), ("seed", "plan.seed")):
            if getattr(args, flag) is not None:
                pairs.append((path, getattr(args, flag)))
        if args.p0 is not None:
            pairs.append(("plan.p0", args.p0))
        if args.pf is not None:
            pairs.append(("plan.pf", args.pf))
    elif args.command == "bench":
        for flag, path in (("k_list", "scenario.K_list"), ("trials", "scenario.trials"),
                           ("seed", "scenario.seed"), ("jobs", "bench.jobs")):
            if getattr(args, flag) is not None:
                pairs.append((path, getattr(args, flag)))
        if args.warmstart or args.warmstart_only:
            pairs.append(("bench.warmstart", True))
        if args.warmstart_only:
            pairs.append(("bench.trial_set", False))
    elif args.command == "surface" and args.res is not None:
        pairs.append(("surface.res", args.res))
    return pairs


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.scenario, args.overrides + _flag_overrides(args))
        if args.command == "plan":
            return cmd_plan(cfg, args.out)
        if args.command == "bench":
            return cmd_bench(cfg, args.out)
        if args.command == "surface":
            return cmd_surface(cfg, args.out)
        return cmd_check_gradients(cfg, args.k, args.seed)
    except ConfigError as exc:
        print(f"geobern: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
