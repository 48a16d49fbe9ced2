"""Seeded trial batches over random boundary pairs.

A :class:`Scenario` fixes the obstacle field, the enclosing circle (sphere
in 3-D) the boundary points are drawn from, and the batch plan.  Trial
``i`` draws its boundary pair from ``default_rng([seed, i])`` so every K and
variant sees the same pairs and results do not depend on scheduling.

Two canned layouts are provided: 12 obstacles in 2-D and 15 in 3-D, centers
uniform in ``[-5, 5]^D`` and radii uniform in ``[0.5, 1.5]``, drawn from
``default_rng(CANNED_SEED)`` (centers first, then radii).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field, fields

import numpy as np

from .problems import OCPSpec, Variant, build_nlp, initial_guess
from .solver import SolverOptions, Status, solve
from .surface import GaussianField, field_value

CANNED_SEED = 2024

INITIALIZERS = ("geodesic", "geodesic-like", "straight-line")

SUMMARY_COLUMNS = (
    "K",
    "variant",
    "mean_solve_s",
    "infeasible",
    "trials",
    "optimal",
    "iteration_limit",
    "errors",
    "mean_solve_s_optimal",
)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Obstacle field plus batch plan.

    ``enclosure_radius=None`` picks ``1.5 * max_i(|c_i - centroid| + r_i)``
    (``1`` for an empty field).  ``variants`` lists problem variants for
    :func:`run_trial_set`; the warmstart experiment always targets ``hard``.
    """

    field: GaussianField
    enclosure_radius: float | None = None
    trials: int = 25
    K_list: tuple = (9, 21, 45)
    M: int = 3
    seed: int = 0
    variants: tuple = ("geodesic-like",)
    objective: str = "knots"
    solver: SolverOptions = dc_field(default_factory=SolverOptions)

    def __post_init__(self):
        object.__setattr__(self, "K_list", tuple(int(k) for k in self.K_list))
        object.__setattr__(self, "variants", tuple(Variant.parse(v).value for v in self.variants))
        if self.trials < 1:
            raise ValueError("trial count must be positive")
        if not self.K_list or min(self.K_list) < 1:
            raise ValueError("K_list must hold positive segment counts")
        reach = self._reach()
        if self.enclosure_radius is None:
            object.__setattr__(self, "enclosure_radius", 1.5 * reach if reach > 0 else 1.0)
        if not self.enclosure_radius > reach:
            raise ValueError(
                f"enclosure radius {self.enclosure_radius} does not contain every obstacle (needs > {reach:.6g})"
            )

    def _reach(self) -> float:
        f = self.field
        if f.n_obstacles == 0:
            return 0.0
        return float(np.max(np.linalg.norm(f.centers - self.centroid, axis=1) + f.radii))

    @property
    def dim(self) -> int:
        return self.field.dim

    @property
    def centroid(self) -> np.ndarray:
        if self.field.n_obstacles == 0:
            return np.zeros(self.field.dim)
        return self.field.centers.mean(axis=0)


@dataclass
class TrialRow:
    """Outcome of one solve.

    ``variant`` holds the problem variant, or the initializer name for
    warmstart rows.  ``knot_excess`` is ``max_k f(X_k) - rho`` and
    ``min_clearance`` is ``min_{k,i} |X_k - c_i| - r_i``, both recomputed
    from the returned trajectory.
    """

    K: int
    variant: str
    solve_time_s: float
    status: str
    objective: float
    max_violation: float
    seed_index: int
    init_time_s: float = 0.0
    init_status: str = ""
    knot_excess: float = math.nan
    min_clearance: float = math.nan
    message: str = ""

    @property
    def total_time_s(self) -> float:
        return self.init_time_s + self.solve_time_s


def canned_field(dim: int = 2, amplitude: float = 1000.0, sharpness: float = 10.0, rho=None) -> GaussianField:
    """The fixed 12-obstacle (2-D) or 15-obstacle (3-D) layout."""
    if dim not in (2, 3):
        raise ValueError(f"no canned layout in {dim} dimensions")
    rng = np.random.default_rng(CANNED_SEED)
    n = 12 if dim == 2 else 15
    centers = rng.uniform(-5.0, 5.0, (n, dim))
    radii = rng.uniform(0.5, 1.5, n)
    return GaussianField.from_arrays(centers, radii, amplitude, sharpness, rho)


def canned_scenario(dim: int = 2, **kw) -> Scenario:
    return Scenario(canned_field(dim), **kw)


def sample_boundary_pair(rng, scenario: Scenario):
    """Two independent uniform points on the enclosing circle or sphere."""
    u = rng.standard_normal((2, scenario.dim))
    u /= np.linalg.norm(u, axis=1)[:, None]
    pts = scenario.centroid + scenario.enclosure_radius * u
    return pts[0], pts[1]


def trial_pair(scenario: Scenario, index: int):
    return sample_boundary_pair(np.random.default_rng([scenario.seed, index]), scenario)


def _spec(scenario, index, K, variant):
    p0, pf = trial_pair(scenario, index)
    return OCPSpec(p0, pf, K, variant, M=scenario.M, objective=scenario.objective)


def _knot_checks(nlp, x):
    X = nlp.knots(x, 0)
    f = nlp.field
    excess = float(np.max(field_value(f, X)) - nlp.rho)
    if f.n_obstacles == 0:
        return excess, math.inf
    dist = np.linalg.norm(X[:, None, :] - f.centers[None, :, :], axis=2) - f.radii[None, :]
    return excess, float(dist.min())


def _row(K, name, index, rep, nlp, init_time=0.0, init_status=""):
    excess, clear = _knot_checks(nlp, rep.x_opt)
    return TrialRow(
        K=K,
        variant=name,
        solve_time_s=rep.wall_time,
        status=rep.status.value,
        objective=rep.objective,
        max_violation=rep.max_violation,
        seed_index=index,
        init_time_s=init_time,
        init_status=init_status,
        knot_excess=excess,
        min_clearance=clear,
        message=rep.message,
    )


def _error_row(K, name, index, exc):
    return TrialRow(K, name, math.nan, "Error", math.nan, math.nan, index, message=f"{type(exc).__name__}: {exc}")


def _solve_one(scenario, index, K, variant):
    try:
        nlp = build_nlp(_spec(scenario, index, K, variant), scenario.field)
        rep = solve(nlp, initial_guess(nlp), scenario.solver)
        return _row(K, nlp.variant.value, index, rep, nlp)
    except Exception as exc:  # recorded, never fatal to the batch
        return _error_row(K, Variant.parse(variant).value, index, exc)


def _warm_one(scenario, index, K, initializer):
    try:
        target = build_nlp(_spec(scenario, index, K, "hard"), scenario.field)
        init_time, init_status = 0.0, ""
        if initializer == "straight-line":
            x0 = initial_guess(target)
        else:
            src = build_nlp(_spec(scenario, index, K, initializer), scenario.field)
            t0 = time.perf_counter()
            init = solve(src, initial_guess(src), scenario.solver)
            # same grid and order, so theta carries over unchanged; a
            # non-optimal initializer still hands over its last iterate
            x0 = init.x_opt.copy()
            init_time = time.perf_counter() - t0
            init_status = init.status.value
        rep = solve(target, x0, scenario.solver)
        return _row(K, initializer, index, rep, target, init_time, init_status)
    except Exception as exc:
        return _error_row(K, initializer, index, exc)


def _run(func, scenario, tasks, jobs):
    jobs = max(1, int(jobs or 1))
    if jobs == 1 or len(tasks) == 1:
        return [func(scenario, *t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(func, scenario, *t) for t in tasks]
        return [f.result() for f in futures]


def run_trial_set(scenario: Scenario, jobs: int = 1) -> list[TrialRow]:
    """Solve every (K, variant, trial) from the straight-line guess."""
    tasks = [(i, K, v) for K in scenario.K_list for v in scenario.variants for i in range(scenario.trials)]
    return _run(_solve_one, scenario, tasks, jobs)


def warmstart_experiment(scenario: Scenario, jobs: int = 1, initializers=INITIALIZERS) -> list[TrialRow]:
    """Solve the hard-obstacle problem from each initializer.

    A row's total time is the initializer's solve time plus the hard
    solve time; ``init_status`` records whether the initializer itself
    reached ``Optimal``.
    """
    if scenario.dim != 2:
        raise ValueError("the warmstart comparison is defined on 2-D scenarios")
    for name in initializers:
        if name not in INITIALIZERS:
            raise ValueError(f"unknown initializer {name!r}")
    tasks = [(i, K, name) for K in scenario.K_list for name in initializers for i in range(scenario.trials)]
    return _run(_warm_one, scenario, tasks, jobs)


def summarize(rows) -> list[dict]:
    """Per (K, variant) aggregates, in order of first appearance."""
    groups = defaultdict(list)
    for r in rows:
        groups[(r.K, r.variant)].append(r)
    out = []
    for (K, variant), rs in groups.items():
        times = [r.total_time_s for r in rs if r.status != "Error"]
        opt = [r.total_time_s for r in rs if r.status == Status.OPTIMAL.value]
        out.append(
            {
                "K": K,
                "variant": variant,
                "mean_solve_s": float(np.mean(times)) if times else math.nan,
                "infeasible": sum(r.status == Status.INFEASIBLE.value for r in rs),
                "trials": len(rs),
                "optimal": len(opt),
                "iteration_limit": sum(r.status == Status.ITERATION_LIMIT.value for r in rs),
                "errors": sum(r.status == "Error" for r in rs),
                "mean_solve_s_optimal": float(np.mean(opt)) if opt else math.nan,
            }
        )
    return out


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _markdown(summary):
    head = "| K | Variant | Solve (s) | Infeasible | Trials | Not optimal |"
    lines = [head, "|---:|:---|---:|---:|---:|---:|"]
    for s in summary:
        lines.append(
            f"| {s['K']} | {s['variant']} | {s['mean_solve_s']:.3f} | {s['infeasible']} "
            f"| {s['trials']} | {s['trials'] - s['optimal']} |"
        )
    return "\n".join(lines) + "\n"


def emit_report(rows, fmt: str = "markdown", level: str = "summary") -> str:
    """Render rows as ``csv``, ``json`` or ``markdown``.

    ``csv`` writes the per-(K, variant) summary, or one line per trial with
    ``level="trials"``.  ``json`` always carries both.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to report")
    summary = summarize(rows)
    if fmt == "json":
        doc = {
            "summary": [{k: _json_safe(v) for k, v in s.items()} for s in summary],
            "trials": [{k: _json_safe(v) for k, v in asdict(r).items()} for r in rows],
        }
        return json.dumps(doc, indent=2) + "\n"
    if fmt == "markdown":
        return _markdown(summary)
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if level == "trials":
        names = [f.name for f in fields(TrialRow)]
        w.writerow(names)
        for r in rows:
            w.writerow([_fmt(getattr(r, n)) for n in names])
    elif level == "summary":
        w.writerow(SUMMARY_COLUMNS)
        for s in summary:
            w.writerow([_fmt(s[c]) for c in SUMMARY_COLUMNS])
    else:
        raise ValueError(f"unknown report level {level!r}")
    return buf.getvalue()


def comparison_table(rows) -> str:
    """Markdown table of mean total time per K and initializer."""
    summary = summarize(rows)
    names = [n for n in INITIALIZERS if any(s["variant"] == n for s in summary)]
    by_key = {(s["K"], s["variant"]): s for s in summary}
    Ks = sorted({s["K"] for s in summary})
    lines = ["| K | " + " | ".join(f"{n} (s)" for n in names) + " |", "|---:|" + "---:|" * len(names)]
    for K in Ks:
        cells = []
        for n in names:
            s = by_key.get((K, n))
            cells.append("" if s is None else f"{s['mean_solve_s']:.3f}")
        lines.append(f"| {K} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def default_jobs() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1
