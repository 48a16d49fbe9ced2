"""Acceptance suite: one printed PASS/FAIL line per criterion.

Run with ``pytest -v tests/test_acceptance.py`` (lines appear in the
terminal output) or directly with ``python tests/test_acceptance.py``.
The benchmark criteria share cached batches, so criterion 4 reuses the
K = 45 runs of criterion 5.
"""

import functools
import sys
import time
from math import comb

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from geobern.bench import canned_scenario, run_trial_set, trial_pair, warmstart_experiment
from geobern.bernstein import SegmentGrid, ThetaVector, basis_eval, evaluate_level, theta_expand
from geobern.problems import OCPSpec, build_nlp, decode_solution, initial_guess
from geobern.solver import FunctionNLP, SolverOptions, Status, check_gradients, solve
from geobern.surface import (
    GaussianField,
    Obstacle,
    clearance_threshold,
    field_gradient,
    field_hessian,
    field_value,
    gauss_kronecker_3d,
    gaussian_curvature_2d,
    sigma_from_radius,
)

TRIALS = 25
OPTIMAL = Status.OPTIMAL.value


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}"
    print(line, flush=True)
    return ok


# -- shared batches -------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def geodesic_like_2d(K, objective="knots"):
    t0 = time.perf_counter()
    rows = run_trial_set(canned_scenario(2, trials=TRIALS, K_list=(K,), objective=objective))
    return rows, time.perf_counter() - t0


@functools.lru_cache(maxsize=None)
def geodesic_3d(K):
    return run_trial_set(canned_scenario(3, trials=TRIALS, K_list=(K,), variants=("geodesic",)))


@functools.lru_cache(maxsize=None)
def warmstart_2d(K, objective="knots"):
    sc = canned_scenario(2, trials=TRIALS, K_list=(K,), objective=objective)
    return warmstart_experiment(sc, initializers=("geodesic-like", "straight-line"))


def statuses(rows):
    out = {}
    for r in rows:
        out[r.status] = out.get(r.status, 0) + 1
    return out


# -- 1: Bernstein suite ------------------------------------------------------------


def _direct(cps, grid, t):
    kt = grid.knot_times
    K = grid.K
    N = len(cps) // K - 1
    k = min(max(np.searchsorted(kt, t, side="left") - 1, 0), K - 1)
    a, b = kt[k], kt[k + 1]
    seg = cps[k * (N + 1):(k + 1) * (N + 1)]
    return sum(seg[j] * comb(N, j) * (t - a) ** j * (b - t) ** (N - j) / (b - a) ** N for j in range(N + 1))


def bernstein_case(rng):
    K, M = int(rng.integers(1, 7)), int(rng.integers(1, 5))
    grid = SegmentGrid(np.concatenate([[rng.uniform(-1, 1)], rng.uniform(0.2, 1.5, K)]).cumsum())
    th = ThetaVector(rng.normal(size=(K, 1)), rng.normal(size=(M, 1)), grid)
    stack = theta_expand(th)
    kt = grid.knot_times
    worst = {}

    # partition of unity on a random segment
    N = int(rng.integers(0, 10))
    a, b = kt[0], kt[1]
    t = rng.uniform(a, b)
    worst["partition"] = abs(sum(basis_eval(j, N, t, (a, b)) for j in range(N + 1)) - 1.0)
    # endpoint interpolation: the curve passes through first and last control points
    seg0 = stack.segments(0)
    worst["endpoint"] = max(
        abs(evaluate_level(stack, 0, [kt[0]])[0, 0] - seg0[0, 0, 0]),
        abs(evaluate_level(stack, 0, [kt[-1]])[0, 0] - seg0[-1, -1, 0]),
    )
    # each level integrates the one above it
    lvl = [stack.levels[m][:, 0] for m in range(M + 1)]
    err = 0.0
    for m in range(M):
        for t in rng.uniform(kt[0], kt[-1], 3):
            pts = [p for p in kt if p < t] + [t]
            integral = sum(
                quad(lambda s: _direct(lvl[m + 1], grid, s), p, q, epsabs=1e-13, epsrel=1e-13)[0]
                for p, q in zip(pts[:-1], pts[1:])
            )
            err = max(err, abs(_direct(lvl[m], grid, t) - (lvl[m][0] + integral)))
    worst["quadrature"] = err
    # continuity at interior knots of every integrated level
    worst["continuity"] = max(
        (float(np.abs(stack.segments(m)[:-1, -1] - stack.segments(m)[1:, 0]).max()) if K > 1 else 0.0)
        for m in range(M)
    )
    # derivative against central differences away from knots
    h = 1e-4 * (kt[-1] - kt[0])
    mids = 0.5 * (kt[:-1] + kt[1:])
    worst["derivative"] = max(
        float(np.abs((evaluate_level(stack, m - 1, mids + h) - evaluate_level(stack, m - 1, mids - h)) / (2 * h)
                     - evaluate_level(stack, m, mids)).max())
        for m in range(1, M + 1)
    )
    return worst


def criterion_1():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    tol = {"partition": 1e-12, "endpoint": 0.0, "quadrature": 1e-9, "continuity": 0.0, "derivative": 1e-6}
    worst = dict.fromkeys(tol, 0.0)
    for _ in range(100):
        for k, v in bernstein_case(rng).items():
            worst[k] = max(worst[k], v)
    elapsed = time.perf_counter() - t0
    ok = all(worst[k] <= tol[k] for k in tol) and elapsed < 10.0
    detail = ", ".join(f"{k} {worst[k]:.1e}" for k in tol) + f"; 100 cases in {elapsed:.1f} s"
    return report(1, ok, detail)


# -- 2: surface suite ----------------------------------------------------------------


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-6))


def _central(fun, p, h):
    cols = []
    for i in range(p.size):
        e = np.zeros_like(p)
        e[i] = h
        cols.append((np.asarray(fun(p + e)) - np.asarray(fun(p - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def criterion_2():
    rng = np.random.default_rng(2)
    deriv = 0.0
    for dim in (2, 3):
        f = GaussianField.from_arrays(rng.uniform(-3, 3, (5, dim)), rng.uniform(0.5, 1.5, 5))
        h = 1e-5 * f.radii.min()
        for p in rng.uniform(-4, 4, (100, dim)):
            deriv = max(deriv, _rel(field_gradient(f, p), _central(lambda q: field_value(f, q), p, h)))
            deriv = max(deriv, _rel(field_hessian(f, p), _central(lambda q: field_gradient(f, q), p, h)))
    root_err = 0.0
    for A, kappa, r in [(1000.0, 10.0, 1.0), (1.0, 2.0, 0.5), (50.0, 10.0, 1.4)]:
        expected = np.sqrt(sigma_from_radius(r, kappa) / (2 * kappa))
        f2 = GaussianField([Obstacle((0.3, -0.2), r)], A, kappa)
        f3 = GaussianField([Obstacle((0.3, -0.2, 0.5), r)], A, kappa, dim=3)
        u2, u3 = np.array([0.6, 0.8]), np.array([2.0, -1.0, 2.0]) / 3.0
        c2, c3 = np.array(f2.obstacles[0].center), np.array(f3.obstacles[0].center)
        g2 = lambda s: gaussian_curvature_2d(f2, c2 + s * u2)
        g3 = lambda s: gauss_kronecker_3d(f3, c3 + s * u3)
        for g in (g2, g3):
            lo, hi = 0.5 * expected, 1.5 * expected
            assert np.sign(g(lo)) != np.sign(g(hi))
            root = brentq(g, lo, hi, xtol=1e-14, rtol=1e-15)
            root_err = max(root_err, abs(root - expected))
    rho_err = 0.0
    for A, kappa, r in [(1000.0, 10.0, 1.0), (3.0, 4.0, 0.7)]:
        f = GaussianField([Obstacle((1.0, 2.0), r)], A, kappa)
        rho = A * np.exp(-kappa / 2)
        assert clearance_threshold(f) == pytest.approx(rho, rel=1e-15)
        for ang in np.linspace(0, 2 * np.pi, 8, endpoint=False):
            p = np.array([1.0, 2.0]) + r * np.array([np.cos(ang), np.sin(ang)])
            rho_err = max(rho_err, abs(field_value(f, p) - rho) / rho)
    ok = deriv <= 1e-6 and root_err <= 1e-9 and rho_err <= 1e-12
    return report(2, ok, f"derivative rel err {deriv:.1e}, curvature root err {root_err:.1e}, "
                         f"f(r) vs rho rel err {rho_err:.1e}")


# -- 3: flat-field geodesic -------------------------------------------------------------


def _flat_solve(K, delta):
    flat = GaussianField((), amplitude=0.0, dim=2)
    p0, pf = np.array([0.0, 0.0]), np.array([4.0, 3.0])
    nlp = build_nlp(OCPSpec(p0, pf, K, "geodesic", geodesic_delta=delta), flat)
    rep = solve(nlp, initial_guess(nlp))
    traj = decode_solution(nlp, rep.x_opt)
    d = (pf - p0) / np.linalg.norm(pf - p0)
    rel = traj.positions - p0
    collinear = float(np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0]).max())
    bnd = float(max(np.abs(traj.positions[0] - p0).max(), np.abs(traj.positions[-1] - pf).max()))
    return rep, collinear, bnd


def criterion_3():
    ok = True
    parts = []
    for K in (9, 45):
        # exact-equality mode: with A = 0 the geodesic equations say a = 0
        rep, col, bnd = _flat_solve(K, 0.0)
        good = rep.ok and col <= 1e-6 and bnd <= 1e-6 and rep.wall_time < 5.0
        ok &= good
        parts.append(f"K={K} {rep.status.value} collinearity {col:.1e} boundary {bnd:.1e} {rep.wall_time:.2f} s")
    _, col_default, _ = _flat_solve(45, None)
    parts.append(f"(default relaxation band, K=45: collinearity {col_default:.1e}, informational)")
    return report(3, ok, "; ".join(parts))


# -- 4: clearance -------------------------------------------------------------------------


def _clearance(rows):
    sc = canned_scenario(2)
    n_opt, worst_f, worst_d, ratio = 0, -np.inf, np.inf, []
    for r in rows:
        if r.status != OPTIMAL:
            continue
        n_opt += 1
        # both checks are recomputed from x_opt by the bench, not taken from the solver
        worst_f = max(worst_f, r.knot_excess)
        worst_d = min(worst_d, r.min_clearance)
        p0, pf = trial_pair(sc, r.seed_index)
        # straight-line energy at unit nominal speed is the chord length
        ratio.append(r.objective / np.linalg.norm(pf - p0))
    return n_opt, worst_f, worst_d, float(np.median(ratio)) if ratio else np.nan


def criterion_4():
    rows, _ = geodesic_like_2d(45)
    n_opt, worst_f, worst_d, ratio = _clearance(rows)
    ok = n_opt > 0 and worst_f <= 1e-6 and worst_d >= -1e-6
    return report(4, ok, f"{n_opt}/{len(rows)} Optimal at K=45; max f - rho {worst_f:.2e}; "
                         f"min knot distance - r {worst_d:.3e}; median objective / straight-line energy {ratio:.1e}")


def criterion_4_integral():
    rows, _ = geodesic_like_2d(45, "integral")
    n_opt, worst_f, worst_d, ratio = _clearance(rows)
    print(f"criterion 4 (informational, objective=integral): {n_opt}/{len(rows)} Optimal; max f - rho {worst_f:.2e}; "
          f"min knot distance - r {worst_d:.3e}; median objective / straight-line energy {ratio:.2f}", flush=True)


# -- 5: geodesic-like sweep ---------------------------------------------------------------


def criterion_5():
    parts, total, ok = [], 0.0, True
    for K in (9, 21, 45):
        rows, elapsed = geodesic_like_2d(K)
        total += elapsed
        st = statuses(rows)
        not_opt = len(rows) - st.get(OPTIMAL, 0)
        ok &= not_opt == 0
        parts.append(f"K={K}: infeasible {st.get('Infeasible', 0)}, iteration limit {st.get('IterationLimit', 0)}, "
                     f"errors {st.get('Error', 0)} of {len(rows)}")
    ok &= total < 600.0
    return report(5, ok, "; ".join(parts) + f"; {total:.0f} s total")


def criterion_5_integral():
    parts, total = [], 0.0
    for K in (9, 21, 45):
        rows, elapsed = geodesic_like_2d(K, "integral")
        total += elapsed
        st = statuses(rows)
        parts.append(f"K={K}: {st.get(OPTIMAL, 0)}/{len(rows)} Optimal")
    print(f"criterion 5 (informational, objective=integral): {'; '.join(parts)}; {total:.0f} s total", flush=True)


# -- 6: 3-D geodesic trend -------------------------------------------------------------------


def criterion_6():
    frac = {}
    parts = []
    for K in (9, 39):
        rows = geodesic_3d(K)
        st = statuses(rows)
        frac[K] = (len(rows) - st.get(OPTIMAL, 0)) / len(rows)
        parts.append(f"K={K}: infeasible {st.get('Infeasible', 0)}, iteration limit {st.get('IterationLimit', 0)}, "
                     f"not optimal {frac[K]:.2f}")
    ok = frac[39] < frac[9]
    return report(6, ok, "; ".join(parts))


# -- 7: warmstart ordering -------------------------------------------------------------------


def _warm_means(objective):
    mean = {}
    for K in (9, 45):
        rows = warmstart_2d(K, objective)
        for name in ("geodesic-like", "straight-line"):
            mean[K, name] = float(np.mean([r.total_time_s for r in rows if r.variant == name]))
    return mean


def _warm_detail(mean):
    return (f"K=45 geodesic-like {mean[45, 'geodesic-like']:.3f} s vs straight-line {mean[45, 'straight-line']:.3f} s; "
            f"K=9 straight-line {mean[9, 'straight-line']:.3f} s vs geodesic-like {mean[9, 'geodesic-like']:.3f} s")


def criterion_7():
    mean = _warm_means("knots")
    ok = mean[45, "geodesic-like"] < mean[45, "straight-line"] and mean[9, "straight-line"] < mean[9, "geodesic-like"]
    return report(7, ok, _warm_detail(mean))


def criterion_7_integral():
    print(f"criterion 7 (informational, objective=integral): {_warm_detail(_warm_means('integral'))}", flush=True)


# -- 8: solver certification ------------------------------------------------------------------


def _independent_kkt(nlp, rep):
    ev = nlp.evaluate(rep.x_opt)
    grad = ev.gradient + ev.eq_jac.T @ rep.multipliers_eq + ev.ineq_jac.T @ rep.multipliers_ineq
    return float(np.abs(grad).max() / max(1.0, np.abs(ev.gradient).max()))


def criterion_8():
    opts = SolverOptions()
    n_opt, kkt_ok, worst_kkt, worst_grad = 0, True, 0.0, 0.0
    for dim in (2, 3):
        sc = canned_scenario(dim, trials=2)
        for variant in ("geodesic", "geodesic-like", "hard"):
            for K in (9, 21):
                for i in range(sc.trials):
                    p0, pf = trial_pair(sc, i)
                    nlp = build_nlp(OCPSpec(p0, pf, K, variant), sc.field)
                    x = initial_guess(nlp)
                    if i == 0:
                        pert = x + 0.1 * np.random.default_rng(K).normal(size=x.size)
                        worst_grad = max(worst_grad, check_gradients(nlp, pert))
                    rep = solve(nlp, x, opts)
                    if not rep.ok:
                        continue
                    n_opt += 1
                    eq_v, in_v = nlp.violations(rep.x_opt)
                    indep = _independent_kkt(nlp, rep)
                    worst_kkt = max(worst_kkt, indep)
                    kkt_ok &= (
                        rep.stationarity <= opts.tol_opt
                        and max(eq_v, in_v) <= opts.tol_feas
                        and rep.complementarity <= 10 * opts.tol_feas
                        and bool(np.all(rep.multipliers_ineq >= 0.0))
                        and indep <= 1e-4
                    )
    fixture = FunctionNLP(2, lambda x: x @ x, lambda x: 2 * x,
                          eq=lambda x: [x[0], x[0] - 1.0], eq_jac=lambda x: [[1.0, 0.0], [1.0, 0.0]])
    inconsistent = solve(fixture, np.zeros(2)).status
    ok = kkt_ok and inconsistent is Status.INFEASIBLE and worst_grad <= 1e-5
    return report(8, ok, f"{n_opt} Optimal reports certified (independent KKT residual max {worst_kkt:.1e}); "
                         f"inconsistent fixture {inconsistent.value}; check-gradients max {worst_grad:.1e}")


# -- pytest entry points ------------------------------------------------------------------------


def test_criterion_1_bernstein(capsys):
    # criterion lines go straight to the terminal
    with capsys.disabled():
        print()
        assert criterion_1()


def test_criterion_2_surface(capsys):
    with capsys.disabled():
        print()
        assert criterion_2()


def test_criterion_3_flat_field(capsys):
    with capsys.disabled():
        print()
        assert criterion_3()


def test_criterion_4_clearance(capsys):
    with capsys.disabled():
        print()
        criterion_4_integral()
        assert criterion_4()


def test_criterion_5_geodesic_like_sweep(capsys):
    with capsys.disabled():
        print()
        criterion_5_integral()
        assert criterion_5()


def test_criterion_6_geodesic_3d_trend(capsys):
    with capsys.disabled():
        print()
        assert criterion_6()


def test_criterion_7_warmstart_ordering(capsys):
    with capsys.disabled():
        print()
        criterion_7_integral()
        assert criterion_7()


def test_criterion_8_solver_certification(capsys):
    with capsys.disabled():
        print()
        assert criterion_8()


if __name__ == "__main__":
    results = [criterion_1(), criterion_2(), criterion_3(), criterion_4()]
    criterion_4_integral()
    results.append(criterion_5())
    criterion_5_integral()
    results += [criterion_6(), criterion_7()]
    criterion_7_integral()
    results.append(criterion_8())
    sys.exit(0 if all(results) else 1)
