"""Augmented-Lagrangian solver for the smooth problems built in :mod:`problems`.

Every constraint is treated as a range ``l_i <= c_i(x) <= u_i``: equalities
with relaxation ``delta_i`` use ``[-delta_i, delta_i]`` and inequalities use
``(-inf, 0]``.  For a shifted value ``z = c + lambda / mu`` the augmented term
is ``mu/2 * dist(z, [l, u])^2 - lambda^2 / (2 mu)``, which reduces to the
classic equality form when ``l = u = 0``.

Each subproblem is minimized by default with a structured quasi-Newton
method: a damped-BFGS model of the Lagrangian Hessian plus the exact
Gauss-Newton part of the penalty, with Armijo backtracking.  When the
problem supplies ``lagrangian_hessian`` (and ``hessian="auto"``) the BFGS
model is replaced by that exact curvature, which matters on objectives with
long flat valleys where the quasi-Newton model lags behind.  Plain L-BFGS
with a weak-Wolfe line search is available as ``inner="lbfgs"``; it copes
poorly once the penalty is large and the active constraints are stiff.

Problem functions are rescaled internally (objective and each constraint by
``min(1, 100 / |grad|_inf)`` at the starting point); reported violations and
multipliers are always in the original units.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ITERATION_LIMIT = "IterationLimit"


@dataclass(frozen=True)
class SolverOptions:
    tol_feas: float = 1e-6
    tol_opt: float = 1e-6
    max_outer: int = 50
    max_inner: int = 500
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e10
    derivative_mode: str = "analytic"
    inner: str = "structured"
    inner_tol_init: float = 1e-4
    hessian: str = "auto"
    memory: int = 20
    scale_max_gradient: float = 100.0

    def __post_init__(self):
        for name in ("tol_feas", "tol_opt", "penalty_init", "penalty_max"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if not self.penalty_growth > 1.0:
            raise ValueError("penalty_growth must exceed 1")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be positive")
        if self.derivative_mode not in ("analytic", "fd"):
            raise ValueError(f"unknown derivative mode {self.derivative_mode!r}")
        if self.inner not in ("structured", "lbfgs"):
            raise ValueError(f"unknown inner minimizer {self.inner!r}")
        if self.hessian not in ("auto", "bfgs"):
            raise ValueError(f"unknown hessian option {self.hessian!r}")


@dataclass
class SolveReport:
    status: Status
    x_opt: np.ndarray
    objective: float
    max_eq_violation: float
    max_ineq_violation: float
    outer_iters: int
    inner_iters: int
    wall_time: float
    stationarity: float = np.inf
    complementarity: float = np.inf
    multipliers_eq: np.ndarray = field(default=None, repr=False)
    multipliers_ineq: np.ndarray = field(default=None, repr=False)
    history: list = field(default_factory=list, repr=False)
    message: str = ""

    @property
    def max_violation(self) -> float:
        return max(self.max_eq_violation, self.max_ineq_violation)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


class SolverInputError(ValueError):
    """Problem functions are not finite at the starting point."""


def gradient(nlp, x, mode: str = "analytic"):
    """Objective gradient and constraint Jacobians ``(grad, J_eq, J_ineq)``."""
    ev = nlp.evaluate(np.asarray(x, dtype=float), jacobians=True, mode=mode)
    return ev.gradient, ev.eq_jac, ev.ineq_jac


def _fd_derivatives(nlp, x, h):
    n = x.size
    ev0 = nlp.evaluate(x, jacobians=False)
    g = np.empty(n)
    Je = np.empty((ev0.eq.size, n))
    Ji = np.empty((ev0.ineq.size, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        p = nlp.evaluate(x + e, jacobians=False)
        m = nlp.evaluate(x - e, jacobians=False)
        g[j] = (p.objective - m.objective) / (2 * h)
        Je[:, j] = (p.eq - m.eq) / (2 * h)
        Ji[:, j] = (p.ineq - m.ineq) / (2 * h)
    return g, Je, Ji


def _row_errors(A, B):
    if A.size == 0:
        return np.zeros(0)
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    scale = np.maximum(1.0, np.maximum(np.abs(A).max(axis=1), np.abs(B).max(axis=1)))
    return np.abs(A - B).max(axis=1) / scale


def gradient_errors(nlp, x, h: float | None = None, mode: str = "analytic", derivatives=None):
    """Row-wise relative discrepancies between analytic and central-difference derivatives.

    Returns ``(objective, eq_rows, ineq_rows)``; each row error is the max
    absolute difference normalized by ``max(1, |row|_inf)``.  ``derivatives``
    substitutes an alternative ``(grad, J_eq, J_ineq)`` triple, which is how
    a corrupted gradient is injected in tests.
    """
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-6 * (1.0 + np.linalg.norm(x))
    if not h > 0.0:
        raise ValueError("step must be positive")
    g, Je, Ji = derivatives if derivatives is not None else gradient(nlp, x, mode)
    fg, fJe, fJi = _fd_derivatives(nlp, x, h)
    return float(_row_errors(g, fg)[0]), _row_errors(Je, fJe), _row_errors(Ji, fJi)


def check_gradients(nlp, x, h: float | None = None, mode: str = "analytic", derivatives=None) -> float:
    """Largest relative discrepancy over all rows; see :func:`gradient_errors`."""
    obj, eq, ineq = gradient_errors(nlp, x, h, mode, derivatives)
    return float(max(obj, eq.max(initial=0.0), ineq.max(initial=0.0)))


class _Scaled:
    """Problem view with scaled objective/constraints and range bounds."""

    def __init__(self, nlp, x0, opts: SolverOptions):
        self.nlp = nlp
        self.mode = opts.derivative_mode
        ev = nlp.evaluate(x0, jacobians=True, mode=self.mode)
        vals = [ev.objective, ev.gradient, ev.eq, ev.eq_jac, ev.ineq, ev.ineq_jac]
        if not all(np.all(np.isfinite(v)) for v in vals):
            raise SolverInputError("objective or constraints are not finite at the starting point")
        cap = opts.scale_max_gradient
        gmax = np.abs(ev.gradient).max(initial=0.0)
        self.sf = min(1.0, cap / gmax) if gmax > 0 else 1.0
        J = np.vstack([ev.eq_jac, ev.ineq_jac])
        rmax = np.abs(J).max(axis=1, initial=0.0) if J.size else np.zeros(0)
        self.sc = np.where(rmax > cap, cap / np.where(rmax > 0, rmax, 1.0), 1.0)
        self.n_eq = ev.eq.size
        delta = np.asarray(getattr(nlp, "eq_delta", np.zeros(self.n_eq)), dtype=float)
        self.lo = np.concatenate([-delta, np.full(ev.ineq.size, -np.inf)]) * self.sc
        self.hi = np.concatenate([delta, np.zeros(ev.ineq.size)]) * self.sc
        self.n_evals = 0

    def __call__(self, x, jac=True):
        self.n_evals += 1
        ev = self.nlp.evaluate(x, jacobians=jac, mode=self.mode)
        c = np.concatenate([ev.eq, ev.ineq]) * self.sc
        if not jac:
            return self.sf * ev.objective, None, c, None
        J = np.vstack([ev.eq_jac, ev.ineq_jac]) * self.sc[:, None]
        return self.sf * ev.objective, self.sf * ev.gradient, c, J

    def violation(self, c):
        """Largest bound violation in original units."""
        v = np.maximum(c - self.hi, self.lo - c)
        v = np.maximum(v, 0.0) / self.sc
        return float(v[: self.n_eq].max(initial=0.0)), float(v[self.n_eq:].max(initial=0.0))


def _aug_value(f, g, c, J, lam, mu, lo, hi):
    """Augmented Lagrangian without its constant ``-lambda^2 / (2 mu)`` term."""
    z = c + lam / mu
    r = z - np.clip(z, lo, hi)
    val = f + 0.5 * mu * r @ r
    grad = g + J.T @ (mu * r) if J is not None else None
    return val, grad, r


def _lbfgs(fun, x, max_iter, gtol, memory):
    """Minimize ``fun(x) -> (value, grad)``; returns ``(x, value, grad, iters)``."""
    fx, gx = fun(x)
    S, Y = deque(maxlen=memory), deque(maxlen=memory)
    it = 0
    while it < max_iter and np.abs(gx).max() > gtol:
        it += 1
        # two-loop recursion
        q = -gx.copy()
        alphas = []
        for s, y in zip(reversed(S), reversed(Y)):
            a = (s @ q) / (y @ s)
            alphas.append(a)
            q -= a * y
        if S:
            q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
        for (s, y), a in zip(zip(S, Y), reversed(alphas)):
            b = (y @ q) / (y @ s)
            q += (a - b) * s
        p = q
        slope = gx @ p
        if slope >= 0.0:
            S.clear()
            Y.clear()
            p = -gx
            slope = -(gx @ gx)
        step = 1.0 if S else min(1.0, 1.0 / max(np.abs(gx).max(), 1e-12))
        ok, step, fn, gn = _wolfe(fun, x, fx, slope, p, step)
        if not ok:
            if S:
                # retry once from steepest descent with fresh memory
                S.clear()
                Y.clear()
                continue
            break
        s = step * p
        y = gn - gx
        if s @ y > 1e-12 * np.sqrt((s @ s) * (y @ y)):
            S.append(s)
            Y.append(y)
        x, fx, gx = x + s, fn, gn
    return x, fx, gx, it


def _structured(prob, x, lam, mu, max_iter, gtol, B, stall_window=10, exact=None):
    """Quasi-Newton descent on the augmented Lagrangian.

    The model Hessian is ``B + mu * J_a^T J_a``: ``B`` is a damped-BFGS
    estimate of the Lagrangian Hessian (updated in place and carried across
    outer iterations) and the second term is the exact Gauss-Newton part of
    the penalty over the currently active constraints ``J_a``.  ``exact``,
    when given, maps ``(x, multipliers)`` to the scaled Lagrangian Hessian
    and takes the place of ``B``.
    """
    lo, hi = prob.lo, prob.hi
    f, g, c, J = prob(x)
    val, grad, r = _aug_value(f, g, c, J, lam, mu, lo, hi)
    recent = deque([val], maxlen=stall_window + 1)
    it = 0
    while it < max_iter and np.abs(grad).max() > gtol:
        it += 1
        active = r != 0.0
        Ja = J[active]
        H = (B if exact is None else exact(x, mu * r)) + mu * (Ja.T @ Ja)
        p = _spd_solve(H, -grad)
        slope = grad @ p
        if not slope < 0.0:
            p, slope = -grad, -(grad @ grad)
        step = 1.0
        while True:
            xn = x + step * p
            fn, gn, cn, Jn = prob(xn)
            vn, gradn, rn = _aug_value(fn, gn, cn, Jn, lam, mu, lo, hi)
            if np.isfinite(vn) and vn <= val + 1e-4 * step * slope:
                break
            # near the solution the decrease drops below round-off in the
            # merit value; then a smaller gradient is the only usable signal
            if (np.isfinite(vn) and vn <= val + 1e2 * _EPS * abs(val)
                    and np.abs(gradn).max() < np.abs(grad).max()):
                break
            step *= 0.5
            if step < 1e-12:
                return x, it, False
        s = xn - x
        if exact is None:
            lt = mu * rn
            y = (gn + Jn.T @ lt) - (g + J.T @ lt)
            _damped_bfgs(B, s, y)
        x, f, g, c, J, val, grad, r = xn, fn, gn, cn, Jn, vn, gradn, rn
        recent.append(val)
        # no measurable progress: the subproblem is as solved as it will get
        if np.abs(s).max() <= 1e-15 * (1.0 + np.abs(x).max()):
            break
        if len(recent) > stall_window and recent[0] - val <= 1e-10 * abs(val):
            break
    return x, it, bool(np.abs(grad).max() <= gtol)


def _spd_solve(H, b):
    H = 0.5 * (H + H.T)
    shift = 0.0
    scale = max(np.abs(np.diag(H)).max(initial=0.0), 1e-12)
    for _ in range(12):
        try:
            L = np.linalg.cholesky(H + shift * np.eye(H.shape[0]))
            return np.linalg.solve(L.T, np.linalg.solve(L, b))
        except np.linalg.LinAlgError:
            shift = max(10.0 * shift, 1e-10 * scale)
    return b / scale


def _damped_bfgs(B, s, y):
    """Powell-damped BFGS update of ``B`` in place."""
    Bs = B @ s
    sBs = s @ Bs
    if not sBs > 0.0:
        return
    sy = s @ y
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        y = theta * y + (1.0 - theta) * Bs
        sy = s @ y
    B -= np.outer(Bs, Bs) / sBs
    B += np.outer(y, y) / sy


def _wolfe(fun, x, fx, slope, p, step, c1=1e-4, c2=0.9, max_trials=40):
    lo, hi = 0.0, np.inf
    for _ in range(max_trials):
        fn, gn = fun(x + step * p)
        if not np.isfinite(fn) or fn > fx + c1 * step * slope:
            hi = step
        elif gn @ p < c2 * slope:
            lo = step
        else:
            return True, step, fn, gn
        step = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * lo
        if hi - lo < 1e-16 * max(1.0, lo):
            break
    if lo > 0.0:
        fn, gn = fun(x + lo * p)
        if fn < fx:
            return True, lo, fn, gn
    return False, 0.0, fx, None


def _kkt(f, g, c, J, lam, prob: _Scaled):
    """Scaled stationarity and complementarity at ``x`` with multipliers ``lam``."""
    grad_l = g + J.T @ lam
    s_d = max(100.0, np.abs(lam).sum() / max(lam.size, 1)) / 100.0
    stat = float(np.abs(grad_l).max(initial=0.0) / s_d)
    # a positive multiplier must sit on the upper bound, a negative one on the lower
    gap_hi = np.where(lam > 0, np.abs(c - prob.hi), 0.0)
    gap_lo = np.where(lam < 0, np.abs(c - np.where(np.isfinite(prob.lo), prob.lo, c)), 0.0)
    wrong = np.where(lam < 0, np.isinf(prob.lo), False)
    comp = np.abs(lam) * np.maximum(gap_hi, gap_lo)
    comp = float(max(comp.max(initial=0.0), np.abs(lam[wrong]).max(initial=0.0)))
    return stat, comp


def _initial_multipliers(g, c, J, prob: _Scaled, cap=1e3) -> np.ndarray:
    """Least-squares multipliers over the constraints sitting on a bound at the start.

    Violated constraints get no estimate.  The result is discarded (zero) when
    implausibly large, as it then carries no information about the solution.
    """
    tol = 1e-8 * np.maximum(1.0, np.abs(c))
    upper = np.abs(c - prob.hi) <= tol
    lower = np.abs(c - prob.lo) <= tol
    active = upper | lower
    lam = np.zeros(c.size)
    if not active.any():
        return lam
    sol = np.linalg.lstsq(J[active].T, -g, rcond=None)[0]
    lam[active] = sol
    lam = np.where(upper & ~lower, np.maximum(lam, 0.0), lam)
    lam = np.where(lower & ~upper, np.minimum(lam, 0.0), lam)
    if not np.all(np.isfinite(lam)) or np.abs(lam).max() > cap:
        return np.zeros(c.size)
    return lam


def _initial_hessian(nlp, prob: _Scaled) -> np.ndarray:
    """Seed for the Lagrangian Hessian model: the objective Hessian when known."""
    n = nlp.n_vars
    H = getattr(nlp, "objective_hessian", None)
    B = prob.sf * np.asarray(H(), dtype=float) if callable(H) else np.zeros((n, n))
    ridge = 1e-6 * max(np.abs(np.diag(B)).max(initial=0.0), 1.0)
    return B + ridge * np.eye(n)


def _exact_hessian(nlp, prob: _Scaled, x0):
    """Scaled Lagrangian Hessian callback, or ``None`` when unavailable."""
    fn = getattr(nlp, "lagrangian_hessian", None)
    if not callable(fn) or fn(x0, 0.0, np.zeros(prob.n_eq), np.zeros(prob.lo.size - prob.n_eq)) is None:
        return None
    n_eq = prob.n_eq

    def hess(x, w):
        w = w * prob.sc
        return fn(x, prob.sf, w[:n_eq], w[n_eq:])

    return hess


def solve(nlp, x0, opts: SolverOptions | None = None) -> SolveReport:
    """Minimize ``nlp`` from ``x0``.

    Returns the last outer iterate.  ``status`` is ``Optimal`` only when the
    constraint violation is within ``tol_feas`` and the scaled KKT
    stationarity within ``tol_opt``; ``Infeasible`` once the penalty has hit
    its cap while the violation stagnates.
    """
    opts = opts or SolverOptions()
    t_start = time.perf_counter()
    x = np.array(x0, dtype=float)
    if x.shape != (nlp.n_vars,):
        raise ValueError(f"starting point has shape {x.shape}, expected ({nlp.n_vars},)")
    prob = _Scaled(nlp, x, opts)
    m = prob.lo.size
    lam = np.zeros(m)
    mu = opts.penalty_init
    lo, hi = prob.lo, prob.hi

    f, g, c, J = prob(x)
    lam = _initial_multipliers(g, c, J, prob)
    viol_hist = [max(prob.violation(c))]
    history = []
    inner_total = 0
    status = Status.ITERATION_LIMIT
    message = ""
    omega = opts.inner_tol_init
    stat = comp = np.inf
    outer = 0
    B = _initial_hessian(nlp, prob)
    exact = _exact_hessian(nlp, prob, x) if opts.hessian == "auto" else None
    ls_failures = 0

    for outer in range(1, opts.max_outer + 1):
        lam_k, mu_k = lam, mu

        def merit(z):
            fz, gz, cz, Jz = prob(z)
            val, grad, _ = _aug_value(fz, gz, cz, Jz, lam_k, mu_k, lo, hi)
            return val, grad

        gtol = max(omega, 0.1 * opts.tol_opt)
        if opts.inner == "lbfgs":
            x, _, gx, its = _lbfgs(merit, x, opts.max_inner, gtol, opts.memory)
            inner_ok = gx is not None and np.abs(gx).max() <= gtol
        else:
            x, its, inner_ok = _structured(prob, x, lam, mu, opts.max_inner, gtol, B, exact=exact)
        ls_failures += not inner_ok
        inner_total += its
        f, g, c, J = prob(x)
        _, _, r = _aug_value(f, g, c, J, lam, mu, lo, hi)
        lam = mu * r
        eq_v, in_v = prob.violation(c)
        viol = max(eq_v, in_v)
        stat, comp = _kkt(f, g, c, J, lam, prob)
        history.append(
            {"outer": outer, "inner": its, "inner_converged": bool(inner_ok), "penalty": mu,
             "violation": viol, "stationarity": stat}
        )
        log.debug("outer %d: inner=%d mu=%.1e viol=%.3e stat=%.3e", outer, its, mu, viol, stat)

        if viol <= opts.tol_feas and stat <= opts.tol_opt and comp <= 10 * opts.tol_feas:
            status = Status.OPTIMAL
            break
        if mu >= opts.penalty_max and viol > opts.tol_feas and len(viol_hist) >= 5:
            old = viol_hist[-5]
            if old - viol < 0.01 * old:
                status = Status.INFEASIBLE
                message = "constraint violation stagnated at the penalty cap"
                viol_hist.append(viol)
                break
        if viol > 0.25 * viol_hist[-1] and viol > opts.tol_feas:
            mu = min(mu * opts.penalty_growth, opts.penalty_max)
        omega = max(0.1 * omega, 0.1 * opts.tol_opt)
        viol_hist.append(viol)
    else:
        message = "outer iteration limit reached"
        if ls_failures:
            message += f"; {ls_failures} subproblem(s) ended without reaching the inner tolerance"

    eq_v, in_v = prob.violation(c)
    lam_orig = lam * prob.sc / prob.sf
    return SolveReport(
        status=status,
        x_opt=x,
        objective=float(f / prob.sf),
        max_eq_violation=eq_v,
        max_ineq_violation=in_v,
        outer_iters=outer,
        inner_iters=inner_total,
        wall_time=time.perf_counter() - t_start,
        stationarity=stat,
        complementarity=comp,
        multipliers_eq=lam_orig[: prob.n_eq],
        multipliers_ineq=lam_orig[prob.n_eq:],
        history=history,
        message=message,
    )


class FunctionNLP:
    """Adapter exposing plain callables through the ``evaluate`` protocol.

    ``eq`` and ``ineq`` return constraint vectors (``ineq <= 0``); their
    Jacobians are required whenever the constraints are given.
    """

    def __init__(self, n_vars, objective, gradient, eq=None, eq_jac=None, ineq=None,
                 ineq_jac=None, eq_delta=None):
        from .problems import Evaluation

        self._Evaluation = Evaluation
        self.n_vars = int(n_vars)
        self._f, self._g = objective, gradient
        self._eq, self._eq_jac = eq, eq_jac
        self._ineq, self._ineq_jac = ineq, ineq_jac
        n_eq = 0 if eq is None else np.asarray(eq(np.zeros(self.n_vars))).size
        self.eq_delta = np.zeros(n_eq) if eq_delta is None else np.asarray(eq_delta, dtype=float)

    def evaluate(self, x, jacobians=True, mode="analytic"):
        x = np.asarray(x, dtype=float)
        n = self.n_vars
        eq = np.asarray(self._eq(x), dtype=float).reshape(-1) if self._eq else np.zeros(0)
        ineq = np.asarray(self._ineq(x), dtype=float).reshape(-1) if self._ineq else np.zeros(0)
        if not jacobians:
            return self._Evaluation(float(self._f(x)), None, eq, None, ineq, None)
        Je = np.asarray(self._eq_jac(x), dtype=float).reshape(-1, n) if self._eq else np.zeros((0, n))
        Ji = np.asarray(self._ineq_jac(x), dtype=float).reshape(-1, n) if self._ineq else np.zeros((0, n))
        return self._Evaluation(float(self._f(x)), np.asarray(self._g(x), dtype=float), eq, Je, ineq, Ji)
