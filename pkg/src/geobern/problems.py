"""Discretized trajectory problems over a Gaussian cost surface.

Three problem variants share one layout.  The decision vector stacks one
theta vector per spatial dimension (``D * (K + M)`` entries), and every
constraint is collocated at the ``K + 1`` knots:

``geodesic``
    boundary equalities, geodesic residual equalities at every knot
    (optionally relaxed to ``|r| <= delta``), and ``f(X_k) - rho <= 0``.
``geodesic-like``
    boundary equalities and ``f(X_k) - rho <= 0`` only.
``hard``
    boundary equalities, ``r_sep - |X_k - c_i| <= 0`` for every obstacle and
    knot, and ``|V_k| - V_max <= 0``.

The objective defaults to the knot-sampled arc-length energy
``(t_K - t_0) / (K + 1) * sum_k |V_k|^2``; ``OCPSpec(objective="integral")``
switches to the exact integral of ``|v|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import NamedTuple

import numpy as np

from .bernstein import (
    SegmentGrid,
    ThetaVector,
    bernstein_gram,
    Trajectory,
    evaluate_level,
    knot_matrix,
    knots_of_derivative,
    level_matrix,
    sample_trajectory,
    theta_expand,
)
from .surface import GaussianField, clearance_threshold, field_derivatives


class ConfigurationError(ValueError):
    """Problem specification cannot be discretized as requested."""


class Variant(str, Enum):
    GEODESIC = "geodesic"
    GEODESIC_LIKE = "geodesic-like"
    HARD = "hard"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        aliases = {
            "geodesicconstrained": cls.GEODESIC,
            "geodesic-constrained": cls.GEODESIC,
            "geodesiclike": cls.GEODESIC_LIKE,
            "geodesic_like": cls.GEODESIC_LIKE,
            "hardobstacle": cls.HARD,
            "hard-obstacle": cls.HARD,
        }
        key = str(value).strip().lower()
        try:
            return aliases.get(key) or cls(key)
        except ValueError:
            raise ConfigurationError(f"unknown problem variant {value!r}") from None


@dataclass(frozen=True, eq=False)
class OCPSpec:
    """Boundary conditions and discretization of one planning problem.

    The horizon is ``[t0, tf]``; when ``tf`` is omitted it is chosen so the
    straight line between the boundary points is flown at ``v_nominal``.
    ``geodesic_delta=None`` selects the default relaxation
    ``1e-4 * v^2 / (tf - t0)``; ``0`` enforces the geodesic equations exactly.

    ``objective="knots"`` is the knot-sampled energy.  For odd ``K`` and
    ``M >= 3`` it has a zero-cost null space (velocity vanishing at every knot
    while the path oscillates between them), which the geodesic equations rule
    out but the other two variants do not.  ``objective="integral"`` uses the
    exact integral of ``|v|^2`` instead.
    """

    p0: np.ndarray
    pf: np.ndarray
    K: int
    variant: Variant = Variant.GEODESIC_LIKE
    M: int = 3
    t0: float = 0.0
    tf: float | None = None
    v_nominal: float = 1.0
    v_max: float | None = None
    r_sep: float | None = None
    geodesic_delta: float | None = None
    objective: str = "knots"

    def __post_init__(self):
        p0 = np.asarray(self.p0, dtype=float).reshape(-1)
        pf = np.asarray(self.pf, dtype=float).reshape(-1)
        if p0.shape != pf.shape or p0.size not in (2, 3):
            raise ConfigurationError("boundary points must share dimension 2 or 3")
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "pf", pf)
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if int(self.K) != self.K or self.K < 1:
            raise ConfigurationError(f"segment count must be a positive integer, got {self.K}")
        if int(self.M) != self.M or self.M < 1:
            raise ConfigurationError(f"antiderivative count must be a positive integer, got {self.M}")
        if self.variant is Variant.GEODESIC and self.M < 3:
            raise ConfigurationError("geodesic constraints need acceleration knots (M >= 3)")
        if self.M < 2:
            raise ConfigurationError("the arc-length objective needs velocity knots (M >= 2)")
        if self.tf is None:
            dist = float(np.linalg.norm(pf - p0))
            if not self.v_nominal > 0.0:
                raise ConfigurationError("nominal speed must be positive")
            if dist == 0.0:
                raise ConfigurationError("coincident boundary points need an explicit final time")
            object.__setattr__(self, "tf", self.t0 + dist / self.v_nominal)
        if not self.tf > self.t0:
            raise ConfigurationError("final time must exceed initial time")
        if self.objective not in ("knots", "integral"):
            raise ConfigurationError(f"unknown objective {self.objective!r}; use 'knots' or 'integral'")
        if self.geodesic_delta is not None and self.geodesic_delta < 0.0:
            raise ConfigurationError("relaxation bound must be non-negative")

    @property
    def D(self) -> int:
        return self.p0.size

    @property
    def grid(self) -> SegmentGrid:
        return SegmentGrid.uniform(self.t0, self.tf, int(self.K))

    @property
    def duration(self) -> float:
        return float(self.tf - self.t0)

    def with_variant(self, variant, **changes) -> "OCPSpec":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes, variant=Variant.parse(variant))
        return OCPSpec(**kw)


class Evaluation(NamedTuple):
    objective: float
    gradient: np.ndarray
    eq: np.ndarray
    eq_jac: np.ndarray
    ineq: np.ndarray
    ineq_jac: np.ndarray


def geodesic_residual(field: GaussianField, x, v, a) -> np.ndarray:
    """``a_k + Gamma^k_ij v_i v_j``; zero exactly when the geodesic equation holds.

    Accepts single states of shape ``(D,)`` or batches ``(P, D)``.
    """
    x, v, a = (np.asarray(z, dtype=float) for z in (x, v, a))
    if not x.shape == v.shape == a.shape or x.shape[-1] != field.dim:
        raise ValueError("position, velocity and acceleration must share the field dimension")
    single = x.ndim == 1
    X, V, A = np.atleast_2d(x), np.atleast_2d(v), np.atleast_2d(a)
    _, grad, hess = field_derivatives(field, X)
    g = 1.0 + np.einsum("pd,pd->p", grad, grad)
    s = np.einsum("pi,pij,pj->p", V, hess, V)
    out = A + (s / g)[:, None] * grad
    return out[0] if single else out


def _geodesic_parts(field: GaussianField, X, V, A, mode="analytic"):
    """Residuals and their partials with respect to knot position, velocity, acceleration."""
    P, D = X.shape
    if mode == "analytic":
        _, grad, hess, third = field_derivatives(field, X, order=3)
    else:
        _, grad, hess = field_derivatives(field, X)
    g = 1.0 + np.einsum("pd,pd->p", grad, grad)
    Hv = np.einsum("pij,pj->pi", hess, V)
    s = np.einsum("pi,pi->p", V, Hv)
    q = s / g
    R = A + q[:, None] * grad
    dR_dv = 2.0 * np.einsum("pk,pl->pkl", grad / g[:, None], Hv)
    if mode == "analytic":
        Tvv = np.einsum("pijl,pi,pj->pl", third, V, V)
        Hgrad = np.einsum("pkl,pk->pl", hess, grad)
        dq_dx = Tvv / g[:, None] - 2.0 * (s / g**2)[:, None] * Hgrad
        dR_dx = np.einsum("pk,pl->pkl", grad, dq_dx) + q[:, None, None] * hess
    elif mode == "fd":
        dR_dx = np.empty((P, D, D))
        h = 1e-6 * (1.0 + np.abs(X))
        for l in range(D):
            e = np.zeros(D)
            e[l] = 1.0
            Xp, Xm = X + h[:, l:l + 1] * e, X - h[:, l:l + 1] * e
            dR_dx[:, :, l] = (geodesic_residual(field, Xp, V, A) - geodesic_residual(field, Xm, V, A)) / (
                2.0 * h[:, l:l + 1]
            )
    else:
        raise ValueError(f"unknown derivative mode {mode!r}")
    return R, dR_dx, dR_dv


def discrete_cost(theta: ThetaVector) -> float:
    """Knot-sampled arc-length energy ``(t_K - t_0)/(K+1) * sum_k |V_k|^2``."""
    V = knots_of_derivative(theta, 1)
    return float((theta.grid.tf - theta.grid.t0) / (theta.K + 1) * np.sum(V * V))


def _energy_factor(grid: SegmentGrid, M: int, kind: str) -> np.ndarray:
    """``F`` with ``|theta_1d @ F|^2`` the energy of one dimension.

    Kept in factored form so the energy is a sum of squares: exact sign and
    no cancellation near zero.
    """
    if kind == "knots":
        return np.sqrt((grid.tf - grid.t0) / (grid.K + 1)) * knot_matrix(grid, M, 1)
    N = M - 1
    L = level_matrix(grid, M, 1).reshape(grid.K + M, grid.K, N + 1)
    C = np.linalg.cholesky(bernstein_gram(N))
    F = np.einsum("k,ika,ab->ikb", np.sqrt(grid.widths), L, C)
    return F.reshape(grid.K + M, -1)


class NLPInstance:
    """One discretized problem: objective, constraints and their Jacobians.

    Equality constraint ``i`` is satisfied when ``|eq_i| <= eq_delta[i]``;
    inequalities are satisfied when ``<= 0``.  All methods are pure.
    """

    def __init__(self, spec: OCPSpec, field: GaussianField):
        if field.dim != spec.D:
            raise ConfigurationError(f"{spec.D}-D boundary points on a {field.dim}-D field")
        self.spec = spec
        self.field = field
        self.variant = spec.variant
        self.grid = spec.grid
        self.K, self.M, self.D = spec.K, spec.M, spec.D
        self.n_per_dim = self.K + self.M
        self.n_vars = self.D * self.n_per_dim
        self.rho = clearance_threshold(field)
        self.weight = spec.duration / (self.K + 1)
        self.T = [knot_matrix(self.grid, self.M, m) for m in range(min(self.M, 2) + 1)]
        self.F = _energy_factor(self.grid, self.M, spec.objective)

        speed = float(np.linalg.norm(spec.pf - spec.p0)) / spec.duration
        delta = spec.geodesic_delta
        if delta is None:
            delta = 1e-4 * speed**2 / spec.duration
        self.geodesic_delta = float(delta)
        self.v_max = float(spec.v_max) if spec.v_max is not None else 2.0 * speed
        if spec.r_sep is not None:
            self.r_sep = np.full(field.n_obstacles, float(spec.r_sep))
        else:
            self.r_sep = field.radii.copy()

        n_bnd = 2 * self.D
        n_geo = (self.K + 1) * self.D if self.variant is Variant.GEODESIC else 0
        self.n_eq = n_bnd + n_geo
        self.eq_delta = np.concatenate([np.zeros(n_bnd), np.full(n_geo, self.geodesic_delta)])
        if self.variant is Variant.HARD:
            self.n_ineq = (self.K + 1) * (field.n_obstacles + 1)
        else:
            self.n_ineq = self.K + 1

        # boundary rows are linear and constant
        Jb = np.zeros((n_bnd, self.n_vars))
        for d in range(self.D):
            cols = slice(d * self.n_per_dim, (d + 1) * self.n_per_dim)
            Jb[d, cols] = self.T[0][:, 0]
            Jb[self.D + d, cols] = self.T[0][:, -1]
        self._boundary_jac = Jb

    # -- layout ----------------------------------------------------------

    def encode(self, theta: ThetaVector) -> np.ndarray:
        if theta.D != self.D or theta.M != self.M or theta.grid != self.grid:
            raise ValueError("theta does not match this problem's layout")
        return theta.as_array()

    def decode_theta(self, x) -> ThetaVector:
        return ThetaVector.from_array(self._check(x), self.grid, self.M, self.D)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_vars,):
            raise ValueError(f"decision vector has shape {x.shape}, expected ({self.n_vars},)")
        return x

    def knots(self, x, m: int) -> np.ndarray:
        """Knot values of derivative ``m``, shape ``(K+1, D)``."""
        Theta = self._check(x).reshape(self.D, self.n_per_dim)
        return (Theta @ self.T[m]).T

    def _chain(self, parts) -> np.ndarray:
        """Jacobian rows from per-knot partials.

        ``parts`` maps derivative level m to an array ``(K+1, C, D)`` of
        partials of C per-knot constraint components; rows are knot-major.
        """
        Kp1 = self.K + 1
        C = next(iter(parts.values())).shape[1]
        J = np.zeros((Kp1, C, self.D, self.n_per_dim))
        for m, G in parts.items():
            J += np.einsum("kcd,jk->kcdj", G, self.T[m])
        return J.reshape(Kp1 * C, self.n_vars)

    # -- evaluation ------------------------------------------------------

    def objective(self, x) -> float:
        E = self._check(x).reshape(self.D, self.n_per_dim) @ self.F
        return float(np.sum(E * E))

    def objective_gradient(self, x) -> np.ndarray:
        E = self._check(x).reshape(self.D, self.n_per_dim) @ self.F
        return (2.0 * E @ self.F.T).reshape(-1)

    def objective_hessian(self) -> np.ndarray:
        """Constant Hessian of the quadratic objective."""
        return np.kron(np.eye(self.D), 2.0 * self.F @ self.F.T)

    def eq_constraints(self, x) -> np.ndarray:
        return self.evaluate(x, jacobians=False).eq

    def ineq_constraints(self, x) -> np.ndarray:
        return self.evaluate(x, jacobians=False).ineq

    def eq_jacobian(self, x, mode="analytic") -> np.ndarray:
        return self.evaluate(x, mode=mode).eq_jac

    def ineq_jacobian(self, x) -> np.ndarray:
        return self.evaluate(x).ineq_jac

    def evaluate(self, x, jacobians: bool = True, mode: str = "analytic") -> Evaluation:
        """Objective, constraints and (optionally) all first derivatives at ``x``."""
        x = self._check(x)
        Theta = x.reshape(self.D, self.n_per_dim)
        X = (Theta @ self.T[0]).T
        V = (Theta @ self.T[1]).T
        E = Theta @ self.F
        obj = float(np.sum(E * E))
        grad = 2.0 * (E @ self.F.T).reshape(-1) if jacobians else None

        eq = [X[0] - self.spec.p0, X[-1] - self.spec.pf]
        eq_jac = [self._boundary_jac] if jacobians else []
        if self.variant is Variant.GEODESIC:
            A = (Theta @ self.T[2]).T
            if jacobians:
                R, dRx, dRv = _geodesic_parts(self.field, X, V, A, mode)
                dRa = np.broadcast_to(np.eye(self.D), dRx.shape)
                eq_jac.append(self._chain({0: dRx, 1: dRv, 2: dRa}))
            else:
                R = geodesic_residual(self.field, X, V, A)
            eq.append(R.reshape(-1))

        if self.variant is Variant.HARD:
            ineq, ineq_jac = self._hard_constraints(X, V, jacobians)
        else:
            f, fgrad, _ = field_derivatives(self.field, X)
            ineq = f - self.rho
            ineq_jac = self._chain({0: fgrad[:, None, :]}) if jacobians else None

        return Evaluation(
            obj,
            grad,
            np.concatenate(eq),
            np.vstack(eq_jac) if jacobians else None,
            ineq,
            ineq_jac,
        )

    def _hard_constraints(self, X, V, jacobians):
        n_obs = self.field.n_obstacles
        diff = X[:, None, :] - self.field.centers[None, :, :]
        dist = np.linalg.norm(diff, axis=2)
        sep = self.r_sep[None, :] - dist
        speed = np.linalg.norm(V, axis=1)
        values = np.concatenate([sep.reshape(-1), speed - self.v_max])
        if not jacobians:
            return values, None
        safe = np.where(dist > 1e-12, dist, 1.0)
        unit = np.where(dist[..., None] > 1e-12, diff / safe[..., None], 0.0)
        unit[..., 0] = np.where(dist > 1e-12, unit[..., 0], 1.0)
        J_sep = self._chain({0: -unit}) if n_obs else np.zeros((0, self.n_vars))
        vs = np.where(speed > 0.0, speed, 1.0)
        J_speed = self._chain({1: (V / vs[:, None])[:, None, :]})
        return values, np.vstack([J_sep, J_speed])

    # -- diagnostics -----------------------------------------------------

    def violations(self, x) -> tuple[float, float]:
        """Largest equality (beyond its band) and inequality violation."""
        ev = self.evaluate(x, jacobians=False)
        eq = float(np.max(np.abs(ev.eq) - self.eq_delta, initial=0.0))
        ineq = float(np.max(ev.ineq, initial=0.0))
        return max(eq, 0.0), max(ineq, 0.0)

    def counts(self) -> dict:
        return {"n_vars": self.n_vars, "n_eq": self.n_eq, "n_ineq": self.n_ineq}


def build_nlp(spec: OCPSpec, field: GaussianField) -> NLPInstance:
    return NLPInstance(spec, field)


def initial_guess(nlp: NLPInstance) -> np.ndarray:
    """Straight-line decision vector between the boundary points."""
    from .bernstein import straight_line_theta

    return nlp.encode(straight_line_theta(nlp.spec.p0, nlp.spec.pf, nlp.grid, nlp.M))


def decode_solution(nlp: NLPInstance, x_opt, samples_per_segment: int = 50) -> Trajectory:
    theta = nlp.decode_theta(x_opt)
    return sample_trajectory(theta, samples_per_segment * nlp.K + 1)


def _evaluation_matrix(grid: SegmentGrid, M: int, times: np.ndarray) -> np.ndarray:
    """``(K+M, P)`` map from a one-dimensional theta to positions at ``times``."""
    n = grid.K + M
    eye = np.eye(n)
    stack = theta_expand(ThetaVector(eye[: grid.K], eye[grid.K:], grid))
    return evaluate_level(stack, 0, times).T


def warmstart_guess(source: Trajectory, target: OCPSpec | NLPInstance) -> np.ndarray:
    """Decision vector for ``target`` initialized from a solved trajectory.

    Equal layouts copy theta unchanged; otherwise theta is fitted by least
    squares to the source positions, with source time mapped linearly onto
    the target horizon.
    """
    spec = target.spec if isinstance(target, NLPInstance) else target
    theta = source.theta
    if theta.D != spec.D:
        raise ValueError(f"{theta.D}-D source cannot seed a {spec.D}-D problem")
    grid = spec.grid
    if theta.M == spec.M and theta.grid == grid:
        return theta.as_array()
    s = (source.times - source.times[0]) / (source.times[-1] - source.times[0])
    t = grid.t0 + s * (grid.tf - grid.t0)
    E = _evaluation_matrix(grid, spec.M, t)
    sol, *_ = np.linalg.lstsq(E.T, source.positions, rcond=None)
    return np.ascontiguousarray(sol.T).reshape(-1)
