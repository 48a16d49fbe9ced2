"""Gaussian obstacle fields viewed as Monge patches.

The cost surface is a sum of isotropic Gaussian bumps,

    f(p) = A * sum_i exp(-kappa * |p - c_i|^2 / (2 r_i^2)),

so that a single bump takes the value ``A * exp(-kappa / 2)`` exactly at
distance ``r_i`` from its center.  Everything downstream (metric factor,
Christoffel symbols, geodesic residuals and their Jacobians) needs analytic
derivatives up to third order, which are provided here in batched form.

All evaluation functions accept a single point of shape ``(D,)`` or a batch
of shape ``(P, D)`` and return matching leading shapes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Obstacle:
    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(x) for x in np.asarray(self.center, dtype=float).reshape(-1))
        if not np.all(np.isfinite(c)):
            raise ValueError("obstacle center must be finite")
        if not float(self.radius) > 0.0:
            raise ValueError(f"obstacle radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))


@dataclass(frozen=True, eq=False)
class GaussianField:
    """Obstacle set with amplitude ``A`` and sharpness ``kappa``.

    ``rho`` overrides the clearance threshold; by default it is
    ``A * exp(-kappa / 2)``.
    """

    obstacles: tuple
    amplitude: float = 1000.0
    sharpness: float = 10.0
    dim: int = 2
    rho: float | None = None

    def __post_init__(self):
        obs = tuple(o if isinstance(o, Obstacle) else Obstacle(*o) for o in self.obstacles)
        object.__setattr__(self, "obstacles", obs)
        if self.dim not in (2, 3):
            raise ValueError(f"field dimension must be 2 or 3, got {self.dim}")
        if self.amplitude < 0.0:
            raise ValueError("amplitude must be non-negative")
        if not self.sharpness > 0.0:
            raise ValueError("sharpness must be positive")
        for o in obs:
            if len(o.center) != self.dim:
                raise ValueError(f"obstacle center {o.center} is not {self.dim}-dimensional")
        centers = np.array([o.center for o in obs], dtype=float).reshape(len(obs), self.dim)
        radii = np.array([o.radius for o in obs], dtype=float)
        centers.setflags(write=False)
        radii.setflags(write=False)
        object.__setattr__(self, "_centers", centers)
        object.__setattr__(self, "_radii", radii)
        # exponent coefficient per obstacle: kappa / (2 r^2)
        alpha = self.sharpness / (2.0 * radii**2)
        alpha.setflags(write=False)
        object.__setattr__(self, "_alpha", alpha)

    @property
    def centers(self) -> np.ndarray:
        return self._centers

    @property
    def radii(self) -> np.ndarray:
        return self._radii

    @property
    def n_obstacles(self) -> int:
        return len(self.obstacles)

    @classmethod
    def from_arrays(cls, centers, radii, amplitude=1000.0, sharpness=10.0, rho=None):
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        radii = np.asarray(radii, dtype=float).reshape(-1)
        if centers.shape[0] != radii.shape[0]:
            raise ValueError("centers and radii disagree on obstacle count")
        obs = tuple(Obstacle(tuple(c), r) for c, r in zip(centers, radii))
        return cls(obs, amplitude, sharpness, centers.shape[1], rho)

    def single(self, i: int) -> "GaussianField":
        """Field made of obstacle ``i`` only."""
        return GaussianField((self.obstacles[i],), self.amplitude, self.sharpness, self.dim, self.rho)


def _points(field: GaussianField, p) -> tuple[np.ndarray, bool]:
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    P = np.atleast_2d(p)
    if P.ndim != 2 or P.shape[1] != field.dim:
        raise ValueError(f"points of shape {p.shape} do not match field dimension {field.dim}")
    return P, single


def _terms(field: GaussianField, P: np.ndarray):
    """Offsets ``d`` (P, N, D) and per-obstacle values ``w`` (P, N)."""
    d = P[:, None, :] - field.centers[None, :, :]
    w = field.amplitude * np.exp(-field._alpha * np.einsum("pnd,pnd->pn", d, d))
    return d, w


def field_value(field: GaussianField, p):
    P, single = _points(field, p)
    _, w = _terms(field, P)
    out = w.sum(axis=1)
    return float(out[0]) if single else out


def field_gradient(field: GaussianField, p) -> np.ndarray:
    P, single = _points(field, p)
    d, w = _terms(field, P)
    out = np.einsum("pn,pnd->pd", -2.0 * field._alpha * w, d)
    return out[0] if single else out


def field_hessian(field: GaussianField, p) -> np.ndarray:
    P, single = _points(field, p)
    d, w = _terms(field, P)
    a = field._alpha
    out = np.einsum("pn,pni,pnj->pij", 4.0 * a**2 * w, d, d)
    out -= np.einsum("pn->p", 2.0 * a * w)[:, None, None] * np.eye(field.dim)
    out = 0.5 * (out + np.swapaxes(out, 1, 2))
    return out[0] if single else out


def field_third(field: GaussianField, p) -> np.ndarray:
    """Third derivatives ``f_{abc}``, shape ``(D, D, D)`` per point."""
    P, single = _points(field, p)
    d, w = _terms(field, P)
    a = field._alpha
    eye = np.eye(field.dim)
    out = np.einsum("pn,pna,pnb,pnc->pabc", -8.0 * a**3 * w, d, d, d)
    s = np.einsum("pn,pnc->pc", 4.0 * a**2 * w, d)
    out += np.einsum("ab,pc->pabc", eye, s)
    out += np.einsum("ac,pb->pabc", eye, s)
    out += np.einsum("bc,pa->pabc", eye, s)
    return out[0] if single else out


def field_derivatives(field: GaussianField, P: np.ndarray, order: int = 2):
    """Value, gradient, Hessian and optionally third derivatives at a batch of points.

    Shares the exponential evaluations across orders; used on the hot path.
    """
    P, _ = _points(field, P)
    d, w = _terms(field, P)
    a = field._alpha
    eye = np.eye(field.dim)
    f = w.sum(axis=1)
    aw = a * w
    grad = -2.0 * np.einsum("pn,pnd->pd", aw, d)
    a2w = a * aw
    hess = 4.0 * np.einsum("pn,pni,pnj->pij", a2w, d, d) - 2.0 * aw.sum(axis=1)[:, None, None] * eye
    # exact symmetry, einsum summation order is not guaranteed
    hess = 0.5 * (hess + np.swapaxes(hess, 1, 2))
    if order < 3:
        return f, grad, hess
    third = -8.0 * np.einsum("pn,pna,pnb,pnc->pabc", a * a2w, d, d, d)
    s = 4.0 * np.einsum("pn,pnc->pc", a2w, d)
    third += eye[None, :, :, None] * s[:, None, None, :]
    third += eye[None, :, None, :] * s[:, None, :, None]
    third += eye[None, None, :, :] * s[:, :, None, None]
    return f, grad, hess, third


def metric_g(field: GaussianField, p):
    """Squared norm of the surface normal, ``1 + |grad f|^2``."""
    grad = np.atleast_2d(field_gradient(field, p))
    out = 1.0 + np.einsum("pd,pd->p", grad, grad)
    return float(out[0]) if np.ndim(p) == 1 else out


def christoffel(field: GaussianField, p) -> np.ndarray:
    """Christoffel symbols of the Monge patch; ``out[..., k, i, j] = f_ij f_k / g``."""
    P, single = _points(field, p)
    _, grad, hess = field_derivatives(field, P)
    g = 1.0 + np.einsum("pd,pd->p", grad, grad)
    out = np.einsum("pk,pij->pkij", grad / g[:, None], hess)
    return out[0] if single else out


def clearance_threshold(field: GaussianField) -> float:
    """Cost level ``rho`` whose sublevel set keeps a single bump's distance at least ``r``."""
    if field.rho is not None:
        return float(field.rho)
    return float(field.amplitude * np.exp(-field.sharpness / 2.0))


def sigma_from_radius(r: float, kappa: float) -> float:
    """Variance paired with a clearance radius: ``sigma / kappa = 2 r^2``."""
    if not r > 0.0 or not kappa > 0.0:
        raise ValueError("radius and sharpness must be positive")
    return 2.0 * kappa * r**2


def _single_offset(field: GaussianField, p, dim: int) -> np.ndarray:
    if field.n_obstacles != 1:
        raise ValueError("curvature diagnostics are defined for single-obstacle fields only")
    if field.dim != dim:
        raise ValueError(f"expected a {dim}-D field, got {field.dim}-D")
    p = np.asarray(p, dtype=float)
    if p.shape != (dim,):
        raise ValueError(f"expected a {dim}-D point")
    return p - field.centers[0]


def _bump_derivatives(A, beta, d):
    """Gradient and Hessian of ``A exp(-beta |d|^2)`` at offset ``d``."""
    f = A * np.exp(-beta * d @ d)
    grad = -2.0 * beta * f * d
    hess = f * (4.0 * beta**2 * np.outer(d, d) - 2.0 * beta * np.eye(d.size))
    return grad, hess


def gaussian_curvature_2d(field: GaussianField, p) -> float:
    """Gaussian curvature of the single-bump surface ``A exp(-kappa |d|^2 / sigma)``.

    ``sigma`` comes from :func:`sigma_from_radius`, so the curvature changes
    sign on the circle of the obstacle radius.  See :func:`field_curvature`
    for the curvature of the cost field itself.
    """
    d = _single_offset(field, p, 2)
    sigma = sigma_from_radius(field.radii[0], field.sharpness)
    grad, hess = _bump_derivatives(field.amplitude, field.sharpness / sigma, d)
    num = hess[0, 0] * hess[1, 1] - hess[0, 1] ** 2
    return float(num / (1.0 + grad @ grad) ** 2)


def gauss_kronecker_3d(field: GaussianField, p) -> float:
    """Gauss-Kronecker curvature of the single-bump hypersurface in 4-space.

    Same variance convention as :func:`gaussian_curvature_2d`.
    """
    d = _single_offset(field, p, 3)
    sigma = sigma_from_radius(field.radii[0], field.sharpness)
    grad, hess = _bump_derivatives(field.amplitude, field.sharpness / sigma, d)
    return float(np.linalg.det(hess) / (1.0 + grad @ grad) ** 2.5)


def field_curvature(field: GaussianField, p) -> float:
    """Gaussian (2-D) or Gauss-Kronecker (3-D) curvature of the cost field itself.

    For a single obstacle this changes sign at distance ``r / sqrt(kappa)``.
    """
    p = np.asarray(p, dtype=float)
    _, grad, hess = field_derivatives(field, p[None, :])
    g = 1.0 + grad[0] @ grad[0]
    return float(np.linalg.det(hess[0]) / g ** ((field.dim + 2) / 2.0))


def sample_lattice(field: GaussianField, xs: Sequence[float], ys: Sequence[float]):
    """Evaluate ``f`` and ``g`` on the lattice ``xs x ys`` (2-D fields).

    Returns arrays ``X, Y, F, G`` of shape ``(len(ys), len(xs))``.
    """
    if field.dim != 2:
        raise ValueError("lattice export is only defined for 2-D fields")
    X, Y = np.meshgrid(np.asarray(xs, float), np.asarray(ys, float))
    P = np.column_stack([X.ravel(), Y.ravel()])
    f, grad, _ = field_derivatives(field, P)
    G = 1.0 + np.einsum("pd,pd->p", grad, grad)
    return X, Y, f.reshape(X.shape), G.reshape(X.shape)
