"""Composite Bernstein polynomials and the reduced theta parameterization.

A composite polynomial is stored as a flat stack of per-segment control
points, ``K * (N + 1)`` rows by ``D`` columns, segment-major.  Integration
is the row-vector product ``cps @ Gamma + c`` with the block upper-triangular
matrix assembled from per-segment integration blocks and continuity blocks.

The optimization variable is a :class:`ThetaVector`: one order-0 control
point per segment for the M-th derivative plus M integration constants per
spatial dimension.  ``constants[m]`` is added when integrating level ``m+1``
into level ``m``, so ``constants[0]`` is the initial position and
``constants[1]`` the initial velocity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np


@dataclass(frozen=True, eq=False)
class SegmentGrid:
    """Knot times ``t_0 < t_1 < ... < t_K`` of a composite polynomial."""

    knot_times: np.ndarray

    def __post_init__(self):
        t = np.array(self.knot_times, dtype=float).reshape(-1)
        if t.size < 2:
            raise ValueError("a segment grid needs at least two knot times")
        if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0.0):
            raise ValueError("knot times must be finite and strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "knot_times", t)

    @classmethod
    def uniform(cls, t0: float, tf: float, K: int) -> "SegmentGrid":
        if int(K) != K or K < 1:
            raise ValueError(f"segment count must be a positive integer, got {K}")
        if not tf > t0:
            raise ValueError(f"final time {tf} must exceed initial time {t0}")
        return cls(t0 + (tf - t0) * np.arange(int(K) + 1) / int(K))

    @property
    def K(self) -> int:
        return self.knot_times.size - 1

    @property
    def t0(self) -> float:
        return float(self.knot_times[0])

    @property
    def tf(self) -> float:
        return float(self.knot_times[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.knot_times)

    def key(self) -> tuple:
        return tuple(self.knot_times.tolist())

    def __eq__(self, other):
        if not isinstance(other, SegmentGrid):
            return NotImplemented
        return self.knot_times.shape == other.knot_times.shape and bool(
            np.all(self.knot_times == other.knot_times)
        )

    def __hash__(self):
        return hash(self.key())


def _check_interval(t_prev: float, t_next: float) -> float:
    h = float(t_next) - float(t_prev)
    if not h > 0.0:
        raise ValueError(f"interval [{t_prev}, {t_next}] must have positive length")
    return h


def basis_eval(j: int, N: int, t: float, interval: tuple[float, float]) -> float:
    """Bernstein basis function ``b_{j,N}(t)`` on ``interval``.

    Raises
    ------
    ValueError
        If ``j`` is outside ``0..N`` or ``t`` lies outside the interval.
    """
    t0, tf = interval
    h = _check_interval(t0, tf)
    if N < 0 or not 0 <= j <= N:
        raise ValueError(f"basis index {j} out of range for order {N}")
    if not t0 <= t <= tf:
        raise ValueError(f"t={t} outside [{t0}, {tf}]")
    return comb(N, j) * (t - t0) ** j * (tf - t) ** (N - j) / h**N


def segment_integration_matrix(N: int, t_prev: float, t_next: float) -> np.ndarray:
    """Per-segment integration block: entry ``(i, j)`` is ``h/(N+1)`` for ``j > i``."""
    h = _check_interval(t_prev, t_next)
    return np.triu(np.full((N + 1, N + 2), h / (N + 1)), k=1)


def continuity_block(N: int, t_prev: float, t_next: float) -> np.ndarray:
    """Block carrying a segment's full integral into every later segment."""
    h = _check_interval(t_prev, t_next)
    return np.full((N + 1, N + 2), h / (N + 1))


def composite_integration_matrix(grid: SegmentGrid, N: int) -> np.ndarray:
    """Block upper-triangular ``K(N+1) x K(N+2)`` integration matrix."""
    return _composite_integration_matrix(grid.key(), int(N)).copy()


@lru_cache(maxsize=256)
def _composite_integration_matrix(knots: tuple, N: int) -> np.ndarray:
    K = len(knots) - 1
    rows, cols = N + 1, N + 2
    G = np.zeros((K * rows, K * cols))
    for k in range(K):
        r = slice(k * rows, (k + 1) * rows)
        G[r, k * cols:(k + 1) * cols] = segment_integration_matrix(N, knots[k], knots[k + 1])
        if k + 1 < K:
            G[r, (k + 1) * cols:] = np.tile(continuity_block(N, knots[k], knots[k + 1]), (1, K - k - 1))
    G.setflags(write=False)
    return G


def integrate_control_points(cps, grid: SegmentGrid, c) -> np.ndarray:
    """Control points of the antiderivative that starts at ``c`` at ``t_0``.

    Parameters
    ----------
    cps : array_like, shape (K*(N+1),) or (K*(N+1), D)
        Segment-major control points of an order-N composite polynomial.
    grid : SegmentGrid
    c : float or array_like, shape (D,)
        Integration constant, the antiderivative's value at ``t_0``.

    Returns
    -------
    ndarray, shape (K*(N+2),) or (K*(N+2), D)
    """
    cps = np.asarray(cps, dtype=float)
    K = grid.K
    if cps.ndim not in (1, 2) or cps.shape[0] % K:
        raise ValueError(f"control points of shape {cps.shape} do not fit {K} segments")
    N = cps.shape[0] // K - 1
    c = np.asarray(c, dtype=float)
    if cps.ndim == 2 and c.ndim == 1 and c.shape[0] != cps.shape[1]:
        raise ValueError(f"constant of shape {c.shape} does not match dimension {cps.shape[1]}")
    if cps.ndim == 1 and c.ndim != 0:
        raise ValueError("a scalar constant is required for one-dimensional control points")
    # running sums rather than the dense matrix, so each segment starts at
    # the previous segment's end value bit for bit
    P = cps.reshape(K, N + 1, -1)
    steps = P * (grid.widths / (N + 1))[:, None, None]
    out = np.empty((K, N + 2, P.shape[2]))
    start = np.broadcast_to(c, (P.shape[2],)).astype(float)
    for k in range(K):
        out[k, 0] = start
        out[k, 1:] = start + np.cumsum(steps[k], axis=0)
        start = out[k, -1]
    return out.reshape(K * (N + 2)) if cps.ndim == 1 else out.reshape(K * (N + 2), -1)


@dataclass(frozen=True, eq=False)
class ThetaVector:
    """Reduced decision parameterization of a composite polynomial trajectory.

    Attributes
    ----------
    derivative_cps : ndarray, shape (K, D)
        Per-segment constant values of the M-th derivative.
    constants : ndarray, shape (M, D)
        Integration constants; row ``m`` is the initial value of the m-th
        derivative.
    grid : SegmentGrid
    """

    derivative_cps: np.ndarray
    constants: np.ndarray
    grid: SegmentGrid

    def __post_init__(self):
        d = np.array(self.derivative_cps, dtype=float)
        c = np.array(self.constants, dtype=float)
        if d.ndim == 1:
            d = d[:, None]
        if c.ndim == 1:
            c = c[:, None]
        if d.shape[0] != self.grid.K:
            raise ValueError(f"expected {self.grid.K} derivative control points, got {d.shape[0]}")
        if c.shape[0] < 1:
            raise ValueError("at least one integration constant is required")
        if d.shape[1] != c.shape[1]:
            raise ValueError("derivative control points and constants disagree on dimension")
        d.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "derivative_cps", d)
        object.__setattr__(self, "constants", c)

    @property
    def K(self) -> int:
        return self.grid.K

    @property
    def M(self) -> int:
        return self.constants.shape[0]

    @property
    def D(self) -> int:
        return self.derivative_cps.shape[1]

    @property
    def n_per_dim(self) -> int:
        return self.K + self.M

    def as_array(self) -> np.ndarray:
        """Flat decision vector: ``[cps_d, c_0d, ..., c_{M-1}d]`` for each dimension d."""
        return np.vstack([self.derivative_cps, self.constants]).T.reshape(-1).copy()

    @classmethod
    def from_array(cls, x, grid: SegmentGrid, M: int, D: int) -> "ThetaVector":
        x = np.asarray(x, dtype=float)
        n = grid.K + M
        if x.shape != (D * n,):
            raise ValueError(f"decision vector of shape {x.shape} does not match D*(K+M) = {D * n}")
        cols = x.reshape(D, n).T
        return cls(cols[: grid.K], cols[grid.K:], grid)


@dataclass(frozen=True)
class DerivativeStack:
    """Control points of every derivative level, ``levels[m]`` for ``m = 0..M``.

    Level ``m`` is the m-th derivative, stored as a ``K*(M-m+1) x D`` array.
    """

    levels: tuple
    grid: SegmentGrid

    @property
    def M(self) -> int:
        return len(self.levels) - 1

    def order(self, m: int) -> int:
        return self.M - m

    def segments(self, m: int) -> np.ndarray:
        """Level ``m`` reshaped to ``(K, order+1, D)``."""
        lvl = self.levels[m]
        return lvl.reshape(self.grid.K, self.order(m) + 1, lvl.shape[1])


def theta_expand(theta: ThetaVector) -> DerivativeStack:
    """Integrate the M-th derivative down to position, one level at a time."""
    M = theta.M
    levels = [None] * (M + 1)
    levels[M] = theta.derivative_cps
    for m in range(M - 1, -1, -1):
        levels[m] = integrate_control_points(levels[m + 1], theta.grid, theta.constants[m])
    return DerivativeStack(tuple(levels), theta.grid)


def _check_level(m: int, M: int):
    if int(m) != m or not 0 <= m <= M:
        raise ValueError(f"derivative order {m} outside 0..{M}")


def knots_of_derivative(theta: ThetaVector, m: int) -> np.ndarray:
    """Values of the m-th derivative at the ``K+1`` knot times.

    The order-0 top level is discontinuous at knots; there the left segment's
    value is used, and segment 1 supplies the value at ``t_0``.
    """
    _check_level(m, theta.M)
    seg = theta_expand(theta).segments(m)
    return np.vstack([seg[0, 0], seg[:, -1]])


def knot_matrix(grid: SegmentGrid, M: int, m: int) -> np.ndarray:
    """Linear map ``T_m`` with ``knots_m = theta_1d @ T_m`` for one dimension.

    Shape ``(K+M, K+1)``.  Built by expanding every unit theta vector, so it
    agrees with :func:`knots_of_derivative` by construction.
    """
    _check_level(m, M)
    return _knot_matrix(grid.key(), int(M), int(m)).copy()


@lru_cache(maxsize=512)
def _knot_matrix(knots: tuple, M: int, m: int) -> np.ndarray:
    grid = SegmentGrid(np.array(knots))
    n = grid.K + M
    eye = np.eye(n)
    # each identity column is treated as its own "dimension"
    theta = ThetaVector(eye[: grid.K], eye[grid.K:], grid)
    T = knots_of_derivative(theta, m)
    T = np.ascontiguousarray(T.T)
    T.setflags(write=False)
    return T


def level_matrix(grid: SegmentGrid, M: int, m: int) -> np.ndarray:
    """Linear map from one dimension's theta to the control points of level ``m``.

    Shape ``(K+M, K*(M-m+1))``; column ``k*(M-m+1) + j`` is control point ``j``
    of segment ``k``.
    """
    _check_level(m, M)
    n = grid.K + M
    eye = np.eye(n)
    theta = ThetaVector(eye[: grid.K], eye[grid.K:], grid)
    return np.ascontiguousarray(theta_expand(theta).levels[m].T)


def bernstein_gram(N: int) -> np.ndarray:
    """``G[i, j] = integral_0^1 b_{i,N} b_{j,N} ds``."""
    i = np.arange(N + 1)
    binom = np.array([comb(N, k) for k in i], dtype=float)
    pair = np.array([[comb(2 * N, a + b) for b in i] for a in i], dtype=float)
    return np.outer(binom, binom) / (pair * (2 * N + 1))


def zeta_matrix(grid: SegmentGrid, N: int, M: int) -> np.ndarray:
    """Augmented integration matrix acting on ``[cps, c_0, ..., c_{M-1}]`` rows.

    Maps a level of per-segment order ``N`` (plus the untouched constants)
    to the next-lower derivative level of order ``N+1``.  The constant row
    feeding the integration is ``c_{M-1-N}``, so the first application
    (``N = 0``) consumes ``c_{M-1}`` and the last consumes ``c_0``.
    """
    if not 0 <= N <= M - 1:
        raise ValueError(f"order {N} cannot be integrated with {M} constants")
    K = grid.K
    G = _composite_integration_matrix(grid.key(), N)
    Z = np.zeros((K * (N + 1) + M, K * (N + 2) + M))
    Z[: K * (N + 1), : K * (N + 2)] = G
    Z[K * (N + 1) + (M - 1 - N), : K * (N + 2)] = 1.0
    Z[K * (N + 1):, K * (N + 2):] = np.eye(M)
    return Z


def knot_selector(K: int, n: int, M: int) -> np.ndarray:
    """Selector picking the ``K+1`` knots from an order-``n`` level plus constants."""
    P = np.zeros((K * (n + 1) + M, K + 1))
    P[0, 0] = 1.0
    for k in range(1, K + 1):
        P[k * (n + 1) - 1, k] = 1.0
    return P


def knot_matrix_from_zeta(grid: SegmentGrid, M: int, m: int) -> np.ndarray:
    """``T_m`` assembled as the product of zeta blocks and a selector."""
    _check_level(m, M)
    K = grid.K
    T = np.eye(K + M)
    for N in range(0, M - m):
        T = T @ zeta_matrix(grid, N, M)
    return T @ knot_selector(K, M - m, M)


def _locate(grid: SegmentGrid, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Segment index (left-closed at knots, segment 0 at ``t_0``) and local parameter."""
    kt = grid.knot_times
    idx = np.clip(np.searchsorted(kt, t, side="left") - 1, 0, grid.K - 1)
    s = (t - kt[idx]) / (kt[idx + 1] - kt[idx])
    return idx, np.clip(s, 0.0, 1.0)


def de_casteljau(cps: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Evaluate Bernstein polynomials by repeated convex combination.

    ``cps`` has shape ``(P, n+1, D)`` (one polynomial per parameter value) and
    ``s`` shape ``(P,)`` with values in ``[0, 1]``.
    """
    b = np.array(cps, dtype=float)
    s = np.asarray(s, dtype=float)[:, None, None]
    for _ in range(b.shape[1] - 1):
        b = (1.0 - s) * b[:, :-1] + s * b[:, 1:]
    return b[:, 0]


def evaluate_level(stack: DerivativeStack, m: int, times) -> np.ndarray:
    """Evaluate derivative level ``m`` at ``times``; levels above M are zero."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    D = stack.levels[0].shape[1]
    if m > stack.M:
        return np.zeros((times.size, D))
    idx, s = _locate(stack.grid, times)
    return de_casteljau(stack.segments(m)[idx], s)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Dense samples of a composite polynomial trajectory."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray
    theta: ThetaVector
    knot_positions: np.ndarray = field(default=None)

    @property
    def D(self) -> int:
        return self.positions.shape[1]


def sample_trajectory(theta: ThetaVector, n_samples: int) -> Trajectory:
    """Position, velocity and acceleration at ``n_samples`` uniform times."""
    if n_samples < 2:
        raise ValueError("at least two samples are required")
    stack = theta_expand(theta)
    grid = theta.grid
    t = np.linspace(grid.t0, grid.tf, int(n_samples))
    t[-1] = grid.tf
    return Trajectory(
        times=t,
        positions=evaluate_level(stack, 0, t),
        velocities=evaluate_level(stack, 1, t),
        accelerations=evaluate_level(stack, 2, t),
        theta=theta,
        knot_positions=np.vstack([stack.segments(0)[0, 0], stack.segments(0)[:, -1]]),
    )


def straight_line_theta(p0, pf, grid: SegmentGrid, M: int) -> ThetaVector:
    """Theta whose position level is the constant-speed segment from ``p0`` to ``pf``."""
    if M < 1:
        raise ValueError("at least one integration constant is required")
    p0 = np.asarray(p0, dtype=float).reshape(-1)
    pf = np.asarray(pf, dtype=float).reshape(-1)
    if p0.shape != pf.shape:
        raise ValueError("boundary points disagree on dimension")
    D = p0.size
    velocity = (pf - p0) / (grid.tf - grid.t0)
    constants = np.zeros((M, D))
    constants[0] = p0
    derivative = np.zeros((grid.K, D))
    if M >= 2:
        constants[1] = velocity
    else:
        # with one constant the velocity itself is the top level
        derivative[:] = velocity
    return ThetaVector(derivative, constants, grid)
