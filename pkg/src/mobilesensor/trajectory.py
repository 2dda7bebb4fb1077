"""Sensor paths, velocity-schedule reparametrizations and quadrature grids."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .fieldexpr import parse_field

__all__ = [
    "PathRangeError",
    "DependentFieldsError",
    "WaypointPath",
    "ParametricPath",
    "ComposedPath",
    "Reparametrization",
    "ReparamSampling",
    "QuadratureGrid",
    "gauss_legendre",
    "make_quadrature",
    "default_grid",
    "position_at",
    "sample_composite",
    "apply_reparametrization",
    "design_independent_path",
]


class PathRangeError(ValueError):
    pass


class DependentFieldsError(ValueError):
    """No well-conditioned point set was found; the fields may be linearly dependent."""

    def __init__(self, message: str, best_condition: float):
        super().__init__(message)
        self.best_condition = best_condition


def _check_times(t, T):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(arr > T) or np.any(np.isnan(arr)):
        raise PathRangeError(f"time outside [0, {T}]")
    return arr


# ---------------------------------------------------------------------------
# paths

@dataclass(frozen=True)
class WaypointPath:
    times: np.ndarray
    positions: np.ndarray  # (K, d)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        if times.ndim != 1 or len(times) < 2 or len(times) != len(pos):
            raise ValueError("need at least two waypoints with matching times and positions")
        if times[0] != 0 or np.any(np.diff(times) <= 0):
            raise ValueError("waypoint times must start at 0 and strictly increase")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", pos)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    def position_at(self, t):
        arr = _check_times(t, self.T)
        cols = [np.interp(arr, self.times, self.positions[:, i]) for i in range(self.dimension)]
        return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class ParametricPath:
    """``gamma(t) = (c_1(t), ..., c_d(t))`` with coordinate expressions in ``t``."""

    coords: tuple
    T: float
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        coords = tuple(parse_field(c) for c in self.coords)
        for c in coords:
            if c.dimension:
                raise ValueError(f"path coordinate {c} may only depend on t")
        if self.T <= 0:
            raise ValueError("horizon T must be positive")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "params", dict(self.params))

    @property
    def dimension(self) -> int:
        return len(self.coords)

    def position_at(self, t):
        arr = _check_times(t, self.T)
        empty = np.zeros(arr.shape + (0,))
        cols = [np.broadcast_to(c.evaluate(empty, arr, self.params), arr.shape) for c in self.coords]
        return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class ComposedPath:
    """The same geometric path traversed on the schedule ``t -> base(h(t))``."""

    base: object
    reparam: "Reparametrization"

    @property
    def T(self) -> float:
        return self.base.T

    @property
    def dimension(self) -> int:
        return self.base.dimension

    def position_at(self, t):
        arr = _check_times(t, self.T)
        return self.base.position_at(np.clip(self.reparam.h(arr), 0.0, self.T))


def position_at(path, t):
    return path.position_at(t)


# ---------------------------------------------------------------------------
# quadrature

def _legendre_with_derivative(q: int, x: float) -> tuple[float, float]:
    p0, p1 = 1.0, x
    for k in range(2, q + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    return p1, q * (x * p1 - p0) / (x * x - 1)


@lru_cache(maxsize=64)
def gauss_legendre(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the ``q``-point Gauss-Legendre rule on [-1, 1].

    Roots of P_q by Newton iteration from the Tricomi-style initial guess.
    """
    if q < 1:
        raise ValueError("need at least one point")
    nodes = np.empty(q)
    weights = np.empty(q)
    for i in range(q):
        x = math.cos(math.pi * (i + 0.75) / (q + 0.5))
        for _ in range(100):
            p, dp = _legendre_with_derivative(q, x)
            dx = p / dp
            x -= dx
            if abs(dx) < 1e-16:
                break
        _, dp = _legendre_with_derivative(q, x)
        nodes[i] = x
        weights[i] = 2.0 / ((1 - x * x) * dp * dp)
    order = np.argsort(nodes)
    nodes, weights = nodes[order], weights[order]
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@dataclass(frozen=True)
class QuadratureGrid:
    nodes: np.ndarray
    weights: np.ndarray
    edges: np.ndarray  # panel boundaries
    rule: str = "gauss"
    points_per_panel: int = 8

    @property
    def T(self) -> float:
        return float(self.edges[-1])

    @property
    def panels(self) -> int:
        return len(self.edges) - 1

    def integrate(self, samples) -> float:
        return float(np.sum(self.weights * np.asarray(samples)))

    def split_at(self, times: Sequence[float]) -> "QuadratureGrid":
        """Same rule on panels additionally cut at ``times``."""
        cuts = [x for x in np.asarray(times, dtype=float).ravel() if 0 < x < self.T]
        if not cuts:
            return self
        edges = np.union1d(self.edges, cuts)
        return _grid_from_edges(edges, self.rule, self.points_per_panel)

    def refined(self, factor: int = 2) -> "QuadratureGrid":
        """Every panel cut into ``factor`` equal pieces."""
        a, b = self.edges[:-1], self.edges[1:]
        inner = [a + (b - a) * k / factor for k in range(1, factor)]
        edges = np.union1d(self.edges, np.concatenate(inner) if inner else [])
        return _grid_from_edges(edges, self.rule, self.points_per_panel)


def _grid_from_edges(edges: np.ndarray, rule: str, q: int) -> QuadratureGrid:
    a, b = edges[:-1], edges[1:]
    if rule == "trapezoid":
        widths = b - a
        weights = np.zeros(len(edges))
        weights[:-1] += widths / 2
        weights[1:] += widths / 2
        return QuadratureGrid(edges.copy(), weights, edges.copy(), "trapezoid", 2)
    if rule != "gauss":
        raise ValueError(f"unknown quadrature rule {rule!r}")
    x, w = gauss_legendre(q)
    half = ((b - a) / 2)[:, None]
    mid = ((a + b) / 2)[:, None]
    nodes = (mid + half * x).ravel()
    weights = (half * w).ravel()
    return QuadratureGrid(nodes, weights, edges.copy(), "gauss", q)


def make_quadrature(T: float, panels: int, points_per_panel: int = 8, rule: str = "gauss") -> QuadratureGrid:
    """Composite rule on [0, T].  For ``trapezoid`` there are ``panels + 1`` nodes."""
    if T <= 0 or panels < 1:
        raise ValueError("need T > 0 and at least one panel")
    edges = np.linspace(0.0, T, panels + 1)
    return _grid_from_edges(edges, rule, points_per_panel)


def default_grid(T: float, panels_per_unit: int = 64, points: int = 8) -> QuadratureGrid:
    return make_quadrature(T, max(1, math.ceil(panels_per_unit * T - 1e-9)), points)


def sample_composite(field_expr, path, grid_or_times, params=None, times=None):
    """Samples ``f(gamma(t_i), t_i)`` at the grid nodes (or at explicit times).

    ``times`` overrides the time argument passed to ``f`` (used for remapped
    clocks under a velocity schedule).
    """
    expr = parse_field(field_expr)
    t = grid_or_times.nodes if isinstance(grid_or_times, QuadratureGrid) else np.asarray(grid_or_times, float)
    if expr.dimension > path.dimension:
        raise ValueError(f"field uses x{expr.dimension} but the path has dimension {path.dimension}")
    pts = path.position_at(t)
    clock = t if times is None else np.asarray(times, dtype=float)
    return np.broadcast_to(expr.evaluate(pts, clock, params), t.shape).astype(float)


# ---------------------------------------------------------------------------
# reparametrization

def _bisect_inverse(fn, y, lo, hi, iters=80):
    y = np.asarray(y, dtype=float)
    a = np.full(y.shape, lo, dtype=float)
    b = np.full(y.shape, hi, dtype=float)
    for _ in range(iters):
        m = 0.5 * (a + b)
        below = fn(m) < y
        a = np.where(below, m, a)
        b = np.where(below, b, m)
        if np.all(b - a <= 4 * np.finfo(float).eps * max(abs(hi), 1.0)):
            break
    return 0.5 * (a + b)


class Reparametrization:
    """Strictly increasing ``h: [0, T] -> [0, T]`` with ``h(0) = 0``, ``h(T) = T``.

    The induced weight is ``w(tau) = 1 / h'(h^{-1}(tau))``, so that
    ``int f(gamma(h(t))) dt = int f(gamma(tau)) w(tau) dtau``.
    """

    def __init__(self, h, dh, T: float, label: str = ""):
        self._h = h
        self._dh = dh
        self.T = float(T)
        self.label = label
        probe = np.linspace(0.0, self.T, 2049)
        values = h(probe)
        tol = 1e-12 * self.T
        if abs(values[0]) > tol or abs(values[-1] - self.T) > tol:
            raise ValueError("reparametrization must satisfy h(0) = 0 and h(T) = T")
        if np.any(np.diff(values) <= 0) or np.any(dh(probe) < 0):
            raise ValueError("reparametrization must be strictly increasing")

    @classmethod
    def identity(cls, T: float) -> "Reparametrization":
        return cls(lambda t: np.asarray(t, float), lambda t: np.ones_like(np.asarray(t, float)), T, "identity")

    @classmethod
    def from_expr(cls, source, T: float, params=None) -> "Reparametrization":
        expr = parse_field(source)
        if expr.dimension:
            raise ValueError("reparametrization may only depend on t")
        dexpr = expr.diff("t")

        def h(t):
            t = np.asarray(t, float)
            return np.broadcast_to(expr.evaluate(np.zeros(t.shape + (0,)), t, params), t.shape)

        def dh(t):
            t = np.asarray(t, float)
            return np.broadcast_to(dexpr.evaluate(np.zeros(t.shape + (0,)), t, params), t.shape)

        return cls(h, dh, T, str(expr))

    @classmethod
    def from_samples(cls, t, h) -> "Reparametrization":
        """Grid-defined schedule.

        Nodal slopes are divided differences (central inside, one-sided at the
        ends); between samples ``h`` is the cubic Hermite interpolant through
        those slopes, which keeps ``h'`` continuous.
        """
        t = np.asarray(t, dtype=float)
        hv = np.asarray(h, dtype=float)
        if len(t) < 2 or np.any(np.diff(t) <= 0) or np.any(np.diff(hv) <= 0):
            raise ValueError("reparametrization samples must be strictly increasing")
        slopes = np.gradient(hv, t)
        spline = CubicHermiteSpline(t, hv, slopes)
        deriv = spline.derivative()
        return cls(lambda x: spline(np.asarray(x, float)), lambda x: deriv(np.asarray(x, float)), t[-1], "samples")

    def h(self, t):
        return self._h(t)

    def dh(self, t):
        return self._dh(t)

    def inverse(self, tau):
        return _bisect_inverse(self._h, tau, 0.0, self.T)

    def weight(self, tau):
        with np.errstate(divide="ignore"):
            return 1.0 / self._dh(self.inverse(tau))


@dataclass(frozen=True)
class ReparamSampling:
    path: ComposedPath
    weights: np.ndarray  # w(tau_i) on the grid nodes
    remapped_times: np.ndarray  # h^{-1}(tau_i)


def apply_reparametrization(path, reparam: Reparametrization, grid: QuadratureGrid) -> ReparamSampling:
    if abs(reparam.T - path.T) > 1e-12 * path.T:
        raise ValueError("reparametrization horizon differs from the path horizon")
    weights = np.asarray(reparam.weight(grid.nodes), dtype=float)
    if np.any(~np.isfinite(weights)) or np.any(weights < 0):
        raise ValueError("reparametrization has a vanishing derivative at a grid node")
    return ReparamSampling(ComposedPath(path, reparam), weights, reparam.inverse(grid.nodes))


# ---------------------------------------------------------------------------
# path design

def design_independent_path(
    fields,
    box,
    seed: int = 0,
    max_tries: int = 1000,
    T: float = 1.0,
    params=None,
    max_condition: float = 1e8,
) -> WaypointPath:
    """Waypoint path on which the given fields are linearly independent.

    Draws point sets uniformly from ``box`` (a list of ``(lo, hi)`` per axis)
    until the matrix ``f_i(x_j)`` is well conditioned, then visits the points
    in order along straight segments.  If any field depends on ``t`` the
    visiting times are drawn too and enter the matrix as ``f_i(x_j, t_j)``.
    """
    exprs = [parse_field(f) for f in fields]
    m = len(exprs)
    if m < 1:
        raise ValueError("need at least one field")
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    if np.any(box[:, 1] < box[:, 0]):
        raise ValueError("empty box")
    d = len(box)
    timed = any(e.uses_time for e in exprs)
    rng = np.random.default_rng(seed)
    best = math.inf
    for _ in range(max_tries):
        pts = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((m, d))
        if timed:
            times = np.sort(rng.uniform(0.0, T, m))
            if times[0] <= 0 or times[-1] >= T or np.any(np.diff(times) <= 0):
                continue
        else:
            times = T * np.arange(1, m + 1) / (m + 1)
        try:
            mat = np.stack([e.evaluate(pts, times, params) * np.ones(m) for e in exprs])
        except ValueError:
            continue
        cond = np.linalg.cond(mat)
        if not np.isfinite(cond):
            cond = math.inf
        best = min(best, cond)
        if cond < max_condition:
            wp_times = np.concatenate([[0.0], times, [T]])
            wp_pos = np.vstack([pts[:1], pts, pts[-1:]])
            return WaypointPath(wp_times, wp_pos)
    raise DependentFieldsError(
        f"no point set with condition number below {max_condition:g} after {max_tries} tries "
        f"(best {best:.3g}); the fields may be linearly dependent",
        best,
    )
