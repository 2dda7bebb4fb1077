"""Sign and amplitude control schedules for noise-cancelling phase imprinting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .fieldexpr import FieldExpr, parse_field
from .l1approx import L1Solution, RankDeficientError, best_l1, check_rank
from .trajectory import ParametricPath, QuadratureGrid, Reparametrization, default_grid, sample_composite

__all__ = [
    "SignSwitch",
    "Amplitude",
    "ScheduleError",
    "LinearDependenceError",
    "BisectionError",
    "InfeasibleControlError",
    "SignControlDesign",
    "HobbyRicePartition",
    "VelocitySignDecomposition",
    "schedule_from_record",
    "control_quadrature",
    "phase_functional",
    "optimal_sign_control",
    "cancellation_residues",
    "verify_cancellation",
    "cancellation_threshold",
    "hobby_rice_partition",
    "chebyshev_control",
    "legendre_coefficients",
    "legendre_expr",
    "legendre_path",
    "legendre_control",
    "fourier_path",
    "fourier_control",
    "decompose_velocity_sign",
    "control_plot_rows",
]


class ScheduleError(ValueError):
    pass


class LinearDependenceError(RankDeficientError):
    pass


class BisectionError(RuntimeError):
    pass


class InfeasibleControlError(ValueError):
    pass


# ---------------------------------------------------------------------------
# schedules

def _weight_check(T, times, values):
    if values is None:
        return None, None
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or np.any(values < 0):
        raise ScheduleError("weights must be non-negative samples on the schedule times")
    return times, values


@dataclass(frozen=True)
class SignSwitch:
    """Piecewise constant ``c(t) = +-1`` flipping at each switch time."""

    T: float
    initial_sign: int
    switch_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    weight_times: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        sw = np.asarray(self.switch_times, dtype=float).ravel()
        if self.initial_sign not in (1, -1):
            raise ScheduleError("initial_sign must be +1 or -1")
        if np.any(np.diff(sw) <= 0) or np.any(sw <= 0) or np.any(sw >= self.T):
            raise ScheduleError("switch times must strictly increase inside (0, T)")
        wt, wv = _weight_check(self.T, self.weight_times, self.weights)
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "initial_sign", int(self.initial_sign))
        object.__setattr__(self, "switch_times", sw)
        object.__setattr__(self, "weight_times", wt)
        object.__setattr__(self, "weights", wv)

    @property
    def switch_count(self) -> int:
        return len(self.switch_times)

    def value(self, t):
        k = np.searchsorted(self.switch_times, np.asarray(t, dtype=float), side="right")
        return self.initial_sign * np.where(k % 2 == 0, 1.0, -1.0)

    def weight(self, t):
        if self.weights is None:
            return np.ones_like(np.asarray(t, dtype=float))
        return np.interp(t, self.weight_times, self.weights)

    def to_record(self) -> dict:
        rec = {"T": self.T, "initial_sign": self.initial_sign, "switch_times": self.switch_times.tolist()}
        if self.weights is not None:
            rec["weight_times"] = self.weight_times.tolist()
            rec["weights"] = self.weights.tolist()
        return rec


@dataclass(frozen=True)
class Amplitude:
    """Bounded control sampled at ``times``, linear in between."""

    T: float
    times: np.ndarray
    amplitudes: np.ndarray
    weight_times: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        amps = np.asarray(self.amplitudes, dtype=float).ravel()
        if times.shape != amps.shape or len(times) == 0:
            raise ScheduleError("times and amplitudes must be non-empty and of equal length")
        if np.any(np.diff(times) <= 0):
            raise ScheduleError("sample times must strictly increase")
        if np.any(np.abs(amps) > 1 + 1e-12):
            raise ScheduleError("control amplitudes must lie in [-1, 1]")
        wt, wv = _weight_check(self.T, self.weight_times, self.weights)
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "weight_times", wt)
        object.__setattr__(self, "weights", wv)

    def value(self, t):
        return np.interp(t, self.times, self.amplitudes)

    def weight(self, t):
        if self.weights is None:
            return np.ones_like(np.asarray(t, dtype=float))
        return np.interp(t, self.weight_times, self.weights)

    def to_record(self) -> dict:
        rec = {"T": self.T, "times": self.times.tolist(), "amplitudes": self.amplitudes.tolist()}
        if self.weights is not None:
            rec["weight_times"] = self.weight_times.tolist()
            rec["weights"] = self.weights.tolist()
        return rec


def schedule_from_record(rec: Mapping, T: float | None = None):
    horizon = rec.get("T", T)
    if horizon is None:
        raise ScheduleError("schedule record has no horizon T")
    extra = {k: rec[k] for k in ("weight_times", "weights") if k in rec}
    if "switch_times" in rec or "initial_sign" in rec:
        return SignSwitch(horizon, int(rec["initial_sign"]), rec.get("switch_times", []), **extra)
    if "amplitudes" in rec:
        return Amplitude(horizon, rec["times"], rec["amplitudes"], **extra)
    raise ScheduleError("record is neither a sign-switch nor an amplitude schedule")


# ---------------------------------------------------------------------------
# integrals against a control

def control_quadrature(grid: QuadratureGrid, control) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and effective weights with ``int phi c dt ~ sum v_i phi(t_i)``.

    Unweighted sign schedules get their panels cut at the switch times so each
    panel carries one sign.  Weighted or amplitude schedules are sampled at
    the grid nodes.
    """
    if isinstance(control, SignSwitch) and control.weights is None:
        g = grid.split_at(control.switch_times)
        mids = 0.5 * (g.edges[:-1] + g.edges[1:])
        panel_sign = control.value(mids)
        if g.rule == "trapezoid":
            eff = np.zeros(len(g.nodes))
            half = 0.5 * np.diff(g.edges) * panel_sign
            eff[:-1] += half
            eff[1:] += half
            return g.nodes, eff
        return g.nodes, g.weights * np.repeat(panel_sign, g.points_per_panel)
    nodes = grid.nodes
    return nodes, grid.weights * control.value(nodes) * control.weight(nodes)


def _composite(exprs, path, times, params):
    pts = path.position_at(times)
    return np.array([np.broadcast_to(e.evaluate(pts, times, params), times.shape) for e in exprs])


def phase_functional(field_expr, path, control, grid: QuadratureGrid, params=None) -> float:
    """``int_0^T f(gamma(t), t) c(t) [w(t)] dt`` on the grid."""
    nodes, eff = control_quadrature(grid, control)
    values = sample_composite(field_expr, path, nodes, params)
    return float(np.sum(eff * values))


def cancellation_residues(control, noise, path, grid, params=None) -> np.ndarray:
    exprs = [parse_field(g) for g in noise]
    if not exprs:
        return np.zeros(0)
    nodes, eff = control_quadrature(grid, control)
    return _composite(exprs, path, nodes, params) @ eff


def verify_cancellation(control, noise, path, grid, params=None) -> float:
    """Largest ``|int g_j(gamma) c dt|`` over the noise fields."""
    res = cancellation_residues(control, noise, path, grid, params)
    return float(np.max(np.abs(res))) if len(res) else 0.0


def cancellation_threshold(noise, path, grid, params=None) -> float:
    """Pass level ``1e-7 * max_j ||g_j o gamma||_1``."""
    exprs = [parse_field(g) for g in noise]
    if not exprs:
        return 0.0
    vals = _composite(exprs, path, grid.nodes, params)
    return 1e-7 * float(np.max(np.abs(vals) @ grid.weights))


# ---------------------------------------------------------------------------
# optimal sign control

@dataclass
class SignControlDesign:
    schedule: SignSwitch
    sensitivity: float
    solution: L1Solution
    coefficients: np.ndarray  # after continuous refinement
    grid_sensitivity: float
    refined: bool
    signal: FieldExpr
    noise: list
    path: object
    params: dict

    def __iter__(self):
        # unpacks as (schedule, sensitivity, solution)
        return iter((self.schedule, self.sensitivity, self.solution))

    def residual(self, times):
        times = np.asarray(times, dtype=float)
        F = _composite([self.signal], self.path, times, self.params)[0]
        if not self.noise:
            return F
        return F - self.coefficients @ _composite(self.noise, self.path, times, self.params)

    def approximant(self, times):
        times = np.asarray(times, dtype=float)
        if not self.noise:
            return np.zeros_like(times)
        return self.coefficients @ _composite(self.noise, self.path, times, self.params)


def _bisect_roots(fn, a, b, fa_sign, T, tol_rel=1e-12, max_iter=200):
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    tol = tol_rel * T
    for _ in range(max_iter):
        if np.all(b - a <= tol):
            return 0.5 * (a + b)
        m = 0.5 * (a + b)
        fm = fn(m)
        same = np.sign(fm) == fa_sign
        exact = fm == 0
        a = np.where(same & ~exact, m, a)
        b = np.where(~same & ~exact, m, b)
        a = np.where(exact, m, a)
        b = np.where(exact, m, b)
    if np.all(b - a <= tol):
        return 0.5 * (a + b)
    raise BisectionError("bisection did not reach tolerance within 200 iterations")


def _sign_changes(fn, nodes, T, tol):
    """Roots of ``fn`` between nodes whose (non-negligible) values differ in sign."""
    vals = fn(nodes)
    signs = np.where(np.abs(vals) <= tol, 0.0, np.sign(vals))
    idx = np.flatnonzero(signs)
    if len(idx) == 0:
        return np.zeros(0), 0
    s = signs[idx]
    flips = np.flatnonzero(s[:-1] != s[1:])
    first = int(s[0])
    if len(flips) == 0:
        return np.zeros(0), first
    lo = nodes[idx[flips]]
    hi = nodes[idx[flips + 1]]
    roots = _bisect_roots(fn, lo, hi, s[flips], T)
    return roots, first


def _signed_integrals(exprs, path, grid, roots, first_sign, params):
    sched = SignSwitch(grid.T, first_sign, roots)
    nodes, eff = control_quadrature(grid, sched)
    return _composite(exprs, path, nodes, params) @ eff


def _refine(signal, noise, path, grid, params, alpha0, tol, scale, max_iter=40):
    """Newton iteration on the continuous stationarity condition.

    Drives ``int g_j(gamma) sgn(f - L(alpha)) dt`` to zero; the Jacobian is
    ``-2 sum_k g(tau_k) g(tau_k)^T / |r'(tau_k)|`` over the residual's roots.
    """
    T = grid.T
    exprs = list(noise)

    def residual_fn(alpha):
        def r(times):
            times = np.asarray(times, dtype=float)
            F = _composite([signal], path, times, params)[0]
            return F - alpha @ _composite(exprs, path, times, params)
        return r

    def state(alpha):
        r = residual_fn(alpha)
        roots, first = _sign_changes(r, grid.nodes, T, tol)
        if first == 0:
            return None
        grad = _signed_integrals(exprs, path, grid, roots, first, params)
        return roots, first, grad

    alpha = np.array(alpha0, dtype=float)
    st = state(alpha)
    if st is None:
        return alpha, None, False
    best = (np.max(np.abs(st[2])), alpha.copy(), st)
    n_roots = len(st[0])
    for _ in range(max_iter):
        roots, first, grad = st
        err = np.max(np.abs(grad))
        if err <= 1e-14 * scale:
            break
        if len(roots) < len(alpha):
            break
        h = 1e-7 * T
        r = residual_fn(alpha)
        lo = np.clip(roots - h, 0, T)
        hi = np.clip(roots + h, 0, T)
        slope = np.abs((r(hi) - r(lo)) / (hi - lo))
        gvals = _composite(exprs, path, roots, params)
        J = -2.0 * (gvals / slope) @ gvals.T
        try:
            step = np.linalg.solve(J, grad)
        except np.linalg.LinAlgError:
            break
        improved = False
        lam = 1.0
        for _ in range(12):
            trial = alpha - lam * step
            st_new = state(trial)
            if st_new is not None and len(st_new[0]) == n_roots:
                e_new = np.max(np.abs(st_new[2]))
                if e_new < err:
                    alpha, st, improved = trial, st_new, True
                    if e_new < best[0]:
                        best = (e_new, alpha.copy(), st_new)
                    break
            lam *= 0.5
        if not improved:
            break
    return best[1], best[2], True


def optimal_sign_control(
    signal,
    noise: Sequence,
    path,
    grid: QuadratureGrid | None = None,
    params: Mapping[str, float] | None = None,
    refine: bool = True,
    require_independent: bool = True,
) -> SignControlDesign:
    """Noise-cancelling sign control with maximal residual sensitivity.

    Solves the grid best-L1 problem of ``f o gamma`` against the span of the
    ``g_j o gamma``; the control is the sign of the residual.  With ``refine``
    the coefficients are then polished on the continuous problem so the noise
    integrals vanish to near machine precision rather than to grid accuracy.
    """
    params = dict(params or {})
    grid = grid or default_grid(path.T)
    f = parse_field(signal)
    gs = [parse_field(g) for g in noise]
    F = sample_composite(f, path, grid, params)
    G = np.array([sample_composite(g, path, grid, params) for g in gs]).reshape(len(gs), len(F))
    if require_independent and not check_rank(np.vstack([F[None, :], G])):
        raise LinearDependenceError(
            "signal and noise fields are linearly dependent along this path; "
            "use design_independent_path to construct a path that separates them"
        )
    if gs and not check_rank(G):
        raise LinearDependenceError("noise fields are linearly dependent along this path")
    sol = best_l1(F, G, grid)
    alpha = sol.coefficients
    T = grid.T
    tol = sol.tol_coincidence
    scale = float(np.max(np.abs(G) @ grid.weights)) if gs else 1.0
    refined = False
    if refine and gs:
        alpha_r, st, ok = _refine(f, gs, path, grid, params, alpha, tol, scale)
        if ok and st is not None:
            base = _refine_error(f, gs, path, grid, params, alpha, tol)
            if np.max(np.abs(st[2])) <= base:
                alpha, refined = alpha_r, True

    def r(times):
        times = np.asarray(times, dtype=float)
        out = _composite([f], path, times, params)[0]
        return out - alpha @ _composite(gs, path, times, params) if gs else out

    roots, first = _sign_changes(r, grid.nodes, T, tol)
    schedule = SignSwitch(T, first if first else 1, roots)
    nodes, eff = control_quadrature(grid, schedule)
    sensitivity = float(np.sum(eff * r(nodes)))
    return SignControlDesign(
        schedule=schedule,
        sensitivity=sensitivity,
        solution=sol,
        coefficients=np.asarray(alpha, dtype=float),
        grid_sensitivity=sol.residual_l1,
        refined=refined,
        signal=f,
        noise=gs,
        path=path,
        params=params,
    )


def _refine_error(f, gs, path, grid, params, alpha, tol):
    def r(times):
        times = np.asarray(times, dtype=float)
        return _composite([f], path, times, params)[0] - alpha @ _composite(gs, path, times, params)

    roots, first = _sign_changes(r, grid.nodes, grid.T, tol)
    if first == 0:
        return math.inf
    return float(np.max(np.abs(_signed_integrals(gs, path, grid, roots, first, params))))


# ---------------------------------------------------------------------------
# Hobby-Rice view

@dataclass(frozen=True)
class HobbyRicePartition:
    points: np.ndarray
    signs: np.ndarray
    switch_count: int
    within_bound: bool


def hobby_rice_partition(control: SignSwitch, n: int) -> HobbyRicePartition:
    """Partition points ``0 = t_0 < ... < t_m = T`` and per-interval signs.

    ``within_bound`` reports whether at most ``n`` switches are used, the
    count guaranteed to suffice for cancelling ``n`` functions.
    """
    pts = np.concatenate([[0.0], control.switch_times, [control.T]])
    signs = control.initial_sign * (-1.0) ** np.arange(len(pts) - 1)
    return HobbyRicePartition(pts, signs, control.switch_count, control.switch_count <= n)


# ---------------------------------------------------------------------------
# closed-form basis controls

def chebyshev_control(m: int, v: float, T: float) -> tuple[SignSwitch, float]:
    """Optimal control isolating ``x^m`` from lower powers on ``gamma(t) = v t``.

    Switches sit at the zeros of the second-kind Chebyshev polynomial mapped to
    ``[0, vT]``; the sign is positive on the last interval.
    """
    if m < 1 or v <= 0 or T <= 0:
        raise ValueError("need m >= 1, v > 0, T > 0")
    j = np.arange(1, m + 1)
    x = (v * T / 2) * (1 - np.cos(j * np.pi / (m + 1)))
    sched = SignSwitch(T, -1 if m % 2 else 1, x / v)
    return sched, (4.0 / v) * (v * T / 4) ** (m + 1)


def legendre_coefficients(m: int) -> np.ndarray:
    """Monomial coefficients of P_m, lowest power first, from the explicit sum."""
    coef = np.zeros(m + 1)
    for k in range(m // 2 + 1):
        num = math.factorial(2 * m - 2 * k)
        den = math.factorial(m - k) * math.factorial(m - 2 * k) * math.factorial(k) * 2**m
        coef[m - 2 * k] = (-1) ** k * num / den
    return coef


def legendre_expr(m: int, var: str = "x1") -> FieldExpr:
    terms = [f"{float(c)!r}*{var}^{p}" for p, c in enumerate(legendre_coefficients(m)) if c != 0]
    return parse_field(" + ".join(terms).replace("+ -", "- "))


def legendre_path(T: float) -> ParametricPath:
    return ParametricPath(["(2*t - T)/T"], T, {"T": T})


def legendre_control(m: int, T: float, grid: QuadratureGrid | None = None) -> tuple[Amplitude, float]:
    """Control ``P_m(gamma(t))`` on ``gamma(t) = (2t - T)/T``.

    Against ``f = sum a_n P_n`` this imprints ``a_m * gain`` with
    ``gain = T/(2m + 1)``.
    """
    if m < 0 or T <= 0:
        raise ValueError("need m >= 0 and T > 0")
    grid = grid or default_grid(T)
    x = (2 * grid.nodes - T) / T
    amps = np.polynomial.polynomial.polyval(x, legendre_coefficients(m))
    return Amplitude(T, grid.nodes, np.clip(amps, -1.0, 1.0)), T / (2 * m + 1)


def fourier_path(P: float, T: float) -> ParametricPath:
    return ParametricPath(["t*P/T"], T, {"P": P, "T": T})


def fourier_control(
    m: int,
    P: float,
    phase: float,
    T: float,
    grid: QuadratureGrid | None = None,
    kind: str = "cos",
) -> tuple[Amplitude, float]:
    """Control matched to the ``m``-th harmonic ``cos(2 pi m x/P - phase)``.

    The gain is measured by quadrature against a unit-amplitude harmonic, so
    ``Phi_c = A_m * gain`` for a series ``A_0 + sum A_n cos(2 pi n x/P - phase_n)``
    with ``phase_m = phase``.  ``kind="sin"`` gives the quadrature-shifted
    control, whose gain against the cosine harmonic is zero.
    """
    if m < 1 or P <= 0 or T <= 0:
        raise ValueError("need m >= 1, P > 0, T > 0")
    grid = grid or default_grid(T)
    x = grid.nodes * P / T
    arg = 2 * np.pi * m * x / P - phase
    if kind == "cos":
        amps = np.cos(arg)
    elif kind == "sin":
        amps = np.sin(arg)
    else:
        raise ValueError("kind must be 'cos' or 'sin'")
    gain = float(np.sum(grid.weights * amps * np.cos(arg)))
    return Amplitude(T, grid.nodes, amps), gain


# ---------------------------------------------------------------------------
# velocity / sign decomposition

@dataclass(frozen=True)
class VelocitySignDecomposition:
    weights: np.ndarray
    schedule: SignSwitch
    scale: float  # Phi_{w,s} = scale * Phi_c
    effective_control: Amplitude | None = None


def decompose_velocity_sign(
    control: Amplitude,
    grid: QuadratureGrid | None = None,
    reparam: Reparametrization | None = None,
) -> VelocitySignDecomposition:
    """Split an amplitude control into a weight ``w >= 0`` and a sign schedule.

    ``w = |c| T / int|c|`` so that ``int w = T``; the reconstructed phase is
    ``T / int|c|`` times the original.  With a reparametrization, the effective
    control ``c / w_h`` is returned and must stay within [-1, 1].
    """
    T = control.T
    grid = grid or default_grid(T)
    nodes = grid.nodes
    c = control.value(nodes)
    total = float(np.sum(grid.weights * np.abs(c)))
    if total == 0:
        raise ScheduleError("control is identically zero")
    weights = np.abs(c) * T / total
    signs = np.sign(c)
    nz = np.flatnonzero(signs)
    first = int(signs[nz[0]])
    s = signs[nz]
    flips = np.flatnonzero(s[:-1] != s[1:])
    i, k = nz[flips], nz[flips + 1]
    # linear interpolation of c between the bracketing nodes
    switches = nodes[i] + (nodes[k] - nodes[i]) * c[i] / (c[i] - c[k])
    sched = SignSwitch(T, first, switches, nodes, weights)
    effective = None
    if reparam is not None:
        wh = np.asarray(reparam.weight(nodes), dtype=float)
        ctil = c / wh
        if np.max(np.abs(ctil)) > 1 + 1e-12:
            raise InfeasibleControlError(
                f"effective control exceeds unit amplitude (max {np.max(np.abs(ctil)):.6g})"
            )
        effective = Amplitude(T, nodes, np.clip(ctil, -1.0, 1.0))
    return VelocitySignDecomposition(weights, sched, T / total, effective)


# ---------------------------------------------------------------------------
# plot data

def control_plot_rows(design: SignControlDesign, samples: int = 1001) -> list[tuple[float, float, float, float]]:
    """Rows ``(t, f(gamma(t)), L(alpha*, t), c(t))`` on a uniform time grid."""
    T = design.schedule.T
    t = np.linspace(0.0, T, samples)
    f = _composite([design.signal], design.path, t, design.params)[0]
    L = design.approximant(t)
    c = design.schedule.value(t)
    return [(float(a), float(b), float(d), float(e)) for a, b, d, e in zip(t, f, L, c)]
