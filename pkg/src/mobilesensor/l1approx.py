"""Dense two-phase simplex (Bland's rule) and best L1 approximation on a grid."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LinearProgram",
    "LPResult",
    "LPIterationLimit",
    "RankDeficientError",
    "LPFailure",
    "L1Solution",
    "lp_solve",
    "best_l1",
    "check_rank",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class LPIterationLimit(RuntimeError):
    def __init__(self, message, best_x=None, best_value=None):
        super().__init__(message)
        self.best_x = best_x
        self.best_value = best_value


class LPFailure(RuntimeError):
    pass


class RankDeficientError(ValueError):
    pass


@dataclass(frozen=True)
class LinearProgram:
    """``min c.x  s.t.  A x = b``, ``x_j >= 0`` unless ``free[j]``."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    free: np.ndarray = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        free = np.zeros(len(c), bool) if self.free is None else np.asarray(self.free, bool)
        if A.shape != (len(b), len(c)) or free.shape != c.shape:
            raise ValueError(f"inconsistent LP dimensions: A {A.shape}, b {b.shape}, c {c.shape}")
        if not np.all(np.isfinite(b)) or not np.all(np.isfinite(A)) or not np.all(np.isfinite(c)):
            raise ValueError("LP data must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "free", free)

    @property
    def num_vars(self) -> int:
        return len(self.c)

    @property
    def num_constraints(self) -> int:
        return len(self.b)


@dataclass
class LPResult:
    status: str
    value: float
    x: np.ndarray
    iterations: int = 0
    basis: list = field(default_factory=list)


class _Tableau:
    def __init__(self, A, b):
        m, n = A.shape
        self.T = np.hstack([A, b[:, None]])
        self.basis = [-1] * m
        self.iterations = 0

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, j] = 0.0
        T[r, j] = 1.0
        self.basis[r] = j
        self.iterations += 1


def _run_phase(tab, cost, allowed, max_iter, tol_cost, tol_piv):
    """Bland-rule simplex on the current tableau; returns status."""
    T = tab.T
    obj = cost.astype(float).copy()
    obj = np.append(obj, 0.0)
    for r, j in enumerate(tab.basis):
        if obj[j] != 0.0:
            obj -= obj[j] * T[r]
    allowed_idx = np.flatnonzero(allowed)
    while True:
        red = obj[allowed_idx]
        neg = np.flatnonzero(red < -tol_cost)
        if len(neg) == 0:
            return OPTIMAL, obj
        if tab.iterations >= max_iter:
            return "limit", obj
        j = allowed_idx[neg[0]]
        col = T[:, j]
        rows = np.flatnonzero(col > tol_piv)
        if len(rows) == 0:
            return UNBOUNDED, obj
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        r = min(ties, key=lambda i: tab.basis[i])
        tab.pivot(r, j)
        o = obj[j]
        obj -= o * T[r]
        obj[j] = 0.0


def lp_solve(lp: LinearProgram, max_iter: int = 100_000) -> LPResult:
    """Two-phase dense tableau simplex with Bland's anti-cycling rule.

    Free variables are split into positive and negative parts.  Rows whose
    matrix already holds a positive unit-like column start with that column
    basic, so phase one only adds artificials where needed.
    """
    # expand free variables: x_j = p_j - q_j, columns kept adjacent
    cols, cost, back = [], [], []
    for j in range(lp.num_vars):
        cols.append(lp.A[:, j])
        cost.append(lp.c[j])
        back.append((j, 1.0))
        if lp.free[j]:
            cols.append(-lp.A[:, j])
            cost.append(-lp.c[j])
            back.append((j, -1.0))
    m = lp.num_constraints
    A = np.array(cols).T.reshape(m, len(cols)) if cols else np.zeros((m, 0))
    cost = np.array(cost, dtype=float)
    b = lp.b.copy()
    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1
    n = A.shape[1]

    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    tol_piv = 1e-11 * scale
    tol_cost = 1e-12 * max(1.0, float(np.abs(cost).max(initial=0.0)))

    # crash basis from columns that are positive in one row and zero elsewhere
    basis = [-1] * m
    used = set()
    nz = A != 0
    single = np.flatnonzero(nz.sum(axis=0) == 1)
    for j in single:
        r = int(np.flatnonzero(nz[:, j])[0])
        if basis[r] < 0 and A[r, j] > 0 and j not in used:
            basis[r] = int(j)
            used.add(int(j))
    art_rows = [r for r in range(m) if basis[r] < 0]
    n_art = len(art_rows)
    art = np.zeros((m, n_art))
    for k, r in enumerate(art_rows):
        art[r, k] = 1.0
        basis[r] = n + k
    tab = _Tableau(np.hstack([A, art]), b)
    tab.basis = basis
    for r, j in enumerate(basis):
        if tab.T[r, j] != 1.0:
            tab.T[r] /= tab.T[r, j]

    total = n + n_art
    if n_art:
        cost1 = np.zeros(total)
        cost1[n:] = 1.0
        status, obj = _run_phase(tab, cost1, np.ones(total, bool), max_iter, 1e-12, tol_piv)
        if status == "limit":
            raise LPIterationLimit("iteration cap reached in phase one")
        infeas = -obj[-1]
        if infeas > 1e-9 * max(1.0, float(np.abs(b).max(initial=0.0))):
            return LPResult(INFEASIBLE, float("nan"), np.full(lp.num_vars, np.nan), tab.iterations)
        # drive remaining artificials out of the basis
        keep = []
        for r in range(m):
            if tab.basis[r] >= n:
                row = tab.T[r, :n]
                cand = np.flatnonzero(np.abs(row) > tol_piv)
                if len(cand):
                    tab.pivot(r, int(cand[0]))
                    keep.append(r)
            else:
                keep.append(r)
        tab.T = np.ascontiguousarray(np.delete(tab.T[keep], np.s_[n:total], axis=1))
        tab.basis = [tab.basis[r] for r in keep]
        A_eq, b_eq = A[keep], b[keep]
    else:
        A_eq, b_eq = A, b
        tab.T = np.ascontiguousarray(tab.T[:, list(range(n)) + [total]])

    status, obj = _run_phase(tab, cost, np.ones(n, bool), max_iter, tol_cost, tol_piv)
    xe = np.zeros(n)
    basis = list(tab.basis)
    if basis:
        B = A_eq[:, basis]
        try:
            xb = np.linalg.solve(B, b_eq)
        except np.linalg.LinAlgError:
            xb = tab.T[:, -1]
        xe[basis] = np.maximum(xb, 0.0)
    x = np.zeros(lp.num_vars)
    for k, (j, sgn) in enumerate(back):
        x[j] += sgn * xe[k]
    if status == "limit":
        raise LPIterationLimit("iteration cap reached", x, float(lp.c @ x))
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED, float("-inf"), x, tab.iterations, basis)
    return LPResult(OPTIMAL, float(lp.c @ x), x, tab.iterations, basis)


# ---------------------------------------------------------------------------
# best L1 approximation

@dataclass(frozen=True)
class L1Solution:
    coefficients: np.ndarray
    approximant: np.ndarray
    residual_l1: float
    node_signs: np.ndarray
    coincidence: np.ndarray
    tol_coincidence: float

    def certificate_excess(self, basis, weights) -> np.ndarray:
        """Per basis row: ``|sum w G sigma| - sum_Z w |G| - 1e-7 ||G||_1`` (<= 0 when optimal)."""
        G = np.atleast_2d(np.asarray(basis, dtype=float))
        w = np.asarray(weights, dtype=float)
        lhs = np.abs(G @ (w * self.node_signs))
        slack = np.abs(G[:, self.coincidence]) @ w[self.coincidence]
        norms = np.abs(G) @ w
        return lhs - slack - 1e-7 * norms


def check_rank(rows, tol: float = 1e-10) -> bool:
    s = np.linalg.svd(np.atleast_2d(rows), compute_uv=False)
    return bool(len(s) and s[-1] > tol * s[0])


def _solve_l1_lp(F, G, w):
    n, N = G.shape
    I = np.eye(N)
    lp = LinearProgram(
        c=np.concatenate([np.zeros(n), w, w]),
        A=np.hstack([G.T, I, -I]),
        b=F,
        free=np.concatenate([np.ones(n, bool), np.zeros(2 * N, bool)]),
    )
    res = lp_solve(lp)
    if res.status != OPTIMAL:
        raise LPFailure(f"L1 linear program returned {res.status}")
    return res.x[:n]


def best_l1(target, basis, grid_or_weights) -> L1Solution:
    """Minimize ``sum_i w_i |F_i - sum_j alpha_j G_j(t_i)|`` over free ``alpha``."""
    F = np.asarray(target, dtype=float).ravel()
    w = np.asarray(getattr(grid_or_weights, "weights", grid_or_weights), dtype=float)
    G = np.asarray(basis, dtype=float)
    if G.ndim == 1:
        G = G[None, :]
    n, N = G.shape
    if len(F) != N or len(w) != N:
        raise ValueError("target, basis and weights must share the grid size")
    if n and N < n + 1:
        raise ValueError("need at least n + 1 grid nodes")
    if n and not check_rank(G):
        raise RankDeficientError("basis rows are linearly dependent on the grid")
    if not np.any(F) or n == 0:
        alpha = np.zeros(n)
        approx = np.zeros(N)
    else:
        # the problem is invariant under alpha -> alpha + shift; starting from the
        # weighted least-squares residual leaves few node signs for the simplex to fix
        sw = np.sqrt(w)
        shift = np.linalg.lstsq((G * sw).T, F * sw, rcond=None)[0]
        rest = F - shift @ G
        if np.abs(rest).max() <= 1e-13 * np.abs(F).max():
            # target in the span: the objective is already at its lower bound 0
            alpha = shift
        else:
            alpha = _solve_l1_lp(rest, G, w) + shift
        approx = alpha @ G
    resid = F - approx
    tol = 1e-8 * (np.abs(F).max(initial=0.0) + np.abs(approx).max(initial=0.0))
    coincide = np.abs(resid) <= tol
    signs = np.where(coincide, 0.0, np.sign(resid))
    if not np.any(F):
        signs = np.zeros(0)
        coincide = np.zeros(0, bool)
    return L1Solution(
        coefficients=alpha,
        approximant=approx,
        residual_l1=float(np.sum(w * np.abs(resid))),
        node_signs=signs,
        coincidence=coincide,
        tol_coincidence=float(tol),
    )
