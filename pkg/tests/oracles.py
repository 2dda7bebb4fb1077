"""Brute-force reference solutions used to cross-check the solvers."""

import itertools

import numpy as np


def lp_vertex_min(c, A, b, tol=1e-9):
    """min c.x over {Ax = b, x >= 0} by enumerating every basis (A full row rank)."""
    m, n = A.shape
    best = np.inf
    for cols in itertools.combinations(range(n), m):
        B = A[:, cols]
        if abs(np.linalg.det(B)) < 1e-12:
            continue
        xb = np.linalg.solve(B, b)
        if np.all(xb >= -tol):
            best = min(best, float(c[list(cols)] @ xb))
    return best


def box_vertex_max(s, G, tol=1e-9):
    """max s.x over {G x = 0, -1 <= x <= 1}: fix N - n coordinates at +-1, solve the rest."""
    G = np.atleast_2d(G)
    n, N = G.shape
    best = -np.inf
    for fixed in itertools.combinations(range(N), N - n):
        free = [i for i in range(N) if i not in fixed]
        Gf = G[:, free]
        if n and abs(np.linalg.det(Gf)) < 1e-12:
            continue
        for signs in itertools.product((-1.0, 1.0), repeat=len(fixed)):
            x = np.zeros(N)
            x[list(fixed)] = signs
            if n:
                x[free] = np.linalg.solve(Gf, -G[:, list(fixed)] @ np.array(signs))
            if np.all(np.abs(x) <= 1 + tol):
                best = max(best, float(s @ x))
    return best


def weighted_median(values, weights):
    order = np.argsort(values)
    v, w = np.asarray(values)[order], np.asarray(weights)[order]
    cum = np.cumsum(w)
    return float(v[np.searchsorted(cum, 0.5 * cum[-1])])
