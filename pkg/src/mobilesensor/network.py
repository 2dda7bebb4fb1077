"""Static DFS sensor network versus a single fast-relocating sensor."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .fieldexpr import parse_field
from .l1approx import OPTIMAL, LinearProgram, LPFailure, check_rank, lp_solve

__all__ = [
    "NetworkDesign",
    "optimal_dfs_coefficients",
    "dfs_qfi",
    "moving_sensor_qfi",
    "enhancement_factor",
    "compare_network",
    "network_from_fields",
]


def optimal_dfs_coefficients(s, G) -> np.ndarray:
    """Maximize ``<s, s'>`` over ``s' in [-1, 1]^N`` with ``G s' = 0``.

    Solved as an LP in ``p = s' + 1 in [0, 2]`` with upper-bound slacks.  The
    optimal value is unique; on a degenerate face the returned vertex is the
    one Bland's rule reaches first.
    """
    s = np.asarray(s, dtype=float).ravel()
    N = len(s)
    G = np.asarray(G, dtype=float).reshape(-1, N)
    n = G.shape[0]
    if n and N < n + 1:
        raise ValueError("need at least n + 1 sensors")
    if n and not check_rank(G):
        warnings.warn("noise rows are linearly dependent", RuntimeWarning, stacklevel=2)
    I = np.eye(N)
    A = np.block([[G, np.zeros((n, N))], [I, I]])
    b = np.concatenate([G @ np.ones(N), np.full(N, 2.0)])
    res = lp_solve(LinearProgram(c=np.concatenate([-s, np.zeros(N)]), A=A, b=b))
    if res.status != OPTIMAL:
        raise LPFailure(f"DFS linear program returned {res.status}")
    return np.clip(res.x[:N] - 1.0, -1.0, 1.0)


def dfs_qfi(s, s_star, T: float) -> float:
    return 4 * float(np.dot(s, s_star)) ** 2 * T**2


def _l1(s_star) -> float:
    norm = float(np.sum(np.abs(s_star)))
    if norm == 0:
        raise ValueError("all-zero coefficient vector")
    return norm


def moving_sensor_qfi(s, s_star, N: int, T: float) -> tuple[float, np.ndarray]:
    """QFI of one sensor visiting the N sites for time fractions ``r_j = |s*_j| / ||s*||_1``."""
    norm = _l1(s_star)
    r = np.abs(np.asarray(s_star, dtype=float)) / norm
    return 4 * (N / norm) ** 2 * float(np.dot(s, s_star)) ** 2 * T**2, r


def enhancement_factor(s_star, N: int) -> float:
    return (N / _l1(s_star)) ** 2


@dataclass(frozen=True)
class NetworkDesign:
    s: np.ndarray
    G: np.ndarray
    s_star: np.ndarray
    r: np.ndarray
    signs: np.ndarray
    T: float
    dfs_qfi: float
    moving_qfi: float
    enhancement: float
    positions: np.ndarray | None = None

    def noise_phase(self) -> np.ndarray:
        """Per noise row: ``sum_j r_j sgn(s*_j) g_i(x_j)``, zero when cancelled."""
        return self.G @ (self.r * self.signs)

    def to_record(self) -> dict:
        return {
            "dfs_qfi": self.dfs_qfi,
            "moving_qfi": self.moving_qfi,
            "enhancement": self.enhancement,
            "s_star": self.s_star.tolist(),
            "r": self.r.tolist(),
        }


def compare_network(s, G, T: float, positions=None) -> NetworkDesign:
    s = np.asarray(s, dtype=float).ravel()
    N = len(s)
    G = np.asarray(G, dtype=float).reshape(-1, N)
    s_star = optimal_dfs_coefficients(s, G)
    static = dfs_qfi(s, s_star, T)
    if not np.any(s_star):
        zero = np.zeros(N)
        return NetworkDesign(s, G, s_star, zero, zero, T, static, 0.0, float("nan"), positions)
    moving, r = moving_sensor_qfi(s, s_star, N, T)
    return NetworkDesign(
        s, G, s_star, r, np.sign(s_star), T, static, moving, enhancement_factor(s_star, N), positions
    )


def network_from_fields(
    signal,
    noise: Sequence,
    positions,
    T: float,
    params: Mapping[str, float] | None = None,
) -> NetworkDesign:
    """Sample the signal and noise fields at the sensor positions and compare."""
    X = np.atleast_2d(np.asarray(positions, dtype=float))
    f = parse_field(signal, params)
    s = np.broadcast_to(f.evaluate(X, 0.0, params), (len(X),)).astype(float)
    G = np.array(
        [np.broadcast_to(parse_field(g, params).evaluate(X, 0.0, params), (len(X),)) for g in noise]
    ).reshape(len(noise), len(X))
    return compare_network(s, G, T, X)
