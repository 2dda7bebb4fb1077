"""Quantum Fisher information bounds from spectral gaps of imprinting generators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .fieldexpr import parse_field
from .trajectory import QuadratureGrid, sample_composite

__all__ = [
    "NonHermitianError",
    "HermitianOperator",
    "QfiReport",
    "PAULI",
    "PauliGenerator",
    "eigen_range",
    "qfi_bound",
    "qfi_spatial_frequency",
    "qfi_velocity_schedule",
    "qfi_accelerated",
    "qfi_fast_relocation",
    "qfi_moving_general",
    "spatial_frequency_generator",
]

MAX_JACOBI_DIM = 32

PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class NonHermitianError(ValueError):
    pass


class HermitianOperator:
    """Dense Hermitian matrix, checked on construction."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        M = np.atleast_2d(np.asarray(matrix, dtype=complex))
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise NonHermitianError(f"operator must be square, got shape {M.shape}")
        scale = float(np.abs(M).max(initial=0.0))
        if np.abs(M - M.conj().T).max(initial=0.0) > 1e-12 * scale:
            raise NonHermitianError("operator is not Hermitian")
        self.matrix = 0.5 * (M + M.conj().T)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


def _as_operator(H) -> HermitianOperator:
    return H if isinstance(H, HermitianOperator) else HermitianOperator(H)


def _jacobi_eigenvalues(A: np.ndarray, max_sweeps: int = 100) -> np.ndarray:
    """Cyclic complex Jacobi: each (p, q) block is made real by a phase, then rotated."""
    A = A.copy()
    D = A.shape[0]
    norm = np.linalg.norm(A)
    if norm == 0:
        return np.zeros(D)
    tol = 1e-12 * norm
    for _ in range(max_sweeps):
        if np.linalg.norm(A - np.diag(np.diag(A))) <= tol:
            break
        for p in range(D - 1):
            for q in range(p + 1, D):
                apq = A[p, q]
                r = abs(apq)
                if r <= 1e-18 * norm:
                    continue
                e = apq / r
                tau = (A[q, q].real - A[p, p].real) / (2 * r)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1 + tau * tau))
                c = 1 / np.sqrt(1 + t * t)
                s = t * c
                U = np.array([[c, s], [-s * np.conj(e), c * np.conj(e)]])
                idx = [p, q]
                A[:, idx] = A[:, idx] @ U
                A[idx, :] = U.conj().T @ A[idx, :]
                A[p, q] = A[q, p] = 0.0
    else:
        raise RuntimeError("Jacobi sweeps did not converge")
    return np.sort(np.diag(A).real)


def eigen_range(H) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a Hermitian operator."""
    op = _as_operator(H)
    M = op.matrix
    if op.dimension == 1:
        v = float(M[0, 0].real)
        return v, v
    if op.dimension == 2:
        mid = 0.5 * (M[0, 0].real + M[1, 1].real)
        rad = np.hypot(0.5 * (M[0, 0].real - M[1, 1].real), abs(M[0, 1]))
        return float(mid - rad), float(mid + rad)
    if op.dimension > MAX_JACOBI_DIM:
        raise ValueError(f"dimension {op.dimension} exceeds the Jacobi limit {MAX_JACOBI_DIM}")
    ev = _jacobi_eigenvalues(M)
    return float(ev[0]), float(ev[-1])


@dataclass(frozen=True)
class QfiReport:
    bound: float
    gap_samples: np.ndarray
    method: str

    def to_record(self) -> dict:
        return {"bound": self.bound, "method": self.method, "gap_samples": list(map(float, self.gap_samples))}


def qfi_bound(dH, grid: QuadratureGrid) -> QfiReport:
    """``[int (mu_max - mu_min) dt]^2`` for the generator derivative ``dH``.

    ``dH`` is a callable ``t -> matrix`` or a sequence of matrices sampled at
    the grid nodes.
    """
    nodes = grid.nodes
    if callable(dH):
        mats = [dH(float(t)) for t in nodes]
    else:
        mats = list(dH)
        if len(mats) != len(nodes):
            raise ValueError("sampled generator must match the grid nodes")
    ops = [_as_operator(m) for m in mats]
    gaps = np.array([hi - lo for lo, hi in map(eigen_range, ops)])
    dims = {op.dimension for op in ops}
    method = "analytic-2x2" if dims <= {1, 2} else "jacobi"
    integral = float(np.sum(grid.weights * gaps))
    return QfiReport(integral**2, gaps, method)


class PauliGenerator:
    """Two-level generator ``sum_a c_a(x, t) sigma_a`` with field-expression coefficients."""

    def __init__(self, terms: Mapping[str, object], params: Mapping[str, float] | None = None):
        bad = set(terms) - set(PAULI)
        if bad:
            raise ValueError(f"unknown Pauli labels {sorted(bad)}")
        self.terms = {k: parse_field(v) for k, v in terms.items()}
        self.params = dict(params or {})

    def derivative(self, name: str) -> "PauliGenerator":
        gen = PauliGenerator({}, self.params)
        gen.terms = {k: e.diff(name) for k, e in self.terms.items()}
        return gen

    def matrix(self, point, t: float = 0.0) -> np.ndarray:
        M = np.zeros((2, 2), dtype=complex)
        for label, e in self.terms.items():
            M += float(e.evaluate(np.atleast_1d(np.asarray(point, dtype=float)), t, self.params)) * PAULI[label]
        return M

    def along(self, path) -> Callable[[float], np.ndarray]:
        return lambda t: self.matrix(path.position_at(t), t)


def spatial_frequency_generator(B: float, k: float) -> PauliGenerator:
    """``B [cos(k x) sigma_x + sin(k x) sigma_y]``, a field rotating in space at rate k."""
    return PauliGenerator({"x": "B*cos(k*x1)", "y": "B*sin(k*x1)"}, {"B": B, "k": k})


def qfi_spatial_frequency(B: float, v: float, T: float) -> float:
    if T < 0:
        raise ValueError("T must be non-negative")
    return B**2 * v**2 * T**4


def qfi_velocity_schedule(v, B: float, grid: QuadratureGrid) -> float:
    """``4 B^2 [int v(t) t dt]^2`` with ``v`` sampled at the grid nodes."""
    v = np.asarray(v, dtype=float)
    if v.shape != grid.nodes.shape or not np.all(np.isfinite(v)):
        raise ValueError("velocity samples must be finite and match the grid")
    return 4 * B**2 * float(np.sum(grid.weights * v * grid.nodes)) ** 2


def qfi_accelerated(B: float, v0: float, a: float, T: float) -> float:
    """Uniform acceleration ``v(t) = v0 + a t``."""
    # same operation order as the constant-speed form, so a = 0 reproduces it exactly
    return B**2 * (v0**2 + 4 * v0 * a * T / 3 + 4 * a**2 * T**2 / 9) * T**4


def qfi_fast_relocation(B: float, T: float, L: float) -> float:
    if L < 0:
        raise ValueError("L must be non-negative")
    return 4 * B**2 * T**2 * L**2


def qfi_moving_general(
    f,
    path,
    spec_range_G: float,
    grid: QuadratureGrid,
    param: str | None = None,
    params: Mapping[str, float] | None = None,
) -> float:
    """``||G||_spec^2 [int f(gamma(t)) dt]^2``; with ``param`` the field is differentiated first."""
    if spec_range_G <= 0:
        raise ValueError("spectral range must be positive")
    expr = parse_field(f)
    if param is not None:
        expr = expr.diff(param)
    vals = sample_composite(expr, path, grid, params)
    return spec_range_G**2 * float(np.sum(grid.weights * vals)) ** 2
