"""Monte Carlo Ramsey estimation of the signal amplitude under fluctuating noise.

Randomness comes from numpy's PCG64 bit generator.  Shots are drawn in fixed
chunks of ``CHUNK`` whose seeds are spawned from one ``SeedSequence``, so the
outcome sequence depends only on the seed and the shot count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .control import phase_functional
from .trajectory import QuadratureGrid

__all__ = [
    "CHUNK",
    "NoiseModel",
    "RamseyScenario",
    "ShotRecord",
    "SimResult",
    "TrialSummary",
    "SaturatedStatisticsError",
    "simulate_shots",
    "estimate_omega",
    "run_trials",
    "sweep",
]

CHUNK = 1 << 16


class SaturatedStatisticsError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Independent zero-mean Gaussian amplitudes, redrawn every shot."""

    sigmas: tuple = ()

    def __post_init__(self):
        s = tuple(float(x) for x in self.sigmas)
        if any(x < 0 for x in s):
            raise ValueError("noise standard deviations must be non-negative")
        object.__setattr__(self, "sigmas", s)


@dataclass(frozen=True)
class RamseyScenario:
    """Phase model ``phi = delta (omega phi_f + sum beta_j phi_g[j]) + bias``."""

    phi_f: float
    phi_g: np.ndarray
    delta: float
    bias_phase: float
    omega_true: float
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        phi_g = np.asarray(self.phi_g, dtype=float).ravel()
        if self.delta <= 0:
            raise ValueError("generator spectral range must be positive")
        sig = self.noise.sigmas or (0.0,) * len(phi_g)
        if len(sig) != len(phi_g):
            raise ValueError("one noise standard deviation per noise field is required")
        object.__setattr__(self, "phi_g", phi_g)
        object.__setattr__(self, "noise", NoiseModel(sig))

    @classmethod
    def from_design(
        cls,
        f,
        noise_fields: Sequence,
        control,
        path,
        grid: QuadratureGrid,
        omega_true: float,
        noise_model: NoiseModel,
        delta: float,
        bias_phase: float,
        params=None,
    ) -> "RamseyScenario":
        phi_f = phase_functional(f, path, control, grid, params)
        phi_g = [phase_functional(g, path, control, grid, params) for g in noise_fields]
        return cls(phi_f, np.array(phi_g), delta, bias_phase, omega_true, noise_model)

    @property
    def crb(self) -> float:
        """Per-shot Cramer-Rao variance ``1 / (delta phi_f)^2``."""
        return 1.0 / (self.delta * self.phi_f) ** 2

    def _chunk(self, rng: np.random.Generator, size: int) -> np.ndarray:
        phase = np.full(size, self.delta * self.omega_true * self.phi_f + self.bias_phase)
        for sd, pg in zip(self.noise.sigmas, self.phi_g):
            if sd > 0 and pg != 0:
                phase += self.delta * pg * rng.normal(0.0, sd, size)
        p_plus = 0.5 * (1.0 + np.cos(phase))
        return rng.random(size) < p_plus

    def simulate(self, m: int, seed: int) -> np.ndarray:
        """Boolean outcomes (True for '+') of ``m`` shots."""
        if m < 1:
            raise ValueError("need at least one shot")
        n_chunks = -(-m // CHUNK)
        children = np.random.SeedSequence(seed).spawn(n_chunks)
        out = np.empty(m, dtype=bool)
        for k, child in enumerate(children):
            lo = k * CHUNK
            size = min(CHUNK, m - lo)
            out[lo : lo + size] = self._chunk(np.random.Generator(np.random.PCG64(child)), size)
        return out

    def invert(self, p_hat):
        """Phase inversion on the ``[0, pi]`` branch."""
        phi = np.arccos(np.clip(2 * np.asarray(p_hat, dtype=float) - 1, -1.0, 1.0))
        return (phi - self.bias_phase) / (self.delta * self.phi_f)


@dataclass(frozen=True)
class ShotRecord:
    outcomes: np.ndarray
    scenario: RamseyScenario

    @property
    def shots(self) -> int:
        return len(self.outcomes)

    @property
    def plus(self) -> int:
        return int(np.count_nonzero(self.outcomes))


def simulate_shots(
    f,
    noise_fields,
    control,
    path,
    grid,
    omega_true: float,
    noise_model: NoiseModel,
    delta: float,
    bias_phase: float,
    m: int,
    seed: int,
    params=None,
) -> ShotRecord:
    scen = RamseyScenario.from_design(
        f, noise_fields, control, path, grid, omega_true, noise_model, delta, bias_phase, params
    )
    return ShotRecord(scen.simulate(m, seed), scen)


@dataclass(frozen=True)
class SimResult:
    shots: int
    estimate: float
    variance: float
    crb: float

    @property
    def ratio(self) -> float:
        return self.variance / self.crb

    def to_record(self) -> dict:
        return {
            "shots": self.shots,
            "estimate": self.estimate,
            "variance": self.variance,
            "crb": self.crb,
            "ratio": self.ratio,
        }


def estimate_omega(
    outcomes,
    phi_f: float,
    delta: float,
    bias_phase: float,
    n_boot: int = 200,
    seed: int = 0,
) -> SimResult:
    """Invert the '+' fraction for omega; variance from binomial bootstrap resamples."""
    outcomes = np.asarray(outcomes, dtype=bool)
    m = len(outcomes)
    if m < 1:
        raise ValueError("need at least one shot")
    if phi_f == 0:
        raise ValueError("signal phase functional is zero; omega is not identifiable")
    k = int(np.count_nonzero(outcomes))
    if k in (0, m):
        raise SaturatedStatisticsError(f"'+' fraction {k}/{m} is saturated")
    scen = RamseyScenario(phi_f, np.zeros(0), delta, bias_phase, 0.0)
    p_hat = k / m
    rng = np.random.Generator(np.random.PCG64(seed))
    boot = scen.invert(rng.binomial(m, p_hat, n_boot) / m)
    return SimResult(m, float(scen.invert(p_hat)), float(np.var(boot, ddof=1)), scen.crb / m)


@dataclass(frozen=True)
class TrialSummary:
    shots: int
    trials: int
    estimates: np.ndarray
    mse: float
    crb: float

    @property
    def ratio(self) -> float:
        return self.mse / self.crb

    def to_record(self) -> dict:
        return {"shots": self.shots, "trials": self.trials, "mse": self.mse, "crb": self.crb, "ratio": self.ratio}


def run_trials(scenario: RamseyScenario, m: int, trials: int, seed: int, crb: float | None = None) -> TrialSummary:
    """Repeat the ``m``-shot experiment; the spread is the mean squared error about ``omega_true``.

    Unlike the bootstrap this also registers bias, e.g. from dephasing that
    washes out the fringe.  ``crb`` defaults to the scenario's own bound.
    """
    seeds = np.random.SeedSequence(seed).generate_state(trials, dtype=np.uint64)
    est = np.empty(trials)
    for i, s in enumerate(seeds):
        k = np.count_nonzero(scenario.simulate(m, int(s)))
        est[i] = scenario.invert(k / m)
    bound = (scenario.crb / m) if crb is None else crb
    return TrialSummary(m, trials, est, float(np.mean((est - scenario.omega_true) ** 2)), bound)


def sweep(scenario: RamseyScenario, shot_counts: Sequence[int], seed: int, trials: int = 0, n_boot: int = 200):
    """Rows ``(m, variance, crb, ratio)``; repeated trials when ``trials > 0``, else bootstrap."""
    rows = []
    for i, m in enumerate(shot_counts):
        sub = seed + i
        if trials > 0:
            res = run_trials(scenario, int(m), trials, sub)
            rows.append((int(m), res.mse, res.crb, res.ratio))
        else:
            out = scenario.simulate(int(m), sub)
            r = estimate_omega(out, scenario.phi_f, scenario.delta, scenario.bias_phase, n_boot, sub)
            rows.append((int(m), r.variance, r.crb, r.ratio))
    return rows
