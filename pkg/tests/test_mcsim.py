import numpy as np
import pytest
from scipy import stats

from mobilesensor.control import SignSwitch, optimal_sign_control
from mobilesensor.mcsim import (
    CHUNK,
    NoiseModel,
    RamseyScenario,
    SaturatedStatisticsError,
    estimate_omega,
    run_trials,
    simulate_shots,
    sweep,
)
from mobilesensor.trajectory import ParametricPath, default_grid

LINE = ParametricPath(["t"], 1.0)
GRID = default_grid(1.0)
NOISE = ["1", "x1"]
BIAS = np.pi / 2 - 0.25


@pytest.fixture(scope="module")
def optimal():
    return optimal_sign_control("x1^2", NOISE, LINE, GRID).schedule


def test_quarter_turn_gives_half(optimal):
    # delta * omega * phi_f = pi/2 with phi_f = 1/16 and delta = 2
    omega = (np.pi / 2) / (2 * (1 / 16))
    rec = simulate_shots("x1^2", NOISE, optimal, LINE, GRID, omega, NoiseModel((0.0, 0.0)), 2.0, 0.0, 100_000, 1)
    assert abs(rec.plus / rec.shots - 0.5) <= 0.005


def test_zero_phase_all_plus():
    rec = simulate_shots("0", ["0"], SignSwitch(1.0, 1, []), LINE, GRID, 3.0, NoiseModel((1.0,)), 2.0, 0.0, 5000, 2)
    assert rec.plus == 5000


def test_full_dephasing():
    for omega in (0.3, 1.7):
        rec = simulate_shots("x1", ["1"], SignSwitch(1.0, 1, []), LINE, GRID, omega, NoiseModel((10.0,)), 2.0, 0.0,
                             100_000, 3)
        assert abs(rec.plus / rec.shots - 0.5) <= 0.01


def test_seeded_determinism(optimal):
    scen = RamseyScenario.from_design("x1^2", NOISE, optimal, LINE, GRID, 1.0, NoiseModel((1.0, 1.0)), 2.0, BIAS)
    a = scen.simulate(150_000, 11)
    np.testing.assert_array_equal(a, scen.simulate(150_000, 11))
    assert not np.array_equal(a, scen.simulate(150_000, 12))
    # chunk seeds do not depend on the total shot count
    np.testing.assert_array_equal(a[:CHUNK], scen.simulate(CHUNK, 11))


def test_cancellation_transfer(optimal):
    m = 200_000
    quiet = RamseyScenario.from_design("x1^2", NOISE, optimal, LINE, GRID, 1.0, NoiseModel((0.0, 0.0)), 2.0, BIAS)
    loud = RamseyScenario.from_design("x1^2", NOISE, optimal, LINE, GRID, 1.0, NoiseModel((10.0, 10.0)), 2.0, BIAS)
    k0 = int(quiet.simulate(m, 5).sum())
    k1 = int(loud.simulate(m, 6).sum())
    # two-proportion test between the noiseless and noisy runs
    table = np.array([[k0, m - k0], [k1, m - k1]])
    assert stats.chi2_contingency(table)[1] > 0.01
    p_theory = 0.5 * (1 + np.cos(2 * quiet.phi_f + BIAS))
    assert stats.binomtest(k1, m, p_theory).pvalue > 0.01


def test_estimate_omega_bootstrap(optimal):
    scen = RamseyScenario.from_design("x1^2", NOISE, optimal, LINE, GRID, 1.0, NoiseModel((0.0, 0.0)), 2.0, BIAS)
    out = scen.simulate(100_000, 9)
    res = estimate_omega(out, scen.phi_f, 2.0, BIAS, n_boot=4000, seed=1)
    assert 0.9 <= res.ratio <= 1.1
    assert abs(res.estimate - 1.0) <= 5 * np.sqrt(res.crb)
    assert set(res.to_record()) == {"shots", "estimate", "variance", "crb", "ratio"}


def test_estimate_errors():
    with pytest.raises(SaturatedStatisticsError):
        estimate_omega(np.ones(10, bool), 0.1, 2.0, BIAS)
    with pytest.raises(ValueError):
        estimate_omega(np.array([True, False]), 0.0, 2.0, BIAS)


def test_crb_consistency(optimal):
    scen = RamseyScenario.from_design("x1^2", NOISE, optimal, LINE, GRID, 1.0, NoiseModel((0.0, 0.0)), 2.0, BIAS)
    trials = 400
    sd = np.sqrt(2 / trials)
    ratios = [run_trials(scen, m, trials, 100 + i).ratio for i, m in enumerate((1_000, 10_000, 100_000))]
    for r in ratios:
        assert abs(r - 1) <= 4 * sd
    assert abs(ratios[-1] - 1) <= abs(ratios[0] - 1) + 4 * sd


def test_sweep_rows(optimal):
    scen = RamseyScenario.from_design("x1^2", NOISE, optimal, LINE, GRID, 1.0, NoiseModel((0.0, 0.0)), 2.0, BIAS)
    rows = sweep(scen, [1000, 4000], seed=3)
    assert [r[0] for r in rows] == [1000, 4000]
    assert all(r[3] == pytest.approx(r[1] / r[2]) for r in rows)
    assert sweep(scen, [1000, 4000], seed=3) == rows


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel((-1.0,))
    with pytest.raises(ValueError):
        RamseyScenario(0.1, [0.0, 0.0], 2.0, 0.0, 1.0, NoiseModel((1.0,)))
    with pytest.raises(ValueError):
        RamseyScenario(0.1, [], 0.0, 0.0, 1.0)
