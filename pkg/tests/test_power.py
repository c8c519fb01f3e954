import math

import numpy as np
import pytest

from powerbandit.envs import EnvSpec, RobustnessScenario, expected_zzt
from powerbandit.numstats import solve_c_beta
from powerbandit.power import Infeasible, PowerSpec, discriminant, noncentrality_at, power_at, solve, solve_clip_range


def spec_for(kind, **scenario):
    env = EnvSpec(kind, scenario=RobustnessScenario(**scenario))
    return PowerSpec(0.05, 0.2, 20, 90, env.sigma2_est, env.delta_est, expected_zzt(env))


def test_discriminant_formula():
    spec = spec_for("scb")
    c = solve_c_beta(0.05, 0.2, 3)
    assert discriminant(spec) == pytest.approx(0.25 * c / (20 * spec.signal))


def test_solution_is_symmetric_and_solves_quadratic():
    spec = spec_for("ascb")
    solved = solve(spec)
    cr = solved.clip_range
    assert cr.pi_min + cr.pi_max == pytest.approx(1.0, abs=1e-12)
    assert cr.pi_min * (1 - cr.pi_min) == pytest.approx(cr.discriminant, rel=1e-12)
    # the fixed-pi noncentrality at the boundary is exactly c_beta
    assert noncentrality_at(cr.pi_min, spec) == pytest.approx(solved.c_beta, rel=1e-10)
    assert power_at(cr.pi_min, spec) == pytest.approx(0.8, abs=1e-7)


def test_power_inside_range_exceeds_target():
    spec = spec_for("scb")
    cr = solve_clip_range(spec)
    for pi in np.linspace(cr.pi_min, cr.pi_max, 9):
        assert power_at(pi, spec) >= 0.8 - 1e-7


def test_scb_reference_range():
    cr = solve_clip_range(spec_for("scb"))
    assert cr.pi_min == pytest.approx(0.2303, abs=5e-4)


def test_directional_orderings():
    lo = solve_clip_range(spec_for("scb", effect_scale=1 / 1.1)).pi_min
    mid = solve_clip_range(spec_for("scb")).pi_min
    hi = solve_clip_range(spec_for("scb", effect_scale=1.1)).pi_min
    assert lo > mid > hi
    under = solve_clip_range(spec_for("ascb", noise="under")).pi_min
    over = solve_clip_range(spec_for("ascb", noise="over")).pi_min
    assert under < solve_clip_range(spec_for("ascb")).pi_min < over


def test_infeasible_design():
    spec = spec_for("scb")
    spec.N = 5
    with pytest.raises(Infeasible):
        solve(spec)


def test_boundary_discriminant_gives_half():
    spec = spec_for("scb")
    spec.sigma2 = spec.sigma2 * 0.25 / discriminant(spec)
    cr = solve_clip_range(spec)
    assert cr.pi_min == pytest.approx(0.5, abs=1e-6)


def test_zero_signal_rejected():
    spec = PowerSpec(0.05, 0.2, 20, 90, 1.0, np.zeros(3), np.eye(3))
    with pytest.raises(ValueError):
        solve(spec)
    assert power_at(0.5, spec) == pytest.approx(0.05, abs=1e-9)


def test_powerspec_validation():
    with pytest.raises(ValueError):
        PowerSpec(0.05, 0.2, 20, 90, 1.0, np.ones(3), np.eye(2))
    with pytest.raises(ValueError):
        PowerSpec(0.05, 0.2, 20, 90, 1.0, np.ones(2), np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        PowerSpec(0.05, 0.2, 20, 90, -1.0, np.ones(2), np.eye(2))
    with pytest.raises(ValueError):
        power_at(1.0, spec_for("scb"))


def test_monte_carlo_power_at_pi_min_matches_target():
    # simulate the limiting chi-square statistic directly at the solved noncentrality
    spec = spec_for("scb")
    cr = solve_clip_range(spec)
    c = noncentrality_at(cr.pi_min, spec)
    g = np.random.default_rng(0)
    draws = g.noncentral_chisquare(3, c, 400_000)
    from powerbandit.numstats import chi2_inv

    assert np.mean(draws > chi2_inv(0.95, 3)) == pytest.approx(0.8, abs=0.003)
