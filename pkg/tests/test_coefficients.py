import math

import numpy as np
import pytest

from mckv.coefficients import (SCENARIOS, AssumptionError, CoefficientSet, Constants,
                               TupleSampler, check_assumptions, scenario)
from mckv.transport import DiscreteMeasure, wasserstein_lp


def centered():
    return DiscreteMeasure([[-1.0], [1.0]], [0.5, 0.5])


def test_pure_diffusion_drift_zero():
    cs = scenario("pure-diffusion")
    x = np.linspace(-3, 3, 7)[:, None]
    np.testing.assert_array_equal(cs.drift(0.3, x, np.ones(7), centered()), 0.0)


def test_translation_flow():
    cs = scenario("translation", c=1.0, eps=0.0)
    assert cs.drift(0, np.zeros((3, 1)), np.zeros(3), centered())[:, 0].tolist() == [1.0] * 3
    assert cs.sigma_scalar == 0.0


def test_tanh_mean_zero_at_origin():
    cs = scenario("tanh-mean")
    assert cs.drift(0.0, np.zeros((1, 1)), np.zeros(1), centered())[0, 0] == 0.0


def test_tanh_mean_clips_mean():
    cs = scenario("tanh-mean")
    far = DiscreteMeasure.dirac([100.0])
    assert cs.drift(0.0, np.zeros((1, 1)), np.zeros(1), far)[0, 0] == 2.5


def test_unknown_scenario():
    with pytest.raises(ValueError, match="unknown scenario"):
        scenario("nope")


def test_unknown_parameter():
    with pytest.raises(ValueError):
        scenario("pure-diffusion", speed=3)


def test_constants_validation():
    with pytest.raises(ValueError):
        Constants(C=1.0, beta=1.0, p=1.0, f0_bound=1.0)
    with pytest.raises(ValueError):
        Constants(C=-1.0, beta=0.5, p=1.0, f0_bound=1.0)


@pytest.mark.parametrize("name", SCENARIOS)
def test_builtins_pass(name):
    rep = check_assumptions(scenario(name), n_samples=10_000, seed=1)
    assert rep.passed, rep.worst_ratios
    assert all(v >= 0 for v in rep.worst_ratios.values())


def test_identity_sigma_ratios():
    rep = check_assumptions(scenario("pure-diffusion"), n_samples=200)
    assert rep.worst_ratios["diffusion_bound"] == 1.0
    assert rep.worst_ratios["holder_x"] == 0.0
    assert rep.worst_ratios["drift_envelope"] == 0.0


def test_checker_deterministic():
    a = check_assumptions(scenario("tanh-mean"), n_samples=300, seed=4)
    b = check_assumptions(scenario("tanh-mean"), n_samples=300, seed=4)
    assert a.to_json() == b.to_json()


def test_checker_flags_violation():
    cs = scenario("tanh-mean", density_coef=5.0)
    cs.constants = Constants(C=2.0, beta=0.5, p=1.0, f0_bound=10.0)
    rep = check_assumptions(cs, n_samples=500)
    assert not rep.verdicts["lipschitz_r"]
    assert not rep.passed


def test_checker_nonfinite_names_tuple():
    base = scenario("pure-diffusion")

    def drift(t, x, r, m):
        return np.full_like(x, np.nan)

    cs = CoefficientSet("broken", 1, drift, base.diffusion, base.constants)
    with pytest.raises(AssumptionError, match="non-finite b at t="):
        check_assumptions(cs, n_samples=3)


def test_mean_is_w1_lipschitz():
    sampler = TupleSampler(seed=9)
    for _ in range(300):
        s = sampler.draw(1)
        gap = abs(s["m"].mean()[0] - s["m2"].mean()[0])
        assert gap <= wasserstein_lp(s["m"], s["m2"], 1.0)[0] + 1e-9


def test_report_json_round_trip():
    import json
    rep = check_assumptions(scenario("density-repulsion"), n_samples=50)
    data = json.loads(rep.to_json())
    assert data["passed"] is True
    assert data["sample_count"] == 50
