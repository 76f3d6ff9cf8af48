import math

import numpy as np
import pytest

from latentcss.model_core import elicit_hyperparameters, linear_predictor, norm_cdf
from latentcss.sampler import STEPS, indicator_probability, step_indicators
from latentcss.synth import (GEWEKE_STATISTICS, SynthScenario, draw_css, effective_sample_size,
                             geweke_harness, simulate_css, strong_signal_scenario)

from conftest import random_state


def test_zero_signal_density_near_half():
    n, K = 12, 2
    h = elicit_hyperparameters(K)
    fixed = {"beta": np.zeros((n, 1)), "u": np.zeros((n, n, K)), "v": np.zeros((n, n, K))}
    Y, truth = simulate_css(SynthScenario(n, K, fixed=fixed), h, 0)
    assert abs(Y.values.sum() / Y.n_cells - 0.5) < 4 * math.sqrt(0.25 / Y.n_cells)


def test_simulation_reproducible():
    h = elicit_hyperparameters(2)
    a = simulate_css(SynthScenario(6, 2), h, 5)
    b = simulate_css(SynthScenario(6, 2), h, 5)
    assert a[0] == b[0] and a[1].to_text() == b[1].to_text()
    c = simulate_css(SynthScenario(6, 2), h, 6)
    assert c[1].to_text() != a[1].to_text()


def test_fixed_state_is_pure_in_seed(rng):
    s = random_state(5, 2, rng)
    h = elicit_hyperparameters(2)
    Y1, t1 = simulate_css(SynthScenario(5, 2, state=s), h, 3)
    Y2, _ = simulate_css(SynthScenario(5, 2, state=s), h, 3)
    assert Y1 == Y2 and t1.to_text() == s.to_text()


def test_cell_frequencies_converge_to_theta(rng):
    s = random_state(4, 2, rng)
    theta = norm_cdf(linear_predictor(s))
    reps = 4000
    counts = sum(draw_css(s, None, rng).values.astype(float) for _ in range(reps))
    mask = ~np.eye(4, dtype=bool)[:, :, None].repeat(4, axis=2)
    dev = np.abs(counts / reps - theta)[mask]
    bound = 4 * np.sqrt(theta * (1 - theta) / reps)[mask]
    assert np.all(dev <= bound + 1e-12)


def test_spike_roster():
    h = elicit_hyperparameters(2)
    _, truth = simulate_css(SynthScenario(6, 2, sender_spikes=[0, 4], receiver_spikes=[]), h, 1)
    np.testing.assert_array_equal(truth.gamma, [0, 1, 1, 1, 0, 1])
    np.testing.assert_array_equal(truth.xi, np.ones(6))


@pytest.mark.parametrize("kw", [dict(sender_spikes=[7]), dict(receiver_spikes=[-1]),
                                dict(eta_scale=0.0), dict(zeta_scale=-1.0)])
def test_scenario_validation(kw):
    with pytest.raises(ValueError):
        SynthScenario(5, 2, **kw)


def test_scenario_hyper_mismatch():
    with pytest.raises(ValueError):
        simulate_css(SynthScenario(4, 3), elicit_hyperparameters(2), 0)


def test_signal_scale():
    h = elicit_hyperparameters(2)
    _, big = simulate_css(SynthScenario(200, 2, eta_scale=5.0), h, 0)
    assert big.eta.std() == pytest.approx(5 * math.sqrt(h.kappa2), rel=0.1)


def test_strong_signal_scenario():
    scen = strong_signal_scenario(10, 2, spikes=(0, 3), radius=3.0, rng=0)
    np.testing.assert_allclose(np.linalg.norm(scen.fixed["eta"], axis=1), 3.0)
    _, truth = simulate_css(scen, elicit_hyperparameters(2), 0)
    assert truth.gamma[0] == truth.gamma[3] == 0 and truth.gamma.sum() == 8
    assert np.linalg.norm(truth.u[0, 0]) < 1.0


def test_ess_iid_and_ar1():
    rng = np.random.default_rng(0)
    n = 20_000
    assert effective_sample_size(rng.standard_normal(n)) == pytest.approx(n, rel=0.1)
    rho = 0.9
    x = np.empty(n)
    x[0] = rng.standard_normal()
    for t in range(1, n):
        x[t] = rho * x[t - 1] + rng.standard_normal()
    assert effective_sample_size(x) == pytest.approx(n * (1 - rho) / (1 + rho), rel=0.25)
    assert effective_sample_size(np.ones(10)) == 10.0


@pytest.mark.parametrize("n_outer", [0, 1])
def test_geweke_needs_samples(n_outer):
    with pytest.raises(ValueError, match="insufficient"):
        geweke_harness(4, 2, None, n_outer, 0)


def test_geweke_small_run():
    res = geweke_harness(4, 2, elicit_hyperparameters(2), 300, 0)
    assert set(res.z) == set(GEWEKE_STATISTICS)
    assert all(math.isfinite(z) for z in res.z.values())
    lines = res.to_csv().splitlines()
    assert lines[0] == "statistic,mc_mean,sc_mean,z" and len(lines) == 1 + len(GEWEKE_STATISTICS)


def _flipped_indicators(ctx, s, rng):
    idx = np.arange(ctx.n)
    p1 = 1.0 - indicator_probability(s.u[idx, idx], s.eta, s.sigma_u2, s.tau_u2, s.psi)
    s.gamma = (rng.random(ctx.n) < p1).astype(np.int8)
    p1 = 1.0 - indicator_probability(s.v[idx, idx], s.zeta, s.sigma_v2, s.tau_v2, s.psi)
    s.xi = (rng.random(ctx.n) < p1).astype(np.int8)


def test_geweke_detects_broken_indicator_step():
    steps = tuple(_flipped_indicators if f is step_indicators else f for f in STEPS)
    res = geweke_harness(6, 2, elicit_hyperparameters(2), 10_000, 0, steps=steps)
    assert res.max_abs_z() > 6
