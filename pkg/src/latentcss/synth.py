"""Forward simulation from the generative model and the joint-distribution
("getting it right") test of the Gibbs sampler."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .css_data import CssTensor, DyadCovariates, intercept_only, offdiag_mask
from .model_core import Hyperparameters, LatentState, draw_from_prior, linear_predictor, norm_cdf
from .sampler import STEPS, SweepContext

__all__ = [
    "SynthScenario",
    "simulate_css",
    "draw_css",
    "strong_signal_scenario",
    "effective_sample_size",
    "GEWEKE_STATISTICS",
    "geweke_harness",
    "GewekeResult",
]


@dataclass
class SynthScenario:
    """What to simulate.

    ``state`` fixes every parameter; otherwise unspecified blocks come from the
    prior, with ``fixed`` pinning individual blocks.  Actors listed (0-based)
    in ``sender_spikes`` / ``receiver_spikes`` get ``gamma = 0`` / ``xi = 0``;
    all others get 1 when a roster is given.  ``eta_scale`` / ``zeta_scale``
    multiply the consensus positions after drawing.
    """

    n_actors: int
    K: int
    p: int = 1
    state: LatentState | None = None
    fixed: dict = field(default_factory=dict)
    sender_spikes: Sequence[int] | None = None
    receiver_spikes: Sequence[int] | None = None
    eta_scale: float = 1.0
    zeta_scale: float = 1.0

    def __post_init__(self):
        for roster in (self.sender_spikes, self.receiver_spikes):
            if roster is not None and any(not 0 <= a < self.n_actors for a in roster):
                raise ValueError("spike roster entries must be actor indices")
        if not (self.eta_scale > 0 and self.zeta_scale > 0):
            raise ValueError("signal scales must be positive")


def draw_css(state: LatentState, X: DyadCovariates | None, rng) -> CssTensor:
    """Independent Bernoulli(theta) draw of every cell at ``state``."""
    n = state.n_actors
    theta = norm_cdf(linear_predictor(state, X))
    y = (rng.random(theta.shape) < theta).astype(np.int8)
    y[~offdiag_mask(n)] = 0
    return CssTensor(y)


def _scenario_state(scenario: SynthScenario, hyper: Hyperparameters, rng) -> LatentState:
    if scenario.state is not None:
        return scenario.state.copy()
    n = scenario.n_actors
    fixed = dict(scenario.fixed)
    if scenario.sender_spikes is not None:
        g = np.ones(n, dtype=np.int8)
        g[list(scenario.sender_spikes)] = 0
        fixed.setdefault("gamma", g)
    if scenario.receiver_spikes is not None:
        x = np.ones(n, dtype=np.int8)
        x[list(scenario.receiver_spikes)] = 0
        fixed.setdefault("xi", x)
    if scenario.eta_scale != 1.0 and "eta" not in fixed:
        fixed["eta"] = scenario.eta_scale * math.sqrt(hyper.kappa2) * rng.standard_normal((n, hyper.K))
    if scenario.zeta_scale != 1.0 and "zeta" not in fixed:
        fixed["zeta"] = scenario.zeta_scale * math.sqrt(hyper.kappa2) * rng.standard_normal((n, hyper.K))
    return draw_from_prior(hyper, n, rng, fixed=fixed)


def simulate_css(scenario: SynthScenario, hyper: Hyperparameters, rng,
                 X: DyadCovariates | None = None) -> tuple[CssTensor, LatentState]:
    rng = np.random.default_rng(rng)
    if scenario.K != hyper.K or scenario.p != hyper.p:
        raise ValueError("scenario and hyperparameters disagree on K or p")
    state = _scenario_state(scenario, hyper, rng)
    state.validate()
    return draw_css(state, X, rng), state


def strong_signal_scenario(n_actors: int = 20, K: int = 2, spikes=(0,), radius: float = 3.0,
                           sigma2: float = 0.05, tau2: float = 0.01, rng=None,
                           intercept: float = 0.0) -> SynthScenario:
    """Consensus positions with norm ``radius`` at random angles, tight
    perception noise, and the listed actors perceiving themselves near the
    origin in both spaces."""
    rng = np.random.default_rng(rng)

    def ring():
        d = rng.standard_normal((n_actors, K))
        return radius * d / np.linalg.norm(d, axis=1, keepdims=True)

    fixed = {"eta": ring(), "zeta": ring(), "sigma_u2": sigma2, "sigma_v2": sigma2,
             "tau_u2": tau2, "tau_v2": tau2, "nu": np.array([intercept]),
             "varsigma2": 0.05}
    return SynthScenario(n_actors, K, fixed=fixed, sender_spikes=list(spikes),
                         receiver_spikes=list(spikes))


# -- Geweke joint-distribution test -----------------------------------------

def _mean_theta(state, X):
    theta = norm_cdf(linear_predictor(state, X))
    return float(theta[offdiag_mask(state.n_actors)].mean())


GEWEKE_STATISTICS: dict[str, Callable] = {
    "psi": lambda s, X: s.psi,
    "sigma_u2": lambda s, X: s.sigma_u2,
    "sigma_v2": lambda s, X: s.sigma_v2,
    "tau_u2": lambda s, X: s.tau_u2,
    "tau_v2": lambda s, X: s.tau_v2,
    "varsigma2": lambda s, X: s.varsigma2,
    "sum_gamma": lambda s, X: float(s.gamma.sum()),
    "sum_xi": lambda s, X: float(s.xi.sum()),
    "mean_theta": _mean_theta,
    "nu_intercept": lambda s, X: float(s.nu[0]),
    "beta_intercept": lambda s, X: float(s.beta[:, 0].mean()),
    "eta_sq": lambda s, X: float(np.mean(s.eta ** 2)),
    "uv_self": lambda s, X: float(np.mean(np.einsum("ik,ik->i", s.u[np.arange(s.n_actors),
                                                                   np.arange(s.n_actors)],
                                                    s.eta))),
}


def effective_sample_size(x) -> float:
    """Geyer initial-monotone-sequence ESS of a scalar trace."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    xc = x - x.mean()
    var = xc @ xc / n
    if var == 0:
        return float(n)
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n] / n
    rho = acov / var
    pairs = rho[:n - 1:2][: (n - 1) // 2] + rho[1:n:2][: (n - 1) // 2]
    tau = -1.0
    run_min = np.inf
    for g in pairs:
        if g <= 0:
            break
        run_min = min(run_min, g)
        tau += 2.0 * run_min
    tau = max(tau, 1.0 / n)
    return float(n / tau)


@dataclass
class GewekeResult:
    mc_mean: dict
    sc_mean: dict
    z: dict
    n_outer: int

    def max_abs_z(self) -> float:
        return max(abs(v) for v in self.z.values())

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["statistic", "mc_mean", "sc_mean", "z"])
        for k in self.z:
            w.writerow([k, repr(self.mc_mean[k]), repr(self.sc_mean[k]), repr(self.z[k])])
        return out.getvalue()


def geweke_harness(n_actors: int, K: int, hyper: Hyperparameters | None, n_outer: int, rng,
                   steps: Sequence[Callable] = STEPS, statistics: dict | None = None,
                   X: DyadCovariates | None = None) -> GewekeResult:
    """Compare marginal-conditional and successive-conditional simulators.

    The marginal-conditional run draws ``n_outer`` independent parameter sets
    from the prior.  The successive-conditional run alternates one Gibbs sweep
    (built from ``steps``) with a fresh data draw.  Both target the prior on
    parameters, so the monitored means must agree; ``z`` uses the ESS of the
    successive-conditional trace.
    """
    if n_outer < 2:
        raise ValueError("insufficient samples: n_outer must be >= 2")
    from .model_core import elicit_hyperparameters
    hyper = hyper or elicit_hyperparameters(K)
    rng = np.random.default_rng(rng)
    stats = statistics or GEWEKE_STATISTICS
    X = X if X is not None else intercept_only(n_actors)

    mc = np.empty((n_outer, len(stats)))
    for m in range(n_outer):
        s = draw_from_prior(hyper, n_actors, rng)
        mc[m] = [f(s, X) for f in stats.values()]

    s = draw_from_prior(hyper, n_actors, rng)
    Y = draw_css(s, X, rng)
    ctx = SweepContext(Y, X, hyper)
    sc = np.empty((n_outer, len(stats)))
    mask = offdiag_mask(n_actors)
    for m in range(n_outer):
        for step in steps:
            step(ctx, s, rng)
        theta = norm_cdf(linear_predictor(s, X))
        y = (rng.random(theta.shape) < theta)
        y[~mask] = False
        ctx.set_data(y.astype(np.int8))
        sc[m] = [f(s, X) for f in stats.values()]

    res_mc, res_sc, res_z = {}, {}, {}
    for k, name in enumerate(stats):
        a, b = mc[:, k], sc[:, k]
        se2 = a.var(ddof=1) / n_outer + b.var(ddof=1) / effective_sample_size(b)
        diff = a.mean() - b.mean()
        res_mc[name], res_sc[name] = float(a.mean()), float(b.mean())
        res_z[name] = float(diff / math.sqrt(se2)) if se2 > 0 else (0.0 if diff == 0 else math.inf)
    return GewekeResult(res_mc, res_sc, res_z, n_outer)
