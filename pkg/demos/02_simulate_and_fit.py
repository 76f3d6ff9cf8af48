# Simulate a CSS with one actor whose self-view disagrees with everyone else,
# fit the model and see whether the agreement indicators find that actor.

import time

import numpy as np

from latentcss import (ChainConfig, agreement_probabilities, consensus_probabilities,
                       elicit_hyperparameters, gelman_rubin, run_chains, simulate_css)
from latentcss.model_core import norm_cdf
from latentcss.synth import strong_signal_scenario

K = 2
hyper = elicit_hyperparameters(K)

# 20 actors on a ring of radius 3; actor 0 places itself at the origin
scenario = strong_signal_scenario(n_actors=20, K=K, spikes=(0,), radius=3.0, rng=1)
Y, truth = simulate_css(scenario, hyper, rng=2)
print("actors:", Y.n_actors, " tie density:", round(Y.values.mean(), 3))

t0 = time.perf_counter()
config = ChainConfig(n_iterations=3000, burn_in=1000, thin=5, n_chains=2, rng_seed=3, K=K)
chains = run_chains(Y, None, hyper, config)
print(f"2 chains x {config.n_retained} draws in {time.perf_counter() - t0:.1f}s")
print("R-hat (log joint):", round(gelman_rubin([c.logjoint_trace for c in chains]), 3))

p_gamma, p_xi = agreement_probabilities(chains[0])
print("\nPr(gamma_i = 1 | Y), first five actors:", np.round(p_gamma[:5], 2))
print("Pr(xi_i = 1 | Y),    first five actors:", np.round(p_xi[:5], 2))

# consensus network against the generating one
est = consensus_probabilities(chains[0])
true = norm_cdf(truth.nu[0] + truth.eta @ truth.zeta.T)
off = ~np.eye(Y.n_actors, dtype=bool)
print("\ncorrelation with the true consensus:", round(np.corrcoef(est[off], true[off])[0, 1], 3))
