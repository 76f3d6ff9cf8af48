# Posterior predictive check: replicate CSS tensors from the fitted model and
# compare slice-averaged density, transitivity and assortativity with the data.

import numpy as np

from latentcss import ChainConfig, elicit_hyperparameters, ppc_run, run_chain, simulate_css
from latentcss.ppc import STATISTICS
from latentcss.synth import strong_signal_scenario

hyper = elicit_hyperparameters(2)
Y, _ = simulate_css(strong_signal_scenario(20, 2, spikes=(3,), radius=1.5, sigma2=0.1, rng=7),
                    hyper, rng=8)
chain = run_chain(Y, None, hyper, ChainConfig(n_iterations=2000, burn_in=1000, thin=5, K=2))

report = ppc_run(chain, Y, None, n_reps=200, rng=9)
for s in STATISTICS:
    lo, hi = report.central_interval(s)
    print(f"{s:>13}: observed {report.observed[s]:.3f}  95% of replicates in "
          f"[{lo:.3f}, {hi:.3f}]  p = {report.p_values[s]:.2f}")

# the same draws, shown as a crude text histogram for transitivity
counts, edges = np.histogram(report.replicates["transitivity"], bins=12)
for c, lo in zip(counts, edges):
    print(f"  {lo:.3f} {'*' * c}")
