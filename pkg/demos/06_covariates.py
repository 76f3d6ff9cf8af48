# Dyadic covariates from actor attributes, then a fit that uses them.

import numpy as np

from latentcss import (ChainConfig, build_dyadic_covariates, elicit_hyperparameters,
                       load_attributes, run_chain, simulate_css)
from latentcss.postprocess import summarize
from latentcss.synth import SynthScenario

rng = np.random.default_rng(10)
n = 12
table_csv = "actor,dept,age\n" + "".join(
    f"a{k},{rng.integers(1, 4)},{rng.integers(25, 60)}\n" for k in range(n))
table = load_attributes(table_csv)

X = build_dyadic_covariates(table, ["same:dept", "absdiff:age"])
print("covariates:", X.names)
print("standardized means:", np.round(X.dyads()[:, 1:].mean(axis=0), 12))

# every perceiver weights 'same department' positively and age gaps negatively
hyper = elicit_hyperparameters(2, p=X.p)
beta = np.tile([-0.3, 0.8, -0.5], (n, 1))
Y, _ = simulate_css(SynthScenario(n, 2, p=X.p, fixed={"beta": beta}), hyper, rng=11, X=X)

chain = run_chain(Y, X, hyper, ChainConfig(n_iterations=1500, burn_in=500, thin=5, K=2))
summary = summarize(chain)
lo, hi = summary.beta_interval
for k, name in enumerate(X.names):
    print(f"{name:>24}: mean over perceivers {summary.beta_mean[:, k].mean():+.2f}, "
          f"95% bands from {lo[:, k].min():+.2f} to {hi[:, k].max():+.2f}")
