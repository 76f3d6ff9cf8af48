# Joint-distribution test of the Gibbs sampler.
#
# Marginal-conditional draws come straight from the prior; successive-
# conditional draws alternate a sweep with a fresh data set.  If every
# conditional is right the two streams share the same moments.

import numpy as np

from latentcss import elicit_hyperparameters, geweke_harness
from latentcss.sampler import STEPS, indicator_probability, step_indicators

hyper = elicit_hyperparameters(2)
res = geweke_harness(n_actors=6, K=2, hyper=hyper, n_outer=5000, rng=0)
print(res.to_csv())
print("max |z| with the correct sampler:", round(res.max_abs_z(), 2))


# now break the indicator update and watch the test notice
def wrong_indicators(ctx, s, rng):
    idx = np.arange(ctx.n)
    p1 = 1 - indicator_probability(s.u[idx, idx], s.eta, s.sigma_u2, s.tau_u2, s.psi)
    s.gamma = (rng.random(ctx.n) < p1).astype(np.int8)
    p1 = 1 - indicator_probability(s.v[idx, idx], s.zeta, s.sigma_v2, s.tau_v2, s.psi)
    s.xi = (rng.random(ctx.n) < p1).astype(np.int8)


broken = tuple(wrong_indicators if f is step_indicators else f for f in STEPS)
bad = geweke_harness(6, 2, hyper, 5000, 0, steps=broken)
print("max |z| with a flipped indicator step:", round(bad.max_abs_z(), 2))
