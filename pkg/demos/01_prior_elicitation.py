# Prior on the tie probability after elicitation.
#
# The elicited hyperparameters fix the prior variance of the linear predictor
# at 1 whatever K is.  Draw theta from the marginal prior and look at its shape.

import numpy as np

from latentcss import elicit_hyperparameters, prior_predictive_theta

for K in (1, 3, 6, 12):
    h = elicit_hyperparameters(K)
    print(f"K={K:2d}  kappa2 = b = {h.kappa2:.6f}  total variance = {h.prior_variance_total():.15f}")

# Monte Carlo check of the variance, and a text histogram of theta
for K in (3, 6):
    theta, lp = prior_predictive_theta(elicit_hyperparameters(K), 100_000, rng_seed=K,
                                       return_predictor=True)
    print(f"\nK={K}: predictor mean {lp.mean():+.4f}, variance {lp.var():.4f}")
    counts, edges = np.histogram(theta, bins=20, range=(0, 1))
    for c, lo in zip(counts, edges):
        print(f"  {lo:4.2f} {'#' * int(c / 250)}")

# Both histograms rise at 0 and 1 and have a bump in the middle; the middle
# is flatter for K = 6 because the bilinear term carries more of the variance.
