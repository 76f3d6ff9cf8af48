"""Hierarchical bilinear latent space models for cognitive social structures."""

__version__ = "0.1.0"

from .css_data import (CssTensor, DyadCovariates, DegreeProfile, build_dyadic_covariates,
                       degree_profiles, dump_css, load_attributes, load_css,
                       threshold_consensus)
from .model_core import (Hyperparameters, LatentState, elicit_hyperparameters,
                         interaction_probability, log_joint, log_likelihood,
                         prior_predictive_theta)
from .sampler import (ChainConfig, ChainOutput, gelman_rubin, gibbs_sweep, init_state,
                      run_chain, run_chains, sample_truncated_normal)
from .postprocess import (agreement_probabilities, align_samples, consensus_probabilities,
                          position_summaries, procrustes_rotation)
from .model_selection import dic, k_sweep, waic
from .ppc import network_statistics, ppc_run, replicate_css
from .synth import SynthScenario, geweke_harness, simulate_css
