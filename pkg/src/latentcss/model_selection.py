"""DIC and WAIC for choosing the latent dimension."""
from __future__ import annotations

import csv
import hashlib
import io
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .css_data import CssTensor, DyadCovariates, intercept_only, offdiag_mask
from .model_core import Hyperparameters, elicit_hyperparameters, log_norm_cdf
from .postprocess import align_samples
from .sampler import ChainConfig, ChainOutput, pool_chains, run_chains

__all__ = [
    "pointwise_log_likelihood",
    "dic",
    "waic",
    "CriterionReport",
    "derive_seed",
    "k_sweep",
]


def _cell_ll(y_sign, xb, u, v, mask):
    lp = xb + np.einsum("sajk,sbjk->sabj", u, v)
    return log_norm_cdf(y_sign * lp)[:, mask]


def pointwise_log_likelihood(chain, Y: CssTensor, X: DyadCovariates | None = None,
                             chunk: int = 64, u=None, v=None):
    """Yield ``(S_chunk, N)`` blocks of per-cell log-likelihoods, N = I(I-1)I."""
    d = pool_chains(chain).draws
    n = Y.n_actors
    X = intercept_only(n) if X is None else X
    u = d["u"] if u is None else u
    v = d["v"] if v is None else v
    sign = 2.0 * Y.values - 1.0
    mask = offdiag_mask(n)
    S = len(d["psi"])
    for a in range(0, S, chunk):
        b = min(a + chunk, S)
        xb = np.einsum("abp,sjp->sabj", X.x, d["beta"][a:b])
        yield _cell_ll(sign, xb, u[a:b], v[a:b], mask).reshape(b - a, -1)


def _plugin_ll(Y, X, beta, u, v):
    n = Y.n_actors
    X = intercept_only(n) if X is None else X
    lp = np.einsum("abp,jp->abj", X.x, beta) + np.einsum("ajk,bjk->abj", u, v)
    return float(log_norm_cdf((2.0 * Y.values - 1.0) * lp)[offdiag_mask(n)].sum())


def dic(chain, Y: CssTensor, X: DyadCovariates | None = None, return_parts: bool = False):
    """``(DIC, p_DIC)``; the plug-in uses posterior means of the aligned
    ``beta, u, v`` (theta depends on nothing else)."""
    pooled = pool_chains(chain)
    S = len(pooled)
    if S < 2:
        raise ValueError("dic needs at least 2 samples")
    aligned = align_samples(pooled)
    ll = np.concatenate([blk.sum(axis=1) for blk in pointwise_log_likelihood(pooled, Y, X)])
    plug = _plugin_ll(Y, X, pooled.draws["beta"].mean(axis=0), aligned.u.mean(axis=0),
                      aligned.v.mean(axis=0))
    p_dic = 2.0 * plug - 2.0 * ll.mean()
    value = -2.0 * plug + 2.0 * p_dic
    if return_parts:
        return value, p_dic, {"plugin_loglik": plug, "mean_loglik": float(ll.mean())}
    return value, p_dic


def waic(chain, Y: CssTensor, X: DyadCovariates | None = None, return_parts: bool = False):
    """``(WAIC, p_WAIC)`` with one pointwise term per (perceiver, ordered dyad)."""
    pooled = pool_chains(chain)
    S = len(pooled)
    if S < 2:
        raise ValueError("waic needs at least 2 samples")
    lse = None
    total = None
    for blk in pointwise_log_likelihood(pooled, Y, X):
        part = logsumexp(blk, axis=0)
        lse = part if lse is None else np.logaddexp(lse, part)
        total = blk.sum(axis=0) if total is None else total + blk.sum(axis=0)
    lppd_cells = lse - np.log(S)
    mean_cells = total / S
    # Jensen guarantees each term >= 0; clip round-off on constant chains
    p_waic = 2.0 * float(np.sum(np.maximum(lppd_cells - mean_cells, 0.0)))
    lppd = float(lppd_cells.sum())
    value = -2.0 * lppd + 2.0 * p_waic
    if return_parts:
        return value, p_waic, {"lppd": lppd, "lppd_cells": lppd_cells}
    return value, p_waic


@dataclass
class CriterionReport:
    rows: list = field(default_factory=list)

    def add(self, **row):
        self.rows.append(row)

    @property
    def ks(self):
        return [r["K"] for r in self.rows]

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    @property
    def dic_argmin(self) -> int:
        return self.ks[int(np.argmin(self.column("DIC")))]

    @property
    def waic_argmin(self) -> int:
        return self.ks[int(np.argmin(self.column("WAIC")))]

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        cols = ["K", "DIC", "p_DIC", "WAIC", "p_WAIC", "n_samples", "seconds"]
        w.writerow(cols)
        for r in self.rows:
            w.writerow([r["K"]] + [repr(float(r[c])) for c in cols[1:5]]
                       + [r["n_samples"], f"{r['seconds']:.3f}"])
        return out.getvalue()


def derive_seed(master_seed: int, *labels) -> int:
    """Stable 63-bit child seed from a master seed and labels."""
    text = ":".join([str(master_seed)] + [str(x) for x in labels])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big") >> 1


def _hyper_for_k(template, K: int, p: int) -> Hyperparameters:
    if template is None:
        return elicit_hyperparameters(K, p)
    if callable(template) and not isinstance(template, Hyperparameters):
        return template(K)
    fresh = elicit_hyperparameters(K, template.p)
    return replace(template, K=K, b_sigma=fresh.b_sigma, b_tau=fresh.b_tau,
                   kappa2=fresh.kappa2)


def k_sweep(Y: CssTensor, X: DyadCovariates | None, hyper_template, k_list,
            config: ChainConfig, n_jobs: int = 1) -> CriterionReport:
    """Fit a fresh chain set per K (re-elicited hyperparameters, per-K seeds
    derived from ``config.rng_seed``) and tabulate DIC / WAIC."""
    k_list = list(k_list)
    if not k_list:
        raise ValueError("k_list must be nonempty")
    p = 1 if X is None else X.p
    report = CriterionReport()
    for K in k_list:
        hyper = _hyper_for_k(hyper_template, K, p)
        cfg = replace(config, K=K, rng_seed=derive_seed(config.rng_seed, "K", K))
        t0 = time.perf_counter()
        chains = run_chains(Y, X, hyper, cfg, n_jobs=n_jobs)
        pooled = pool_chains(chains)
        d_val, p_dic, dparts = dic(pooled, Y, X, return_parts=True)
        w_val, p_waic = waic(pooled, Y, X)
        report.add(K=K, DIC=d_val, p_DIC=p_dic, WAIC=w_val, p_WAIC=p_waic,
                   mean_loglik=dparts["mean_loglik"], plugin_loglik=dparts["plugin_loglik"],
                   n_samples=len(pooled), seconds=time.perf_counter() - t0)
    return report
