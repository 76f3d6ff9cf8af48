"""Posterior post-processing: Procrustes alignment of latent coordinates,
agreement probabilities, the model-based consensus network and position
summaries."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model_core import norm_cdf
from .sampler import ChainOutput, pool_chains

__all__ = [
    "procrustes_rotation",
    "AlignedSamples",
    "align_samples",
    "agreement_probabilities",
    "consensus_probabilities",
    "ConsensusSummary",
    "summarize",
    "PositionSummary",
    "position_summaries",
    "agreement_csv",
    "consensus_csv",
    "positions_csv",
]

_RANK_TOL = 1e-10


def procrustes_rotation(W_ref, W_s, return_info: bool = False):
    """Orthogonal ``Q`` minimizing ``||W_ref - W_s @ Q||_F``.

    With ``W_s.T @ W_ref = U S V^T`` the minimizer is ``Q = U V^T``.  When the
    cross-product is rank deficient the minimizer is not unique; any SVD is
    accepted and ``return_info`` reports the degeneracy.
    """
    W_ref = np.asarray(W_ref, dtype=float)
    W_s = np.asarray(W_s, dtype=float)
    if W_ref.shape != W_s.shape or W_ref.ndim != 2:
        raise ValueError(f"shape mismatch: {W_ref.shape} vs {W_s.shape}")
    if W_ref.shape[1] > W_ref.shape[0]:
        raise ValueError("need at least as many rows as latent dimensions")
    U, sv, Vt = np.linalg.svd(W_s.T @ W_ref)
    Q = U @ Vt
    if return_info:
        degenerate = bool(sv.size and sv[-1] <= _RANK_TOL * max(sv[0], 1e-300))
        return Q, {"singular_values": sv, "degenerate": degenerate}
    return Q


@dataclass
class AlignedSamples:
    rotations: np.ndarray            # (S, K, K)
    u: np.ndarray                    # (S, I, I, K)
    v: np.ndarray
    eta: np.ndarray                  # (S, I, K)
    zeta: np.ndarray
    reference_index: int = 0
    degenerate: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def n_samples(self) -> int:
        return self.rotations.shape[0]

    def stacked(self, s: int) -> np.ndarray:
        return np.vstack([self.eta[s], self.zeta[s]])


def align_samples(chain: ChainOutput | Sequence[ChainOutput], reference=None) -> AlignedSamples:
    """Rotate/reflect every draw onto the frame of the first draw (of the first
    chain when several are given) using the stacked consensus positions."""
    chain = pool_chains(chain)
    d = chain.draws
    eta, zeta = d["eta"], d["zeta"]
    S = eta.shape[0]
    if S < 1:
        raise ValueError("need at least one sample")
    W_ref = np.vstack([eta[0], zeta[0]]) if reference is None else np.asarray(reference)
    K = eta.shape[2]
    rots = np.empty((S, K, K))
    degenerate = np.zeros(S, dtype=bool)
    for s in range(S):
        Q, info = procrustes_rotation(W_ref, np.vstack([eta[s], zeta[s]]), return_info=True)
        rots[s] = Q
        degenerate[s] = info["degenerate"]
    return AlignedSamples(
        rotations=rots,
        u=np.einsum("sijk,skm->sijm", d["u"], rots),
        v=np.einsum("sijk,skm->sijm", d["v"], rots),
        eta=np.einsum("sik,skm->sim", eta, rots),
        zeta=np.einsum("sik,skm->sim", zeta, rots),
        reference_index=0, degenerate=degenerate)


def aligned_chain(chain, aligned: AlignedSamples | None = None) -> ChainOutput:
    """Copy of ``chain`` (pooled) with the latent blocks replaced by aligned ones."""
    chain = pool_chains(chain)
    aligned = aligned or align_samples(chain)
    draws = dict(chain.draws)
    draws.update(u=aligned.u, v=aligned.v, eta=aligned.eta, zeta=aligned.zeta)
    return ChainOutput(draws, chain.loglik_trace, chain.logjoint_trace, chain.config,
                       chain.hyper, chain.chain_index, chain.seed_entropy, chain.seed_spawn_key,
                       chain.seconds, dict(chain.meta, aligned=True))


def agreement_probabilities(chain) -> tuple[np.ndarray, np.ndarray]:
    """Posterior ``Pr(gamma_i = 1 | Y)`` and ``Pr(xi_i = 1 | Y)`` per actor."""
    d = pool_chains(chain).draws
    if len(d["gamma"]) < 1:
        raise ValueError("need at least one sample")
    return d["gamma"].mean(axis=0), d["xi"].mean(axis=0)


def consensus_probabilities(chain, x_baseline=None, chunk: int = 256) -> np.ndarray:
    """Posterior mean of ``Phi(x_baseline @ nu + eta_i @ zeta_i2)``; diagonal NaN."""
    d = pool_chains(chain).draws
    nu, eta, zeta = d["nu"], d["eta"], d["zeta"]
    S, n, _ = eta.shape
    if S < 1:
        raise ValueError("need at least one sample")
    p = nu.shape[1]
    if x_baseline is None:
        x_baseline = np.zeros(p)
        x_baseline[0] = 1.0
    base = nu @ np.asarray(x_baseline, dtype=float)
    total = np.zeros((n, n))
    for a in range(0, S, chunk):
        b = min(a + chunk, S)
        lp = base[a:b, None, None] + np.einsum("sik,slk->sil", eta[a:b], zeta[a:b])
        total += norm_cdf(lp).sum(axis=0)
    out = total / S
    np.fill_diagonal(out, np.nan)
    return out


@dataclass
class PositionSummary:
    u: np.ndarray                    # (I, I, K) posterior means, dims reordered
    v: np.ndarray
    eta: np.ndarray                  # (I, K)
    zeta: np.ndarray
    dim_order: np.ndarray            # original dimension index of each output column
    dim_variance: np.ndarray         # across-actor variance of eta means, sorted


def position_summaries(aligned: AlignedSamples) -> PositionSummary:
    u, v = aligned.u.mean(axis=0), aligned.v.mean(axis=0)
    eta, zeta = aligned.eta.mean(axis=0), aligned.zeta.mean(axis=0)
    var = eta.var(axis=0)
    order = np.argsort(-var, kind="stable")
    return PositionSummary(u[..., order], v[..., order], eta[:, order], zeta[:, order],
                           order, var[order])


@dataclass
class ConsensusSummary:
    consensus: np.ndarray
    p_gamma: np.ndarray
    p_xi: np.ndarray
    eta_mean: np.ndarray
    zeta_mean: np.ndarray
    beta_mean: np.ndarray
    beta_interval: np.ndarray        # (2, I, p): 2.5% and 97.5% quantiles
    degenerate_alignment: bool = False


def summarize(chain, x_baseline=None, level: float = 0.95) -> ConsensusSummary:
    pooled = pool_chains(chain)
    aligned = align_samples(pooled)
    pg, px = agreement_probabilities(pooled)
    beta = pooled.draws["beta"]
    q = (1.0 - level) / 2.0
    return ConsensusSummary(
        consensus=consensus_probabilities(pooled, x_baseline), p_gamma=pg, p_xi=px,
        eta_mean=aligned.eta.mean(axis=0), zeta_mean=aligned.zeta.mean(axis=0),
        beta_mean=beta.mean(axis=0), beta_interval=np.quantile(beta, [q, 1.0 - q], axis=0),
        degenerate_alignment=bool(aligned.degenerate.any()))


# -- tabular outputs ------------------------------------------------------------

def _csv(header, rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return out.getvalue()


def _labels(n, labels):
    return list(labels) if labels else [str(k + 1) for k in range(n)]


def agreement_csv(p_gamma, p_xi, labels=None) -> str:
    labels = _labels(len(p_gamma), labels)
    return _csv(["actor", "p_gamma", "p_xi"],
                [[labels[i], repr(float(p_gamma[i])), repr(float(p_xi[i]))]
                 for i in range(len(p_gamma))])


def consensus_csv(matrix, labels=None) -> str:
    n = matrix.shape[0]
    labels = _labels(n, labels)
    return _csv(["i", "i'", "prob"],
                [[labels[i], labels[k], repr(float(matrix[i, k]))]
                 for i in range(n) for k in range(n) if i != k])


def positions_csv(summary: PositionSummary, labels=None) -> str:
    n, _, K = summary.u.shape
    labels = _labels(n, labels)
    rows = []
    for space, arr in (("sender", summary.u), ("receiver", summary.v)):
        for i in range(n):
            for j in range(n):
                for k in range(K):
                    rows.append([labels[i], labels[j], space, k + 1, repr(float(arr[i, j, k]))])
    for space, arr in (("consensus_sender", summary.eta), ("consensus_receiver", summary.zeta)):
        for i in range(n):
            for k in range(K):
                rows.append([labels[i], "", space, k + 1, repr(float(arr[i, k]))])
    return _csv(["actor", "perceiver", "space", "dim", "mean"], rows)
