"""Posterior predictive checks with replicated CSS tensors."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .css_data import CssTensor, DyadCovariates
from .model_core import LatentState
from .sampler import pool_chains
from .synth import draw_css

__all__ = [
    "STATISTICS",
    "replicate_css",
    "network_statistics",
    "css_statistics",
    "PpcReport",
    "ppc_run",
]

STATISTICS = ("density", "transitivity", "assortativity")


def replicate_css(state: LatentState, X: DyadCovariates | None, rng) -> CssTensor:
    """One pseudo-CSS drawn cell-wise from Bernoulli(theta) at ``state``."""
    return draw_css(state, X, np.random.default_rng(rng))


def _batch_statistics(A: np.ndarray) -> np.ndarray:
    """Statistics of a stack ``A[b]`` of directed adjacency matrices -> (B, 3)."""
    A = np.array(A, dtype=float)
    B, n, _ = A.shape
    idx = np.arange(n)
    A[:, idx, idx] = 0.0
    edges = A.sum(axis=(1, 2))
    density = edges / (n * (n - 1))

    A2 = A @ A
    paths = A2.sum(axis=(1, 2)) - np.trace(A2, axis1=1, axis2=2)
    closed = np.sum(A2 * A, axis=(1, 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        transitivity = np.where(paths > 0, closed / np.where(paths > 0, paths, 1), np.nan)

    out_deg = A.sum(axis=2)
    in_deg = A.sum(axis=1)
    assort = np.full(B, np.nan)
    for b in range(B):
        snd, rcv = np.nonzero(A[b])
        if snd.size < 2:
            continue
        x, y = out_deg[b, snd], in_deg[b, rcv]
        sx, sy = x.std(), y.std()
        if sx > 0 and sy > 0:
            assort[b] = float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))
    return np.column_stack([density, transitivity, assort])


def network_statistics(net) -> tuple[float, float, float]:
    """Density, directed transitivity and out->in degree assortativity.

    Transitivity is the share of ordered two-paths ``i->j->k`` (``k != i``)
    closed by ``i->k``; assortativity is the Pearson correlation, over edges,
    between the sender's out-degree and the receiver's in-degree.  Undefined
    values come back as NaN.
    """
    net = np.asarray(net)
    if net.ndim != 2 or net.shape[0] != net.shape[1]:
        raise ValueError("expected a square adjacency matrix")
    return tuple(float(x) for x in _batch_statistics(net[None])[0])


def css_statistics(Y) -> np.ndarray:
    """Per-perceiver statistics averaged over slices (NaN slices skipped)."""
    y = Y.values if isinstance(Y, CssTensor) else np.asarray(Y)
    per_slice = _batch_statistics(np.moveaxis(y, 2, 0))
    out = np.full(3, np.nan)
    for k in range(3):
        col = per_slice[:, k]
        if np.isfinite(col).any():
            out[k] = np.nanmean(col)
    return out


@dataclass
class PpcReport:
    replicates: dict          # statistic -> (n_reps,) array
    observed: dict            # statistic -> float
    p_values: dict            # statistic -> float
    sample_indices: np.ndarray

    def central_interval(self, stat: str, level: float = 0.95):
        vals = self.replicates[stat]
        vals = vals[np.isfinite(vals)]
        q = (1.0 - level) / 2.0
        return tuple(np.quantile(vals, [q, 1.0 - q]))

    def inside_central(self, stat: str, level: float = 0.95) -> bool:
        lo, hi = self.central_interval(stat, level)
        return bool(lo <= self.observed[stat] <= hi)

    def to_csv(self) -> str:
        rows = [[s, r, repr(float(v))] for s in STATISTICS
                for r, v in enumerate(self.replicates[s])]
        return _csv(["statistic", "replicate_index", "value"], rows)

    def observed_csv(self) -> str:
        return _csv(["statistic", "value"], [[s, repr(float(self.observed[s]))] for s in STATISTICS])

    def pvalues_csv(self) -> str:
        return _csv(["statistic", "p_value"], [[s, repr(float(self.p_values[s]))] for s in STATISTICS])


def _csv(header, rows):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return out.getvalue()


def ppc_run(chain, Y: CssTensor, X: DyadCovariates | None, n_reps: int, rng) -> PpcReport:
    """Replicate one CSS from each of ``n_reps`` evenly spaced draws and compare
    slice-averaged statistics with those of ``Y``.

    The two-sided p-value is ``2 * min(F(obs), 1 - F(obs))`` where ``F`` is the
    empirical CDF of the (finite) replicated values.
    """
    pooled = pool_chains(chain)
    S = len(pooled)
    if not 1 <= n_reps <= S:
        raise ValueError(f"n_reps must be in 1..{S}")
    rng = np.random.default_rng(rng)
    picks = np.linspace(0, S - 1, n_reps).round().astype(int)
    samples = pooled.samples
    reps = np.empty((n_reps, 3))
    for r, s in enumerate(picks):
        reps[r] = css_statistics(replicate_css(samples[s], X, rng))
    obs = css_statistics(Y)
    replicates, observed, p_values = {}, {}, {}
    for k, name in enumerate(STATISTICS):
        col = reps[:, k]
        replicates[name] = col
        observed[name] = float(obs[k])
        finite = col[np.isfinite(col)]
        if finite.size == 0 or not np.isfinite(obs[k]):
            p_values[name] = float("nan")
        else:
            F = float(np.mean(finite <= obs[k]))
            p_values[name] = 2.0 * min(F, 1.0 - F)
    return PpcReport(replicates, observed, p_values, picks)
