"""Gibbs sampler with probit data augmentation, chain orchestration and
convergence diagnostics."""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .css_data import CssTensor, DyadCovariates, intercept_only, offdiag_mask
from .model_core import (Hyperparameters, LatentState, draw_from_prior, linear_predictor,
                         log_likelihood, log_prior)

__all__ = [
    "ChainConfig",
    "ChainOutput",
    "SamplerError",
    "SweepContext",
    "sample_truncated_normal",
    "truncated_normal_draws",
    "gibbs_sweep",
    "STEPS",
    "init_state",
    "run_chain",
    "run_chains",
    "pool_chains",
    "gelman_rubin",
]


class SamplerError(RuntimeError):
    """A conditional update failed numerically."""


# -- truncated normal --------------------------------------------------------

_TAIL_SWITCH = 30.0


def _std_tail_draws(a, rng):
    """Standard normal draws conditioned on ``x >= a`` (elementwise)."""
    a = np.asarray(a, dtype=float)
    v = rng.random(a.shape)
    v = np.where(v == 0.0, np.finfo(float).tiny, v)
    x = -special.ndtri(v * special.ndtr(-a))
    far = a > _TAIL_SWITCH
    if np.any(far):
        x[far] = _exp_rejection(a[far], rng)
    return x


def _exp_rejection(a, rng):
    # Robert (1995) translated-exponential proposal; acceptance -> 1 as a grows
    out = np.empty_like(a)
    todo = np.arange(a.size)
    alpha = 0.5 * (a + np.sqrt(a * a + 4.0))
    while todo.size:
        x = a[todo] + rng.exponential(size=todo.size) / alpha[todo]
        ok = rng.random(todo.size) <= np.exp(-0.5 * (x - alpha[todo]) ** 2)
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out


def truncated_normal_draws(mean, positive, rng, sd=1.0):
    """Draw N(mean, sd^2) restricted to ``[0, inf)`` where ``positive`` is true
    and to ``(-inf, 0)`` elsewhere.  Arrays broadcast elementwise."""
    mean = np.asarray(mean, dtype=float)
    positive = np.broadcast_to(positive, mean.shape)
    sign = np.where(positive, 1.0, -1.0)
    x = _std_tail_draws(-sign * mean / sd, rng)
    z = mean + sign * sd * x
    # rounding in the far tail may land a hair on the wrong side of zero
    return np.where(positive, np.maximum(z, 0.0), np.minimum(z, -np.finfo(float).tiny))


def sample_truncated_normal(mean: float, sd: float, side: str, rng) -> float:
    """One draw of N(mean, sd^2) truncated to ``side`` in {"nonneg", "neg"}."""
    if not sd > 0:
        raise ValueError(f"sd must be positive, got {sd}")
    if side not in ("nonneg", "neg"):
        raise ValueError(f"side must be 'nonneg' or 'neg', got {side!r}")
    return float(truncated_normal_draws(np.array([mean]), np.array([side == "nonneg"]),
                                        rng, sd)[0])


# -- the sweep ---------------------------------------------------------------

class SweepContext:
    """Data-dependent constants reused across sweeps."""

    def __init__(self, Y: CssTensor | np.ndarray, X: DyadCovariates | None,
                 hyper: Hyperparameters):
        y = Y.values if isinstance(Y, CssTensor) else np.asarray(Y)
        n = y.shape[0]
        self.n = n
        self.hyper = hyper
        self.X = intercept_only(n) if X is None else X
        if self.X.n_actors != n or self.X.p != hyper.p:
            raise ValueError("covariates do not match the data / hyperparameters")
        self.mask2 = offdiag_mask(n)
        self.mask3 = np.broadcast_to(self.mask2[:, :, None], (n, n, n))
        self.Xd = self.X.dyads()                      # (N, p)
        self.XtX = self.Xd.T @ self.Xd
        self.set_data(y)

    def set_data(self, y: np.ndarray):
        self.y = np.asarray(y)
        self.positive = self.y == 1

    def xb(self, beta):
        return np.einsum("abp,jp->abj", self.X.x, beta)


def _draw_gaussian_batch(prec, rhs, rng, block):
    """Draw from N(P^-1 r, P^-1) for a batch of (K, K) precisions."""
    try:
        cov = np.linalg.inv(prec)
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SamplerError(f"linear solve failed in block {block!r}: {exc}") from exc
    mean = np.einsum("...km,...m->...k", cov, rhs)
    eps = rng.standard_normal(mean.shape)
    return mean + np.einsum("...km,...m->...k", chol, eps)


def step_z(ctx, s, rng):
    lp = ctx.xb(s.beta) + np.einsum("ajk,bjk->abj", s.u, s.v)
    z = truncated_normal_draws(lp, ctx.positive, rng)
    z[~ctx.mask3] = 0.0
    s.z = z


def step_beta(ctx, s, rng):
    r = s.z - np.einsum("ajk,bjk->abj", s.u, s.v)
    r_off = r[ctx.mask2]                              # (N, J)
    p = ctx.X.p
    prec = np.eye(p) / s.varsigma2 + ctx.XtX
    rhs = (ctx.Xd.T @ r_off).T + s.nu / s.varsigma2   # (J, p)
    s.beta = _draw_gaussian_batch(np.broadcast_to(prec, (ctx.n, p, p)), rhs, rng, "beta")


def _positions(ctx, s, rng, which):
    n, K = ctx.n, s.K
    idx = np.arange(n)
    r = s.z - ctx.xb(s.beta)
    r[~ctx.mask3] = 0.0
    if which == "u":
        other, centre, ind, s2, t2 = s.v, s.eta, s.gamma, s.sigma_u2, s.tau_u2
        rhs = np.einsum("ilj,ljk->ijk", r, other)
    else:
        other, centre, ind, s2, t2 = s.u, s.zeta, s.xi, s.sigma_v2, s.tau_v2
        rhs = np.einsum("ilj,ijk->ljk", r, other)
    gram = np.einsum("ljk,ljm->jkm", other, other)    # (J, K, K)
    prior_var = np.full((n, n), s2)
    prior_mean = np.broadcast_to(centre[:, None, :], (n, n, K)).copy()
    spike = ind == 0
    prior_var[idx[spike], idx[spike]] = t2
    prior_mean[idx[spike], idx[spike]] = 0.0
    prec = (gram[None, :, :, :] - np.einsum("ijk,ijm->ijkm", other, other)
            + np.eye(K) / prior_var[:, :, None, None])
    rhs = rhs + prior_mean / prior_var[:, :, None]
    setattr(s, which, _draw_gaussian_batch(prec, rhs, rng, which))


def step_u(ctx, s, rng):
    _positions(ctx, s, rng, "u")


def step_v(ctx, s, rng):
    _positions(ctx, s, rng, "v")


def step_centres(ctx, s, rng):
    n = ctx.n
    idx = np.arange(n)
    kappa2 = ctx.hyper.kappa2
    for pos_name, ind, s2, name in (("u", s.gamma, s.sigma_u2, "eta"),
                                    ("v", s.xi, s.sigma_v2, "zeta")):
        pos = getattr(s, pos_name)
        total = pos.sum(axis=1) - (1 - ind)[:, None] * pos[idx, idx]
        count = (n - 1) + ind
        prec = 1.0 / kappa2 + count / s2
        mean = (total / s2) / prec[:, None]
        setattr(s, name, mean + rng.standard_normal(mean.shape) / np.sqrt(prec)[:, None])


def indicator_probability(self_pos, centre, s2, t2, psi):
    """Pr(indicator = 1 | rest) for the two-component self-position prior."""
    K = self_pos.shape[-1]
    slab = -0.5 * (K * math.log(s2) + np.sum((self_pos - centre) ** 2, axis=-1) / s2)
    spike = -0.5 * (K * math.log(t2) + np.sum(self_pos ** 2, axis=-1) / t2)
    return special.expit(math.log(psi) - math.log1p(-psi) + slab - spike)


def step_indicators(ctx, s, rng):
    idx = np.arange(ctx.n)
    p1 = indicator_probability(s.u[idx, idx], s.eta, s.sigma_u2, s.tau_u2, s.psi)
    s.gamma = (rng.random(ctx.n) < p1).astype(np.int8)
    p1 = indicator_probability(s.v[idx, idx], s.zeta, s.sigma_v2, s.tau_v2, s.psi)
    s.xi = (rng.random(ctx.n) < p1).astype(np.int8)


def _invgamma(rng, a, b):
    return b / rng.gamma(a)


def step_variances(ctx, s, rng):
    h, n = ctx.hyper, ctx.n
    idx = np.arange(n)
    K = s.K
    for pos_name, centre_name, ind, sig, tau in (("u", "eta", s.gamma, "sigma_u2", "tau_u2"),
                                                 ("v", "zeta", s.xi, "sigma_v2", "tau_v2")):
        pos, centre = getattr(s, pos_name), getattr(s, centre_name)
        sq = np.sum((pos - centre[:, None, :]) ** 2, axis=-1)
        own = sq[idx, idx]
        slab_ss = sq.sum() - own.sum() + np.sum(own * ind)
        m_slab = n * (n - 1) + int(ind.sum())
        setattr(s, sig, _invgamma(rng, h.a_sigma + 0.5 * K * m_slab, h.b_sigma + 0.5 * slab_ss))
        spike = ind == 0
        spike_ss = np.sum(pos[idx[spike], idx[spike]] ** 2)
        setattr(s, tau, _invgamma(rng, h.a_tau + 0.5 * K * int(spike.sum()),
                                  h.b_tau + 0.5 * spike_ss))


def step_regression_prior(ctx, s, rng):
    h, n = ctx.hyper, ctx.n
    prec = 1.0 / h.omega2 + n / s.varsigma2
    mean = (s.beta.sum(axis=0) / s.varsigma2) / prec
    s.nu = mean + rng.standard_normal(mean.shape) / math.sqrt(prec)
    ss = np.sum((s.beta - s.nu) ** 2)
    s.varsigma2 = _invgamma(rng, h.a_varsigma + 0.5 * n * s.p, h.b_varsigma + 0.5 * ss)


def psi_posterior_parameters(gamma, xi, c, d):
    ones = int(np.sum(gamma) + np.sum(xi))
    return c + ones, d + 2 * len(gamma) - ones


def step_psi(ctx, s, rng):
    a, b = psi_posterior_parameters(s.gamma, s.xi, ctx.hyper.c, ctx.hyper.d)
    psi = rng.beta(a, b)
    # Beta draws can round to exactly 0 or 1 when a counts dominate
    s.psi = float(np.clip(psi, 1e-300, 1.0 - 1e-16))


STEPS: tuple[Callable, ...] = (step_z, step_beta, step_u, step_v, step_centres,
                               step_indicators, step_variances, step_regression_prior,
                               step_psi)


def gibbs_sweep(state: LatentState, Y, X, hyper: Hyperparameters, rng,
                ctx: SweepContext | None = None,
                steps: Sequence[Callable] = STEPS) -> LatentState:
    """One systematic-scan sweep; returns a new state, ``state`` is untouched."""
    ctx = ctx or SweepContext(Y, X, hyper)
    s = state.copy()
    for step in steps:
        step(ctx, s, rng)
    return s


# -- initialization and chains ----------------------------------------------

INIT_MODES = ("prior_draw", "data_informed", "spectral")


def init_state(Y: CssTensor, X: DyadCovariates | None, hyper: Hyperparameters,
               mode: str = "data_informed", rng=None) -> LatentState:
    """Starting state.

    ``prior_draw`` samples every block from the prior.  ``data_informed`` sets
    intercepts to the probit of each perceiver's density (clamped to
    [0.01, 0.99]), latent vectors to N(0, 0.1^2) noise shared across
    perceivers, and all indicators to 1.  ``spectral`` is ``data_informed``
    with the consensus positions seeded from a rank-K factorization of the
    averaged network.
    """
    rng = np.random.default_rng(rng)
    n, K, p = Y.n_actors, hyper.K, hyper.p
    if mode == "prior_draw":
        return draw_from_prior(hyper, n, rng)
    if mode not in INIT_MODES:
        raise ValueError(f"unknown init mode {mode!r}; expected one of {INIT_MODES}")
    beta = np.zeros((n, p))
    beta[:, 0] = special.ndtri(np.clip(Y.densities(), 0.01, 0.99))
    b_mean = lambda a, b: b / (a - 1.0) if a > 1 else b
    # Perceiver views start at one shared configuration; independent
    # per-perceiver noise lets each view lock into its own rotation.
    eta = 0.1 * rng.standard_normal((n, K))
    zeta = 0.1 * rng.standard_normal((n, K))
    if mode == "spectral":
        eta, zeta = _spectral_positions(Y, K, eta, zeta)
    return LatentState(
        beta=beta, u=np.repeat(eta[:, None, :], n, axis=1),
        v=np.repeat(zeta[:, None, :], n, axis=1), eta=eta, zeta=zeta,
        gamma=np.ones(n, dtype=np.int8), xi=np.ones(n, dtype=np.int8),
        sigma_u2=b_mean(hyper.a_sigma, hyper.b_sigma), sigma_v2=b_mean(hyper.a_sigma, hyper.b_sigma),
        tau_u2=b_mean(hyper.a_tau, hyper.b_tau), tau_v2=b_mean(hyper.a_tau, hyper.b_tau),
        nu=beta.mean(axis=0), varsigma2=b_mean(hyper.a_varsigma, hyper.b_varsigma),
        psi=hyper.c / (hyper.c + hyper.d))


def _spectral_positions(Y: CssTensor, K: int, eta0, zeta0):
    """Rank-K factorization of the probit-transformed share of perceivers
    reporting each tie; the noise arrays fill dimensions beyond the rank."""
    n = Y.n_actors
    share = Y.values.mean(axis=2)
    m = special.ndtri(np.clip(share, 0.02, 0.98))
    off = offdiag_mask(n)
    m = m - m[off].mean()
    m[~off] = 0.0
    U, sv, Vt = np.linalg.svd(m)
    r = min(K, n)
    eta, zeta = eta0.copy(), zeta0.copy()
    root = np.sqrt(sv[:r])
    eta[:, :r] += U[:, :r] * root
    zeta[:, :r] += Vt[:r].T * root
    return eta, zeta


@dataclass
class ChainConfig:
    n_iterations: int = 2000
    burn_in: int = 500
    thin: int = 5
    n_chains: int = 1
    rng_seed: int = 0
    K: int = 2
    init: str = "spectral"

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if self.init not in INIT_MODES:
            raise ValueError(f"unknown init mode {self.init!r}")

    @property
    def n_retained(self) -> int:
        return (self.n_iterations - self.burn_in) // self.thin

    @classmethod
    def full_scale(cls, K: int, rng_seed: int = 0) -> "ChainConfig":
        """4 chains, thin 25, 10,000 retained per chain (40,000 pooled) after
        10,000 burn-in sweeps."""
        return cls(n_iterations=260_000, burn_in=10_000, thin=25, n_chains=4,
                   rng_seed=rng_seed, K=K)


_DRAW_BLOCKS = ("beta", "u", "v", "eta", "zeta", "gamma", "xi", "sigma_u2", "sigma_v2",
                "tau_u2", "tau_v2", "nu", "varsigma2", "psi")


class _SampleView(Sequence):
    def __init__(self, draws):
        self._draws = draws

    def __len__(self):
        return len(self._draws["psi"])

    def __getitem__(self, s):
        if isinstance(s, slice):
            return [self[k] for k in range(*s.indices(len(self)))]
        if s < 0:
            s += len(self)
        if not 0 <= s < len(self):
            raise IndexError(s)
        return LatentState(**{k: self._draws[k][s] for k in _DRAW_BLOCKS})


@dataclass
class ChainOutput:
    """Thinned post-burn-in draws stored block-wise with a leading sample axis.

    ``samples[s]`` materializes the ``s``-th draw as a :class:`LatentState`.
    """

    draws: dict
    loglik_trace: np.ndarray
    logjoint_trace: np.ndarray
    config: ChainConfig
    hyper: Hyperparameters
    chain_index: int = 0
    seed_entropy: object = None
    seed_spawn_key: tuple = ()
    seconds: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def samples(self) -> Sequence[LatentState]:
        return _SampleView(self.draws)

    def __len__(self):
        return len(self.loglik_trace)

    @classmethod
    def from_states(cls, states, loglik=None, logjoint=None, config=None, hyper=None,
                    **kw) -> "ChainOutput":
        states = list(states)
        draws = {k: np.stack([np.asarray(getattr(s, k)) for s in states]) for k in _DRAW_BLOCKS}
        n = len(states)
        config = config or ChainConfig(n_iterations=n + 1, burn_in=0, thin=1,
                                       K=states[0].K)
        hyper = hyper or Hyperparameters(K=states[0].K, p=states[0].p)
        return cls(draws, np.asarray(loglik if loglik is not None else np.full(n, np.nan), float),
                   np.asarray(logjoint if logjoint is not None else np.full(n, np.nan), float),
                   config, hyper, **kw)

    def save(self, directory) -> Path:
        """Write one ``.npy`` per block plus ``chain.json``; byte-deterministic."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for k, arr in self.draws.items():
            np.save(d / f"{k}.npy", arr)
        np.save(d / "loglik_trace.npy", self.loglik_trace)
        np.save(d / "logjoint_trace.npy", self.logjoint_trace)
        meta = {"config": asdict(self.config), "hyper": self.hyper.to_dict(),
                "chain_index": self.chain_index, "seed_entropy": self.seed_entropy,
                "seed_spawn_key": list(self.seed_spawn_key), "meta": self.meta}
        (d / "chain.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return d

    @classmethod
    def load(cls, directory) -> "ChainOutput":
        d = Path(directory)
        meta = json.loads((d / "chain.json").read_text())
        draws = {k: np.load(d / f"{k}.npy") for k in _DRAW_BLOCKS}
        return cls(draws, np.load(d / "loglik_trace.npy"), np.load(d / "logjoint_trace.npy"),
                   ChainConfig(**meta["config"]), Hyperparameters(**meta["hyper"]),
                   meta["chain_index"], meta["seed_entropy"], tuple(meta["seed_spawn_key"]),
                   meta=meta.get("meta", {}))


def _state_fingerprint(rng) -> dict:
    return rng.bit_generator.state


def run_chain(Y: CssTensor, X: DyadCovariates | None, hyper: Hyperparameters,
              config: ChainConfig, seed_seq: np.random.SeedSequence | None = None,
              chain_index: int = 0, checkpoint_dir=None, checkpoint_every: int | None = None,
              progress: Callable | None = None) -> ChainOutput:
    """Run one chain; deterministic given ``(seed_seq, config, data)``.

    With ``checkpoint_dir`` set, the current state (text schema) and the
    generator state are written every ``checkpoint_every`` sweeps.
    """
    if config.K != hyper.K:
        raise ValueError(f"config K={config.K} disagrees with hyperparameters K={hyper.K}")
    if seed_seq is None:
        seed_seq = np.random.SeedSequence(config.rng_seed).spawn(config.n_chains)[chain_index]
    rng = np.random.default_rng(seed_seq)
    ctx = SweepContext(Y, X, hyper)
    state = init_state(Y, ctx.X, hyper, config.init, rng)
    n_keep = config.n_retained
    store = {k: [] for k in _DRAW_BLOCKS}
    loglik, logjoint = [], []
    t0 = time.perf_counter()
    for it in range(1, config.n_iterations + 1):
        for step in STEPS:
            step(ctx, state, rng)
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0 \
                and len(loglik) < n_keep:
            for k in _DRAW_BLOCKS:
                val = getattr(state, k)
                store[k].append(val.copy() if isinstance(val, np.ndarray) else val)
            ll = log_likelihood(Y, ctx.X, state)
            loglik.append(ll)
            logjoint.append(ll + log_prior(state, hyper))
        if checkpoint_dir is not None and checkpoint_every and it % checkpoint_every == 0:
            cdir = Path(checkpoint_dir)
            cdir.mkdir(parents=True, exist_ok=True)
            (cdir / f"chain{chain_index}_state.txt").write_text(
                f"# sweep {it}\n" + state.to_text())
            (cdir / f"chain{chain_index}_rng.json").write_text(
                json.dumps({"sweep": it, "bit_generator": _state_fingerprint(rng)}))
        if progress is not None:
            progress(chain_index, it)
    draws = {k: np.asarray(v) for k, v in store.items()}
    draws["gamma"] = draws["gamma"].astype(np.int8)
    draws["xi"] = draws["xi"].astype(np.int8)
    return ChainOutput(draws, np.asarray(loglik), np.asarray(logjoint), config, hyper,
                       chain_index, seed_seq.entropy, tuple(seed_seq.spawn_key),
                       time.perf_counter() - t0)


def _run_one(args):
    return run_chain(*args)


def run_chains(Y: CssTensor, X: DyadCovariates | None, hyper: Hyperparameters,
               config: ChainConfig, n_jobs: int = 1) -> list[ChainOutput]:
    """All ``config.n_chains`` chains, each on its own spawned seed stream."""
    seqs = np.random.SeedSequence(config.rng_seed).spawn(config.n_chains)
    jobs = [(Y, X, hyper, config, seqs[c], c) for c in range(config.n_chains)]
    if n_jobs == 1 or config.n_chains == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(_run_one, jobs))


def pool_chains(chains: Sequence[ChainOutput] | ChainOutput) -> ChainOutput:
    """Concatenate chains (in order) into one ChainOutput."""
    if isinstance(chains, ChainOutput):
        return chains
    chains = list(chains)
    if len(chains) == 1:
        return chains[0]
    draws = {k: np.concatenate([c.draws[k] for c in chains]) for k in _DRAW_BLOCKS}
    first = chains[0]
    return ChainOutput(draws, np.concatenate([c.loglik_trace for c in chains]),
                       np.concatenate([c.logjoint_trace for c in chains]), first.config,
                       first.hyper, first.chain_index, first.seed_entropy, first.seed_spawn_key,
                       sum(c.seconds for c in chains), {"pooled_chains": len(chains)})


def gelman_rubin(traces) -> float:
    """Classical potential scale reduction factor over equal-length chains."""
    arr = np.asarray(traces, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ValueError("gelman_rubin needs at least 2 chains")
    m, n = arr.shape
    if n < 10:
        raise ValueError("gelman_rubin needs chains of length >= 10")
    W = arr.var(axis=1, ddof=1).mean()
    B = n * arr.mean(axis=1).var(ddof=1)
    if W == 0.0:
        return 1.0 if B == 0.0 else math.inf
    return float(math.sqrt(((n - 1) / n * W + B / n) / W))
