"""Parameter types, probit link, priors and density evaluation for the
hierarchical bilinear CSS model.

Array conventions (0-based):

* ``beta[j]``          regression coefficients of perceiver ``j``   (I, p)
* ``u[i, j]``, ``v[i, j]``  sender / receiver position of actor ``i``
  as perceived by ``j``                                            (I, I, K)
* ``eta[i]``, ``zeta[i]``  consensus sender / receiver positions   (I, K)
* linear predictor ``lp[i, i2, j] = x[i, i2] @ beta[j] + u[i, j] @ v[i2, j]``
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy import special

from .css_data import CssTensor, DyadCovariates, intercept_only, offdiag_mask

__all__ = [
    "Hyperparameters",
    "LatentState",
    "elicit_hyperparameters",
    "norm_cdf",
    "log_norm_cdf",
    "interaction_probability",
    "linear_predictor",
    "cell_log_likelihood",
    "log_likelihood",
    "log_prior",
    "log_joint",
    "draw_from_prior",
    "prior_predictive_theta",
]

LOG_2PI = math.log(2.0 * math.pi)


def norm_cdf(x):
    return special.ndtr(x)


def log_norm_cdf(x):
    """log Phi(x), accurate in both tails (no clamping)."""
    return special.log_ndtr(x)


@dataclass(frozen=True)
class Hyperparameters:
    K: int
    p: int = 1
    c: float = 1.0
    d: float = 1.0
    a_sigma: float = 2.0
    b_sigma: float = 0.25
    a_tau: float = 2.0
    b_tau: float = 0.25
    a_varsigma: float = 2.0
    b_varsigma: float = 0.25
    omega2: float = 0.25
    kappa2: float = 0.25

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K}")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"p must be a positive integer, got {self.p}")
        for f in fields(self):
            if f.name in ("K", "p"):
                continue
            val = getattr(self, f.name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"hyperparameter {f.name} must be > 0, got {val}")

    def prior_variance_total(self) -> float:
        """Prior variance of the intercept-only linear predictor, assuming
        ``a_sigma == 2`` so that the prior mean of the latent variances is ``b``."""
        b = self.b_sigma
        return (self.omega2 + self.b_varsigma) + self.K * (self.kappa2 + b) ** 2

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def elicit_hyperparameters(K: int, p: int = 1) -> Hyperparameters:
    """Default hyperparameters that give the linear predictor unit prior variance
    at every latent dimension, split equally between the regression part and
    the ``K`` bilinear terms."""
    b = 1.0 / math.sqrt(8.0 * K)
    return Hyperparameters(K=K, p=p, c=1.0, d=1.0, a_sigma=2.0, b_sigma=b,
                           a_tau=2.0, b_tau=b, a_varsigma=2.0, b_varsigma=0.25,
                           omega2=0.25, kappa2=b)


_ARRAY_BLOCKS = ("beta", "u", "v", "eta", "zeta", "gamma", "xi", "nu")
_SCALAR_BLOCKS = ("sigma_u2", "sigma_v2", "tau_u2", "tau_v2", "varsigma2", "psi")


@dataclass
class LatentState:
    """One full parameter configuration, optionally with the augmentation ``z``."""

    beta: np.ndarray
    u: np.ndarray
    v: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    gamma: np.ndarray
    xi: np.ndarray
    sigma_u2: float
    sigma_v2: float
    tau_u2: float
    tau_v2: float
    nu: np.ndarray
    varsigma2: float
    psi: float
    z: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.eta = np.asarray(self.eta, dtype=float)
        self.zeta = np.asarray(self.zeta, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=np.int8)
        self.xi = np.asarray(self.xi, dtype=np.int8)
        self.nu = np.atleast_1d(np.asarray(self.nu, dtype=float))
        for name in _SCALAR_BLOCKS:
            setattr(self, name, float(getattr(self, name)))

    @property
    def n_actors(self) -> int:
        return self.u.shape[0]

    @property
    def K(self) -> int:
        return self.u.shape[2]

    @property
    def p(self) -> int:
        return self.beta.shape[1]

    def copy(self) -> "LatentState":
        kw = {}
        for f in fields(self):
            val = getattr(self, f.name)
            kw[f.name] = val.copy() if isinstance(val, np.ndarray) else val
        return LatentState(**kw)

    def validate(self, Y: CssTensor | None = None):
        n, K = self.n_actors, self.K
        shapes = {"u": (n, n, K), "v": (n, n, K), "eta": (n, K), "zeta": (n, K),
                  "gamma": (n,), "xi": (n,), "beta": (n, self.p), "nu": (self.p,)}
        for name, shp in shapes.items():
            if getattr(self, name).shape != shp:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shp}")
        for name in ("sigma_u2", "sigma_v2", "tau_u2", "tau_v2", "varsigma2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"variance {name} must be > 0")
        if not 0.0 < self.psi < 1.0:
            raise ValueError("psi must lie in (0, 1)")
        if not (np.isin(self.gamma, (0, 1)).all() and np.isin(self.xi, (0, 1)).all()):
            raise ValueError("agreement indicators must be 0/1")
        if Y is not None:
            if Y.n_actors != n:
                raise ValueError("state and data disagree on the number of actors")
            if self.z is not None:
                mask = offdiag_mask(n)[:, :, None] & np.ones(n, dtype=bool)
                ok = (self.z >= 0) == (Y.values == 1)
                if not ok[mask].all():
                    raise ValueError("augmentation signs disagree with the data")
        return self

    def rotated(self, Q: np.ndarray) -> "LatentState":
        """Apply an orthogonal map to every latent row vector (``w -> w @ Q``)."""
        s = self.copy()
        s.u = self.u @ Q
        s.v = self.v @ Q
        s.eta = self.eta @ Q
        s.zeta = self.zeta @ Q
        return s

    def permuted(self, perm) -> "LatentState":
        """Relabel actors on every actor-indexed block: new ``k`` is old ``perm[k]``."""
        p = np.asarray(perm)
        s = self.copy()
        s.beta = self.beta[p]
        s.u = self.u[np.ix_(p, p)]
        s.v = self.v[np.ix_(p, p)]
        s.eta, s.zeta = self.eta[p], self.zeta[p]
        s.gamma, s.xi = self.gamma[p], self.xi[p]
        if self.z is not None:
            s.z = self.z[np.ix_(p, p, p)]
        return s

    # -- serialization --------------------------------------------------
    def to_records(self) -> dict:
        """Flat ``{"beta/<j>": [...], "u/<i>/<j>": [...], ...}`` mapping, 1-based.

        The augmentation ``z`` is not serialized: it is redrawn at the start of
        every sweep, so checkpoints do not need it.
        """
        n = self.n_actors
        rec = {"n_actors": n, "K": self.K, "p": self.p}
        for j in range(n):
            rec[f"beta/{j + 1}"] = self.beta[j].tolist()
        for name in ("u", "v"):
            arr = getattr(self, name)
            for i in range(n):
                for j in range(n):
                    rec[f"{name}/{i + 1}/{j + 1}"] = arr[i, j].tolist()
        for name in ("eta", "zeta"):
            arr = getattr(self, name)
            for i in range(n):
                rec[f"{name}/{i + 1}"] = arr[i].tolist()
        for name in ("gamma", "xi"):
            arr = getattr(self, name)
            for i in range(n):
                rec[f"{name}/{i + 1}"] = int(arr[i])
        rec["nu"] = self.nu.tolist()
        for name in _SCALAR_BLOCKS:
            rec[name] = float(getattr(self, name))
        return rec

    @classmethod
    def from_records(cls, rec: dict) -> "LatentState":
        n, K, p = int(rec["n_actors"]), int(rec["K"]), int(rec["p"])
        beta = np.array([rec[f"beta/{j + 1}"] for j in range(n)], dtype=float).reshape(n, p)
        arrs = {}
        for name in ("u", "v"):
            arrs[name] = np.array([[rec[f"{name}/{i + 1}/{j + 1}"] for j in range(n)]
                                   for i in range(n)], dtype=float).reshape(n, n, K)
        for name in ("eta", "zeta"):
            arrs[name] = np.array([rec[f"{name}/{i + 1}"] for i in range(n)],
                                  dtype=float).reshape(n, K)
        for name in ("gamma", "xi"):
            arrs[name] = np.array([rec[f"{name}/{i + 1}"] for i in range(n)], dtype=np.int8)
        return cls(beta=beta, nu=np.array(rec["nu"], dtype=float).reshape(p),
                   **arrs, **{k: float(rec[k]) for k in _SCALAR_BLOCKS})

    def to_json(self) -> str:
        return json.dumps(self.to_records())

    @classmethod
    def from_json(cls, text: str) -> "LatentState":
        return cls.from_records(json.loads(text))

    def to_text(self) -> str:
        """Line-oriented ``key = v1 v2 ...`` form; floats use ``repr`` so the
        round trip is exact."""
        lines = []
        for key, val in self.to_records().items():
            if isinstance(val, list):
                lines.append(f"{key} = " + " ".join(repr(float(x)) for x in val))
            else:
                lines.append(f"{key} = {val!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LatentState":
        rec = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ValueError(f"line {lineno}: expected 'key = value'")
            key, toks = key.strip(), val.split()
            if key in ("n_actors", "K", "p") or key.startswith(("gamma/", "xi/")):
                rec[key] = int(toks[0])
            elif key in _SCALAR_BLOCKS:
                rec[key] = float(toks[0])
            else:
                rec[key] = [float(t) for t in toks]
        return cls.from_records(rec)


def _covariates(X: DyadCovariates | None, n: int) -> DyadCovariates:
    return intercept_only(n) if X is None else X


def _check_dims(X: DyadCovariates, state: LatentState, n: int):
    if state.n_actors != n or X.n_actors != n:
        raise ValueError(f"dimension mismatch: data has {n} actors, state "
                         f"{state.n_actors}, covariates {X.n_actors}")
    if X.p != state.p:
        raise ValueError(f"dimension mismatch: covariates p={X.p}, state p={state.p}")


def interaction_probability(beta_j, x, u, v) -> float:
    """Phi(x @ beta_j + u @ v)."""
    beta_j, x, u, v = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (beta_j, x, u, v))
    if beta_j.shape != x.shape or u.shape != v.shape:
        raise ValueError("dimension mismatch")
    return float(norm_cdf(x @ beta_j + u @ v))


def linear_predictor(state: LatentState, X: DyadCovariates | None = None) -> np.ndarray:
    """``lp[i, i2, j]`` for every cell (diagonal entries are meaningless)."""
    X = _covariates(X, state.n_actors)
    xb = np.einsum("abp,jp->abj", X.x, state.beta)
    return xb + np.einsum("ajk,bjk->abj", state.u, state.v)


def cell_log_likelihood(Y: CssTensor, X: DyadCovariates | None, state: LatentState) -> np.ndarray:
    """Bernoulli log-mass of every observed cell, flattened over (i, i2, j) with
    i != i2 in row-major order."""
    n = Y.n_actors
    X = _covariates(X, n)
    _check_dims(X, state, n)
    lp = linear_predictor(state, X)
    sign = 2.0 * Y.values - 1.0
    ll = log_norm_cdf(sign * lp)
    return ll[offdiag_mask(n)].ravel()


def log_likelihood(Y: CssTensor, X: DyadCovariates | None, state: LatentState) -> float:
    return float(cell_log_likelihood(Y, X, state).sum())


def _mvn_iso_logpdf(x, mean, var):
    """Sum of log N(x_k; mean_k, var I_K) over the leading axes."""
    x = np.asarray(x, dtype=float)
    K = x.shape[-1]
    sq = np.sum((x - mean) ** 2, axis=-1)
    return -0.5 * (K * (LOG_2PI + np.log(var)) + sq / var)


def _invgamma_logpdf(x, a, b):
    return a * math.log(b) - special.gammaln(a) - (a + 1.0) * math.log(x) - b / x


def log_prior(state: LatentState, hyper: Hyperparameters) -> float:
    n = state.n_actors
    if state.K != hyper.K or state.p != hyper.p:
        raise ValueError("dimension mismatch between state and hyperparameters")
    for name in ("sigma_u2", "sigma_v2", "tau_u2", "tau_v2", "varsigma2"):
        if not getattr(state, name) > 0:
            raise ValueError(f"non-positive variance {name}")
    off = offdiag_mask(n)
    idx = np.arange(n)
    total = 0.0
    for pos, centre, ind, s2, t2 in (
            (state.u, state.eta, state.gamma, state.sigma_u2, state.tau_u2),
            (state.v, state.zeta, state.xi, state.sigma_v2, state.tau_v2)):
        total += _mvn_iso_logpdf(pos, centre[:, None, :], s2)[off].sum()
        self_pos = pos[idx, idx]
        slab = _mvn_iso_logpdf(self_pos, centre, s2)
        spike = _mvn_iso_logpdf(self_pos, 0.0, t2)
        total += np.where(ind == 1, slab, spike).sum()
        total += _mvn_iso_logpdf(centre, 0.0, hyper.kappa2).sum()
    total += _mvn_iso_logpdf(state.beta, state.nu, state.varsigma2).sum()
    total += _mvn_iso_logpdf(state.nu, 0.0, hyper.omega2)
    for name, a, b in (("sigma_u2", hyper.a_sigma, hyper.b_sigma),
                       ("sigma_v2", hyper.a_sigma, hyper.b_sigma),
                       ("tau_u2", hyper.a_tau, hyper.b_tau),
                       ("tau_v2", hyper.a_tau, hyper.b_tau),
                       ("varsigma2", hyper.a_varsigma, hyper.b_varsigma)):
        total += _invgamma_logpdf(getattr(state, name), a, b)
    ones = int(state.gamma.sum() + state.xi.sum())
    total += ones * math.log(state.psi) + (2 * n - ones) * math.log1p(-state.psi)
    total += ((hyper.c - 1.0) * math.log(state.psi) + (hyper.d - 1.0) * math.log1p(-state.psi)
              - special.betaln(hyper.c, hyper.d))
    return float(total)


def log_joint(Y: CssTensor, X: DyadCovariates | None, state: LatentState,
              hyper: Hyperparameters) -> float:
    """log p(Y, parameters) with the augmentation integrated out."""
    return log_likelihood(Y, X, state) + log_prior(state, hyper)


def _invgamma_draw(rng, a, b, size=None):
    return b / rng.gamma(a, 1.0, size=size)


def draw_from_prior(hyper: Hyperparameters, n_actors: int, rng,
                    fixed: dict | None = None) -> LatentState:
    """Draw every parameter block from the prior.

    ``fixed`` pins named blocks (e.g. ``{"sigma_u2": 0.05, "gamma": [...]}``);
    downstream blocks are drawn conditionally on the pinned values.
    """
    fixed = dict(fixed or {})
    n, K, p = n_actors, hyper.K, hyper.p

    def get(name, draw):
        if name in fixed:
            return np.asarray(fixed[name], dtype=float) if not np.isscalar(fixed[name]) \
                else float(fixed[name])
        return draw()

    psi = get("psi", lambda: rng.beta(hyper.c, hyper.d))
    gamma = get("gamma", lambda: (rng.random(n) < psi).astype(np.int8))
    xi = get("xi", lambda: (rng.random(n) < psi).astype(np.int8))
    sigma_u2 = get("sigma_u2", lambda: _invgamma_draw(rng, hyper.a_sigma, hyper.b_sigma))
    sigma_v2 = get("sigma_v2", lambda: _invgamma_draw(rng, hyper.a_sigma, hyper.b_sigma))
    tau_u2 = get("tau_u2", lambda: _invgamma_draw(rng, hyper.a_tau, hyper.b_tau))
    tau_v2 = get("tau_v2", lambda: _invgamma_draw(rng, hyper.a_tau, hyper.b_tau))
    varsigma2 = get("varsigma2", lambda: _invgamma_draw(rng, hyper.a_varsigma, hyper.b_varsigma))
    nu = get("nu", lambda: math.sqrt(hyper.omega2) * rng.standard_normal(p))
    beta = get("beta", lambda: nu + math.sqrt(varsigma2) * rng.standard_normal((n, p)))
    eta = get("eta", lambda: math.sqrt(hyper.kappa2) * rng.standard_normal((n, K)))
    zeta = get("zeta", lambda: math.sqrt(hyper.kappa2) * rng.standard_normal((n, K)))
    idx = np.arange(n)

    def positions(centre, ind, s2, t2):
        pos = centre[:, None, :] + math.sqrt(s2) * rng.standard_normal((n, n, K))
        spike = math.sqrt(t2) * rng.standard_normal((n, K))
        own = np.where(np.asarray(ind)[:, None] == 1, pos[idx, idx], spike)
        pos[idx, idx] = own
        return pos

    u = get("u", lambda: positions(eta, gamma, sigma_u2, tau_u2))
    v = get("v", lambda: positions(zeta, xi, sigma_v2, tau_v2))
    return LatentState(beta=beta, u=u, v=v, eta=eta, zeta=zeta, gamma=gamma, xi=xi,
                       sigma_u2=sigma_u2, sigma_v2=sigma_v2, tau_u2=tau_u2, tau_v2=tau_v2,
                       nu=nu, varsigma2=varsigma2, psi=psi)


def prior_predictive_theta(hyper: Hyperparameters, n_draws: int, rng_seed=None,
                           fixed: dict | None = None, return_predictor: bool = False):
    """Independent draws of the marginal prior of theta for an intercept-only
    dyad (i, i2) seen by a third perceiver.

    ``fixed`` may pin any of ``omega2, varsigma2, kappa2, sigma_u2, sigma_v2``
    (zero allowed) to collapse parts of the hierarchy.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    rng = np.random.default_rng(rng_seed)
    fixed = dict(fixed or {})
    K, n = hyper.K, n_draws

    def var(name, a=None, b=None):
        if name in fixed:
            return np.full(n, float(fixed[name]))
        if a is None:
            return np.full(n, getattr(hyper, name))
        return _invgamma_draw(rng, a, b, size=n)

    omega2 = var("omega2")
    varsigma2 = var("varsigma2", hyper.a_varsigma, hyper.b_varsigma)
    kappa2 = var("kappa2")
    nu0 = np.sqrt(omega2) * rng.standard_normal(n)
    beta0 = nu0 + np.sqrt(varsigma2) * rng.standard_normal(n)
    eta = np.sqrt(kappa2)[:, None] * rng.standard_normal((n, K))
    zeta = np.sqrt(kappa2)[:, None] * rng.standard_normal((n, K))
    sigma_u2 = var("sigma_u2", hyper.a_sigma, hyper.b_sigma)
    sigma_v2 = var("sigma_v2", hyper.a_sigma, hyper.b_sigma)
    u = eta + np.sqrt(sigma_u2)[:, None] * rng.standard_normal((n, K))
    v = zeta + np.sqrt(sigma_v2)[:, None] * rng.standard_normal((n, K))
    lp = beta0 + np.einsum("nk,nk->n", u, v)
    theta = norm_cdf(lp)
    return (theta, lp) if return_predictor else theta


def with_overrides(hyper: Hyperparameters, **kw) -> Hyperparameters:
    return replace(hyper, **kw)
