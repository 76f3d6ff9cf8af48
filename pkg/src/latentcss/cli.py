"""Command-line front end.

Every run writes ``manifest.json`` into ``--out-dir`` before starting
(``status: running``) and rewrites it when done.  All stochastic outputs are
functions of ``--seed``, the data and the resolved configuration.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .css_data import (build_dyadic_covariates, load_attributes, load_css, threshold_consensus,
                       dump_css)
from .model_core import elicit_hyperparameters
from .model_selection import derive_seed, k_sweep
from .postprocess import (agreement_csv, align_samples, consensus_csv, consensus_probabilities,
                          agreement_probabilities, position_summaries, positions_csv)
from .ppc import ppc_run
from .sampler import ChainConfig, ChainOutput, gelman_rubin, pool_chains, run_chains
from .synth import geweke_harness, simulate_css, strong_signal_scenario, SynthScenario

SUBCOMMANDS = ("fit", "select-k", "summarize", "ppc", "simulate", "geweke",
               "consensus-threshold")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_k_range(text: str) -> list[int]:
    """``"2..8"`` (inclusive), ``"2,4,6"`` or ``"3"``."""
    text = str(text).strip()
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            a, b = int(a), int(b)
            if b < a:
                raise ValueError
            return list(range(a, b + 1))
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad K specification {text!r}; use a..b or a comma list") from None


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _add_common(p, data=True, fit=True):
    if data:
        p.add_argument("--data", help="CSS file")
        p.add_argument("--format", default="long_csv",
                       choices=["long_csv", "matrix_stack", "json"])
        p.add_argument("--covariates", help="attribute CSV (actor,<field>...)")
        p.add_argument("--recipe",
                       help="comma list of same:<field> / absdiff:<field>; default uses "
                            "every column (numeric -> absdiff, text -> same)")
    if fit:
        p.add_argument("--k", default="2")
        p.add_argument("--chains", type=int, default=4)
        p.add_argument("--iters", type=int, default=6000)
        p.add_argument("--burnin", type=int, default=1000)
        p.add_argument("--thin", type=int, default=5)
        p.add_argument("--init", default="spectral",
                       choices=["prior_draw", "data_informed", "spectral"])
        p.add_argument("--jobs", type=int, default=1, help="parallel chain processes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--config", help="JSON file whose keys override flags")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="latentcss", description="Latent space models for CSS data")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fit", help="run chains and write summaries")
    _add_common(p)
    p.add_argument("--checkpoint-every", type=int, default=0)

    p = sub.add_parser("select-k", help="DIC/WAIC over a range of K")
    _add_common(p)

    p = sub.add_parser("summarize", help="summaries from stored chains")
    p.add_argument("--chains-dir", required=False, help="directory holding chain_<c>/ folders")
    p.add_argument("--data", help="CSS file (only used for actor labels)")
    p.add_argument("--format", default="long_csv", choices=["long_csv", "matrix_stack", "json"])
    p.add_argument("--out-dir", default=".")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")

    p = sub.add_parser("ppc", help="posterior predictive checks from stored chains")
    _add_common(p, fit=False)
    p.add_argument("--chains-dir")
    p.add_argument("--reps", type=int, default=200)

    p = sub.add_parser("simulate", help="simulate a CSS from the model")
    p.add_argument("--actors", type=int, default=20)
    p.add_argument("--k", default="2")
    p.add_argument("--spikes", default="", help="comma list of 1-based actors with gamma=xi=0")
    p.add_argument("--radius", type=float, default=0.0,
                   help="consensus-position norm; 0 draws everything from the prior")
    p.add_argument("--format", default="long_csv", choices=["long_csv", "matrix_stack", "json"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--config")

    p = sub.add_parser("geweke", help="joint-distribution test of the sampler")
    p.add_argument("--actors", type=int, default=6)
    p.add_argument("--k", default="2")
    p.add_argument("--outer", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--config")

    p = sub.add_parser("consensus-threshold", help="threshold consensus network")
    p.add_argument("--data")
    p.add_argument("--format", default="long_csv", choices=["long_csv", "matrix_stack", "json"])
    p.add_argument("--delta0", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--config")
    return parser


def _resolve(args) -> dict:
    cfg = vars(args).copy()
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
        if not isinstance(overrides, dict):
            raise UsageError("config file must hold a JSON object")
        for key, val in overrides.items():
            key = key.replace("-", "_")
            if key not in cfg or key in ("command", "config"):
                raise UsageError(f"unknown config key {key!r}")
            cfg[key] = val
    return cfg


def _need(cfg, *keys):
    for k in keys:
        if cfg.get(k) in (None, ""):
            raise UsageError(f"--{k.replace('_', '-')} is required for {cfg['command']}")


def _load_data(cfg):
    _need(cfg, "data")
    Y = load_css(Path(cfg["data"]).read_bytes(), cfg["format"])
    X = None
    if cfg.get("covariates"):
        table = load_attributes(Path(cfg["covariates"]).read_bytes())
        if len(table["actor"]) != Y.n_actors:
            raise ValueError(f"attribute table has {len(table['actor'])} actors, data has "
                             f"{Y.n_actors}")
        if cfg.get("recipe"):
            recipe = [r.strip() for r in str(cfg["recipe"]).split(",") if r.strip()]
        else:
            recipe = [("abs_difference" if all(isinstance(v, float) for v in col)
                       else "same_category", name)
                      for name, col in table.items() if name != "actor"]
        X = build_dyadic_covariates(table, recipe)
    return Y, X


def _inputs(cfg):
    out = {}
    for key in ("data", "covariates", "config"):
        if cfg.get(key):
            out[key] = {"path": str(cfg[key]), "sha256": _digest(cfg[key])}
    return out


class _Manifest:
    def __init__(self, out_dir: Path, cfg: dict):
        self.path = out_dir / "manifest.json"
        self.body = {"subcommand": cfg["command"], "config": cfg, "inputs": _inputs(cfg),
                     "seed": cfg.get("seed"), "version": __version__, "status": "running"}
        self.t0 = time.perf_counter()
        self._write()

    def _write(self):
        self.path.write_text(json.dumps(self.body, indent=2, sort_keys=True, default=str) + "\n")

    def finish(self, outputs, status="complete", **extra):
        self.body.update(status=status, outputs=sorted(outputs),
                         seconds=round(time.perf_counter() - self.t0, 3), **extra)
        self._write()


def _chain_config(cfg, K):
    return ChainConfig(n_iterations=int(cfg["iters"]), burn_in=int(cfg["burnin"]),
                       thin=int(cfg["thin"]), n_chains=int(cfg["chains"]),
                       rng_seed=int(cfg["seed"]), K=K, init=cfg["init"])


def _write(out_dir, name, text, outputs):
    (out_dir / name).write_text(text)
    outputs.append(name)


def _summaries(chains, out_dir, labels, outputs):
    pooled = pool_chains(chains)
    pg, px = agreement_probabilities(pooled)
    _write(out_dir, "agreement.csv", agreement_csv(pg, px, labels), outputs)
    _write(out_dir, "consensus.csv", consensus_csv(consensus_probabilities(pooled), labels),
           outputs)
    aligned = align_samples(pooled)
    _write(out_dir, "positions.csv", positions_csv(position_summaries(aligned), labels), outputs)
    diag = {"n_samples": len(pooled), "n_chains": len(chains),
            "degenerate_alignment": bool(aligned.degenerate.any())}
    if len(chains) >= 2 and min(len(c) for c in chains) >= 10:
        n = min(len(c) for c in chains)
        diag["rhat_logjoint"] = gelman_rubin([c.logjoint_trace[:n] for c in chains])
    _write(out_dir, "diagnostics.json", json.dumps(diag, indent=2, sort_keys=True) + "\n",
           outputs)
    return diag


def _load_chains(chains_dir) -> list[ChainOutput]:
    d = Path(chains_dir)
    dirs = sorted(p for p in d.glob("chain_*") if p.is_dir())
    if not dirs:
        raise FileNotFoundError(f"no chain_* directories under {d}")
    return [ChainOutput.load(p) for p in sorted(dirs, key=lambda p: int(p.name.split("_")[1]))]


def cmd_fit(cfg, out_dir, outputs):
    ks = parse_k_range(cfg["k"])
    if len(ks) != 1:
        raise UsageError("fit takes a single --k")
    Y, X = _load_data(cfg)
    K = ks[0]
    hyper = elicit_hyperparameters(K, 1 if X is None else X.p)
    config = _chain_config(cfg, K)
    every = int(cfg.get("checkpoint_every") or 0)
    if every:
        from .sampler import run_chain
        seqs = np.random.SeedSequence(config.rng_seed).spawn(config.n_chains)
        chains = [run_chain(Y, X, hyper, config, seqs[c], c, out_dir / "checkpoints", every)
                  for c in range(config.n_chains)]
        outputs.append("checkpoints/")
    else:
        chains = run_chains(Y, X, hyper, config, n_jobs=int(cfg["jobs"]))
    for c in chains:
        c.save(out_dir / "chains" / f"chain_{c.chain_index}")
    outputs.append("chains/")
    return _summaries(chains, out_dir, Y.actor_labels, outputs)


def cmd_select_k(cfg, out_dir, outputs):
    ks = parse_k_range(cfg["k"])
    Y, X = _load_data(cfg)
    report = k_sweep(Y, X, None, ks, _chain_config(cfg, ks[0]), n_jobs=int(cfg["jobs"]))
    _write(out_dir, "criteria.csv", report.to_csv(), outputs)
    return {"dic_argmin": report.dic_argmin, "waic_argmin": report.waic_argmin}


def cmd_summarize(cfg, out_dir, outputs):
    chains = _load_chains(cfg.get("chains_dir") or out_dir / "chains")
    labels = None
    if cfg.get("data"):
        labels = load_css(Path(cfg["data"]).read_bytes(), cfg["format"]).actor_labels
    return _summaries(chains, out_dir, labels, outputs)


def cmd_ppc(cfg, out_dir, outputs):
    Y, X = _load_data(cfg)
    chains = _load_chains(cfg.get("chains_dir") or out_dir / "chains")
    pooled = pool_chains(chains)
    report = ppc_run(pooled, Y, X, min(int(cfg["reps"]), len(pooled)), int(cfg["seed"]))
    _write(out_dir, "ppc.csv", report.to_csv(), outputs)
    _write(out_dir, "ppc_observed.csv", report.observed_csv(), outputs)
    _write(out_dir, "ppc_pvalues.csv", report.pvalues_csv(), outputs)
    return {"p_values": report.p_values}


def cmd_simulate(cfg, out_dir, outputs):
    K = parse_k_range(cfg["k"])[0]
    n = int(cfg["actors"])
    try:
        spikes = [int(t) - 1 for t in str(cfg.get("spikes") or "").split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--spikes must be a comma list of integers, got {cfg['spikes']!r}")
    if any(not 0 <= a < n for a in spikes):
        raise UsageError(f"--spikes entries must lie in 1..{n}")
    hyper = elicit_hyperparameters(K)
    seed = int(cfg["seed"])
    if float(cfg["radius"]) > 0:
        scen = strong_signal_scenario(n, K, spikes=spikes, radius=float(cfg["radius"]),
                                      rng=derive_seed(seed, "scenario"))
    else:
        scen = SynthScenario(n, K, sender_spikes=spikes or None, receiver_spikes=spikes or None)
    Y, truth = simulate_css(scen, hyper, derive_seed(seed, "data"))
    ext = {"long_csv": "csv", "matrix_stack": "txt", "json": "json"}[cfg["format"]]
    _write(out_dir, f"css.{ext}", dump_css(Y, cfg["format"]), outputs)
    _write(out_dir, "truth_state.txt", truth.to_text(), outputs)
    _write(out_dir, "truth_state.json", truth.to_json(), outputs)
    return {"density": float(Y.values.sum() / Y.n_cells)}


def cmd_geweke(cfg, out_dir, outputs):
    K = parse_k_range(cfg["k"])[0]
    res = geweke_harness(int(cfg["actors"]), K, elicit_hyperparameters(K), int(cfg["outer"]),
                         int(cfg["seed"]))
    _write(out_dir, "geweke.csv", res.to_csv(), outputs)
    return {"max_abs_z": res.max_abs_z()}


def cmd_consensus_threshold(cfg, out_dir, outputs):
    _need(cfg, "data")
    delta0 = float(cfg["delta0"])
    if not 0.0 <= delta0 < 1.0:
        raise UsageError("--delta0 must lie in [0, 1)")
    Y = load_css(Path(cfg["data"]).read_bytes(), cfg["format"])
    mat = threshold_consensus(Y, delta0)
    text = "\n".join(" ".join(str(int(v)) for v in row) for row in mat) + "\n"
    _write(out_dir, "consensus_threshold.txt", text, outputs)
    return {"n_ties": int(mat.sum())}


COMMANDS = {"fit": cmd_fit, "select-k": cmd_select_k, "summarize": cmd_summarize,
            "ppc": cmd_ppc, "simulate": cmd_simulate, "geweke": cmd_geweke,
            "consensus-threshold": cmd_consensus_threshold}


def _fail(kind, message, code):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message), "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(f"a subcommand is required: {', '.join(SUBCOMMANDS)}")
        cfg = _resolve(args)
    except UsageError as exc:
        return _fail("usage", exc, 2)
    out_dir = Path(cfg["out_dir"])
    outputs: list[str] = []
    manifest = None
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = _Manifest(out_dir, cfg)
        result = COMMANDS[cfg["command"]](cfg, out_dir, outputs)
    except UsageError as exc:
        if manifest:
            manifest.finish(outputs, status="usage_error", error=str(exc))
        return _fail("usage", exc, 2)
    except Exception as exc:  # noqa: BLE001 - reported as JSON, exit 1
        if manifest:
            manifest.finish(outputs, status="failed", error=f"{type(exc).__name__}: {exc}")
        return _fail(type(exc).__name__, exc, 1)
    manifest.finish(outputs, result=result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
