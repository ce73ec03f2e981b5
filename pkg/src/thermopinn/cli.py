"""Command-line front end.

    thermopinn <generate|train-pinn|train-bpinn|predict|ageing|evaluate>
               --config PATH [--seed N] [--out DIR] [--paper-sum]

Every command writes into the output directory only and leaves a
``manifest_<command>.json`` listing the sha256 of each file it produced.
Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 missing input.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import platform
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import __version__, _kernels
from .ageing import ageing_field, loss_of_life, write_loss_of_life
from .bayes import (
    init_posterior,
    load_posterior,
    posterior_predictive,
    save_posterior,
    train_bpinn,
    uncertainty_error_map,
    write_elbo_csv,
)
from .config import ConfigError, ExperimentConfig, load_config
from .nn import init_mlp, load_params, predict, save_params
from .pinn import train_pinn
from .reference import FieldGrid, error_map, lattice, read_grid, solve_crank_nicolson, write_grid
from .scenario import synthesize_profiles
from .thermal import read_profiles, write_profiles

log = logging.getLogger("thermopinn")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISSING = 0, 2, 3, 4

FILES = {
    "profiles": "profiles.csv",
    "reference": "reference.csv",
    "pinn_params": "pinn_params.txt",
    "pinn_history": "pinn_history.csv",
    "posterior": "bpinn_posterior.txt",
    "elbo": "bpinn_elbo.csv",
    "pinn_field": "pinn_field.csv",
    "bpinn_field": "bpinn_field.csv",
    "ageing": "ageing.csv",
    "loss_of_life": "loss_of_life.csv",
    "pinn_error": "pinn_error.csv",
    "bpinn_error": "bpinn_error.csv",
    "metrics": "metrics.json",
}


class MissingInputError(FileNotFoundError):
    pass


class Run:
    """Per-command context: resolved config, output directory and written files."""

    def __init__(self, command: str, cfg: ExperimentConfig):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg.paths.out_dir)
        self.written: list[Path] = []

    def path(self, key: str) -> Path:
        return self.out / FILES[key]

    def need(self, key: str, hint: str) -> Path:
        p = self.path(key)
        if not p.is_file():
            raise MissingInputError(f"{p} not found; {hint}")
        return p

    def wrote(self, *paths) -> None:
        for p in paths:
            p = Path(p)
            self.written.append(p)
            side = p.with_name(p.name + ".header")
            if side.exists():
                self.written.append(side)

    def profiles(self):
        p = self.path("profiles")
        if p.is_file():
            return read_profiles(p)
        if self.cfg.paths.profiles_csv:
            return read_profiles(self.cfg.paths.profiles_csv)
        sc = self.cfg.scenario
        return synthesize_profiles(sc.hours, sc.dt, sc.load_shape, sc.profile, seed=self.cfg.seed)

    def lattice(self):
        return lattice(self.cfg.thermal, self.cfg.grid.nx, self.cfg.grid.nt)


def _progress(every):
    def cb(it, *rest):
        if it % every == 0:
            val = rest[0] if not hasattr(rest[0], "elbo_loss") else rest[0].elbo_loss
            log.info("iter %d  loss %.6g", it, val)

    return cb


# commands ---------------------------------------------------------------------


def cmd_generate(run: Run, args) -> None:
    cfg = run.cfg
    if cfg.paths.profiles_csv:
        profiles = read_profiles(cfg.paths.profiles_csv)
    else:
        sc = cfg.scenario
        profiles = synthesize_profiles(sc.hours, sc.dt, sc.load_shape, sc.profile, seed=cfg.seed)
    write_profiles(run.path("profiles"), profiles)
    ref = solve_crank_nicolson(cfg.thermal, profiles, cfg.grid.nx, cfg.grid.nt)
    write_grid(run.path("reference"), ref, cfg.thermal)
    run.wrote(run.path("profiles"), run.path("reference"))


def cmd_train_pinn(run: Run, args) -> None:
    cfg = run.cfg
    tc = dataclasses.replace(cfg.train, seed=cfg.seed)
    net, hist = train_pinn(
        init_mlp(tc.layers, cfg.seed), tc, run.profiles(), cfg.thermal, callback=_progress(max(1, tc.iterations // 20))
    )
    save_params(run.path("pinn_params"), net)
    hist.write_csv(run.path("pinn_history"))
    run.wrote(run.path("pinn_params"), run.path("pinn_history"))


def cmd_train_bpinn(run: Run, args) -> None:
    cfg = run.cfg
    bc = cfg.bayes
    tc = dataclasses.replace(
        cfg.train, seed=cfg.seed, iterations=bc.iterations, learning_rate=bc.learning_rate, lr_decay=bc.lr_decay
    )
    post = init_posterior(tc.layers, cfg.seed, bc.rho_init)
    if bc.warm_start:
        net = load_params(run.need("pinn_params", "run train-pinn first or set bayes.warm_start = false"))
        if net.layer_sizes != post.layer_sizes:
            raise ConfigError("bayes.warm_start: PINN checkpoint layers differ from train.layers")
        post.mu = net.flatten()
    post, history = train_bpinn(post, tc, bc, run.profiles(), cfg.thermal, callback=_progress(max(1, bc.iterations // 20)))
    save_posterior(run.path("posterior"), post)
    write_elbo_csv(run.path("elbo"), history)
    run.wrote(run.path("posterior"), run.path("elbo"))


def cmd_predict(run: Run, args) -> None:
    cfg = run.cfg
    th = cfg.thermal
    xs, ts = run.lattice()
    have_pinn, have_post = run.path("pinn_params").is_file(), run.path("posterior").is_file()
    if not (have_pinn or have_post):
        raise MissingInputError(f"no {FILES['pinn_params']} or {FILES['posterior']} in {run.out}; train a model first")
    if have_pinn:
        net = load_params(run.path("pinn_params"))
        X, T = np.meshgrid(xs / th.H, ts / th.t_end, indexing="ij")
        field = FieldGrid(xs, ts, th.theta_ref + th.theta_scale * predict(net, X, T))
        write_grid(run.path("pinn_field"), field, th)
        run.wrote(run.path("pinn_field"))
    if have_post:
        post = load_posterior(run.path("posterior"))
        field = posterior_predictive(post, xs, ts, th, cfg.bayes.n_samples, seed=cfg.seed)
        write_grid(run.path("bpinn_field"), field, th)
        run.wrote(run.path("bpinn_field"))


SOURCES = {"pinn": "pinn_field", "bpinn": "bpinn_field", "reference": "reference"}


def cmd_ageing(run: Run, args) -> None:
    key = SOURCES[args.source]
    grid = read_grid(run.need(key, f"produce {FILES[key]} first (generate or predict)"))
    aged = ageing_field(FieldGrid(grid.xs, grid.ts, grid.theta), run.cfg.ageing)
    write_grid(run.path("ageing"), aged, run.cfg.thermal)
    write_loss_of_life(run.path("loss_of_life"), aged.xs, loss_of_life(aged))
    run.wrote(run.path("ageing"), run.path("loss_of_life"))


def cmd_evaluate(run: Run, args) -> None:
    th = run.cfg.thermal
    metrics = {}
    if args.reference or args.prediction:
        if not (args.reference and args.prediction):
            raise ConfigError("--reference and --prediction must be given together")
        for p in (args.reference, args.prediction):
            if not Path(p).is_file():
                raise MissingInputError(f"{p} not found")
        _, metrics["prediction"] = error_map(read_grid(args.prediction), read_grid(args.reference))
    else:
        ref = read_grid(run.need("reference", "run generate first"))
        if not (run.path("pinn_field").is_file() or run.path("bpinn_field").is_file()):
            raise MissingInputError(f"no predicted field in {run.out}; run predict first")
        if run.path("pinn_field").is_file():
            err, metrics["pinn"] = error_map(read_grid(run.path("pinn_field")), ref)
            write_grid(run.path("pinn_error"), err, th)
            run.wrote(run.path("pinn_error"))
        if run.path("bpinn_field").is_file():
            pred = read_grid(run.path("bpinn_field"))
            maps = uncertainty_error_map(pred, ref)
            write_grid(run.path("bpinn_error"), FieldGrid(ref.xs, ref.ts, maps["mean_error"].theta, pred.std), th)
            run.wrote(run.path("bpinn_error"))
            metrics["bpinn"] = maps["summary"]
    run.path("metrics").write_text(json.dumps(metrics, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    run.wrote(run.path("metrics"))
    for name, m in metrics.items():
        log.info("%s: %s", name, ", ".join(f"{k}={v:.6g}" for k, v in m.items()))


COMMANDS = {
    "generate": cmd_generate,
    "train-pinn": cmd_train_pinn,
    "train-bpinn": cmd_train_bpinn,
    "predict": cmd_predict,
    "ageing": cmd_ageing,
    "evaluate": cmd_evaluate,
}


# plumbing ---------------------------------------------------------------------


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(run: Run, wall: float) -> Path:
    manifest = {
        "command": run.command,
        "config_hash": run.cfg.digest(),
        "seed": run.cfg.seed,
        "backend": _kernels.BACKEND,
        "versions": {
            "thermopinn": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "threads": os.environ.get("THERMOPINN_THREADS", ""),
        "wall_time_s": round(wall, 3),
        "outputs": {p.name: sha256_file(p) for p in run.written},
    }
    path = run.out / f"manifest_{run.command}.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _thread_limit():
    raw = os.environ.get("THERMOPINN_THREADS", "").strip()
    if not raw:
        return nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"THERMOPINN_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"THERMOPINN_THREADS must be a positive integer, got {raw!r}")
    return threadpool_limits(limits=n)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thermopinn", description="Oil temperature PINN / B-PINN experiments.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="TOML experiment file")
    ap.add_argument("--seed", type=int, help="override the experiment seed")
    ap.add_argument("--out", help="override paths.out_dir")
    ap.add_argument("--paper-sum", action="store_true", help="unnormalized residual sum in the PINN loss")
    ap.add_argument("--source", choices=sorted(SOURCES), default="pinn", help="field used by 'ageing'")
    ap.add_argument("--reference", help="'evaluate': explicit reference grid")
    ap.add_argument("--prediction", help="'evaluate': explicit predicted grid")
    ap.add_argument("-q", "--quiet", action="store_true")
    return ap


def resolve(args) -> ExperimentConfig:
    if not Path(args.config).is_file():
        raise MissingInputError(f"config file {args.config} not found")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.out:
        cfg = dataclasses.replace(cfg, paths=dataclasses.replace(cfg.paths, out_dir=str(Path(args.out))))
    if args.paper_sum:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, loss_normalization="paper_sum"))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr
    )
    try:
        cfg = resolve(args)
        run = Run(args.command, cfg)
        run.out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        with _thread_limit():
            COMMANDS[args.command](run, args)
        write_manifest(run, time.perf_counter() - t0)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        log.error("missing input: %s", exc)
        return EXIT_MISSING
    except (FloatingPointError, ArithmeticError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        # bad values inside input files (profiles, grids, checkpoints)
        log.error("invalid input: %s", exc)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
