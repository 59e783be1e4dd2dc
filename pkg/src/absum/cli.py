"""Command line entry point: ``absum train|eval|sweep|bench|inspect|run``.

Exit status is 0 on success, 1 for invalid input (bad flags, config, IDX
or checkpoint files) and 2 when a run fails after validation.
"""

from __future__ import annotations

import logging
import sys

import click
import numpy as np
from threadpoolctl import threadpool_limits

from .circulant import layer_spectral_norm, spectral_norm
from .data import IdxFormatError
from .pipeline import (ConfigError, ExperimentConfig, Writer, _run_job, _validate_job,
                       lambda_sweep, run)
from .regularize import METHODS
from .serialize import CheckpointError, load_checkpoint
from .train import CONV_MAP_SIZE

VALIDATION_ERRORS = (ConfigError, IdxFormatError, CheckpointError)


def _common(f):
    f = click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)(f)
    f = click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True,
                     help="BLAS threads; 1 gives bit-reproducible runs.")(f)
    f = click.option("--out", "out_dir", type=click.Path(file_okay=False), default="absum_out",
                     show_default=True, help="Output directory.")(f)
    return f


def _data(f):
    opts = [
        click.option("--train-images", type=click.Path(dir_okay=False)),
        click.option("--train-labels", type=click.Path(dir_okay=False)),
        click.option("--test-images", type=click.Path(dir_okay=False)),
        click.option("--test-labels", type=click.Path(dir_okay=False)),
        click.option("--train-limit", type=click.IntRange(min=1), default=10_000, show_default=True),
        click.option("--test-limit", type=click.IntRange(min=1), default=1_000, show_default=True),
        click.option("--synthetic", type=click.IntRange(min=1), default=None,
                     help="Use N synthetic digits per split instead of MNIST."),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _dataset(kw, seed) -> dict:
    out = {}
    for split in ("train", "test"):
        images, labels = kw.pop(f"{split}_images"), kw.pop(f"{split}_labels")
        limit = kw.pop(f"{split}_limit")
        if images or labels:
            out[split] = {"kind": "idx", "images": images, "labels": labels, "limit": limit}
        elif kw["synthetic"]:
            out[split] = {"kind": "synthetic", "count": kw["synthetic"], "seed": seed, "limit": limit}
        else:
            out[split] = {"kind": "desk", "limit": limit}
    kw.pop("synthetic")
    return out


def _regularizer(method, lam, sigma, snc_every) -> dict:
    return {"method": method, "lam": lam, "sigma_max": sigma, "snc_every": snc_every}


def _execute(doc: dict, threads: int):
    cfg = ExperimentConfig.from_dict(doc)
    with threadpool_limits(limits=threads):
        paths = run(cfg)
    for p in paths:
        click.echo(str(p))


def _reg_options(f):
    f = click.option("--snc-every", type=click.IntRange(min=1), default=100, show_default=True)(f)
    f = click.option("--sigma", type=float, default=1.0, show_default=True,
                     help="SNC clipping threshold.")(f)
    f = click.option("--lam", type=float, default=0.0, show_default=True)(f)
    f = click.option("--method", type=click.Choice(METHODS), default="none", show_default=True)(f)
    return f


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log per-epoch progress.")
def cli(verbose):
    """Absum filter regularization: train, attack and measure small CNNs."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")


@cli.command("train")
@_common
@_data
@_reg_options
@click.option("--epochs", type=click.IntRange(min=0), default=10, show_default=True)
@click.option("--adv-eps", type=float, default=None, help="Train on PGD examples of this radius.")
@click.option("--adv-ramp", type=click.FloatRange(min=0), default=0.0, show_default=True,
              help="Epochs over which the PGD radius grows linearly from 0.")
def train_cmd(seed, threads, out_dir, method, lam, sigma, snc_every, epochs, adv_eps, adv_ramp,
              **kw):
    """Train a model; writes model.ckpt and trace.csv."""
    train = {"epochs": epochs, "regularizer": _regularizer(method, lam, sigma, snc_every)}
    if adv_eps is not None:
        train["adversarial"] = {"eps": adv_eps}
        train["adv_ramp_epochs"] = adv_ramp
    doc = {"seed": seed, "output_dir": out_dir, "dataset": _dataset(kw, seed), "train": train,
           "jobs": []}
    _execute(doc, threads)


@cli.command("eval")
@click.argument("checkpoint", type=click.Path())
@_common
@_data
@click.option("--attack", "attacks", multiple=True, default=("sfa-grid",), show_default=True,
              type=click.Choice(["sfa-grid", "pgd-sweep", "hf-attack", "high-pass", "spectrum"]))
@click.option("--eps", type=float, default=None, help="SFA / spectrum budget.")
@click.option("--eps-list", default="0.05,0.1,0.15,0.2,0.25,0.3", show_default=True,
              help="Comma-separated PGD budgets.")
@click.option("--radius", type=float, default=None, help="Low/high-pass radius (default n/2).")
@click.option("--substitute", type=click.Path(), default=None,
              help="Also run a transfer attack crafted on this checkpoint.")
def eval_cmd(checkpoint, seed, threads, out_dir, attacks, eps, eps_list, radius, substitute, **kw):
    """Evaluate CHECKPOINT against the selected attacks."""
    try:
        eps_values = [float(e) for e in eps_list.split(",")]
    except ValueError:
        raise click.BadParameter(f"not a list of numbers: {eps_list}", param_hint="--eps-list")
    jobs = []
    for kind in attacks:
        job = {"kind": kind}
        if kind == "sfa-grid":
            job["eps"] = 80 / 255 if eps is None else eps
        elif kind == "spectrum":
            job["eps"] = 0.2 if eps is None else eps
        elif kind == "pgd-sweep":
            job["eps_list"] = eps_values
        elif radius is not None:
            job["radius"] = radius
        jobs.append(job)
    if substitute:
        jobs.append({"kind": "transfer", "substitute": substitute, "eps": 0.2})
    dataset = _dataset(kw, seed)
    doc = {"seed": seed, "output_dir": out_dir, "dataset": {"test": dataset["test"]},
           "checkpoint": checkpoint, "jobs": jobs}
    _execute(doc, threads)


@cli.command("sweep")
@_common
@_data
@_reg_options
@click.option("--grid", default="1e-4,1e-3,1e-2,1e-1,1,10", show_default=True,
              help="Comma-separated weights (thresholds for snc).")
@click.option("--epochs", type=click.IntRange(min=0), default=10, show_default=True)
@click.option("--eps", type=float, default=80 / 255, show_default=True)
def sweep_cmd(seed, threads, out_dir, method, lam, sigma, snc_every, grid, epochs, eps, **kw):
    """Train one model per weight and tabulate SFA Avg./Min./clean accuracy."""
    try:
        values = [float(g) for g in grid.split(",")]
    except ValueError:
        raise click.BadParameter(f"not a list of numbers: {grid}", param_hint="--grid")
    doc = {"seed": seed, "output_dir": out_dir, "dataset": _dataset(kw, seed),
           "train": {"epochs": epochs, "regularizer": _regularizer(method, lam, sigma, snc_every)},
           "jobs": [{"kind": "sfa-grid", "eps": eps}]}
    cfg = ExperimentConfig.from_dict(doc)
    with threadpool_limits(limits=threads):
        rows = lambda_sweep(cfg, values)
    click.echo(f"{'lam':>8} {'clean':>7} {'avg':>7} {'min':>7}")
    for r in rows:
        click.echo(f"{r['lam']:>8} {r['clean']:7.2f} {r['avg']:7.2f} {r['min']:7.2f}")


@cli.command("bench")
@_common
@click.option("--methods", default="none,absum,snc", show_default=True)
@click.option("--runs", type=click.IntRange(min=1), default=3, show_default=True)
@click.option("--epochs", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--count", type=click.IntRange(min=64), default=2000, show_default=True,
              help="Synthetic images per epoch.")
@click.option("--snc-size", type=click.IntRange(min=5), default=32, show_default=True)
def bench_cmd(seed, threads, out_dir, methods, runs, epochs, count, snc_size):
    """Time one training epoch per regularizer on synthetic digits."""
    job = {"kind": "benchmark", "methods": methods.split(","), "runs": runs, "epochs": epochs,
           "count": count, "snc_every": 1, "snc_size": snc_size}
    doc = {"seed": seed, "output_dir": out_dir, "dataset": {}, "checkpoint": None,
           "train": None, "jobs": [job]}
    # benchmarks need no model; validate the job alone
    _validate_job(job, "jobs[0]")
    cfg = ExperimentConfig(**doc)
    with threadpool_limits(limits=threads):
        out = Writer(out_dir, cfg.hash, seed)
        _run_job(cfg, job, 0, None, out)
    for p in out.written:
        click.echo(str(p))


@cli.command("inspect")
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
def inspect_cmd(checkpoint):
    """Print per-layer filter norms of CHECKPOINT."""
    params, meta = load_checkpoint(checkpoint)
    click.echo(f"checkpoint {checkpoint}  seed={meta.get('seed')}  "
               f"config_hash={meta.get('config_hash')}")
    click.echo(f"{'layer':<8} {'filters':>7} {'mean|sum k|':>12} {'max sum|k|':>11} "
               f"{'max filter s.n.':>16} {'layer s.n.':>11}")
    for name, bank in params.conv_banks().items():
        n = CONV_MAP_SIZE[name]
        flat = bank.reshape(-1, bank.shape[-2], bank.shape[-1])
        sums = np.abs(flat.sum(axis=(1, 2)))
        l1 = np.abs(flat).sum(axis=(1, 2))
        sn = max(spectral_norm(k, n) for k in flat)
        click.echo(f"{name:<8} {flat.shape[0]:>7} {sums.mean():>12.4g} {l1.max():>11.4g} "
                   f"{sn:>16.4g} {layer_spectral_norm(bank, n):>11.4g}")
    total = sum(a.size for a in params.arrays().values())
    click.echo(f"parameters: {total}  standardization mean={params.mean:.4f} std={params.std:.4f}")


@cli.command("run")
@click.argument("config", type=click.Path())
@click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True)
def run_cmd(config, threads):
    """Execute a JSON experiment config."""
    cfg = ExperimentConfig.from_file(config)
    with threadpool_limits(limits=threads):
        for p in run(cfg):
            click.echo(str(p))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="absum", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except VALIDATION_ERRORS as e:
        click.echo(f"error: {e}", err=True)
        return 1
    except Exception as e:  # noqa: BLE001  anything past validation is a runtime failure
        click.echo(f"runtime error: {type(e).__name__}: {e}", err=True)
        return 2
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
