"""Config-driven runs: train and/or evaluate, writing report files.

An experiment config is a JSON document::

    {
      "seed": 0,
      "output_dir": "out",
      "dataset": {"train": {"kind": "desk", "limit": 10000},
                  "test": {"kind": "desk", "split": "test", "limit": 1000}},
      "train": {"epochs": 10, "regularizer": {"method": "absum", "lam": 0.01}},
      "checkpoint": null,
      "jobs": [{"kind": "sfa-grid", "eps": 0.3137}]
    }

Either ``train`` or ``checkpoint`` must be given. All validation happens up
front and names the offending field; nothing is written on failure.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn
from .attacks import PGDSpec, accuracy, pgd, sfa
from .data import DatasetSource
from .evaluate import (benchmark_epoch, high_frequency_accuracy, high_pass_accuracy,
                       pgd_sweep, power_spectrum, sfa_grid)
from .regularize import METHODS, RegularizerConfig
from .serialize import (SCHEMA_VERSION, canonical_json, config_hash, grid_to_csv,
                        grid_to_json, json_text, load_checkpoint, matrix_to_csv,
                        save_checkpoint, table_to_csv, trace_to_csv)
from .train import TrainConfig, train

log = logging.getLogger(__name__)

JOB_KINDS = ("sfa-grid", "pgd-sweep", "hf-attack", "high-pass", "transfer", "spectrum",
             "benchmark")


class ConfigError(ValueError):
    """Invalid experiment config; the message starts with the field path."""


@dataclass
class ExperimentConfig:
    dataset: dict = field(default_factory=dict)
    train: dict | None = None
    checkpoint: str | None = None
    jobs: list = field(default_factory=list)
    output_dir: str = "absum_out"
    seed: int = 0

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentConfig:
        if not isinstance(doc, dict):
            raise ConfigError("<root>: config must be a JSON object")
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown field")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> ExperimentConfig:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"<file>: invalid JSON ({e})") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {"dataset": self.dataset, "train": self.train, "checkpoint": self.checkpoint,
                "jobs": self.jobs, "output_dir": self.output_dir, "seed": self.seed}

    @property
    def hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        return config_hash(d)

    # -- validation ------------------------------------------------------------

    def validate(self) -> None:
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed: must be a non-negative integer")
        if self.train is None and self.checkpoint is None:
            raise ConfigError("train: either 'train' or 'checkpoint' is required")
        if self.train is not None and self.checkpoint is not None:
            raise ConfigError("checkpoint: give 'train' or 'checkpoint', not both")
        if self.checkpoint is not None and not Path(self.checkpoint).is_file():
            raise ConfigError(f"checkpoint: file not found: {self.checkpoint}")
        if self.train is not None:
            self.train_config()
            self.source("train")
        if not isinstance(self.jobs, list):
            raise ConfigError("jobs: must be a list")
        for i, job in enumerate(self.jobs):
            _validate_job(job, f"jobs[{i}]")
        if any(j["kind"] != "benchmark" for j in self.jobs):
            self.source("test")

    def source(self, split: str) -> DatasetSource:
        spec = self.dataset.get(split) if isinstance(self.dataset, dict) else None
        if spec is None:
            raise ConfigError(f"dataset.{split}: missing")
        try:
            src = DatasetSource(**{"split": split, **spec})
        except TypeError as e:
            raise ConfigError(f"dataset.{split}: {e}") from None
        if src.kind not in ("desk", "idx", "synthetic"):
            raise ConfigError(f"dataset.{split}.kind: unknown kind {src.kind!r}")
        if src.kind == "idx":
            for key in ("images", "labels"):
                path = getattr(src, key)
                if not path or not Path(path).is_file():
                    raise ConfigError(f"dataset.{split}.{key}: file not found: {path}")
        if src.limit is not None and src.limit < 1:
            raise ConfigError(f"dataset.{split}.limit: must be positive")
        return src

    def train_config(self) -> TrainConfig:
        spec = dict(self.train or {})
        if "seed" in spec:
            raise ConfigError("train.seed: set the top-level 'seed' instead")
        reg = spec.get("regularizer", {})
        if not isinstance(reg, dict):
            raise ConfigError("train.regularizer: must be an object")
        if reg.get("method", "none").lower() not in METHODS:
            raise ConfigError(f"train.regularizer.method: must be one of {list(METHODS)}")
        try:
            return TrainConfig(**spec, seed=self.seed)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"train: {e}") from None


def _validate_job(job, path: str) -> None:
    if not isinstance(job, dict) or "kind" not in job:
        raise ConfigError(f"{path}: job must be an object with a 'kind'")
    kind = job["kind"]
    if kind not in JOB_KINDS:
        raise ConfigError(f"{path}.kind: must be one of {list(JOB_KINDS)}")
    for key in ("eps", "radius", "alpha"):
        if key in job and (not isinstance(job[key], (int, float)) or job[key] < 0):
            raise ConfigError(f"{path}.{key}: must be a non-negative number")
    if kind == "pgd-sweep":
        eps_list = job.get("eps_list")
        if not isinstance(eps_list, list) or not eps_list:
            raise ConfigError(f"{path}.eps_list: must be a non-empty list")
        for j, e in enumerate(eps_list):
            if not isinstance(e, (int, float)) or e < 0:
                raise ConfigError(f"{path}.eps_list[{j}]: must be a non-negative number")
    if kind == "transfer":
        sub = job.get("substitute")
        if not sub or not Path(sub).is_file():
            raise ConfigError(f"{path}.substitute: checkpoint not found: {sub}")
    if kind == "spectrum" and job.get("source", "pgd") not in ("pgd", "sfa"):
        raise ConfigError(f"{path}.source: must be 'pgd' or 'sfa'")
    if kind == "benchmark":
        for j, m in enumerate(job.get("methods", [])):
            if m not in METHODS:
                raise ConfigError(f"{path}.methods[{j}]: must be one of {list(METHODS)}")


# -- execution -------------------------------------------------------------------

class Writer:
    """Single writer for one run; stamps every file with the config hash and seed."""

    def __init__(self, out_dir, cfg_hash: str, seed: int):
        self.dir = Path(out_dir)
        self.meta = {"config_hash": cfg_hash, "seed": seed}
        self.written: list[Path] = []

    def text(self, name: str, text: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / name
        path.write_text(text)
        self.written.append(path)
        return path

    def checkpoint(self, name: str, params: nn.ModelParams, meta: dict) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / name
        save_checkpoint(path, params, {**self.meta, **meta})
        self.written.append(path)
        return path

    def json(self, name: str, doc: dict) -> Path:
        return self.text(name, json_text({"schema_version": SCHEMA_VERSION, **self.meta, **doc}))


def run(cfg: ExperimentConfig) -> list[Path]:
    """Execute ``cfg``; returns the paths written."""
    cfg.validate()
    out = Writer(cfg.output_dir, cfg.hash, cfg.seed)
    if cfg.train is not None:
        tc = cfg.train_config()
        x, y = cfg.source("train").load()
        params, trace = train(tc, x, y)
        out.checkpoint("model.ckpt", params, {"train": tc.to_dict()})
        out.text("trace.csv", trace_to_csv(trace, out.meta))
    else:
        params, _ = load_checkpoint(cfg.checkpoint)
    for i, job in enumerate(cfg.jobs):
        _run_job(cfg, job, i, params, out)
    return out.written


def _suffix(cfg: ExperimentConfig, kind: str, i: int) -> str:
    same = [j for j in cfg.jobs if j["kind"] == kind]
    return "" if len(same) == 1 else f"_{i}"


def _run_job(cfg: ExperimentConfig, job: dict, i: int, params: nn.ModelParams,
             out: Writer) -> None:
    kind = job["kind"]
    tag = kind.replace("-", "_") + _suffix(cfg, kind, i)
    rng = np.random.default_rng([cfg.seed, i])
    if kind == "benchmark":
        src = DatasetSource(kind="synthetic", count=job.get("count", 2000), seed=cfg.seed)
        x, y = src.load()
        configs = [RegularizerConfig(method=m, lam=job.get("lam", 1e-2),
                                     snc_every=job.get("snc_every", 1),
                                     snc_size=job.get("snc_size", 32))
                   for m in job.get("methods", ["none", "absum", "snc"])]
        res = benchmark_epoch(configs, x, y, runs=job.get("runs", 3),
                              epochs=job.get("epochs", 1), seed=cfg.seed)
        out.json(f"{tag}.json", {"seconds_per_epoch": res})
        return
    x, y = cfg.source("test").load()
    if kind == "sfa-grid":
        rep = sfa_grid(params, x, y, job.get("eps", 80 / 255), model_id=cfg.hash)
        out.text(f"{tag}.csv", grid_to_csv(rep, out.meta))
        out.text(f"{tag}.json", grid_to_json(rep, out.meta))
    elif kind == "pgd-sweep":
        spec = PGDSpec(alpha=job.get("alpha", 0.01), iters=job.get("iters", 40))
        res = pgd_sweep(params, x, y, job["eps_list"], spec, seed=cfg.seed)
        rows = [{"eps": f"{e:g}", "accuracy": acc} for e, acc in res.items()]
        out.text(f"{tag}.csv", table_to_csv(rows, out.meta))
    elif kind in ("hf-attack", "high-pass"):
        fn = high_frequency_accuracy if kind == "hf-attack" else high_pass_accuracy
        radius = job.get("radius")
        acc = fn(params, x, y, radius)
        out.json(f"{tag}.json", {"radius": radius if radius is not None else x.shape[-1] / 2,
                                 "accuracy": round(acc, 2), "clean": round(accuracy(params, x, y), 2)})
    elif kind == "transfer":
        substitute, _ = load_checkpoint(job["substitute"])
        eps = job.get("eps", 0.2)
        spec = PGDSpec(eps=eps, alpha=job.get("alpha", 0.01), iters=job.get("iters", 40))
        crafted = pgd(substitute, x, y, eps, spec.alpha, spec.iters, spec.init_radius, rng)
        white = pgd(params, x, y, eps, spec.alpha, spec.iters, spec.init_radius, rng)
        out.json(f"{tag}.json", {"eps": eps, "transfer": round(accuracy(params, crafted.perturbed, y), 2),
                                 "whitebox": round(accuracy(params, white.perturbed, y), 2)})
    elif kind == "spectrum":
        source = job.get("source", "pgd")
        eps = job.get("eps", 0.2)
        if source == "pgd":
            pert = pgd(params, x, y, eps, job.get("alpha", 0.01), job.get("iters", 40),
                       2 / 255, rng).perturbation
        else:
            pert = sfa(x, job.get("l", 1), job.get("m", 1), eps).perturbation
        out.text(f"{tag}.csv", matrix_to_csv(power_spectrum(pert), out.meta))


def lambda_sweep(base: ExperimentConfig, grid, out_dir=None) -> list[dict]:
    """Train one model per weight in ``grid`` and run an SFA grid on each.

    For SNC the grid values are clipping thresholds. Every point shares the
    base seed, hence identical initial weights. Writes ``sweep.csv``.
    """
    tc = base.train_config()
    xtr, ytr = base.source("train").load()
    xte, yte = base.source("test").load()
    eps = next((j.get("eps", 80 / 255) for j in base.jobs if j["kind"] == "sfa-grid"), 80 / 255)
    rows = []
    for value in grid:
        reg = tc.regularizer
        reg = replace(reg, sigma_max=value) if reg.method == "snc" else replace(reg, lam=value)
        params, trace = train(replace(tc, regularizer=reg), xtr, ytr)
        rep = sfa_grid(params, xte, yte, eps, model_id=reg.label)
        rows.append({"lam": f"{value:g}", "clean": rep.clean, "avg": round(rep.avg, 2),
                     "min": rep.min, "max": rep.max, "final_loss": f"{trace.final_loss:.6f}"})
        log.info("sweep %s: clean=%.2f avg=%.2f min=%.2f", reg.label, rep.clean, rep.avg, rep.min)
    writer = Writer(out_dir or base.output_dir, base.hash, base.seed)
    writer.text("sweep.csv", table_to_csv(rows, {**writer.meta, "method": tc.regularizer.method,
                                                 "grid": canonical_json([float(g) for g in grid])}))
    return rows
