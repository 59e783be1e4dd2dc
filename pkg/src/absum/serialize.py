"""Checkpoint and report file formats.

Checkpoint layout::

    b"ABSUMCK1" | uint32 LE header length | JSON header | float64 LE payload

The JSON header lists every array (name, shape, byte offset) plus the
standardization statistics, the training config and its hash. Writing is
deterministic: same parameters and config give identical bytes.

Tabular reports are CSV with a ``# schema_version=...`` comment line;
nested metadata is JSON. Both embed the config hash and seed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np

from . import nn
from .evaluate import AttackGridReport

SCHEMA_VERSION = 1
CHECKPOINT_MAGIC = b"ABSUMCK1"


class CheckpointError(ValueError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    if hasattr(o, "__dataclass_fields__"):
        from dataclasses import asdict
        return asdict(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


# -- checkpoints ----------------------------------------------------------------

def checkpoint_bytes(params: nn.ModelParams, meta: dict | None = None) -> bytes:
    layers = []
    chunks = []
    offset = 0
    for name, arr in params.arrays().items():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        layers.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(data)
        offset += len(data)
    header = {
        "schema_version": SCHEMA_VERSION,
        "dtype": "<f8",
        "layers": layers,
        "mean": params.mean,
        "std": params.std,
        "meta": meta or {},
    }
    hjson = canonical_json(header).encode()
    return CHECKPOINT_MAGIC + struct.pack("<I", len(hjson)) + hjson + b"".join(chunks)


def save_checkpoint(path, params: nn.ModelParams, meta: dict | None = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(params, meta))


def load_checkpoint(path) -> tuple[nn.ModelParams, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not an absum checkpoint")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen])
    if header.get("schema_version") != SCHEMA_VERSION:
        raise CheckpointError(f"{path}: unsupported schema {header.get('schema_version')}")
    payload = raw[12 + hlen:]
    arrays = {}
    for layer in header["layers"]:
        shape = tuple(layer["shape"])
        count = int(np.prod(shape))
        arrays[layer["name"]] = np.frombuffer(
            payload, dtype="<f8", count=count, offset=layer["offset"]).reshape(shape).copy()
    missing = set(nn.TRAINABLE) - set(arrays)
    if missing:
        raise CheckpointError(f"{path}: missing layers {sorted(missing)}")
    params = nn.ModelParams(**arrays, mean=header["mean"], std=header["std"])
    return params, header["meta"]


# -- reports ----------------------------------------------------------------------

def _csv_text(meta: dict, header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version={SCHEMA_VERSION}\n")
    for key in sorted(meta):
        buf.write(f"# {key}={meta[key]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _parse_csv(text: str) -> tuple[dict, list[str], list[list[str]]]:
    meta = {}
    lines = text.splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            meta[key] = value
        else:
            body.append(line)
    version = meta.pop("schema_version", None)
    if version != str(SCHEMA_VERSION):
        raise ValueError(f"unsupported report schema {version!r}")
    rows = list(csv.reader(body))
    return meta, rows[0], rows[1:]


def grid_to_csv(report: AttackGridReport, meta: dict) -> str:
    """One row per ``(l, m)`` cell, then aggregate rows; percentages at 2 decimals."""
    meta = dict(meta, eps=repr(report.eps), model_id=report.model_id)
    n = report.cells.shape[0]
    rows = [[l, m, f"{report.cells[l, m]:.2f}"] for l in range(n) for m in range(n)]
    rows += [["avg", "", f"{report.avg:.2f}"], ["min", "", f"{report.min:.2f}"],
             ["max", "", f"{report.max:.2f}"], ["clean", "", f"{report.clean:.2f}"]]
    return _csv_text(meta, ["l", "m", "accuracy"], rows)


def grid_from_csv(text: str) -> tuple[AttackGridReport, dict]:
    meta, _, rows = _parse_csv(text)
    cells = {}
    clean = None
    for l, m, acc in rows:
        if l == "clean":
            clean = float(acc)
        elif l not in ("avg", "min", "max"):
            cells[int(l), int(m)] = float(acc)
    n = int(round(np.sqrt(len(cells))))
    grid = np.zeros((n, n))
    for (l, m), v in cells.items():
        grid[l, m] = v
    report = AttackGridReport(grid, clean, float(meta.pop("eps")), meta.pop("model_id", ""))
    return report, meta


def grid_to_json(report: AttackGridReport, meta: dict) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        **meta,
        "model_id": report.model_id,
        "eps": report.eps,
        "clean": report.clean,
        "avg": round(report.avg, 2),
        "min": report.min,
        "max": report.max,
        "argmin": list(report.argmin),
        "cells": report.cells.tolist(),
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def grid_from_json(text: str) -> tuple[AttackGridReport, dict]:
    doc = json.loads(text)
    for key in ("schema_version", "avg", "min", "max", "argmin"):
        doc.pop(key)
    report = AttackGridReport(np.array(doc.pop("cells")), doc.pop("clean"), doc.pop("eps"),
                              doc.pop("model_id"))
    return report, doc


def trace_to_csv(trace, meta: dict) -> str:
    rows = [[i + 1, f"{loss:.6f}", f"{t:.3f}"]
            for i, (loss, t) in enumerate(zip(trace.epoch_loss, trace.epoch_time))]
    return _csv_text(meta, ["epoch", "mean_loss", "seconds"], rows)


def trace_from_csv(text: str):
    from .train import TrainTrace
    meta, _, rows = _parse_csv(text)
    trace = TrainTrace([float(r[1]) for r in rows], [float(r[2]) for r in rows])
    return trace, meta


def matrix_to_csv(mat: np.ndarray, meta: dict) -> str:
    rows = [[f"{v:.6f}" for v in row] for row in np.asarray(mat)]
    header = [f"c{j}" for j in range(mat.shape[1])]
    return _csv_text(meta, header, rows)


def matrix_from_csv(text: str) -> tuple[np.ndarray, dict]:
    meta, _, rows = _parse_csv(text)
    return np.array([[float(v) for v in row] for row in rows]), meta


def table_to_csv(rows: list[dict], meta: dict) -> str:
    header = list(rows[0]) if rows else []
    body = [[_fmt(r[k]) for k in header] for r in rows]
    return _csv_text(meta, header, body)


def table_from_csv(text: str) -> tuple[list[dict], dict]:
    meta, header, rows = _parse_csv(text)
    return [dict(zip(header, r)) for r in rows], meta


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.2f}"
    return v


def json_text(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=True, default=_json_default) + "\n"
