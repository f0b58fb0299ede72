"""Versioned binary checkpoints: magic, version, JSON header, float64 arrays."""
from __future__ import annotations

import json
import struct

import numpy as np

from .model import Pmrn

MAGIC = b"PMRN"
VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(model: Pmrn, path, config: dict | None = None):
    arrays = [("feat_mean", model.feat_mean), ("feat_std", model.feat_std)]
    arrays += list(model.params.items())
    head = {
        "variant": model.variant,
        "widths": list(model.widths),
        "arrays": [[k, list(np.shape(v))] for k, v in arrays],
        "config": config or {},
    }
    hb = json.dumps(head, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<BI", VERSION, len(hb)) + hb)
        for _, v in arrays:
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (model, config dict)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint")
    ver, hl = struct.unpack("<BI", raw[4:9])
    if ver != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {ver}")
    head = json.loads(raw[9:9 + hl])
    model = Pmrn(head["variant"], head["widths"])
    off = 9 + hl
    for name, shape in head["arrays"]:
        n = int(np.prod(shape)) if shape else 1
        if off + 8 * n > len(raw):
            raise CheckpointError(f"{path}: truncated at array {name}")
        v = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape).copy()
        off += 8 * n
        if name == "feat_mean":
            model.feat_mean = v
        elif name == "feat_std":
            model.feat_std = v
        else:
            model.params[name] = v
    return model, head["config"]
