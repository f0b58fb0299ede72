"""Hybrid estimators: classical endpoints with a network middle path."""
from __future__ import annotations

import numpy as np

from ..classical import Snn1Config, endpoint_mle_batch, snn1_batch
from .model import Pmrn
from .train import predict


def classical_endpoints(records, mode: str, cfg: Snn1Config = Snn1Config()) -> np.ndarray:
    if mode == "analytic":
        return endpoint_mle_batch(records["counts"], records["n0"])
    if mode == "snn1":
        x, _, _ = snn1_batch(records["counts"], records["n0"], cfg)
        return x[:, [0, 2]]
    raise ValueError(f"unknown endpoint mode {mode!r}")


def assemble_v4(records, model: Pmrn, endpoint_mode: str = "analytic", endpoints=None,
                cfg: Snn1Config = Snn1Config()) -> np.ndarray:
    """Endpoints from the chosen classical estimator; x2 from the network."""
    if endpoints is None:
        endpoints = classical_endpoints(records, endpoint_mode, cfg)
    x = np.empty((len(records), 3))
    x[:, [0, 2]] = endpoints
    x[:, 1] = predict(model, records, endpoints=endpoints if model.variant == "V4" else None)[:, 1]
    return x


def assemble_v5(records, model: Pmrn, cfg: Snn1Config = Snn1Config()) -> np.ndarray:
    """SNN1 endpoints plus the network middle path; no retraining."""
    return assemble_v4(records, model, "snn1", cfg=cfg)
