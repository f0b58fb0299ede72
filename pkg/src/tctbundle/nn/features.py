"""Input features for the residual network."""
from __future__ import annotations

import numpy as np

from ..bundle_model import CANONICAL_ROWS
from ..classical import svd_batch

LOG_EPS = 1e-12
VARIANTS = ("V1", "V2", "V4")
# (row, path) pairs of the non-trivial Fisher weights; rows 1 and 5 are always 1
# and the second entries of rows 2 and 4 are one minus the first.
WEIGHT_ENTRIES = ((1, 0), (2, 0), (2, 1), (2, 2), (3, 2))


def fisher_weight_matrix(x_svd) -> np.ndarray:
    """W[j, k] = A[j,k] exp(-x_k) / sum_k' A[j,k'] exp(-x_k'), shape (..., 5, 3)."""
    t = CANONICAL_ROWS * np.exp(-np.asarray(x_svd, dtype=float))[..., None, :]
    return t / t.sum(axis=-1, keepdims=True)


def fisher_weights(x_svd) -> np.ndarray:
    w = fisher_weight_matrix(x_svd)
    return np.stack([w[..., j, k] for j, k in WEIGHT_ENTRIES], axis=-1)


def n_features(variant: str) -> int:
    return {"V1": 16, "V2": 19, "V4": 21}[variant]


def build_features(counts, n0, x_svd=None, variant: str = "V2", endpoints=None) -> np.ndarray:
    """Feature rows: raw block, warm start (V2/V4), physics block, endpoints (V4).

    raw: I_j/n0 and log10(n0); warm start: x_svd; physics: -ln(I_j/n0 + eps)
    and the five Fisher weights from x_svd.  V1 still uses x_svd for the
    weights, computing it when not supplied.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    c = np.atleast_2d(np.asarray(counts, dtype=float))
    n0 = np.atleast_1d(np.asarray(n0, dtype=float))
    if x_svd is None:
        x_svd = svd_batch(c, n0)
    x_svd = np.atleast_2d(np.asarray(x_svd, dtype=float))
    t = c / n0[:, None]
    blocks = [t, np.log10(n0)[:, None]]
    if variant in ("V2", "V4"):
        blocks.append(x_svd)
    blocks += [-np.log(t + LOG_EPS), fisher_weights(x_svd)]
    if variant == "V4":
        if endpoints is None:
            raise ValueError("V4 features need endpoint estimates")
        blocks.append(np.atleast_2d(np.asarray(endpoints, dtype=float)))
    return np.concatenate(blocks, axis=1)


def features_from_records(records, variant: str, endpoints=None) -> np.ndarray:
    return build_features(records["counts"], records["n0"], records["x_svd"], variant, endpoints)
