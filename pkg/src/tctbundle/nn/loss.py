"""Composite training loss with analytic gradient w.r.t. the predictions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..bundle_model import CANONICAL_ROWS


@dataclass(frozen=True)
class LossWeights:
    w1: float = 1.0
    w2: float = 0.30
    w3: float = 0.05
    huber_delta: float = 1.0
    warmup_epochs: int = 5


def huber(r, delta: float = 1.0):
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))


def huber_grad(r, delta: float = 1.0):
    return np.clip(r, -delta, delta)


def poisson_deviance_rows(n_hat, counts):
    """N - I + I ln(I/N) per row, with 0 ln 0 = 0."""
    counts = np.asarray(counts, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(counts > 0, counts * np.log(counts / n_hat), 0.0)
    return n_hat - counts + t


def poisson_deviance(pred, counts, n0):
    """Mean over the five rows; per bundle."""
    n_hat = np.asarray(n0, dtype=float)[..., None] * (np.exp(-np.asarray(pred)) @ CANONICAL_ROWS.T)
    return poisson_deviance_rows(n_hat, counts).mean(axis=-1)


def composite_loss(pred, x_true, counts, n0, cfg: LossWeights = LossWeights(), epoch: int = 99,
                   mask=None):
    """Batch-mean loss and d loss / d pred.

    Before cfg.warmup_epochs only the Huber term is active.  mask (3,) selects
    which outputs are supervised by the Huber and log terms; the deviance term
    always uses the full predicted path vector.
    """
    pred = np.asarray(pred, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    n = pred.shape[0]
    m = np.ones(3) if mask is None else np.asarray(mask, dtype=float)
    k = m.sum()
    r = pred - x_true
    total = cfg.w1 * (huber(r, cfg.huber_delta) * m).sum(axis=1) / k
    grad = cfg.w1 * huber_grad(r, cfg.huber_delta) * m / k
    parts = {"huber": float(total.mean() / cfg.w1) if cfg.w1 else 0.0}
    if epoch >= cfg.warmup_epochs:
        lp, lt = np.log1p(pred), np.log1p(x_true)
        d = lp - lt
        lg = (d * d * m).sum(axis=1) / k
        total = total + cfg.w2 * lg
        grad = grad + cfg.w2 * 2 * d / (1 + pred) * m / k
        lam = np.asarray(n0, dtype=float)[:, None, None] * CANONICAL_ROWS * np.exp(-pred)[:, None, :]
        n_hat = lam.sum(axis=2)
        dev = poisson_deviance_rows(n_hat, counts).mean(axis=1)
        total = total + cfg.w3 * dev
        dn = (1.0 - np.asarray(counts, dtype=float) / n_hat) / 5.0
        grad = grad - cfg.w3 * np.einsum("nj,njk->nk", dn, lam)
        parts["log"] = float(lg.mean())
        parts["poisson"] = float(dev.mean())
    return float(total.mean()), grad / n, parts
