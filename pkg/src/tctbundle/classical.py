"""Classical per-bundle inverters: least squares, endpoint MLE and SNN1."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bundle_model import (
    COUNT_FLOOR,
    X_MAX_CLIP,
    BundleMeasurement,
    _as_matrix,
    canonical_system_matrix,
)

CANON = canonical_system_matrix().entries


@dataclass(frozen=True)
class Snn1Config:
    f_start: float = 0.80
    f_end: float = 0.05
    max_iter: int = 50
    tol: float = 5e-6
    x_max_clip: float = X_MAX_CLIP

    def __post_init__(self):
        if not (0 < self.f_end <= self.f_start <= 1):
            raise ValueError("need 0 < f_end <= f_start <= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def damping(self, n: int) -> float:
        if self.max_iter == 1:
            return self.f_start
        return self.f_start + (self.f_end - self.f_start) * n / (self.max_iter - 1)


@dataclass
class InversionResult:
    x_hat: np.ndarray
    iterations: int
    converged: bool
    method: str


def lstsq_solve(a, b) -> np.ndarray:
    """Unregularized least squares x = pinv(A) b; linear in b.  b may be (n, M)."""
    A = _as_matrix(a)
    return np.asarray(b, dtype=float) @ np.linalg.pinv(A).T


def svd_batch(counts, n0, a=CANON, x_max: float = X_MAX_CLIP) -> np.ndarray:
    """Least-squares inversion in the transmission domain.

    The forward model is linear in t_k = exp(-x_k), so the SVD solve runs on
    I/n0 and is mapped back through -ln.  Transmissions are clipped to
    [exp(-x_max), 1] so x lands in [0, x_max].
    """
    c = np.asarray(counts, dtype=float)
    n0 = np.asarray(n0, dtype=float)
    t = lstsq_solve(a, c / n0[..., None])
    t = np.clip(t, np.exp(-x_max), 1.0)
    return -np.log(t)


def svd_invert(m: BundleMeasurement, a=CANON) -> InversionResult:
    x = svd_batch(m.counts[None], np.array([m.n0]), a)[0]
    return InversionResult(x, 1, True, "svd")


def endpoint_mle_batch(counts, n0, x_max: float = X_MAX_CLIP) -> np.ndarray:
    """Dedicated-row MLE for the two endpoint paths, shape (..., 2)."""
    c = np.asarray(counts, dtype=float)[..., [0, 4]]
    n0 = np.asarray(n0, dtype=float)
    return np.clip(-np.log(np.maximum(c, COUNT_FLOOR) / n0[..., None]), 0.0, x_max)


def endpoint_mle(m: BundleMeasurement):
    x1, x3 = endpoint_mle_batch(m.counts[None], np.array([m.n0]))[0]
    return float(x1), float(x3)


def snn1_init(counts, n0, x_max: float = X_MAX_CLIP) -> np.ndarray:
    ep = endpoint_mle_batch(counts, n0, x_max)
    return np.stack([ep[..., 0], ep.mean(axis=-1), ep[..., 1]], axis=-1)


def snn1_step(x, counts, n0, f: float, x_max: float = X_MAX_CLIP, a=CANON) -> np.ndarray:
    """One annealed two-phase update for a batch of bundles.

    Latent estimates N_jk are formed from the current x.  Phase A: each
    dedicated row (one active path) gives the damped Newton update of its
    path, p = clip(N + f (I - N), 1, inf).  Phase B: each mixed row gives a
    per-row implied estimate for each active path by assigning the damped row
    residual to that source, x_k^(j) = -ln(clip(N_jk + f r_j, 1, inf) / n0).
    Both sets of per-row estimates are fused with Fisher-score weights
    w_jk = N_jk^2 / N_j, the information row j carries about path k.
    """
    n0 = np.asarray(n0, dtype=float)
    lam = n0[:, None, None] * a * np.exp(-x)[:, None, :]
    nj = lam.sum(axis=2)
    resid = counts - nj
    est = np.maximum(lam + f * resid[:, :, None], COUNT_FLOOR)
    xj = -np.log(est / n0[:, None, None])
    w = lam * lam / nj[:, :, None] * a
    xn = (w * xj).sum(axis=1) / np.maximum(w.sum(axis=1), 1e-300)
    return np.clip(xn, 0.0, x_max)


def snn1_batch(counts, n0, cfg: Snn1Config = Snn1Config(), hook: Callable | None = None):
    """Vectorized SNN1.  Returns (x_hat, iterations, converged).

    Bundles freeze once their max update drops below tol.  hook(n, f, x)
    is called once per iteration with the current damping factor.
    """
    counts = np.asarray(counts, dtype=float)
    n0 = np.broadcast_to(np.asarray(n0, dtype=float), counts.shape[:1]).copy()
    x = snn1_init(counts, n0, cfg.x_max_clip)
    n = counts.shape[0]
    iters = np.zeros(n, dtype=np.int64)
    conv = np.zeros(n, dtype=bool)
    active = np.arange(n)
    for it in range(cfg.max_iter):
        if active.size == 0:
            break
        f = cfg.damping(it)
        xa = x[active]
        xn = snn1_step(xa, counts[active], n0[active], f, cfg.x_max_clip)
        x[active] = xn
        iters[active] = it + 1
        if hook is not None:
            hook(it, f, x)
        done = np.abs(xn - xa).max(axis=1) < cfg.tol
        conv[active[done]] = True
        active = active[~done]
    return x, iters, conv


def snn1(m: BundleMeasurement, cfg: Snn1Config = Snn1Config(), hook: Callable | None = None) -> InversionResult:
    if np.asarray(m.counts).shape != (5,):
        raise ValueError("SNN1 is defined for the canonical 5-row bundle")
    x, it, conv = snn1_batch(m.counts[None], np.array([m.n0]), cfg, hook)
    return InversionResult(x[0], int(it[0]), bool(conv[0]), "snn1")


def invert_batch(method: str, counts, n0, cfg: Snn1Config = Snn1Config()):
    """Dispatch by name; returns (x_hat, iterations)."""
    counts = np.asarray(counts, dtype=float)
    n = counts.shape[0]
    if method == "svd":
        return svd_batch(counts, n0), np.ones(n, dtype=np.int64)
    if method == "snn1":
        x, it, _ = snn1_batch(counts, n0, cfg)
        return x, it
    if method == "endpoint-mle":
        x = snn1_init(counts, n0, cfg.x_max_clip)
        return x, np.ones(n, dtype=np.int64)
    raise ValueError(f"unknown method {method!r}")
