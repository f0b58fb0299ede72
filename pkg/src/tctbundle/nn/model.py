"""Gated residual network with hand-written backward pass (numpy, float64)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .features import n_features

LN_EPS = 1e-5
PAPER_WIDTHS = (256, 256, 128, 64)


def elu(t):
    return np.where(t > 0, t, np.expm1(np.minimum(t, 0.0)))


def elu_grad(t):
    return np.where(t > 0, 1.0, np.exp(np.minimum(t, 0.0)))


def softplus(t):
    return np.logaddexp(0.0, t)


def scaled_widths(multiplier: float) -> tuple:
    return tuple(max(1, int(round(w * multiplier))) for w in PAPER_WIDTHS)


@dataclass
class Cache:
    x: np.ndarray
    pre0: np.ndarray
    blocks: list
    h_last: np.ndarray
    pre_out: np.ndarray


class Pmrn:
    """Input projection, gated residual blocks and a zero-initialized 3-output head.

    Block: h' = skip(h) + sigmoid(Wg h) * elu(W2 elu(LN(W1 h))), where skip is the
    identity or a learned projection when the width changes.  The head output
    is added to x_svd (V2, V4) or used directly (V1), then passed through softplus.
    """

    def __init__(self, variant: str = "V2", widths=PAPER_WIDTHS, seed: int = 0):
        self.variant = variant
        self.widths = tuple(int(w) for w in widths)
        self.n_in = n_features(variant)
        self.feat_mean = np.zeros(self.n_in)
        self.feat_std = np.ones(self.n_in)
        self.params: dict[str, np.ndarray] = {}
        rng = np.random.default_rng(seed)

        def affine(name, n_out, n_in):
            bound = 1.0 / np.sqrt(n_in)
            self.params[name + ".W"] = rng.uniform(-bound, bound, (n_out, n_in))
            self.params[name + ".b"] = rng.uniform(-bound, bound, n_out)

        affine("in", self.widths[0], self.n_in)
        d = self.widths[0]
        for i, w in enumerate(self.widths):
            p = f"blk{i}"
            affine(p + ".fc1", w, d)
            self.params[p + ".ln.g"] = np.ones(w)
            self.params[p + ".ln.b"] = np.zeros(w)
            affine(p + ".fc2", w, w)
            affine(p + ".gate", w, d)
            if w != d:
                affine(p + ".proj", w, d)
            d = w
        self.params["head.W"] = np.zeros((3, d))
        self.params["head.b"] = np.zeros(3)

    @property
    def uses_warm_start(self) -> bool:
        return self.variant in ("V2", "V4")

    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def fit_normalization(self, feats: np.ndarray):
        self.feat_mean = feats.mean(axis=0)
        sd = feats.std(axis=0)
        self.feat_std = np.where(sd > 1e-12, sd, 1.0)

    def normalize(self, feats):
        return (feats - self.feat_mean) / self.feat_std

    def forward(self, feats, x_svd=None, return_cache: bool = False):
        P = self.params
        x = self.normalize(np.asarray(feats, dtype=float))
        pre0 = x @ P["in.W"].T + P["in.b"]
        h = elu(pre0)
        d = self.widths[0]
        blocks = []
        for i, w in enumerate(self.widths):
            p = f"blk{i}"
            u = h @ P[p + ".fc1.W"].T + P[p + ".fc1.b"]
            mu = u.mean(axis=1, keepdims=True)
            sig = np.sqrt(u.var(axis=1, keepdims=True) + LN_EPS)
            uh = (u - mu) / sig
            z = uh * P[p + ".ln.g"] + P[p + ".ln.b"]
            a1 = elu(z)
            v = a1 @ P[p + ".fc2.W"].T + P[p + ".fc2.b"]
            a2 = elu(v)
            gate = expit(h @ P[p + ".gate.W"].T + P[p + ".gate.b"])
            skip = h @ P[p + ".proj.W"].T + P[p + ".proj.b"] if w != d else h
            blocks.append((h, uh, sig, z, a1, v, a2, gate))
            h = skip + gate * a2
            d = w
        delta = h @ P["head.W"].T + P["head.b"]
        pre = delta + np.asarray(x_svd, dtype=float) if self.uses_warm_start else delta
        out = softplus(pre)
        if return_cache:
            return out, Cache(x, pre0, blocks, h, pre)
        return out

    def backward(self, cache: Cache, dout: np.ndarray) -> dict:
        P = self.params
        g: dict[str, np.ndarray] = {}
        dpre = dout * expit(cache.pre_out)
        g["head.W"] = dpre.T @ cache.h_last
        g["head.b"] = dpre.sum(axis=0)
        dh = dpre @ P["head.W"]
        dims = [self.widths[0]] + list(self.widths[:-1])
        for i in reversed(range(len(self.widths))):
            p = f"blk{i}"
            h, uh, sig, z, a1, v, a2, gate = cache.blocks[i]
            w, d = self.widths[i], dims[i]
            if w != d:
                g[p + ".proj.W"] = dh.T @ h
                g[p + ".proj.b"] = dh.sum(axis=0)
                dh_in = dh @ P[p + ".proj.W"]
            else:
                dh_in = dh.copy()
            ds = dh * a2 * gate * (1.0 - gate)
            g[p + ".gate.W"] = ds.T @ h
            g[p + ".gate.b"] = ds.sum(axis=0)
            dh_in += ds @ P[p + ".gate.W"]
            dv = dh * gate * elu_grad(v)
            g[p + ".fc2.W"] = dv.T @ a1
            g[p + ".fc2.b"] = dv.sum(axis=0)
            dz = (dv @ P[p + ".fc2.W"]) * elu_grad(z)
            g[p + ".ln.g"] = (dz * uh).sum(axis=0)
            g[p + ".ln.b"] = dz.sum(axis=0)
            duh = dz * P[p + ".ln.g"]
            du = (duh - duh.mean(axis=1, keepdims=True)
                  - uh * (duh * uh).mean(axis=1, keepdims=True)) / sig
            g[p + ".fc1.W"] = du.T @ h
            g[p + ".fc1.b"] = du.sum(axis=0)
            dh_in += du @ P[p + ".fc1.W"]
            dh = dh_in
        dpre0 = dh * elu_grad(cache.pre0)
        g["in.W"] = dpre0.T @ cache.x
        g["in.b"] = dpre0.sum(axis=0)
        return {k: g[k] for k in P}

    def copy(self) -> "Pmrn":
        m = Pmrn.__new__(Pmrn)
        m.variant, m.widths, m.n_in = self.variant, self.widths, self.n_in
        m.feat_mean, m.feat_std = self.feat_mean.copy(), self.feat_std.copy()
        m.params = {k: v.copy() for k, v in self.params.items()}
        return m
