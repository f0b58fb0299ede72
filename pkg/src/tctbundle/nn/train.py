"""Training loop, prediction and profiles."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..classical import endpoint_mle_batch
from .features import features_from_records
from .loss import LossWeights, composite_loss
from .model import Pmrn, scaled_widths
from .optim import AdamW, Sgdr, clip_by_global_norm

V4_MASK = np.array([0.0, 1.0, 0.0])


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    loss: LossWeights = field(default_factory=LossWeights)
    lr: float = 3e-4
    weight_decay: float = 1e-5
    clip_norm: float = 1.0
    t0: float = 20.0
    t_mult: float = 2.0
    eta_min: float = 3e-6
    batch_size: int = 2048
    epochs: int = 80
    width_multiplier: float = 1.0
    eval_batch: int = 8192

    def schedule(self) -> Sgdr:
        return Sgdr(self.lr, self.eta_min, self.t0, self.t_mult)

    def widths(self) -> tuple:
        return scaled_widths(self.width_multiplier)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["loss"] = LossWeights(**d.get("loss", {}))
        return cls(**d)


def desk_config(**kw) -> TrainConfig:
    base = dict(batch_size=512, epochs=20, width_multiplier=0.25)
    base.update(kw)
    return TrainConfig(**base)


def paper_config(**kw) -> TrainConfig:
    return TrainConfig(**kw)


def v4_endpoints(records) -> np.ndarray:
    """Training-time endpoints for V4: the dedicated-row MLE."""
    return endpoint_mle_batch(records["counts"], records["n0"])


def _loss_inputs(pred, endpoints, variant):
    if variant != "V4":
        return pred, None
    p = pred.copy()
    p[:, [0, 2]] = endpoints
    return p, V4_MASK


def batch_loss(model: Pmrn, feats, recs, endpoints, cfg: TrainConfig, epoch: int, grad: bool):
    out = model.forward(feats, recs["x_svd"], return_cache=grad)
    pred, cache = (out if grad else (out, None))
    p, mask = _loss_inputs(pred, endpoints, model.variant)
    loss, dpred, _ = composite_loss(p, recs["x_true"], recs["counts"], recs["n0"], cfg.loss, epoch, mask)
    if not grad:
        return loss, None
    if mask is not None:
        dpred = dpred * mask
    return loss, model.backward(cache, dpred)


def dataset_loss(model, feats, recs, endpoints, cfg, epoch) -> float:
    tot, n = 0.0, len(recs)
    for s in range(0, n, cfg.eval_batch):
        sl = slice(s, s + cfg.eval_batch)
        ep = endpoints[sl] if endpoints is not None else None
        loss, _ = batch_loss(model, feats[sl], recs[sl], ep, cfg, epoch, False)
        tot += loss * len(recs[sl])
    return tot / n


def train(records, variant: str = "V2", cfg: TrainConfig | None = None, seed: int = 0, log=None):
    """Returns (best model, history).  Deterministic given (records, variant, cfg, seed)."""
    cfg = cfg or desk_config()
    tr = records[records["split"] == 0]
    va = records[records["split"] == 1]
    if len(tr) == 0 or len(va) == 0:
        raise ValueError("training needs non-empty train and val splits")
    ep_tr = v4_endpoints(tr) if variant == "V4" else None
    ep_va = v4_endpoints(va) if variant == "V4" else None
    f_tr = features_from_records(tr, variant, ep_tr)
    f_va = features_from_records(va, variant, ep_va)

    model = Pmrn(variant, cfg.widths(), seed=seed)
    model.fit_normalization(f_tr)
    opt = AdamW(model.params, cfg.weight_decay)
    sched = cfg.schedule()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    n = len(tr)
    steps = -(-n // cfg.batch_size)
    history = []
    best, best_val = model.copy(), np.inf
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        run, lr = 0.0, cfg.lr
        for s in range(steps):
            idx = perm[s * cfg.batch_size:(s + 1) * cfg.batch_size]
            ep = ep_tr[idx] if ep_tr is not None else None
            loss, grads = batch_loss(model, f_tr[idx], tr[idx], ep, cfg, epoch, True)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch} step {s}")
            grads, _ = clip_by_global_norm(grads, cfg.clip_norm)
            lr = sched.lr(epoch + s / steps)
            opt.step(model.params, grads, lr)
            run += loss * len(idx)
        val_active = dataset_loss(model, f_va, va, ep_va, cfg, epoch)
        val_full = dataset_loss(model, f_va, va, ep_va, cfg, max(epoch, cfg.loss.warmup_epochs))
        if not np.isfinite(val_full):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        rec = {"epoch": epoch, "lr": lr, "train_loss": run / n, "val_loss": val_active, "val_full": val_full}
        history.append(rec)
        if log:
            log(rec)
        if val_full < best_val:
            best_val, best = val_full, model.copy()
    return best, history


def predict(model: Pmrn, records, endpoints=None, batch: int = 8192) -> np.ndarray:
    if model.variant == "V4" and endpoints is None:
        endpoints = v4_endpoints(records)
    out = np.empty((len(records), 3))
    for s in range(0, len(records), batch):
        sl = slice(s, s + batch)
        ep = endpoints[sl] if endpoints is not None else None
        f = features_from_records(records[sl], model.variant, ep)
        out[sl] = model.forward(f, records["x_svd"][sl])
    return out
