"""Synthetic bundle datasets and helpers to load them as arrays."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .bundle_model import CANONICAL_ROWS, X_MAX_DATA, TcmDoseModel, sample_counts
from .classical import svd_batch
from .records import (
    KIND_BUNDLES,
    DatasetReader,
    DatasetWriter,
    Header,
    bundle_dtype,
)

CHUNK = 65536


@dataclass(frozen=True)
class RndConfig:
    weights: tuple = (0.4, 0.3, 0.3)
    shapes: tuple = ((2.0, 4.0), (4.0, 4.0), (6.0, 2.0))
    scale: float = X_MAX_DATA
    n_bundles: int = 100_000
    seed: int = 2026
    tcm: TcmDoseModel | None = field(default_factory=TcmDoseModel)
    fixed_n0: float = 1e5
    equal_attenuation: bool = False
    split_fractions: tuple = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")
        if len(self.weights) != len(self.shapes):
            raise ValueError("one shape pair per mixture weight")
        if any(a <= 0 or b <= 0 for a, b in self.shapes):
            raise ValueError("Beta shapes must be positive")
        if abs(sum(self.split_fractions) - 1.0) > 1e-12:
            raise ValueError("split fractions must sum to 1")

    def mixture_mean(self) -> float:
        return self.scale * sum(w * a / (a + b) for w, (a, b) in zip(self.weights, self.shapes))

    def cdf(self, x):
        """Mixture CDF of a single path value."""
        x = np.asarray(x, dtype=float) / self.scale
        return sum(w * stats.beta.cdf(x, a, b) for w, (a, b) in zip(self.weights, self.shapes))


def sample_mixture(cfg: RndConfig, size, rng: np.random.Generator) -> np.ndarray:
    """Beta mixture draws; Beta(a, b) formed as Ga/(Ga + Gb)."""
    comp = rng.choice(len(cfg.weights), size=size, p=cfg.weights)
    shapes = np.asarray(cfg.shapes)
    ga = rng.standard_gamma(shapes[comp, 0])
    gb = rng.standard_gamma(shapes[comp, 1])
    return cfg.scale * ga / (ga + gb)


def assign_splits(u: np.ndarray, fractions) -> np.ndarray:
    edges = np.cumsum(fractions)[:-1]
    return np.searchsorted(edges, u, side="right").astype(np.uint8)


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, chunk]))


def rnd_chunk(cfg: RndConfig, chunk: int) -> np.ndarray:
    """Records for bundles [chunk*CHUNK, ...).  Depends only on (cfg, chunk)."""
    start = chunk * CHUNK
    n = min(CHUNK, cfg.n_bundles - start)
    rng = _chunk_rng(cfg.seed, chunk)
    if cfg.equal_attenuation:
        x = np.repeat(sample_mixture(cfg, n, rng)[:, None], 3, axis=1)
    else:
        x = sample_mixture(cfg, (n, 3), rng)
    if cfg.tcm is not None:
        n0 = cfg.tcm.sample(x.mean(axis=1), rng)
    else:
        n0 = np.full(n, float(cfg.fixed_n0))
    counts = sample_counts(CANONICAL_ROWS, x, n0, rng)
    out = np.empty(n, dtype=bundle_dtype())
    out["x_true"] = x
    out["counts"] = counts
    out["n0"] = n0
    out["x_svd"] = svd_batch(counts, n0)
    out["bundle_index"] = np.arange(start, start + n, dtype=np.uint64)
    out["split"] = assign_splits(rng.random(n), cfg.split_fractions)
    return out


def _rnd_job(args):
    return rnd_chunk(*args)


def generate_rnd(cfg: RndConfig, workers: int = 1):
    """Yield record chunks in bundle order; identical for any worker count."""
    n_chunks = -(-cfg.n_bundles // CHUNK)
    jobs = [(cfg, c) for c in range(n_chunks)]
    if workers <= 1 or n_chunks <= 1:
        for j in jobs:
            yield _rnd_job(j)
        return
    with ProcessPoolExecutor(max_workers=workers) as ex:
        yield from ex.map(_rnd_job, jobs)


def rnd_array(cfg: RndConfig, workers: int = 1) -> np.ndarray:
    return np.concatenate(list(generate_rnd(cfg, workers)))


def write_rnd(cfg: RndConfig, path, workers: int = 1) -> int:
    with DatasetWriter(path, Header(kind=KIND_BUNDLES)) as w:
        for c in generate_rnd(cfg, workers):
            w.write(c)
    return w.n


def load_records(path) -> tuple[Header, np.ndarray]:
    r = DatasetReader(path)
    return r.header, r.read_all()
