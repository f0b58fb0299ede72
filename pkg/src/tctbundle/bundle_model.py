"""Forward model for a Poisson photon-counting bundle.

A bundle has M measurement rows and K unknown line integrals.  Row j sees
photons from every path k with A[j, k] = 1, so its expected count is
n0 * sum_k A[j, k] exp(-x_k).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

X_MAX_DATA = 9.2
X_MAX_CLIP = 9.5
COUNT_FLOOR = 1.0


@dataclass(frozen=True)
class SystemMatrix:
    """Binary incidence matrix, rows are measurements and columns are paths."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2:
            raise ValueError("system matrix must be 2-D")
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("system matrix entries must be 0 or 1")
        if np.any(a.sum(axis=0) == 0):
            raise ValueError("every column needs at least one nonzero entry")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.entries))

    @property
    def full_column_rank(self) -> bool:
        return self.rank == self.cols

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.entries, compute_uv=False)

    def condition_number(self) -> float:
        s = self.singular_values()
        return float(s[0] / s[-1])

    def is_canonical(self) -> bool:
        return self.entries.shape == (5, 3) and np.array_equal(self.entries, CANONICAL_ROWS)


CANONICAL_ROWS = np.array(
    [[1, 0, 0], [1, 1, 0], [1, 1, 1], [0, 1, 1], [0, 0, 1]], dtype=float
)


def canonical_system_matrix() -> SystemMatrix:
    return SystemMatrix(CANONICAL_ROWS.copy())


def _as_matrix(a) -> np.ndarray:
    if isinstance(a, SystemMatrix):
        return a.entries
    return np.asarray(a, dtype=float)


def predict_intensities(a, x, n0) -> np.ndarray:
    """Expected counts per row.  x may be (K,) or (n, K); n0 scalar or (n,)."""
    A = _as_matrix(a)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != A.shape[1]:
        raise ValueError(f"x has {x.shape[-1]} paths, matrix has {A.shape[1]} columns")
    n0 = np.asarray(n0, dtype=float)
    return n0[..., None] * (np.exp(-x) @ A.T)


def latent_means(a, x, n0) -> np.ndarray:
    """Per-source means n0 * A[j, k] * exp(-x_k), shape (..., M, K)."""
    A = _as_matrix(a)
    x = np.asarray(x, dtype=float)
    n0 = np.asarray(n0, dtype=float)
    return n0[..., None, None] * A * np.exp(-x)[..., None, :]


@dataclass
class BundleMeasurement:
    counts: np.ndarray
    n0: float

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.n0 <= 0:
            raise ValueError("n0 must be positive")
        if np.any(self.counts < 0) or np.any(self.counts != np.round(self.counts)):
            raise ValueError("counts must be non-negative integers")

    def reversed(self) -> "BundleMeasurement":
        return BundleMeasurement(self.counts[::-1].copy(), self.n0)


def sample_latent(a, x, n0, rng: np.random.Generator) -> np.ndarray:
    """Draw the latent deviates Y[..., j, k] ~ Poisson(n0 A[j,k] exp(-x_k)).

    Inactive entries have zero mean, so they come out exactly zero.
    """
    lam = latent_means(a, x, n0)
    return rng.poisson(lam)


def sample_bundle(a, x, n0: float, rng_seed: int):
    """One bundle: returns (BundleMeasurement, latent deviates)."""
    rng = np.random.default_rng(rng_seed)
    y = sample_latent(a, x, n0, rng)
    return BundleMeasurement(y.sum(axis=-1), float(n0)), y


def sample_counts(a, x, n0, rng: np.random.Generator) -> np.ndarray:
    """Batch version: counts (..., M) as row sums of the latent deviates."""
    return sample_latent(a, x, n0, rng).sum(axis=-1)


@dataclass(frozen=True)
class TcmDoseModel:
    k_min: float = 1397.0
    k_max: float = 5586.0
    n0_min: float = 75_000.0
    n0_max: float = 300_000.0

    def __post_init__(self):
        if not (0 < self.k_min < self.k_max):
            raise ValueError("need 0 < k_min < k_max")
        if not (0 < self.n0_min < self.n0_max):
            raise ValueError("need 0 < n0_min < n0_max")

    def sample(self, bundle_mean_x, rng: np.random.Generator) -> np.ndarray:
        """N0 = clip(K exp(mean x), n0_min, n0_max) with K log-uniform."""
        m = np.asarray(bundle_mean_x, dtype=float)
        k = np.exp(rng.uniform(np.log(self.k_min), np.log(self.k_max), size=m.shape))
        return np.clip(k * np.exp(m), self.n0_min, self.n0_max)


def sample_n0_tcm(model: TcmDoseModel, bundle_mean_x: float, rng_seed: int) -> float:
    if bundle_mean_x < 0:
        raise ValueError("bundle_mean_x must be non-negative")
    rng = np.random.default_rng(rng_seed)
    return float(model.sample(np.float64(bundle_mean_x), rng))


def log_transform(counts, n0) -> np.ndarray:
    """y_j = -ln(max(I_j, 1) / n0)."""
    c = np.asarray(counts, dtype=float)
    n0 = np.asarray(n0, dtype=float)
    return -np.log(np.maximum(c, COUNT_FLOOR) / n0[..., None])
