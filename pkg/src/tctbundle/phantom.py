"""Analytic chest phantom, fan-beam sinogram and SGS bundle extraction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundle_model import CANONICAL_ROWS, TcmDoseModel, sample_counts
from .classical import svd_batch
from .records import FLAG_ORDERED, KIND_BUNDLES, DatasetWriter, Header, bundle_dtype


@dataclass(frozen=True)
class Ellipse:
    cx: float
    cy: float
    a: float
    b: float
    angle: float  # radians
    mu: float  # per mm; negative values carve cavities


@dataclass(frozen=True)
class Ray:
    """Point p and unit direction d."""

    px: float
    py: float
    dx: float
    dy: float


def chord_lengths(e: Ellipse, px, py, dx, dy) -> np.ndarray:
    """Chord length of each ray through the ellipse (0 when it misses)."""
    c, s = np.cos(e.angle), np.sin(e.angle)
    qx = c * (px - e.cx) + s * (py - e.cy)
    qy = -s * (px - e.cx) + c * (py - e.cy)
    ex = c * dx + s * dy
    ey = -s * dx + c * dy
    A = (ex / e.a) ** 2 + (ey / e.b) ** 2
    B = 2 * (qx * ex / e.a**2 + qy * ey / e.b**2)
    C = (qx / e.a) ** 2 + (qy / e.b) ** 2 - 1
    disc = B * B - 4 * A * C
    return np.sqrt(np.maximum(disc, 0.0)) / A


def ellipse_line_integral(e: Ellipse, ray: Ray) -> float:
    return float(e.mu * chord_lengths(e, ray.px, ray.py, ray.dx, ray.dy))


# Body outline, lungs (carved), heart, spine, sternum and ribs.  Centres in mm,
# y pointing anterior.
DEFAULT_SHAPES = (
    Ellipse(0.0, 0.0, 240.0, 182.0, 0.0, 0.0195),
    Ellipse(-88.0, 12.0, 62.0, 95.0, 0.12, -0.0120),
    Ellipse(88.0, 12.0, 62.0, 95.0, -0.12, -0.0120),
    Ellipse(-15.0, 35.0, 52.0, 45.0, 0.4, 0.0015),
    Ellipse(0.0, -112.0, 20.0, 22.0, 0.0, 0.0200),
    Ellipse(0.0, 130.0, 24.0, 9.0, 0.0, 0.0150),
    Ellipse(-150.0, -40.0, 8.0, 30.0, 0.5, 0.0150),
    Ellipse(150.0, -40.0, 8.0, 30.0, -0.5, 0.0150),
)


@dataclass(frozen=True)
class SgsPhantomConfig:
    source_radius: float = 500.0
    detector_radius: float = 1000.0
    fov: float = 500.0
    rays_per_view: int = 999
    views_per_rotation: int = 1024
    rotations: int = 200
    shapes: tuple = DEFAULT_SHAPES
    z_amplitude: float = 0.06
    split_rotations: tuple = (160, 180)
    rotation_subset: tuple | None = None
    view_stride: int = 1
    tcm: TcmDoseModel | None = field(default_factory=TcmDoseModel)
    fixed_n0: float = 1e5

    @property
    def fan_half_angle(self) -> float:
        return float(np.arcsin(self.fov / 2 / self.source_radius))

    @property
    def bundles_per_view(self) -> int:
        return self.rays_per_view // 3

    def rotation_ids(self):
        if self.rotation_subset is None:
            return list(range(self.rotations))
        return list(self.rotation_subset)

    def split_of(self, rotation: int) -> int:
        a, b = self.split_rotations
        return 0 if rotation < a else (1 if rotation < b else 2)


def shapes_at(cfg: SgsPhantomConfig, rotation: int):
    """Phantom slice for a rotation; organs breathe smoothly along z."""
    z = rotation / max(cfg.rotations - 1, 1)
    g = 1.0 + cfg.z_amplitude * np.sin(2 * np.pi * z)
    lung = 1.0 + 1.5 * cfg.z_amplitude * np.sin(np.pi * z)
    out = []
    for i, e in enumerate(cfg.shapes):
        if i == 0:
            out.append(Ellipse(e.cx, e.cy, e.a * g, e.b * g, e.angle, e.mu))
        elif e.mu < 0:
            out.append(Ellipse(e.cx * g, e.cy, e.a * lung, e.b * lung, e.angle, e.mu))
        else:
            out.append(Ellipse(e.cx * g, e.cy * g, e.a, e.b, e.angle, e.mu))
    return out


def fan_rays(cfg: SgsPhantomConfig, view_angles: np.ndarray):
    """Equiangular fan rays: arrays (views, rays) of source point and direction."""
    beta = np.asarray(view_angles)[:, None]
    ga = cfg.fan_half_angle
    gamma = np.linspace(-ga, ga, cfg.rays_per_view)[None, :]
    sx = cfg.source_radius * np.cos(beta)
    sy = cfg.source_radius * np.sin(beta)
    theta = beta + np.pi + gamma
    dx = np.cos(theta)
    dy = np.sin(theta)
    return np.broadcast_to(sx, dx.shape), np.broadcast_to(sy, dx.shape), dx, dy


def sinogram(cfg: SgsPhantomConfig, rotation: int, views=None) -> np.ndarray:
    """Line integrals, shape (views, rays)."""
    if views is None:
        views = np.arange(0, cfg.views_per_rotation, cfg.view_stride)
    beta = 2 * np.pi * np.asarray(views) / cfg.views_per_rotation
    px, py, dx, dy = fan_rays(cfg, beta)
    total = np.zeros(dx.shape)
    for e in shapes_at(cfg, rotation):
        total += e.mu * chord_lengths(e, px, py, dx, dy)
    return np.maximum(total, 0.0)


def bundles_from_sinogram(sino: np.ndarray) -> np.ndarray:
    """Non-overlapping consecutive ray triplets per view: (views*B, 3)."""
    v, r = sino.shape
    b = r // 3
    return sino[:, : 3 * b].reshape(v * b, 3)


def sgs_rotation(cfg: SgsPhantomConfig, rotation: int, seed: int) -> np.ndarray:
    views = np.arange(0, cfg.views_per_rotation, cfg.view_stride)
    x = bundles_from_sinogram(sinogram(cfg, rotation, views))
    n = x.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence([seed, rotation]))
    if cfg.tcm is not None:
        n0 = cfg.tcm.sample(x.mean(axis=1), rng)
    else:
        n0 = np.full(n, float(cfg.fixed_n0))
    counts = sample_counts(CANONICAL_ROWS, x, n0, rng)
    bpv = cfg.bundles_per_view
    out = np.empty(n, dtype=bundle_dtype())
    out["x_true"] = x
    out["counts"] = counts
    out["n0"] = n0
    out["x_svd"] = svd_batch(counts, n0)
    vi = np.repeat(views, bpv)
    bi = np.tile(np.arange(bpv), len(views))
    out["bundle_index"] = (rotation * cfg.views_per_rotation + vi) * bpv + bi
    out["split"] = cfg.split_of(rotation)
    return out


def generate_sgs(cfg: SgsPhantomConfig, seed: int):
    """Yield one record chunk per rotation, in sinogram order."""
    for r in cfg.rotation_ids():
        yield sgs_rotation(cfg, r, seed)


def write_sgs(cfg: SgsPhantomConfig, seed: int, path) -> int:
    h = Header(kind=KIND_BUNDLES, flags=FLAG_ORDERED, per_row=cfg.bundles_per_view)
    with DatasetWriter(path, h) as w:
        for c in generate_sgs(cfg, seed):
            w.write(c)
    return w.n


def sinogram_stats(cfg: SgsPhantomConfig, rotations=None) -> dict:
    rots = cfg.rotation_ids() if rotations is None else rotations
    vals, means = [], []
    for r in rots:
        s = sinogram(cfg, r)
        vals.append(s.ravel())
        means.append(bundles_from_sinogram(s).mean(axis=1))
    v = np.concatenate(vals)
    m = np.concatenate(means)
    return {
        "max_mu_l": float(v.max()),
        "mean_mu_l": float(v.mean()),
        "zero_fraction": float(np.mean(v <= 0.0)),
        "bundle_mean_std": float(m.std()),
    }
