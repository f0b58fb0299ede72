"""Fisher information and Cramer-Rao bounds for Poisson bundles."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .bundle_model import SystemMatrix, _as_matrix, canonical_system_matrix, latent_means

COND_LIMIT = 1e12
SQRT3 = np.sqrt(3.0)
R1 = np.sqrt(7.0 / 3.0)
R2 = np.sqrt(13.0 / 3.0)


def sigma_single(x, n0):
    """CRB of one ray with dose n0: exp(x/2)/sqrt(n0)."""
    return np.exp(np.asarray(x, dtype=float) / 2) / np.sqrt(n0)


def sigma_fair(x, n0):
    """Single-ray CRB at the bundle's total per-path dose 3*n0."""
    return np.exp(np.asarray(x, dtype=float) / 2) / np.sqrt(3.0 * np.asarray(n0, dtype=float))


@dataclass
class FisherResult:
    fim: np.ndarray
    fim_inverse: np.ndarray | None
    crb_sigma: np.ndarray
    inflation: np.ndarray
    efficiency: np.ndarray
    singular: bool = False
    condition: float = 1.0


def fim_batch(a, x, n0) -> np.ndarray:
    """F[..., i, k] = sum_j L_ji L_jk / N_j with L the latent means."""
    lam = latent_means(a, x, n0)
    g = lam / np.sqrt(lam.sum(axis=-1))[..., None]
    return np.einsum("...ji,...jk->...ik", g, g)


def inv3(f: np.ndarray):
    """Cofactor inverse for (..., 3, 3); returns (inverse, det)."""
    a, b, c = f[..., 0, 0], f[..., 0, 1], f[..., 0, 2]
    d, e, g = f[..., 1, 0], f[..., 1, 1], f[..., 1, 2]
    h, i, j = f[..., 2, 0], f[..., 2, 1], f[..., 2, 2]
    c00 = e * j - g * i
    c01 = -(d * j - g * h)
    c02 = d * i - e * h
    det = a * c00 + b * c01 + c * c02
    adj = np.empty_like(f)
    adj[..., 0, 0] = c00
    adj[..., 1, 0] = c01
    adj[..., 2, 0] = c02
    adj[..., 0, 1] = -(b * j - c * i)
    adj[..., 1, 1] = a * j - c * h
    adj[..., 2, 1] = -(a * i - b * h)
    adj[..., 0, 2] = b * g - c * e
    adj[..., 1, 2] = -(a * g - c * d)
    adj[..., 2, 2] = a * e - b * d
    with np.errstate(divide="ignore", invalid="ignore"):
        return adj / det[..., None, None], det


def crb_batch(a, x, n0) -> np.ndarray:
    """Per-path CRB sigma for a batch of (x, n0); inf where the FIM is near singular."""
    f = fim_batch(a, x, n0)
    k = f.shape[-1]
    if k == 3:
        finv, det = inv3(f)
        scale = np.linalg.norm(f, axis=(-2, -1)) ** 3
        bad = ~(np.abs(det) > scale / COND_LIMIT)
    else:
        finv = np.linalg.pinv(f)
        bad = np.linalg.cond(f) > COND_LIMIT
    d = np.diagonal(finv, axis1=-2, axis2=-1).copy()
    with np.errstate(invalid="ignore"):
        out = np.sqrt(np.where(d > 0, d, np.inf))
    out[bad] = np.inf
    return out


def _finish(f: np.ndarray, x: np.ndarray, n0: float) -> FisherResult:
    k = f.shape[0]
    cond = float(np.linalg.cond(f))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        inf = np.full(k, np.inf)
        return FisherResult(f, None, inf, inf.copy(), np.zeros(k), True, cond)
    finv = inv3(f)[0] if k == 3 else np.linalg.solve(f, np.eye(k))
    crb = np.sqrt(np.diag(finv))
    r = crb / sigma_fair(x, n0)
    return FisherResult(f, finv, crb, r, 1.0 / r**2, False, cond)


def fim_general(a, x, n0: float) -> FisherResult:
    A = _as_matrix(a)
    x = np.asarray(x, dtype=float)
    if x.shape != (A.shape[1],):
        raise ValueError(f"x must have shape ({A.shape[1]},), got {x.shape}")
    return _finish(fim_batch(A, x, n0), x, n0)


def fim_closed_form(x, n0: float) -> FisherResult:
    """Canonical 5x3 FIM from its six explicit entries."""
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ValueError("closed form applies to the canonical 3-path bundle only")
    a1, a2, a3 = np.exp(-x)
    s12, s123, s23 = a1 + a2, a1 + a2 + a3, a2 + a3
    f11 = n0 * a1 * (1 + a1 / s12 + a1 / s123)
    f22 = n0 * a2 * (a2 / s12 + a2 / s123 + a2 / s23)
    f33 = n0 * a3 * (1 + a3 / s23 + a3 / s123)
    f12 = n0 * a1 * a2 * (1 / s12 + 1 / s123)
    f13 = n0 * a1 * a3 / s123
    f23 = n0 * a2 * a3 * (1 / s123 + 1 / s23)
    f = np.array([[f11, f12, f13], [f12, f22, f23], [f13, f23, f33]])
    return _finish(f, x, n0)


def equal_attenuation_m():
    """Exact rational M, its inverse and det(M) for the canonical matrix."""
    rows = [[1, 0, 0], [1, 1, 0], [1, 1, 1], [0, 1, 1], [0, 0, 1]]
    m = [[Fraction(0)] * 3 for _ in range(3)]
    for r in rows:
        s = sum(r)
        for i in range(3):
            for k in range(3):
                m[i][k] += Fraction(r[i] * r[k], s)
    det = (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )
    cof = [[Fraction(0)] * 3 for _ in range(3)]
    for i in range(3):
        for k in range(3):
            r_ = [q for q in range(3) if q != i]
            c_ = [q for q in range(3) if q != k]
            minor = m[r_[0]][c_[0]] * m[r_[1]][c_[1]] - m[r_[0]][c_[1]] * m[r_[1]][c_[0]]
            cof[i][k] = (-1) ** (i + k) * minor
    minv = [[cof[k][i] / det for k in range(3)] for i in range(3)]
    return m, minv, det


def crb_equal_attenuation(x: float, n0: float):
    """(sigma_crb_endpoint, sigma_crb_middle, r1, r2) on the equal-attenuation line."""
    if x < 0:
        raise ValueError("x must be non-negative")
    s = sigma_single(x, n0)
    return np.sqrt(7.0) / 3.0 * s, np.sqrt(13.0) / 3.0 * s, R1, R2


@dataclass
class GapDecomposition:
    sigma_fair: float
    sigma_crb: float
    physics_penalty: float
    algorithmic_inefficiency: float
    sigma_alg: float

    def product(self) -> float:
        return self.algorithmic_inefficiency * self.physics_penalty * self.sigma_fair


def gap_decomposition(sigma_alg: float, x: float, n0: float, path: str = "endpoint") -> GapDecomposition:
    if sigma_alg <= 0:
        raise ValueError("sigma_alg must be positive")
    if path not in ("endpoint", "middle"):
        raise ValueError("path must be 'endpoint' or 'middle'")
    ep, mid, _, _ = crb_equal_attenuation(x, n0)
    crb = float(ep if path == "endpoint" else mid)
    fair = float(sigma_fair(x, n0))
    return GapDecomposition(fair, crb, crb / fair, sigma_alg / crb, sigma_alg)


def asymptotic_diagnostics(big: float = 20.0, n0: float = 1e5) -> dict:
    a = canonical_system_matrix()
    r_end = fim_general(a, np.array([big, 1.0, 1.0]), n0).inflation
    r_mid = fim_general(a, np.array([big, 1.0, big]), n0).inflation
    r_eq = fim_general(a, np.array([5.0, 5.0, 5.0]), n0).inflation
    return {
        "dim_endpoint_r1": float(r_end[0]),
        "dim_endpoint_r1_limit": float(SQRT3),
        "dim_endpoints_r2": float(r_mid[1]),
        "dim_endpoints_r2_limit": 1.0,
        "equal_r": r_eq.tolist(),
        "equal_r_exact": [float(R1), float(R2), float(R1)],
    }


@dataclass
class DesignEntry:
    name: str
    efficiency: np.ndarray | None
    flagged: str = ""
    score: tuple = field(default=(-np.inf, -np.inf))


def design_scan(matrices, x_operating, n0: float, names=None) -> list[DesignEntry]:
    """Efficiency vectors at an operating point, best design first."""
    out = []
    for i, m in enumerate(matrices):
        sm = m if isinstance(m, SystemMatrix) else SystemMatrix(np.asarray(m))
        name = names[i] if names else f"design{i}"
        if not sm.full_column_rank:
            out.append(DesignEntry(name, None, "rank-deficient"))
            continue
        x = np.broadcast_to(np.asarray(x_operating, dtype=float), (sm.cols,))
        res = fim_general(sm, x, n0)
        if res.singular:
            out.append(DesignEntry(name, None, "singular"))
            continue
        eta = res.efficiency
        out.append(DesignEntry(name, eta, "", (float(eta.min()), float(eta.mean()))))
    ok = sorted([e for e in out if not e.flagged], key=lambda e: e.score, reverse=True)
    return ok + [e for e in out if e.flagged]


def bayesian_crb_diagnostic(fim, prior_fisher, tol: float = 1e-10) -> np.ndarray:
    """sqrt(diag((F + J)^-1)), the van Trees style bound."""
    f = np.asarray(fim, dtype=float)
    j = np.asarray(prior_fisher, dtype=float)
    for name, m in (("fim", f), ("prior_fisher", j)):
        if not np.allclose(m, m.T):
            raise ValueError(f"{name} is not symmetric")
        ev = np.linalg.eigvalsh(m)
        if ev.min() < -tol * max(1.0, abs(ev).max()):
            raise ValueError(f"{name} is not positive semidefinite")
    return np.sqrt(np.diag(np.linalg.inv(f + j)))


CRB_TABLE_X = (0.0, 2.0, 4.0, 6.0, 8.0, 9.2)


def crb_equal_table(n0: float = 1e5, xs=CRB_TABLE_X) -> list[dict]:
    rows = []
    for x in xs:
        ep, mid, r1, r2 = crb_equal_attenuation(x, n0)
        rows.append({
            "x": x, "N": n0 * np.exp(-x), "sigma_fair": float(sigma_fair(x, n0)),
            "sigma_crb1": float(ep), "sigma_crb2": float(mid), "r1": float(r1), "r2": float(r2),
        })
    return rows


def decomposition_table(n0: float = 122_000.0, n_bins: int = 9) -> list[dict]:
    rows = []
    for b in range(n_bins):
        xc = b + 0.5
        g = gap_decomposition(1.0, xc, n0, "endpoint")
        rows.append({"bin": b + 1, "lo": b, "hi": b + 1, "x_c": xc, "sigma_fair": g.sigma_fair,
                     "sigma_crb1": g.sigma_crb, "r1": g.physics_penalty})
    return rows
