"""Per-bin Monte-Carlo error statistics and comparison tables."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .bundle_model import CANONICAL_ROWS
from .fisher import crb_batch, crb_equal_attenuation, sigma_fair

PATHS = ("x1", "x2", "x3")
REDUCE_CHUNK = 4096


@dataclass(frozen=True)
class BinSpec:
    edges: tuple = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9.2)

    def __post_init__(self):
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1

    def centers(self) -> np.ndarray:
        e = np.asarray(self.edges, dtype=float)
        return 0.5 * (e[:-1] + e[1:])

    def assign(self, x) -> np.ndarray:
        """Bin index per value (0-based), -1 outside; the last bin is closed."""
        e = np.asarray(self.edges, dtype=float)
        x = np.asarray(x, dtype=float)
        b = np.searchsorted(e, x, side="right") - 1
        b = np.where(x == e[-1], len(e) - 2, b)
        return np.where((x < e[0]) | (x > e[-1]), -1, b)


class Moments:
    """Welford accumulators for count, mean and M2, vectorized over cells."""

    def __init__(self, shape=()):
        self.n = np.zeros(shape)
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    @classmethod
    def from_values(cls, cells: np.ndarray, values: np.ndarray, n_cells: int) -> "Moments":
        """Exact two-pass moments per cell for one chunk."""
        m = cls((n_cells,))
        ok = cells >= 0
        c, v = cells[ok], values[ok]
        m.n = np.bincount(c, minlength=n_cells).astype(float)
        s = np.bincount(c, weights=v, minlength=n_cells)
        with np.errstate(invalid="ignore", divide="ignore"):
            m.mean = np.where(m.n > 0, s / np.maximum(m.n, 1), 0.0)
        d = v - m.mean[c]
        m.m2 = np.bincount(c, weights=d * d, minlength=n_cells)
        return m

    def push(self, value: float):
        """Single-value Welford update (scalar accumulators)."""
        self.n = self.n + 1
        d = value - self.mean
        self.mean = self.mean + d / self.n
        self.m2 = self.m2 + d * (value - self.mean)

    def merge(self, other: "Moments") -> "Moments":
        """Chan et al. pairwise combination."""
        out = Moments(np.shape(self.n))
        out.n = self.n + other.n
        d = other.mean - self.mean
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(out.n > 0, other.n / np.maximum(out.n, 1), 0.0)
            out.mean = self.mean + d * frac
            out.m2 = self.m2 + other.m2 + d * d * self.n * frac
        return out

    @property
    def var(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.n > 0, self.m2 / np.maximum(self.n, 1), np.nan)

    @property
    def std(self):
        return np.sqrt(self.var)


def tree_reduce(parts: list) -> Moments:
    """Pairwise reduction in a fixed order so results do not depend on scheduling."""
    while len(parts) > 1:
        nxt = [parts[i].merge(parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def binned_moments(cells: np.ndarray, values: np.ndarray, n_cells: int, chunk: int = REDUCE_CHUNK) -> Moments:
    parts = [Moments.from_values(cells[s:s + chunk], values[s:s + chunk], n_cells)
             for s in range(0, max(len(values), 1), chunk)]
    return tree_reduce(parts)


def _binned_mean(cells, values, n_cells):
    ok = cells >= 0
    n = np.bincount(cells[ok], minlength=n_cells)
    s = np.bincount(cells[ok], weights=values[ok], minlength=n_cells)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, s / np.maximum(n, 1), np.nan)


@dataclass
class EvalReport:
    method: str
    binspec: BinSpec
    rows: list = field(default_factory=list)

    def get(self, bin_no: int, path: str) -> dict | None:
        """bin_no is 1-based as in the printed tables; path is x1/x2/x3/endpoint/pooled."""
        for r in self.rows:
            if r["bin"] == bin_no and r["path"] == path:
                return r
        return None

    def column(self, path: str, key: str) -> np.ndarray:
        out = np.full(self.binspec.n_bins, np.nan)
        for r in self.rows:
            if r["path"] == path:
                out[r["bin"] - 1] = r[key]
        return out

    def to_csv(self) -> str:
        if not self.rows:
            return ""
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(self.rows[0].keys()), lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: (f"{v:.8g}" if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"method": self.method, "edges": list(self.binspec.edges),
                           "rows": self.rows}, indent=1, sort_keys=True)


def _order(records) -> np.ndarray:
    return np.argsort(records["bundle_index"], kind="stable")


def evaluate(records: np.ndarray, x_hat: np.ndarray, binspec: BinSpec = BinSpec(),
             method: str = "", exact_crb: bool = True) -> EvalReport:
    """Per-path errors binned by the true value of that path, plus pooled rows.

    Reference columns: sigma_fair at the bin centre averaged over the
    per-record doses in the cell, the closed-form equal-attenuation CRB at the
    bin centre (dose = mean n0 in the cell), and the RMS of the exact
    per-record CRB.
    """
    order = _order(records)
    x = np.asarray(records["x_true"], dtype=float)[order]
    n0 = np.asarray(records["n0"], dtype=float)[order]
    err = np.asarray(x_hat, dtype=float)[order] - x
    nb = binspec.n_bins
    crb = crb_batch(CANONICAL_ROWS, x, n0) if exact_crb else None
    centers = binspec.centers()
    per = {}
    for k, name in enumerate(PATHS):
        cells = binspec.assign(x[:, k])
        mom = binned_moments(cells, err[:, k], nb)
        fair = _binned_mean(cells, sigma_fair(centers[np.maximum(cells, 0)], n0), nb)
        n0_mean = _binned_mean(cells, n0, nb)
        ep, mid, _, _ = crb_equal_attenuation(0.0, 1.0)
        closed = (mid if k == 1 else ep) * np.exp(centers / 2) / np.sqrt(n0_mean)
        rms = np.sqrt(_binned_mean(cells, crb[:, k] ** 2, nb)) if crb is not None else np.full(nb, np.nan)
        per[name] = dict(n=mom.n, std=mom.std, bias=mom.mean, fair=fair, closed=closed, rms=rms)

    rep = EvalReport(method, binspec)
    for b in range(nb):
        cells = {}
        for name in PATHS:
            p = per[name]
            if p["n"][b] == 0:
                continue
            cells[name] = {key: float(p[key][b]) for key in ("n", "std", "bias", "fair", "closed", "rms")}
        for name, c in cells.items():
            rep.rows.append(_row(method, b, binspec, name, c))
        if "x1" in cells and "x3" in cells:
            ep = _combine([cells["x1"], cells["x3"]])
            rep.rows.append(_row(method, b, binspec, "endpoint", ep))
            if "x2" in cells:
                pool = _combine([cells["x1"], cells["x2"], cells["x3"]])
                rep.rows.append(_row(method, b, binspec, "pooled", pool))
    return rep


def _combine(cells: list) -> dict:
    """Root-mean-square combination: pooled^2 is the mean of the per-path variances."""
    out = {"n": sum(c["n"] for c in cells)}
    for key in ("std", "fair", "closed", "rms"):
        out[key] = float(np.sqrt(np.mean([c[key] ** 2 for c in cells])))
    out["bias"] = float(np.mean([c["bias"] for c in cells]))
    return out


def _row(method, b, binspec, path, c) -> dict:
    lo, hi = binspec.edges[b], binspec.edges[b + 1]
    return {
        "method": method, "bin": b + 1, "lo": float(lo), "hi": float(hi), "path": path,
        "count": int(c["n"]), "std": c["std"], "bias": c["bias"],
        "sigma_fair": c["fair"], "crb_closed": c["closed"], "crb_exact_rms": c["rms"],
        "ratio_fair": c["std"] / c["fair"], "ratio_crb": c["std"] / c["rms"],
        "ratio_crb_closed": c["std"] / c["closed"],
    }


def gap_closure_table(report_a: EvalReport, report_b: EvalReport, crb_column: str = "crb_closed") -> list[dict]:
    """Pooled A (reference method) vs B per bin; gap closed = (A - B)/(A - CRB)."""
    rows = []
    for b in range(1, report_a.binspec.n_bins + 1):
        ra, rb = report_a.get(b, "pooled"), report_b.get(b, "pooled")
        if ra is None or rb is None:
            continue
        crb = ra[crb_column]
        a, bb = ra["std"], rb["std"]
        applicable = a > crb
        gap = 100.0 * (a - bb) / (a - crb) if applicable else float("nan")
        rows.append({"bin": b, "crb_pool": crb, "a_pool": a, "b_pool": bb, "ratio": bb / a,
                     "gap_closed_pct": gap, "crb_applicable": bool(applicable)})
    return rows


def _corr(a, b):
    if len(a) < 2 or np.std(a) == 0 or np.std(b) == 0:
        return None
    return float(np.corrcoef(a, b)[0, 1])


def correlation_diagnostics(records: np.ndarray, ordered: bool = False, per_row: int = 0) -> dict:
    """Intra-bundle path correlations, and same-path adjacent-bundle ones for ordered data."""
    x = np.asarray(records["x_true"], dtype=float)
    out = {"n_bundles": int(len(x))}
    for i, j in ((0, 1), (1, 2), (0, 2)):
        out[f"rho_x{i + 1}x{j + 1}"] = _corr(x[:, i], x[:, j])
    if ordered:
        if per_row <= 0:
            raise ValueError("ordered data needs the bundles-per-view count")
        idx = np.asarray(records["bundle_index"], dtype=np.int64)
        if np.any(np.diff(idx) <= 0):
            raise ValueError("records are not in sinogram order")
        nxt = (idx[1:] == idx[:-1] + 1) & (idx[1:] // per_row == idx[:-1] // per_row)
        out["n_adjacent_pairs"] = int(nxt.sum())
        for k in range(3):
            out[f"rho_adjacent_x{k + 1}"] = _corr(x[:-1][nxt, k], x[1:][nxt, k])
    return out


def format_table(report: EvalReport, paths=("endpoint", "x2", "pooled")) -> str:
    lines = [f"{'bin':>3} {'range':>11} {'path':>8} {'n':>8} {'std':>9} {'crb':>9} {'ratio':>6}"]
    for r in report.rows:
        if r["path"] in paths:
            lines.append(f"{r['bin']:>3} [{r['lo']:g},{r['hi']:g}){'':>3} {r['path']:>8} {r['count']:>8d} "
                         f"{r['std']:9.5f} {r['crb_exact_rms']:9.5f} {r['ratio_crb']:6.3f}")
    return "\n".join(lines)
