"""Command-line entry point: tct <subcommand> [options]."""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import fisher
from .bundle_model import SystemMatrix, canonical_system_matrix
from .classical import Snn1Config, invert_batch
from .datasets import RndConfig, write_rnd
from .evaluation import BinSpec, correlation_diagnostics, evaluate, format_table
from .phantom import SgsPhantomConfig, write_sgs
from .records import (
    KIND_ESTIMATES,
    DatasetError,
    DatasetReader,
    DatasetWriter,
    Header,
    estimate_dtype,
)

EXIT_OK, EXIT_DATA, EXIT_USAGE, EXIT_CHECK = 0, 1, 2, 3
WORKERS_ENV = "TCT_WORKERS"

# Published CRB_equal rows at n0 = 1e5: x, sigma_fair, crb1, crb2.
CRB_EQUAL_PUBLISHED = (
    (0.0, 0.00183, 0.00279, 0.00380),
    (2.0, 0.00497, 0.00759, 0.01034),
    (4.0, 0.01350, 0.02062, 0.02809),
    (6.0, 0.03669, 0.05603, 0.07635),
    (8.0, 0.09977, 0.15232, 0.20759),
    (9.2, 0.17326, 0.26472, 0.36074),
)

PROFILES = {
    "desk": {"n": 200_000, "epochs": 20, "batch_size": 512, "width_multiplier": 0.25,
             "rotations": "0:200:20", "view_stride": 4},
    "paper": {"n": 14_000_000, "epochs": 80, "batch_size": 2048, "width_multiplier": 1.0,
              "rotations": "0:200", "view_stride": 1},
}

# Named matrices for design-scan.
DESIGNS = {
    "canonical": canonical_system_matrix().entries,
    "identity3": np.eye(3),
    "pairs3": np.array([[1, 0, 0], [1, 1, 0], [0, 1, 1], [0, 0, 1]], dtype=float),
    "sliding4": np.array([[1, 0, 0], [1, 1, 0], [1, 1, 1], [0, 1, 1], [0, 0, 1], [1, 0, 1]], dtype=float),
    "single3": np.ones((3, 1)),
}


class CheckFailed(Exception):
    pass


class ConfigError(Exception):
    pass


def read_config(path) -> dict:
    """Plain key = value lines; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key = value")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def parse_range(spec: str) -> list[int]:
    parts = [int(p) for p in spec.split(":")]
    return list(range(*parts)) if len(parts) > 1 else parts


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(rows: list[dict]) -> str:
    keys = list(rows[0].keys())
    lines = [",".join(keys)]
    for r in rows:
        lines.append(",".join(f"{r[k]:.6g}" if isinstance(r[k], float) else str(r[k]) for k in keys))
    return "\n".join(lines) + "\n"


def cmd_gen_rnd(a) -> int:
    cfg = RndConfig(n_bundles=int(a.n), seed=a.seed, tcm=None if a.fixed_n0 else RndConfig().tcm,
                    fixed_n0=a.fixed_n0 or 1e5, equal_attenuation=a.equal_attenuation)
    n = write_rnd(cfg, a.out, a.workers)
    print(f"gen-rnd: wrote {n} bundles to {a.out}")
    return EXIT_OK


def cmd_gen_sgs(a) -> int:
    cfg = SgsPhantomConfig(rotation_subset=tuple(parse_range(a.rotations)), view_stride=int(a.view_stride))
    n = write_sgs(cfg, a.seed, a.out)
    print(f"gen-sgs: wrote {n} bundles ({len(cfg.rotation_ids())} rotations) to {a.out}")
    return EXIT_OK


def cmd_crb_table(a) -> int:
    if a.decomposition:
        rows = fisher.decomposition_table(a.n0 if a.n0 != 1e5 else 122_000.0)
    else:
        rows = fisher.crb_equal_table(a.n0)
    text = json.dumps(rows, indent=1) + "\n" if a.format == "json" else _csv(rows)
    _emit(text, a.out)
    if a.check and not a.decomposition:
        bad = []
        for (x, fair, c1, c2), r in zip(CRB_EQUAL_PUBLISHED, fisher.crb_equal_table(1e5)):
            for name, pub in (("sigma_fair", fair), ("sigma_crb1", c1), ("sigma_crb2", c2)):
                if round(r[name], 5) != pub:
                    bad.append(f"x={x} {name} {r[name]:.5f} vs {pub:.5f}")
        if bad:
            raise CheckFailed("; ".join(bad))
    print(f"crb-table: {len(rows)} rows", file=sys.stderr)
    return EXIT_OK


def cmd_design_scan(a) -> int:
    names = a.designs.split(",")
    mats = []
    for n in names:
        if n not in DESIGNS:
            raise ValueError(f"unknown design {n!r}; choose from {sorted(DESIGNS)}")
        mats.append(SystemMatrix(DESIGNS[n]))
    res = fisher.design_scan(mats, a.x, a.n0, names)
    rows = [{"design": e.name, "flag": e.flagged,
             "eta": [round(float(v), 6) for v in e.efficiency] if e.efficiency is not None else None}
            for e in res]
    _emit(json.dumps(rows, indent=1) + "\n", a.out)
    return EXIT_OK


def _snn1_cfg(a) -> Snn1Config:
    return Snn1Config(max_iter=int(a.max_iter))


def cmd_invert(a) -> int:
    r = DatasetReader(a.input)
    h = Header(kind=KIND_ESTIMATES, k=r.header.k, flags=r.header.flags, per_row=r.header.per_row)
    total_it, n = 0, 0
    with DatasetWriter(a.out, h) as w:
        for chunk in r.chunks():
            x, it = invert_batch(a.method, chunk["counts"], chunk["n0"], _snn1_cfg(a))
            out = np.zeros(len(chunk), dtype=estimate_dtype(r.header.k))
            out["x_hat"], out["iterations"] = x, it
            out["bundle_index"], out["split"] = chunk["bundle_index"], chunk["split"]
            w.write(out)
            total_it += int(it.sum())
            n += len(chunk)
    print(f"invert: {a.method} on {n} bundles, mean iterations {total_it / max(n, 1):.2f}")
    return EXIT_OK


def cmd_train(a) -> int:
    from .nn.checkpoint import save_checkpoint
    from .nn.train import TrainConfig, train

    recs = DatasetReader(a.input).read_all()
    cfg = TrainConfig(epochs=int(a.epochs), batch_size=int(a.batch_size),
                      width_multiplier=float(a.width_multiplier))
    log = (lambda d: print(json.dumps(d), file=sys.stderr)) if a.verbose else None
    model, hist = train(recs, a.variant, cfg, seed=a.seed, log=log)
    save_checkpoint(model, a.out, {"train": cfg.to_dict(), "history": hist, "seed": a.seed})
    best = min(h["val_full"] for h in hist)
    print(f"train: {a.variant} {model.n_params()} params, best val loss {best:.6f} -> {a.out}")
    return EXIT_OK


def cmd_predict(a) -> int:
    from .nn.assembly import assemble_v4
    from .nn.checkpoint import load_checkpoint
    from .nn.train import predict

    model, _ = load_checkpoint(a.checkpoint)
    recs = DatasetReader(a.input).read_all()
    if a.endpoint_mode:
        x = assemble_v4(recs, model, a.endpoint_mode)
    else:
        x = predict(model, recs)
    out = np.zeros(len(recs), dtype=estimate_dtype())
    out["x_hat"], out["bundle_index"], out["split"] = x, recs["bundle_index"], recs["split"]
    with DatasetWriter(a.out, Header(kind=KIND_ESTIMATES)) as w:
        w.write(out)
    print(f"predict: {model.variant} on {len(recs)} bundles -> {a.out}")
    return EXIT_OK


# Acceptance tolerances applied by `evaluate --check` (bins are 1-based).
SNN1_ENDPOINT_BINS = (4, 5, 6, 7)
SNN1_ENDPOINT_RANGE = (0.98, 1.08)
SNN1_MIDDLE_BIN7 = (1.2, 1.7)


def _estimates_for(recs, a):
    if a.estimates:
        est = DatasetReader(a.estimates).read_all()
        pos = {int(b): i for i, b in enumerate(est["bundle_index"])}
        try:
            idx = np.array([pos[int(b)] for b in recs["bundle_index"]])
        except KeyError as e:
            raise DatasetError(f"estimates file lacks bundle {e}") from None
        return est["x_hat"][idx], a.method or "estimates"
    x, _ = invert_batch(a.method or "svd", recs["counts"], recs["n0"], _snn1_cfg(a))
    return x, a.method or "svd"


def cmd_evaluate(a) -> int:
    recs = DatasetReader(a.input).read_all()
    if a.split != "all":
        recs = recs[recs["split"] == ("train", "val", "test").index(a.split)]
    x, label = _estimates_for(recs, a)
    rep = evaluate(recs, x, BinSpec(), label)
    _emit(rep.to_json() + "\n" if a.format == "json" else rep.to_csv(), a.out)
    print(format_table(rep), file=sys.stderr)
    if a.check and label == "snn1":
        bad = []
        for b in SNN1_ENDPOINT_BINS:
            r = rep.get(b, "endpoint")
            if r is None or not SNN1_ENDPOINT_RANGE[0] <= r["ratio_crb"] <= SNN1_ENDPOINT_RANGE[1]:
                bad.append(f"bin {b} endpoint ratio {r and r['ratio_crb']}")
        r = rep.get(7, "x2")
        if r is None or not SNN1_MIDDLE_BIN7[0] <= r["ratio_crb"] <= SNN1_MIDDLE_BIN7[1]:
            bad.append(f"bin 7 middle ratio {r and r['ratio_crb']}")
        if bad:
            raise CheckFailed("; ".join(bad))
    return EXIT_OK


def cmd_diagnose(a) -> int:
    out = {"asymptotic": fisher.asymptotic_diagnostics()}
    if a.input:
        r = DatasetReader(a.input)
        recs = r.read_all()
        x = recs["x_true"]
        out["dataset"] = {
            "n_bundles": int(len(recs)),
            "x_mean": float(x.mean()),
            "x_max": float(x.max()),
            "zero_fraction": float(np.mean(x <= 0)),
            "bundle_mean_std": float(x.mean(axis=1).std()),
            "n0_mean": float(recs["n0"].mean()),
        }
        out["correlation"] = correlation_diagnostics(recs, r.header.ordered, r.header.per_row)
    _emit(json.dumps(out, indent=1, sort_keys=True) + "\n", a.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=2026)
    common.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    common.add_argument("--workers", type=int, default=int(os.environ.get(WORKERS_ENV, "1")))
    common.add_argument("--out", default=None)
    common.add_argument("--check", action="store_true", help="exit 3 if acceptance tolerances fail")
    common.add_argument("--config", default=None, help="key = value file; command-line flags win")

    p = argparse.ArgumentParser(prog="tct", description="Per-bundle Poisson inversion toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    p.subcommands = sub.choices

    s = sub.add_parser("gen-rnd", parents=[common], help="generate an RND dataset")
    s.add_argument("--n", type=int)
    s.add_argument("--fixed-n0", type=float, default=0.0, help="constant n0 instead of TCM")
    s.add_argument("--equal-attenuation", action="store_true")
    s.set_defaults(func=cmd_gen_rnd, needs_out=True)

    s = sub.add_parser("gen-sgs", parents=[common], help="generate an SGS phantom dataset")
    s.add_argument("--rotations", help="start:stop[:step]")
    s.add_argument("--view-stride", type=int)
    s.set_defaults(func=cmd_gen_sgs, needs_out=True)

    s = sub.add_parser("crb-table", parents=[common], help="equal-attenuation CRB table")
    s.add_argument("--n0", type=float, default=1e5)
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--decomposition", action="store_true", help="per-bin gap decomposition table")
    s.set_defaults(func=cmd_crb_table)

    s = sub.add_parser("design-scan", parents=[common], help="rank bundle designs by efficiency")
    s.add_argument("--designs", default="canonical,identity3,pairs3,sliding4")
    s.add_argument("--x", type=float, default=5.0)
    s.add_argument("--n0", type=float, default=1e5)
    s.set_defaults(func=cmd_design_scan)

    s = sub.add_parser("invert", parents=[common], help="classical inversion of a dataset")
    s.add_argument("--input", required=True)
    s.add_argument("--method", choices=("svd", "snn1", "endpoint-mle"), default="snn1")
    s.add_argument("--max-iter", type=int, default=50)
    s.set_defaults(func=cmd_invert, needs_out=True)

    s = sub.add_parser("train", parents=[common], help="train the residual network")
    s.add_argument("--input", required=True)
    s.add_argument("--variant", choices=("V1", "V2", "V4"), default="V2")
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--width-multiplier", type=float)
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(func=cmd_train, needs_out=True)

    s = sub.add_parser("predict", parents=[common], help="run a trained network")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--endpoint-mode", choices=("analytic", "snn1"), default=None,
                   help="hybrid assembly: classical endpoints, network middle path")
    s.set_defaults(func=cmd_predict, needs_out=True)

    s = sub.add_parser("evaluate", parents=[common], help="per-bin error statistics")
    s.add_argument("--input", required=True)
    s.add_argument("--estimates", default=None, help="estimates file; else run --method inline")
    s.add_argument("--method", default=None)
    s.add_argument("--max-iter", type=int, default=50)
    s.add_argument("--split", choices=("all", "train", "val", "test"), default="all")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("diagnose", parents=[common], help="dataset and asymptotic diagnostics")
    s.add_argument("--input", default=None)
    s.set_defaults(func=cmd_diagnose)
    return p


def _layer_defaults(sp: argparse.ArgumentParser, layer: dict, known=None):
    """Install layer values as subcommand defaults so argparse applies its type conversion.

    Keys for other subcommands are skipped; keys no subcommand knows are an error
    when `known` is given.
    """
    actions = {a.dest: a for a in sp._actions}
    vals = {}
    for k, v in layer.items():
        act = actions.get(k)
        if act is None:
            if known is not None and k not in known:
                raise ConfigError(f"unknown config key {k!r}")
            continue
        if isinstance(act, argparse._StoreTrueAction) and isinstance(v, str):
            if v.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"config key {k!r} expects a boolean, got {v!r}")
            v = v.lower() in ("true", "1", "yes")
        vals[k] = v
    sp.set_defaults(**vals)


def parse(argv=None) -> argparse.Namespace:
    """Precedence: command line > config file > profile > built-in defaults."""
    p = build_parser()
    first = p.parse_args(argv)
    sp = p.subcommands[first.command]
    _layer_defaults(sp, PROFILES[first.profile])
    if first.config:
        known = {a.dest for q in p.subcommands.values() for a in q._actions}
        _layer_defaults(sp, read_config(first.config), known)
    ns = p.parse_args(argv)
    if getattr(ns, "needs_out", False) and not ns.out:
        sp.error(f"{ns.command} needs --out")
    return ns


def main(argv=None) -> int:
    try:
        ns = parse(argv)
        return ns.func(ns)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else (EXIT_OK if e.code is None else EXIT_USAGE)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except CheckFailed as e:
        print(f"check failed: {e}", file=sys.stderr)
        return EXIT_CHECK
    except (DatasetError, OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
