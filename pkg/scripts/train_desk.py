"""Desk-profile network training and comparison with SVD and SNN1 on a held-out RND set."""
import argparse
import json
import time

from tctbundle.classical import snn1_batch
from tctbundle.datasets import RndConfig, rnd_array
from tctbundle.evaluation import evaluate, gap_closure_table
from tctbundle.nn.assembly import assemble_v4, assemble_v5
from tctbundle.nn.checkpoint import save_checkpoint
from tctbundle.nn.train import desk_config, predict, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-train", type=int, default=200_000)
    ap.add_argument("--n-test", type=int, default=100_000)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--variants", default="V2,V4")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--save", default=None, help="checkpoint prefix")
    a = ap.parse_args()

    train_recs = rnd_array(RndConfig(n_bundles=a.n_train, seed=11))
    test = rnd_array(RndConfig(n_bundles=a.n_test, seed=12))
    cfg = desk_config(epochs=a.epochs)
    xs, _, _ = snn1_batch(test["counts"], test["n0"])
    snn = evaluate(test, xs, method="snn1")
    svd = evaluate(test, test["x_svd"], method="svd")

    for variant in a.variants.split(","):
        t = time.time()
        model, hist = train(train_recs, variant, cfg, seed=a.seed,
                            log=lambda r: print(json.dumps({k: round(v, 6) if isinstance(v, float) else v
                                                            for k, v in r.items()})))
        print(f"{variant}: {model.n_params()} parameters, {time.time() - t:.0f} s")
        if a.save:
            save_checkpoint(model, f"{a.save}_{variant}.ckpt", {"train": cfg.to_dict(), "history": hist})
        if variant == "V4":
            for name, x in (("V4-A", assemble_v4(test, model, "analytic")),
                            ("V4-B", assemble_v4(test, model, "snn1")), ("V5", assemble_v5(test, model))):
                rep = evaluate(test, x, method=name, exact_crb=False)
                print(name, "x2 StdDev by bin:",
                      " ".join(f"{rep.get(b, 'x2')['std']:.4f}" for b in range(1, 9)))
            continue
        nn = evaluate(test, predict(model, test), method=variant)
        print(f"{'bin':>3} {'svd':>8} {'snn1':>8} {variant:>8} {'gap%':>6}")
        for row in gap_closure_table(snn, nn, "crb_exact_rms"):
            b = row["bin"]
            print(f"{b:>3} {svd.get(b, 'pooled')['std']:8.4f} {row['a_pool']:8.4f} {row['b_pool']:8.4f} "
                  f"{row['gap_closed_pct']:6.1f}")


if __name__ == "__main__":
    main()
