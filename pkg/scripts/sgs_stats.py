"""Summary statistics of the analytic chest phantom sinogram and the RND mixture."""
import argparse

import numpy as np

from tctbundle.datasets import RndConfig, rnd_array
from tctbundle.evaluation import correlation_diagnostics
from tctbundle.phantom import SgsPhantomConfig, generate_sgs, sinogram_stats


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rotation-step", type=int, default=20)
    ap.add_argument("--view-stride", type=int, default=4)
    ap.add_argument("--n-rnd", type=int, default=1_000_000)
    a = ap.parse_args()

    cfg = SgsPhantomConfig(rotation_subset=tuple(range(0, 200, a.rotation_step)), view_stride=a.view_stride)
    st = sinogram_stats(cfg)
    print("SGS sinogram:", {k: round(v, 4) for k, v in st.items()})
    recs = np.concatenate(list(generate_sgs(cfg, 2026)))
    print("SGS correlations:", correlation_diagnostics(recs, True, cfg.bundles_per_view))
    print(f"SGS mean n0 {recs['n0'].mean():.0f}")

    r = rnd_array(RndConfig(n_bundles=a.n_rnd))
    x = r["x_true"]
    print(f"RND mean x {x.mean():.4f}, per-path std {x.std():.3f}, bundle-mean std {x.mean(axis=1).std():.3f}, "
          f"mean n0 {r['n0'].mean():.0f}")
    print("RND correlations:", correlation_diagnostics(r))


if __name__ == "__main__":
    main()
