"""Print the equal-attenuation CRB table, the gap decomposition table and design efficiencies."""
import argparse

import numpy as np

from tctbundle.bundle_model import canonical_system_matrix
from tctbundle.fisher import asymptotic_diagnostics, crb_equal_table, decomposition_table, design_scan


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n0", type=float, default=1e5)
    ap.add_argument("--decomposition-n0", type=float, default=122_000.0)
    a = ap.parse_args()

    print(f"equal attenuation, n0 = {a.n0:g}")
    print(f"{'x':>5} {'N':>10} {'sigma_fair':>11} {'crb_ep':>9} {'crb_mid':>9} {'r1':>6} {'r2':>6}")
    for r in crb_equal_table(a.n0):
        print(f"{r['x']:5.1f} {r['N']:10.1f} {r['sigma_fair']:11.5f} {r['sigma_crb1']:9.5f} "
              f"{r['sigma_crb2']:9.5f} {r['r1']:6.3f} {r['r2']:6.3f}")

    print(f"\nendpoint gap decomposition, n0 = {a.decomposition_n0:g}")
    for r in decomposition_table(a.decomposition_n0):
        print(f"bin {r['bin']} x_c={r['x_c']:.1f} sigma_fair={r['sigma_fair']:.5f} crb={r['sigma_crb1']:.5f}")

    print("\nasymptotic inflation factors")
    for k, v in asymptotic_diagnostics().items():
        print(f"  {k}: {v}")

    mats = {"canonical": canonical_system_matrix().entries, "identity3": np.eye(3),
            "pairs3": np.array([[1, 0, 0], [1, 1, 0], [0, 1, 1], [0, 0, 1]], float)}
    print("\ndesign scan at x = 5")
    for e in design_scan(list(mats.values()), 5.0, a.n0, list(mats)):
        print(f"  {e.name:10s} {e.flagged or np.round(e.efficiency, 4)}")


if __name__ == "__main__":
    main()
