"""Sampled range of the pairwise weight ratio rho / prod(r_i / r_B) for a few electron counts."""
import argparse

from kondratiev.geometry import MultiElectronSpec, multi_electron_family
from kondratiev.weights import WeightEvaluator


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--electrons", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--samples", type=int, nargs="+", default=[1000, 10000, 100000])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for n in args.electrons:
        fam = multi_electron_family(MultiElectronSpec(n, (-1.0,) * n, (1.0,) * (n * (n - 1) // 2)))
        W = WeightEvaluator(fam)
        for s in args.samples:
            lo, hi = W.comparability_estimate(s, seed=args.seed)
            print(f"N={n} members={len(fam):>3d} samples={s:>7d} min={lo:.4f} max={hi:.4f}")


if __name__ == "__main__":
    main()
