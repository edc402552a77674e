"""Deviation of the discrete conformal identity under cluster refinement."""
import argparse

import numpy as np

from kondratiev.geometry import MultiElectronSpec, multi_electron_family
from kondratiev.mesh import build_tensor_mesh
from kondratiev.probes import conformal_identity_check
from kondratiev.weights import WeightEvaluator


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--depths", type=int, nargs="+", default=[4, 8, 16, 32])
    ap.add_argument("--box", type=float, default=3.0)
    args = ap.parse_args()
    W = WeightEvaluator(multi_electron_family(MultiElectronSpec(1, (-1.0,))))
    u1 = lambda X: np.ones(len(X))
    u2 = lambda X: np.exp(X @ np.array([0.3, -0.2, 0.1]))
    prev = None
    for depth in args.depths:
        mesh = build_tensor_mesh(args.box, 2, depth, 2.0, cluster_radius=args.box)
        dev = conformal_identity_check(mesh, W, u1, u2).deviation
        ratio = "" if prev is None else f" ratio={prev / dev:.2f}"
        print(f"depth={depth:>3d} vertices={mesh.num_vertices:>7d} deviation={dev:.5f}{ratio}")
        prev = dev


if __name__ == "__main__":
    main()
