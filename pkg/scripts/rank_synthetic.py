#!/usr/bin/env python3
"""Accuracy and variance explained against the rank of the truncated map."""

import argparse

from embedmap import io as eio
from embedmap.experiments import rank_sweep
from embedmap.synthetic import default_world, emit_embeddings, generate_protocol


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--ranks", type=int, nargs="+", default=[2, 4, 8, 16, 32, 64])
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--csv", default="rank.csv")
    args = ap.parse_args()

    world = default_world(2, seed=args.seed)
    a, b = emit_embeddings(world, 0), emit_embeddings(world, 1)
    curve = rank_sweep(a, b, generate_protocol(world), ranks=args.ranks, jobs=args.jobs)
    var = dict(curve.variance_points)
    for k, acc in curve.points:
        print(f"k={k:<3d} accuracy {100 * acc:6.2f}%  variance explained {var[k]:.4f}")
    print(f"untruncated {100 * curve.full_accuracy:.2f}%")
    eio.write_curve_csv(curve, args.csv)


if __name__ == "__main__":
    main()
