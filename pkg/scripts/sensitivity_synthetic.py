#!/usr/bin/env python3
"""Accuracy as a function of the number of pairs used to fit the map.

Writes a p,accuracy CSV and prints the smallest p within the drop threshold.
"""

import argparse

from embedmap import io as eio
from embedmap.experiments import sensitivity_sweep
from embedmap.synthetic import default_world, emit_embeddings, generate_protocol


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--points", type=int, default=100)
    ap.add_argument("--repetitions", type=int, default=1)
    ap.add_argument("--drop", type=float, default=0.01)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--csv", default="sensitivity.csv")
    args = ap.parse_args()

    world = default_world(2, seed=args.seed)
    a, b = emit_embeddings(world, 0), emit_embeddings(world, 1)
    curve = sensitivity_sweep(a, b, generate_protocol(world), num_points=args.points, seed=args.seed,
                              drop_threshold=args.drop, repetitions=args.repetitions, jobs=args.jobs)
    eio.write_curve_csv(curve, args.csv)
    print(f"m = {curve.m}, full accuracy {100 * curve.full_accuracy:.2f}%")
    print(f"p for {100 * args.drop:g}% drop: {curve.p_for_drop}")
    print(f"curve written to {args.csv}")


if __name__ == "__main__":
    main()
