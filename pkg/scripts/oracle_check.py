#!/usr/bin/env python3
"""Cross-check the tour-graph DP against Held-Karp on random small instances."""
import argparse

import numpy as np

from pickroute.exact import brute_force_tsp, solve_optimal
from pickroute.warehouse import ProblemClass, generate_instance


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=1000)
    ap.add_argument("--max-aisles", type=int, default=4)
    ap.add_argument("--max-items", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    bad = 0
    for k in range(args.count):
        mode = ("normal", "uniform")[k % 2]
        pc = ProblemClass(int(rng.integers(1, args.max_aisles + 1)), int(rng.integers(1, args.max_items + 1)), mode)
        inst = generate_instance(pc, int(rng.integers(2**62)))
        dp, bf = solve_optimal(inst)[0], brute_force_tsp(inst)
        if dp != bf:
            bad += 1
            print(f"mismatch: class {pc} seed {inst.seed}: dp {dp} brute force {bf}")
    print(f"{args.count - bad}/{args.count} instances agree")
    raise SystemExit(1 if bad else 0)


if __name__ == "__main__":
    main()
