#!/usr/bin/env python3
"""Heuristic optimality gaps per problem class as a markdown table.

Defaults to all 30 classes with 100 instances each; published reference gaps
for class (5, 30) are printed alongside when that class is included.
"""
import argparse
import sys

from pickroute.cli import parse_classes
from pickroute.evaluation import HEURISTIC_METHODS, evaluate
from pickroute.warehouse import ProblemClass

PUBLISHED_5_30 = {"sshape": 13.86, "return": 57.89, "largestgap": 11.75, "composite": 10.66}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--classes", default="all")
    ap.add_argument("--count", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mode", choices=("normal", "uniform"), default="normal")
    args = ap.parse_args()

    classes = parse_classes(args.classes, args.mode)
    report = evaluate(HEURISTIC_METHODS, classes, instances_per_class=args.count, seed=args.seed)
    sys.stdout.write(report.to_markdown())
    ref = ProblemClass(5, 30, args.mode)
    if ref in classes:
        print("\nclass 5/30, measured vs published:")
        for m in HEURISTIC_METHODS:
            print(f"  {m:<11} {report.row(ref, m).mean_gap:6.2f}  vs {PUBLISHED_5_30[m]:6.2f}")


if __name__ == "__main__":
    main()
