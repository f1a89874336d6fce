#!/usr/bin/env python3
"""Estimate both Lyapunov exponents of the bundled maps over a range of orbit lengths.

Writes one JSON line per (map, n) to stdout. Useful for seeing the O(1/n) bias of the
finite-time estimates shrink as n grows.
"""
import argparse
import json
import time

import numpy as np

from holodyn import lyapunov, measures, suite
from holodyn.projspace import normalize


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--maps", nargs="+", default=list(suite.BUNDLED))
    ap.add_argument("--n", nargs="+", type=int, default=[10, 20, 40])
    ap.add_argument("--count", type=int, default=20000)
    ap.add_argument("--depth", type=int, default=25)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    for name in args.maps:
        F = suite.bundled_map(name)
        start = normalize([1, 1, 1]) if name.startswith("power") else normalize(suite.DEFAULT_START)
        cloud = measures.sample_equilibrium(F, start, args.depth, args.count, args.seed)
        for n in args.n:
            t0 = time.perf_counter()
            est = lyapunov.exponent_pair(F, cloud, n, seed=args.seed)
            rec = est.record()
            rec.update(map=name, floor=0.5 * np.log(F.degree), seconds=round(time.perf_counter() - t0, 2))
            print(json.dumps(rec, sort_keys=True), flush=True)


if __name__ == "__main__":
    main()
