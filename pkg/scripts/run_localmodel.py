#!/usr/bin/env python3
"""Local-model pairings at increasing quadrature resolution.

For each test function, prints the T11, T22 and mu0 discrepancies and the quadrature
error estimates so the convergence of the tensor rule can be inspected.
"""
import argparse
import json

from holodyn import localmodel
from holodyn.testfn import standard_suite


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--res", nargs="+", type=int, default=[16, 24, 32, 48])
    args = ap.parse_args()

    for phi in standard_suite():
        for res in args.res:
            t11 = localmodel.pair_T11(phi, res)
            checks = (t11, localmodel.pair_T22(phi, res), localmodel.pair_mu0(phi, res, t11=t11))
            for c in checks:
                print(json.dumps({"res": res, **c.record()}, sort_keys=True, default=float))


if __name__ == "__main__":
    main()
