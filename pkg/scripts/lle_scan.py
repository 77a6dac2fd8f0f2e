"""Largest Lyapunov exponent of the Lorenz reference trajectory across rho.

Prints the Rosenstein estimate next to the two-trajectory estimate, which is
handy for checking the estimator before a full accuracy scan.
"""

import argparse
import csv
import sys

import numpy as np

from chaosml.attractors import AttractorSpec
from chaosml.lyapunov import benettin_lle, lle_for_rho


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rho-min", type=float, default=1.0)
    ap.add_argument("--rho-max", type=float, default=100.0)
    ap.add_argument("--rho-step", type=float, default=9.0)
    ap.add_argument("--sigma", type=float, default=10.0)
    ap.add_argument("--beta", type=float, default=8.0 / 3.0)
    args = ap.parse_args()

    w = csv.writer(sys.stdout)
    w.writerow(["rho", "rosenstein", "benettin"])
    for rho in np.arange(args.rho_min, args.rho_max + 1e-9, args.rho_step):
        ros = lle_for_rho(float(rho), args.sigma, args.beta).lambda_max
        ben = benettin_lle(AttractorSpec.lorenz(args.sigma, args.beta, float(rho)))
        w.writerow([f"{rho:g}", f"{ros:.4f}", f"{ben:.4f}"])
        sys.stdout.flush()


if __name__ == "__main__":
    main()
