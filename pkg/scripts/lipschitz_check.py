"""Finite-difference slopes of the smoothed score against their theoretical bounds.

A trained logistic model on synthetic shapes is smoothed over rotations. The
printed ratios are max slope / bound and must stay at or below 1.
"""

import argparse
import math

import numpy as np

from defcert.certify import smoothed_score_quadrature
from defcert.classifier import train
from defcert.data_io import synth_shapes
from defcert.deform import Family
from defcert.smoothing import Gaussian, Uniform, std_normal_quantile


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--images", type=int, default=4)
    ap.add_argument("--step", type=float, default=5e-3)
    ap.add_argument("--nodes", type=int, default=2001)
    args = ap.parse_args()

    family = Family("rotation")
    model = train(synth_shapes(500, 16, seed=0), family, Uniform(math.pi / 4), epochs=20, seed=0)
    test = synth_shapes(100, 16, seed=1)
    pick = np.linspace(0, len(test) - 1, args.images).astype(int)
    grid = np.arange(-1.5, 1.5 + args.step / 2, args.step)
    for dist in (Uniform(0.5), Uniform(math.pi / 4), Gaussian(0.1), Gaussian(0.25)):
        worst = 0.0
        for i in pick:
            g = np.array([smoothed_score_quadrature(model, test.image(i), family, dist, args.nodes, p, "soft")[0]
                          for p in grid])
            if isinstance(dist, Uniform):
                worst = max(worst, np.abs(np.diff(g)).max() / args.step * 2 * dist.lam)
                continue
            q = np.array([std_normal_quantile(v) if 0.01 <= v <= 0.99 else np.nan for v in g])
            slopes = np.abs(np.diff(q)) / args.step * dist.sigma
            if np.isfinite(slopes).any():
                worst = max(worst, np.nanmax(slopes))
        print(f"{dist}: max slope / bound = {worst:.5f}")


if __name__ == "__main__":
    main()
