"""Largest affine-parameter norm of the two composite deformations over their boxes."""

import argparse
import math

from defcert.certify import max_composite_lhs
from defcert.deform import RotScaleTrans, ShearRotation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--resolution", type=int, default=101)
    ap.add_argument("--theta-sr", type=float, default=2.0, help="|theta| bound in degrees, shear-rotation")
    ap.add_argument("--s-max", type=float, default=0.02)
    ap.add_argument("--theta-rst", type=float, default=10.0, help="|theta| bound in degrees, rot-scale-trans")
    ap.add_argument("--alpha", type=float, nargs=2, default=(0.8, 1.2))
    ap.add_argument("--t-sq", type=float, default=0.1)
    args = ap.parse_args()

    t1, t2 = math.radians(args.theta_sr), math.radians(args.theta_rst)
    sr = max_composite_lhs(ShearRotation, {"s": (0.0, args.s_max), "theta": (-t1, t1)}, args.resolution)
    rst = max_composite_lhs(RotScaleTrans, {"theta": (-t2, t2), "alpha": tuple(args.alpha),
                                            "t_sq": (0.0, args.t_sq)}, args.resolution)
    print(f"shear_rotation   max norm {sr:.6f}")
    print(f"rot_scale_trans  max norm {rst:.6f}")


if __name__ == "__main__":
    main()
