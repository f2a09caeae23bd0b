"""Command-line entry point: ``defcert {synth,train,certify,attack,warp,report}``.

Exit status is 0 on success, 1 on usage errors and 2 on data errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys

import numpy as np

from .certify import CertifyConfig, empirical_attack
from .classifier import DEFAULT_LR, load_model, save_model, train
from .data_io import load_idx, synth_shapes, write_idx
from .deform import FAMILIES, Family
from .errors import DataFormatError, ParameterError, ShapeError
from .grid_image import warp, write_pgm
from .report import (
    certify_dataset,
    load_rows,
    summary_lines,
    to_pixels,
    write_csv,
)
from .smoothing import Gaussian, Uniform

log = logging.getLogger("defcert")

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _add_data(p):
    p.add_argument("--images", help="IDX image file (default: synthetic shapes)")
    p.add_argument("--labels", help="IDX label file")
    p.add_argument("--limit", type=int, help="use only the first N images")


def _add_smoothing(p):
    p.add_argument("--family", choices=FAMILIES, default="rotation")
    p.add_argument("--k", type=int, default=2, help="DCT window size")
    p.add_argument("--dist", choices=("uniform", "gaussian"), default="uniform")
    p.add_argument("--lambda", dest="lam", type=float, default=math.pi / 4)
    p.add_argument("--sigma", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="defcert", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="write the synthetic shapes dataset as IDX files")
    p.add_argument("--count-per-class", type=int, default=500)
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-images", required=True)
    p.add_argument("--out-labels", required=True)

    p = sub.add_parser("train", help="train a logistic model with deformation augmentation")
    _add_data(p)
    _add_smoothing(p)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=DEFAULT_LR)
    p.add_argument("--out", required=True)

    p = sub.add_parser("certify", help="certify every test image, write a result CSV")
    _add_data(p)
    _add_smoothing(p)
    p.add_argument("--model", help="model file (default: train one on synthetic shapes)")
    p.add_argument("--n0", type=int, default=100)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--alpha", type=float, default=0.001)
    p.add_argument("--pb-mode", choices=("one_sided", "two_sided"), default="one_sided")
    p.add_argument("--quadrature", type=int, metavar="NODES",
                   help="use the quadrature oracle (one-parameter families)")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", default="results.csv")

    p = sub.add_parser("attack", help="search certified balls for smoothed-verdict changes")
    _add_data(p)
    _add_smoothing(p)
    p.add_argument("--model", help="model file (default: train one on synthetic shapes)")
    p.add_argument("--results", required=True, help="CSV written by certify")
    p.add_argument("--inflate", type=float, default=1.0, help="multiply certified radii")
    p.add_argument("--budget", type=int, default=2001)
    p.add_argument("--nodes", type=int, default=2001)
    p.add_argument("--out", help="CSV of counterexamples")

    p = sub.add_parser("warp", help="deform one image and write it as PGM")
    _add_data(p)
    _add_smoothing(p)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--params", required=True, help="comma-separated family parameters")
    p.add_argument("--out", required=True)
    p.add_argument("--field-out", help="also write the vector field (DRSVF1 binary)")

    p = sub.add_parser("report", help="certified accuracy table and ACR from a result CSV")
    p.add_argument("--results", default="results.csv")
    p.add_argument("--at", default="0,0.1,0.2,0.3,0.4,0.5")
    p.add_argument("--pixels", action="store_true", help="convert radii to pixels")
    p.add_argument("--size", type=int, default=28, help="image side for --pixels")
    return parser


def _dist(args):
    return Uniform(args.lam) if args.dist == "uniform" else Gaussian(args.sigma)


def _datasets(args):
    """(train, test) datasets; synthetic shapes unless IDX files are given."""
    if args.images:
        if not args.labels:
            raise UsageError("--images requires --labels")
        ds = load_idx(args.images, args.labels)
        ds = ds.subset(np.arange(min(len(ds), args.limit))) if args.limit else ds
        return ds, ds
    train_set = synth_shapes(500, 16, seed=0)
    test_set = synth_shapes(100, 16, seed=1)
    if args.limit:
        test_set = test_set.subset(np.arange(min(len(test_set), args.limit)))
    return train_set, test_set


def _model(args, train_set, family, dist):
    if getattr(args, "model", None):
        return load_model(args.model)
    log.info("no --model given; training on %d images", len(train_set))
    return train(train_set, family, dist, epochs=20, seed=args.seed)


def cmd_synth(args):
    ds = synth_shapes(args.count_per_class, args.size, args.seed)
    write_idx(ds, args.out_images, args.out_labels)
    print(f"wrote {len(ds)} images to {args.out_images}")


def cmd_train(args):
    train_set, _ = _datasets(args)
    model = train(train_set, Family(args.family, args.k), _dist(args), args.epochs, args.lr, args.seed)
    save_model(model, args.out)
    print(f"training accuracy {model.train_accuracy:.4f}; model written to {args.out}")


def cmd_certify(args):
    train_set, test_set = _datasets(args)
    family, dist = Family(args.family, args.k), _dist(args)
    model = _model(args, train_set, family, dist)
    cfg = CertifyConfig(dist, family, args.n0, args.n, args.alpha, args.seed, pb_mode=args.pb_mode)
    rows = certify_dataset(model, test_set, cfg, args.workers, args.quadrature)
    write_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")


def cmd_attack(args):
    train_set, test_set = _datasets(args)
    family, dist = Family(args.family, args.k), _dist(args)
    model = _model(args, train_set, family, dist)
    rows = load_rows(args.results)
    found = []
    for row in rows:
        if row.verdict < 0 or row.radius <= 0:
            continue
        if row.index >= len(test_set):
            raise DataFormatError(f"result row {row.index} has no matching test image")
        hit = empirical_attack(model, test_set.image(row.index), family, dist,
                               row.radius * args.inflate, args.budget, args.seed + row.index,
                               certified_class=row.verdict, nodes=args.nodes)
        if hit is not None:
            found.append((row.index, row.radius * args.inflate, hit))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "radius", "counterexample"])
            for index, radius, hit in found:
                writer.writerow([index, repr(radius), " ".join(repr(float(h)) for h in hit)])
    print(f"{len(found)} counterexamples over {sum(r.verdict >= 0 and r.radius > 0 for r in rows)} certified inputs")


def cmd_warp(args):
    _, test_set = _datasets(args)
    if not 0 <= args.index < len(test_set):
        raise UsageError(f"--index {args.index} out of range")
    image = test_set.image(args.index)
    try:
        params = [float(p) for p in args.params.split(",")]
    except ValueError:
        raise UsageError(f"bad --params {args.params!r}")
    field = Family(args.family, args.k).field(params, image.width, image.height)
    write_pgm(warp(image, field), args.out)
    if args.field_out:
        field.save(args.field_out)
    print(f"wrote {args.out}")


def cmd_report(args):
    try:
        radii = [float(r) for r in args.at.split(",") if r.strip()]
    except ValueError:
        raise UsageError(f"bad --at list {args.at!r}")
    rows = load_rows(args.results)
    if args.pixels:
        rows = to_pixels(rows, args.size)
    if not rows:
        raise DataFormatError(f"{args.results}: no result rows")
    print("\n".join(summary_lines(rows, radii)))


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "certify": cmd_certify,
    "attack": cmd_attack,
    "warp": cmd_warp,
    "report": cmd_report,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().rstrip())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"defcert: invalid parameter: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DataFormatError, ShapeError) as exc:
        print(f"defcert: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
