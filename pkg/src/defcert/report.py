"""Per-input result rows, their CSV form, and aggregate certified metrics."""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .certify import ABSTAIN, CertifyConfig, certify_parametric, certify_quadrature
from .errors import DataFormatError, ParameterError
from .grid_image import pixels_per_unit

CSV_HEADER = ["index", "true_label", "verdict", "pA_lower", "radius", "norm_kind", "correct", "wall_time_ms"]


@dataclass(frozen=True)
class ResultRow:
    index: int
    true_label: int
    verdict: int
    pA_lower: float
    radius: float
    norm_kind: str
    correct: bool
    wall_time_ms: float

    def __post_init__(self):
        if self.correct and self.verdict != self.true_label:
            raise ParameterError(f"row {self.index}: marked correct but verdict != label")


def certified_accuracy(rows, r: float) -> float:
    """Fraction of rows that are correct and certified to radius at least ``r``."""
    if r < 0:
        raise ParameterError(f"radius threshold must be >= 0, got {r}")
    rows = list(rows)
    if not rows:
        return 0.0
    return sum(1 for row in rows if row.correct and row.radius >= r) / len(rows)


def average_certified_radius(rows) -> float:
    rows = list(rows)
    if not rows:
        raise ParameterError("average certified radius of an empty result set")
    return sum(row.radius if row.correct else 0.0 for row in rows) / len(rows)


def to_pixels(rows, size: int) -> list[ResultRow]:
    """Copy of ``rows`` with radii converted to pixels along an axis of ``size``."""
    scale = pixels_per_unit(size)
    return [
        ResultRow(r.index, r.true_label, r.verdict, r.pA_lower, r.radius * scale,
                  r.norm_kind, r.correct, r.wall_time_ms)
        for r in rows
    ]


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in rows:
            writer.writerow([r.index, r.true_label, r.verdict, repr(float(r.pA_lower)),
                             repr(float(r.radius)), r.norm_kind, int(r.correct),
                             f"{r.wall_time_ms:.3f}"])


def read_csv(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise DataFormatError(f"{path}: unexpected header {header}")
        rows = []
        for line_no, rec in enumerate(reader, start=2):
            if len(rec) != len(CSV_HEADER):
                raise DataFormatError(f"{path}:{line_no}: expected {len(CSV_HEADER)} fields")
            try:
                rows.append(ResultRow(int(rec[0]), int(rec[1]), int(rec[2]), float(rec[3]),
                                      float(rec[4]), rec[5], bool(int(rec[6])), float(rec[7])))
            except ValueError as exc:
                raise DataFormatError(f"{path}:{line_no}: {exc}") from exc
    return rows


# -- dataset certification ---------------------------------------------------

_WORKER = {}


def _init_worker(model, cfg, quadrature):
    _WORKER.update(model=model, cfg=cfg, quadrature=quadrature)


def _certify_one(job):
    from .grid_image import Image

    index, pixels, label = job
    model, cfg, quad = _WORKER["model"], _WORKER["cfg"], _WORKER["quadrature"]
    start = time.perf_counter()
    image = Image(pixels)
    if quad:
        res = certify_quadrature(model, image, cfg.family, cfg.dist, nodes=quad)
    else:
        # per-input seeds keep results independent of scheduling
        res = certify_parametric(model, image, CertifyConfig(
            cfg.dist, cfg.family, cfg.n0, cfg.n, cfg.alpha, cfg.seed + index,
            cfg.batch_size, cfg.pb_mode))
    elapsed = 1000.0 * (time.perf_counter() - start)
    return ResultRow(index, int(label), res.verdict, res.pA_lower, res.radius, res.norm_kind,
                     res.verdict != ABSTAIN and res.verdict == int(label), elapsed)


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("DRS_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def certify_dataset(model, dataset, cfg: CertifyConfig, workers: int | None = None,
                    quadrature: int | None = None) -> list[ResultRow]:
    """Certify every image of ``dataset``; rows come back in input order.

    ``quadrature`` switches one-parameter families to the quadrature oracle
    with that many nodes. Input ``i`` uses seed ``cfg.seed + i``.
    """
    jobs = [(i, dataset.images[i], dataset.labels[i]) for i in range(len(dataset))]
    workers = worker_count(workers)
    if workers == 1:
        _init_worker(model, cfg, quadrature)
        return [_certify_one(job) for job in jobs]
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(model, cfg, quadrature)) as pool:
        return list(pool.map(_certify_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def summary_lines(rows, radii) -> list[str]:
    lines = ["radius,certified_accuracy"]
    lines += [f"{r:g},{certified_accuracy(rows, r):.4f}" for r in radii]
    lines.append(f"ACR,{average_certified_radius(rows):.6f}")
    return lines


def radius_grid(rows, points: int = 50) -> np.ndarray:
    top = max([r.radius for r in rows] + [0.0])
    return np.linspace(0.0, top * 1.05 + 1e-12, points)


def load_rows(path) -> list[ResultRow]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    return read_csv(path)
