"""Datasets: IDX (MNIST container) files and a seeded synthetic shapes task."""

from __future__ import annotations

import gzip
import importlib.util
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, ParameterError, ShapeError
from .grid_image import Image, axis_coordinates

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class Dataset:
    images: np.ndarray      # (N, C, H, W) in [0, 1]
    labels: np.ndarray      # (N,) int
    class_count: int

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.ndim == 3:
            images = images[:, None]
        if images.ndim != 4 or len(images) != len(labels):
            raise ShapeError(f"{len(images)} images vs {len(labels)} labels")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ParameterError(f"labels must lie in [0, {self.class_count})")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    def image(self, i: int) -> Image:
        return Image(self.images[i])

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(self.images[indices], self.labels[indices], self.class_count)

    def split(self, n_test: int, seed: int = 0) -> tuple["Dataset", "Dataset"]:
        """Random (train, test) partition with ``n_test`` held-out images."""
        order = np.random.default_rng(seed).permutation(len(self))
        return self.subset(np.sort(order[n_test:])), self.subset(np.sort(order[:n_test]))


def _read(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    return gzip.decompress(raw) if raw[:2] == b"\x1f\x8b" else raw


def _parse_header(data: bytes, expected: int, name) -> tuple[list[int], int]:
    if len(data) < 4:
        raise DataFormatError(f"{name}: truncated header")
    (magic,) = struct.unpack(">I", data[:4])
    if magic != expected:
        raise DataFormatError(f"{name}: bad IDX magic 0x{magic:08x}, expected 0x{expected:08x}")
    ndim = magic & 0xFF
    end = 4 + 4 * ndim
    if len(data) < end:
        raise DataFormatError(f"{name}: truncated header")
    dims = list(struct.unpack(f">{ndim}I", data[4:end]))
    return dims, end


def load_idx(images_path, labels_path, class_count: int | None = None) -> Dataset:
    """Parse an IDX image/label pair (plain or gzip); intensities are scaled by 1/255."""
    img_bytes = _read(images_path)
    lab_bytes = _read(labels_path)
    (n, rows, cols), off = _parse_header(img_bytes, IMAGE_MAGIC, images_path)
    (n_labels,), loff = _parse_header(lab_bytes, LABEL_MAGIC, labels_path)
    if len(img_bytes) - off != n * rows * cols:
        raise DataFormatError(
            f"{images_path}: expected {n * rows * cols} pixel bytes, found {len(img_bytes) - off}"
        )
    if len(lab_bytes) - loff != n_labels:
        raise DataFormatError(f"{labels_path}: expected {n_labels} labels, found {len(lab_bytes) - loff}")
    if n != n_labels:
        raise DataFormatError(f"image count {n} does not match label count {n_labels}")
    pixels = np.frombuffer(img_bytes, dtype=np.uint8, offset=off).reshape(n, 1, rows, cols)
    labels = np.frombuffer(lab_bytes, dtype=np.uint8, offset=loff).astype(np.int64)
    if class_count is None:
        class_count = int(labels.max()) + 1 if n else 1
    return Dataset(pixels / 255.0, labels, class_count)


def write_idx(dataset: Dataset, images_path, labels_path) -> None:
    if dataset.images.shape[1] != 1:
        raise ShapeError("IDX export supports single-channel images only")
    n, _, rows, cols = dataset.images.shape
    pixels = np.rint(dataset.images * 255.0).astype(np.uint8)
    Path(images_path).write_bytes(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols) + pixels.tobytes())
    Path(labels_path).write_bytes(
        struct.pack(">II", LABEL_MAGIC, n) + dataset.labels.astype(np.uint8).tobytes()
    )


def synth_shapes(count_per_class: int, size: int = 16, seed: int = 0) -> Dataset:
    """Two-class task: filled disks (label 0) and horizontal filled bars (label 1).

    Centres are jittered by up to 1.5 px, disk radii and bar half-lengths/widths
    are jittered too. Pixels are exactly 0 or 1.
    """
    if size < 8:
        raise ParameterError(f"synthetic images need size >= 8, got {size}")
    rng = np.random.default_rng(seed)
    px = axis_coordinates(size) / (2.0 / (size - 1))  # pixel offsets from centre
    x, y = np.meshgrid(px, px)
    scale = size / 16.0
    images = []
    labels = []
    for label in (0, 1):
        for _ in range(count_per_class):
            cx, cy = rng.uniform(-1.5, 1.5, size=2) * scale
            if label == 0:
                r = rng.uniform(2.8, 4.0) * scale
                img = (x - cx) ** 2 + (y - cy) ** 2 <= r * r
            else:
                half_len = rng.uniform(5.0, 6.5) * scale
                half_wid = rng.uniform(0.8, 1.4) * scale
                img = (np.abs(x - cx) <= half_len) & (np.abs(y - cy) <= half_wid)
            images.append(img.astype(np.float64))
            labels.append(label)
    return Dataset(np.stack(images)[:, None], np.array(labels), 2)


def mlxtend_mnist_path() -> Path | None:
    """Location of the 5000-image MNIST sample bundled with mlxtend, if installed."""
    spec = importlib.util.find_spec("mlxtend")
    if spec is None or not spec.submodule_search_locations:
        return None
    path = Path(spec.submodule_search_locations[0]) / "data" / "data" / "mnist_5k.csv.gz"
    return path if path.exists() else None


def mnist_subset(n_train: int, n_test: int, seed: int = 0, source=None) -> tuple[Dataset, Dataset]:
    """Disjoint random train/test subsets of the bundled MNIST sample."""
    source = source or mlxtend_mnist_path()
    if source is None:
        raise FileNotFoundError("no MNIST source found (install mlxtend or pass IDX files)")
    table = np.loadtxt(source, delimiter=",", dtype=np.float64)
    pixels, labels = table[:, :-1], table[:, -1].astype(np.int64)
    if n_train + n_test > len(labels):
        raise ParameterError(f"requested {n_train + n_test} images, source has {len(labels)}")
    order = np.random.default_rng(seed).permutation(len(labels))
    full = Dataset(pixels.reshape(-1, 1, 28, 28) / 255.0, labels, 10)
    return full.subset(order[:n_train]), full.subset(order[n_train:n_train + n_test])
