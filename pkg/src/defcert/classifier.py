"""Desk-scale base classifiers and deformation-augmented training.

Both models expose ``predict_proba(batch)`` on arrays of shape (B, C, H, W)
and return rows on the probability simplex; the certifier relies on nothing
else.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .deform import Family
from .errors import DataFormatError, DivergenceError, ParameterError, ShapeError
from .grid_image import Image, warp_pixels
from .smoothing import Gaussian, SmoothingDist, Uniform

log = logging.getLogger(__name__)

MODEL_MAGIC = b"DRSM1"
_KIND_LINEAR = 0
_KIND_CENTROID = 1

# largest rate for which the fixed-seed loss curves on the shapes task stay monotone
DEFAULT_LR = 0.02


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _flatten(batch, input_shape) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.shape[1:] != tuple(input_shape):
        raise ShapeError(f"model expects inputs {tuple(input_shape)}, got {batch.shape[1:]}")
    return batch.reshape(batch.shape[0], -1)


@dataclass(frozen=True, eq=False)
class LinearSoftmaxModel:
    """Multinomial logistic regression on raw pixels."""

    weights: np.ndarray           # (K, n)
    bias: np.ndarray              # (K,)
    input_shape: tuple            # (C, H, W)
    loss_history: tuple = field(default=())
    train_accuracy: float | None = None

    @classmethod
    def zeros(cls, num_classes: int, input_shape) -> "LinearSoftmaxModel":
        n = int(np.prod(input_shape))
        return cls(np.zeros((num_classes, n)), np.zeros(num_classes), tuple(input_shape))

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    def logits(self, batch) -> np.ndarray:
        return _flatten(batch, self.input_shape) @ self.weights.T + self.bias

    def predict_proba(self, batch) -> np.ndarray:
        return softmax(self.logits(batch))


@dataclass(frozen=True, eq=False)
class CentroidModel:
    """Nearest class-mean classifier with one-hot outputs (lowest index wins ties)."""

    centroids: np.ndarray         # (K, C, H, W)

    @classmethod
    def fit(cls, images: np.ndarray, labels: np.ndarray, num_classes: int) -> "CentroidModel":
        cents = np.stack([images[labels == k].mean(axis=0) for k in range(num_classes)])
        return cls(cents)

    @property
    def input_shape(self) -> tuple:
        return self.centroids.shape[1:]

    @property
    def num_classes(self) -> int:
        return self.centroids.shape[0]

    def predict_proba(self, batch) -> np.ndarray:
        x = _flatten(batch, self.input_shape)
        c = self.centroids.reshape(self.num_classes, -1)
        dist = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
        out = np.zeros((x.shape[0], self.num_classes))
        out[np.arange(x.shape[0]), np.argmin(dist, axis=1)] = 1.0
        return out


def predict(model, image: Image) -> np.ndarray:
    """Label distribution of ``model`` for a single image."""
    return model.predict_proba(image.pixels[None])[0]


def hard_label(dist) -> int:
    """Index of the largest score; the smallest index wins ties."""
    return int(np.argmax(np.asarray(dist)))


def hard_labels(probs: np.ndarray) -> np.ndarray:
    return np.argmax(probs, axis=1)


# -- training ----------------------------------------------------------------


def _augment(images, family: Family, dist: SmoothingDist, rng: np.random.Generator):
    _, _, H, W = images.shape
    d = family.param_dim(W, H)
    if isinstance(dist, Uniform):
        params = rng.uniform(-dist.lam, dist.lam, size=(len(images), d))
    elif isinstance(dist, Gaussian):
        params = rng.normal(0.0, dist.sigma, size=(len(images), d))
    else:
        raise TypeError(f"unknown smoothing distribution {dist!r}")
    u, v = family.fields(params, W, H)
    return np.stack([warp_pixels(img, u[i], v[i]) for i, img in enumerate(images)])


def train(
    dataset,
    family: Family | None,
    dist: SmoothingDist | None,
    epochs: int = 20,
    lr: float = DEFAULT_LR,
    seed: int = 0,
    batch_size: int = 32,
) -> LinearSoftmaxModel:
    """Minibatch SGD on cross-entropy with per-image deformation augmentation.

    Each minibatch image is warped by a family member whose parameters are
    drawn from ``dist``. Passing ``family=None`` trains on clean images.
    Weights start at zero, so ``epochs=0`` gives uniform predictions.
    """
    images, labels = dataset.images, dataset.labels
    if len(images) == 0:
        raise ParameterError("cannot train on an empty dataset")
    K = dataset.class_count
    if labels.min() < 0 or labels.max() >= K:
        raise ParameterError(f"labels must lie in [0, {K})")
    rng = np.random.default_rng(seed)
    shape = images.shape[1:]
    W = np.zeros((K, int(np.prod(shape))))
    b = np.zeros(K)
    onehot = np.eye(K)[labels]
    history = []

    # overflow surfaces as DivergenceError below rather than as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(epochs):
            order = rng.permutation(len(images))
            total = 0.0
            for start in range(0, len(order), batch_size):
                idx = order[start:start + batch_size]
                batch = images[idx]
                if family is not None and dist is not None:
                    batch = _augment(batch, family, dist, rng)
                x = batch.reshape(len(idx), -1)
                logits = x @ W.T + b
                p = softmax(logits)
                shifted = logits - logits.max(axis=1, keepdims=True)
                logz = np.log(np.exp(shifted).sum(axis=1))
                loss = float(np.sum(logz - shifted[np.arange(len(idx)), labels[idx]]))
                if not np.isfinite(loss):
                    raise DivergenceError(f"non-finite loss at epoch {epoch}; lower the learning rate")
                total += loss
                grad = (p - onehot[idx]) / len(idx)
                W -= lr * grad.T @ x
                b -= lr * grad.sum(axis=0)
                if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                    raise DivergenceError(f"parameters overflowed at epoch {epoch}; lower the learning rate")
            history.append(total / len(images))
            log.info("epoch %d loss %.4f", epoch, history[-1])

    logits = images.reshape(len(images), -1) @ W.T + b
    acc = float(np.mean(np.argmax(logits, axis=1) == labels))
    return LinearSoftmaxModel(W, b, tuple(shape), tuple(history), acc)


def accuracy(model, images: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(hard_labels(model.predict_proba(images)) == labels))


# -- persistence -------------------------------------------------------------


def save_model(model, path) -> None:
    if isinstance(model, LinearSoftmaxModel):
        kind, K, shape = _KIND_LINEAR, model.num_classes, model.input_shape
        payload = np.concatenate([model.weights.ravel(), model.bias])
    elif isinstance(model, CentroidModel):
        kind, K, shape = _KIND_CENTROID, model.num_classes, model.input_shape
        payload = model.centroids.ravel()
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    header = MODEL_MAGIC + struct.pack("<BIIII", kind, K, *shape)
    Path(path).write_bytes(header + payload.astype("<f8").tobytes())


def load_model(path):
    data = Path(path).read_bytes()
    if data[:5] != MODEL_MAGIC:
        raise DataFormatError(f"{path}: bad model magic {data[:5]!r}")
    if len(data) < 22:
        raise DataFormatError(f"{path}: truncated model header")
    kind, K, C, H, W = struct.unpack("<BIIII", data[5:22])
    n = C * H * W
    if (len(data) - 22) % 8:
        raise DataFormatError(f"{path}: payload is not a whole number of f64 values")
    values = np.frombuffer(data, dtype="<f8", offset=22).astype(np.float64)
    if kind == _KIND_LINEAR:
        if values.size != K * n + K:
            raise DataFormatError(f"{path}: expected {K * n + K} weights, found {values.size}")
        return LinearSoftmaxModel(values[:K * n].reshape(K, n), values[K * n:], (C, H, W))
    if kind == _KIND_CENTROID:
        if values.size != K * n:
            raise DataFormatError(f"{path}: expected {K * n} centroid values, found {values.size}")
        return CentroidModel(values.reshape(K, C, H, W))
    raise DataFormatError(f"{path}: unknown model kind {kind}")
