"""Smoothing laws, reproducible perturbation draws, and normal quantiles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ParameterError

L1 = "l1"
L2 = "l2"


@dataclass(frozen=True)
class Uniform:
    """Independent U[-lam, lam] noise on every coordinate; certifies in l1."""

    lam: float

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ParameterError(f"uniform half-width must be > 0, got {self.lam}")

    norm_kind = L1


@dataclass(frozen=True)
class Gaussian:
    """Isotropic N(0, sigma^2) noise; certifies in l2."""

    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ParameterError(f"gaussian sigma must be > 0, got {self.sigma}")

    norm_kind = L2


SmoothingDist = Union[Uniform, Gaussian]


def lipschitz_norm(dist: SmoothingDist) -> tuple[str, float]:
    """Certificate norm and Lipschitz constant of the smoothed score.

    For uniform smoothing the constant applies to the raw score (w.r.t. the
    l-infinity norm, hence an l1 certificate); for Gaussian smoothing it applies
    to the score composed with the normal quantile.
    """
    if isinstance(dist, Uniform):
        return L1, 1.0 / (2.0 * dist.lam)
    if isinstance(dist, Gaussian):
        return L2, 1.0 / dist.sigma
    raise TypeError(f"unknown smoothing distribution {dist!r}")


# -- counter-based stream ----------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_LANE = np.uint64(0xD1B54A32D192ED03)


def _mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, applied elementwise to uint64 arrays."""
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(0xBF58476D1CE4E5B9)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class CounterStream:
    """Random numbers addressed by (seed, block, sample index, lane).

    Every draw is a pure hash of its address, so any subset of samples can be
    generated in any order, or in parallel, with identical results.
    """

    seed: int
    block: int = 0

    def child(self, block: int) -> "CounterStream":
        return CounterStream(self.seed, block)

    def _key(self) -> np.uint64:
        with np.errstate(over="ignore"):
            s = np.array([self.seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
            b = np.array([self.block & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
            return _mix64(_mix64(s * _GOLDEN + np.uint64(1)) ^ (b * _LANE))[0]

    def raw(self, indices, lanes: int) -> np.ndarray:
        """uint64 array of shape (len(indices), lanes)."""
        idx = np.asarray(indices, dtype=np.uint64).reshape(-1, 1)
        lane = np.arange(lanes, dtype=np.uint64)[None, :]
        with np.errstate(over="ignore"):
            row = _mix64(self._key() ^ (idx * _GOLDEN))
            return _mix64(row + lane * _LANE)

    def uniform(self, indices, lanes: int) -> np.ndarray:
        """Floats in the open interval (0, 1)."""
        bits = self.raw(indices, lanes) >> np.uint64(11)
        return (bits.astype(np.float64) + 0.5) * (2.0 ** -53)

    def normal(self, indices, lanes: int) -> np.ndarray:
        """Standard normals by Box-Muller on paired lanes."""
        u = self.uniform(indices, 2 * lanes)
        radius = np.sqrt(-2.0 * np.log(u[:, 0::2]))
        return radius * np.cos(2.0 * np.pi * u[:, 1::2])


def sample_batch(dist: SmoothingDist, dim: int, stream: CounterStream, indices) -> np.ndarray:
    """Perturbations for several sample indices, shape (len(indices), dim)."""
    if dim < 1:
        raise ParameterError(f"perturbation dimension must be >= 1, got {dim}")
    if isinstance(dist, Uniform):
        return dist.lam * (2.0 * stream.uniform(indices, dim) - 1.0)
    if isinstance(dist, Gaussian):
        return dist.sigma * stream.normal(indices, dim)
    raise TypeError(f"unknown smoothing distribution {dist!r}")


def sample_perturbation(dist: SmoothingDist, dim: int, stream: CounterStream, index: int = 0) -> np.ndarray:
    return sample_batch(dist, dim, stream, [index])[0]


# -- standard normal ---------------------------------------------------------


def std_normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def std_normal_quantile(p: float) -> float:
    """Inverse standard normal CDF by bisection on the erfc-based CDF.

    The bracket is bisected down to a width of 1e-13.
    """
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ParameterError(f"quantile requires 0 < p < 1, got {p}")
    if p > 0.5:
        # 1 - p is exact for p in [0.5, 1]
        return -std_normal_quantile(1.0 - p)
    if p == 0.5:
        return 0.0
    lo, hi = -40.0, 0.0
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        if std_normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
