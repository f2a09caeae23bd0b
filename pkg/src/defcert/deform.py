"""Vector fields generated by parametric deformation families.

All closed forms are evaluated at normalized, centred pixel coordinates
``(n, m)`` in [-1, 1]^2, so rotation and scaling act about the image centre.
``u`` is the horizontal (column) displacement and ``v`` the vertical one.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DataFormatError, ParameterError, ShapeError
from .grid_image import CoordinateField, normalized_grid

FIELD_MAGIC = b"DRSVF1"


@dataclass(frozen=True, eq=False)
class VectorField:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=np.float64)
        v = np.array(self.v, dtype=np.float64)
        if u.ndim != 2 or u.shape != v.shape:
            raise ShapeError(f"u {u.shape} and v {v.shape} must be equal 2-D arrays")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ParameterError("vector field entries must be finite")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, width: int, height: int) -> "VectorField":
        return cls(np.zeros((height, width)), np.zeros((height, width)))

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def height(self) -> int:
        return self.u.shape[0]

    def flat(self) -> np.ndarray:
        """Parameter-vector view: u-plane then v-plane, row-major."""
        return np.concatenate([self.u.ravel(), self.v.ravel()])

    def norm(self, ord=2) -> float:
        return float(np.linalg.norm(self.flat(), ord=ord))

    def allclose(self, other: "VectorField", atol=1e-12) -> bool:
        return (
            self.u.shape == other.u.shape
            and np.allclose(self.u, other.u, rtol=0, atol=atol)
            and np.allclose(self.v, other.v, rtol=0, atol=atol)
        )

    def to_bytes(self) -> bytes:
        header = FIELD_MAGIC + struct.pack("<II", self.width, self.height)
        return header + self.u.astype("<f8").tobytes() + self.v.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "VectorField":
        if data[:6] != FIELD_MAGIC:
            raise DataFormatError(f"bad vector-field magic {data[:6]!r}")
        if len(data) < 14:
            raise DataFormatError("truncated vector-field header")
        width, height = struct.unpack("<II", data[6:14])
        plane = width * height * 8
        if len(data) != 14 + 2 * plane:
            raise DataFormatError(
                f"vector-field payload is {len(data) - 14} bytes, expected {2 * plane}"
            )
        u = np.frombuffer(data, dtype="<f8", count=width * height, offset=14)
        v = np.frombuffer(data, dtype="<f8", count=width * height, offset=14 + plane)
        return cls(u.reshape(height, width), v.reshape(height, width))

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "VectorField":
        return cls.from_bytes(Path(path).read_bytes())


# -- deformation specs -------------------------------------------------------


@dataclass(frozen=True)
class Translation:
    t_u: float
    t_v: float


@dataclass(frozen=True)
class Rotation:
    theta: float


@dataclass(frozen=True)
class Scaling:
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ParameterError(f"scaling factor must be positive, got {self.alpha}")


@dataclass(frozen=True)
class Affine:
    a: float
    b: float
    c: float
    d: float
    e: float
    f: float

    def params(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d, self.e, self.f])

    def norm(self) -> float:
        return float(np.linalg.norm(self.params()))


@dataclass(frozen=True)
class ShearRotation:
    s: float
    theta: float


@dataclass(frozen=True)
class RotScaleTrans:
    theta: float
    alpha: float
    t_u: float
    t_v: float


@dataclass(frozen=True)
class DCT:
    k: int
    coeffs: tuple = field(default=())

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        if len(coeffs) != 2 * self.k * self.k:
            raise ShapeError(f"DCT window {self.k} needs {2 * self.k ** 2} coefficients, got {len(coeffs)}")
        object.__setattr__(self, "coeffs", coeffs)


@dataclass(frozen=True)
class RawField:
    field: VectorField


DeformSpec = Union[Translation, Rotation, Scaling, Affine, ShearRotation, RotScaleTrans, DCT, RawField]


def _check_finite(*values):
    for val in values:
        if not math.isfinite(val):
            raise ParameterError(f"non-finite deformation parameter {val!r}")


# -- single-field generators -------------------------------------------------


def field_translation(t_u: float, t_v: float, grid: CoordinateField) -> VectorField:
    _check_finite(t_u, t_v)
    return VectorField(np.full_like(grid.x, t_u), np.full_like(grid.x, t_v))


def field_rotation(theta: float, grid: CoordinateField) -> VectorField:
    _check_finite(theta)
    n, m = grid.x, grid.y
    cos_1 = math.cos(theta) - 1.0
    sin = math.sin(theta)
    return VectorField(n * cos_1 - m * sin, n * sin + m * cos_1)


def field_scaling(alpha: float, grid: CoordinateField) -> VectorField:
    _check_finite(alpha)
    if alpha <= 0:
        raise ParameterError(f"scaling factor must be positive, got {alpha}")
    return VectorField((alpha - 1.0) * grid.x, (alpha - 1.0) * grid.y)


def field_affine(a, b, c, d, e, f, grid: CoordinateField) -> VectorField:
    _check_finite(a, b, c, d, e, f)
    n, m = grid.x, grid.y
    return VectorField(a * n + b * m + e, c * n + d * m + f)


# -- DCT ---------------------------------------------------------------------


@lru_cache(maxsize=32)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix, ``C[k, j] = a_k cos(pi k (j + 1/2) / n)``."""
    k = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    mat = np.cos(np.pi * k * (j + 0.5) / n)
    scale = np.full((n, 1), math.sqrt(2.0 / n))
    scale[0] = math.sqrt(1.0 / n)
    mat = scale * mat
    mat.setflags(write=False)
    return mat


def dct2(plane: np.ndarray) -> np.ndarray:
    """Forward orthonormal 2-D DCT-II of an (H, W) plane."""
    h, w = plane.shape
    return dct_matrix(h) @ plane @ dct_matrix(w).T


def idct2(coeffs: np.ndarray) -> np.ndarray:
    """Inverse (DCT-III) of :func:`dct2`."""
    h, w = coeffs.shape
    return dct_matrix(h).T @ coeffs @ dct_matrix(w)


@dataclass(frozen=True)
class DctBasis:
    """Sampled low-frequency cosine products for a k x k window.

    ``functions[i * k + j]`` is the (H, W) image of vertical frequency ``i``
    and horizontal frequency ``j``.
    """

    k: int
    width: int
    height: int
    functions: np.ndarray

    @property
    def dc_scale(self) -> float:
        return 1.0 / math.sqrt(self.width * self.height)


@lru_cache(maxsize=32)
def dct_basis(k: int, width: int, height: int) -> DctBasis:
    if k < 1 or k > min(width, height):
        raise ShapeError(f"DCT window {k} must be in [1, min({width}, {height})]")
    rows = dct_matrix(height)[:k]  # (k, H)
    cols = dct_matrix(width)[:k]   # (k, W)
    funcs = np.einsum("ir,jc->ijrc", rows, cols).reshape(k * k, height, width)
    funcs.setflags(write=False)
    return DctBasis(k, width, height, funcs)


def field_dct(coeffs, k: int, grid: CoordinateField) -> VectorField:
    coeffs = np.asarray(coeffs, dtype=np.float64).ravel()
    if coeffs.size != 2 * k * k:
        raise ShapeError(f"DCT window {k} needs {2 * k * k} coefficients, got {coeffs.size}")
    _check_finite(*coeffs)
    basis = dct_basis(k, grid.width, grid.height)
    kk = k * k
    u = np.tensordot(coeffs[:kk], basis.functions, axes=1)
    v = np.tensordot(coeffs[kk:], basis.functions, axes=1)
    return VectorField(u, v)


# -- composites --------------------------------------------------------------


def compose_shear_rotation(s: float, theta: float) -> Affine:
    """Shear by ``s`` followed by rotation by ``theta``, as affine parameters."""
    _check_finite(s, theta)
    cos, sin = math.cos(theta), math.sin(theta)
    return Affine(cos - 1.0, s * cos - sin, sin, s * sin + cos - 1.0, 0.0, 0.0)


def compose_rot_scale_trans(theta: float, alpha: float, t_u: float, t_v: float) -> Affine:
    _check_finite(theta, alpha, t_u, t_v)
    if alpha <= 0:
        raise ParameterError(f"scaling factor must be positive, got {alpha}")
    cos, sin = math.cos(theta), math.sin(theta)
    return Affine(alpha * cos - 1.0, -alpha * sin, alpha * sin, alpha * cos - 1.0, t_u, t_v)


def shear_rotation_norm(s, theta):
    """Closed-form l2 norm of the shear-then-rotate affine parameters."""
    s = np.asarray(s, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    # 4 - 4 cos(theta) written as 8 sin^2(theta / 2) to avoid cancellation
    sq = s * s - 2.0 * s * np.sin(theta) + 8.0 * np.sin(0.5 * theta) ** 2
    return np.sqrt(np.maximum(sq, 0.0))


def rot_scale_trans_norm(theta, alpha, t_sq):
    """Closed-form l2 norm of rotate-scale-translate parameters; ``t_sq = t_u^2 + t_v^2``."""
    theta = np.asarray(theta, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    # 2 + 2 alpha^2 - 4 alpha cos(theta), rearranged to avoid cancellation near the identity
    sq = 2.0 * (alpha - 1.0) ** 2 + 8.0 * alpha * np.sin(0.5 * theta) ** 2 + np.asarray(t_sq)
    return np.sqrt(np.maximum(sq, 0.0))


# -- dispatch ----------------------------------------------------------------


def field_from_spec(spec: DeformSpec, grid: CoordinateField) -> VectorField:
    if isinstance(spec, Translation):
        return field_translation(spec.t_u, spec.t_v, grid)
    if isinstance(spec, Rotation):
        return field_rotation(spec.theta, grid)
    if isinstance(spec, Scaling):
        return field_scaling(spec.alpha, grid)
    if isinstance(spec, Affine):
        return field_affine(*spec.params(), grid)
    if isinstance(spec, ShearRotation):
        return field_affine(*compose_shear_rotation(spec.s, spec.theta).params(), grid)
    if isinstance(spec, RotScaleTrans):
        aff = compose_rot_scale_trans(spec.theta, spec.alpha, spec.t_u, spec.t_v)
        return field_affine(*aff.params(), grid)
    if isinstance(spec, DCT):
        return field_dct(spec.coeffs, spec.k, grid)
    if isinstance(spec, RawField):
        if (spec.field.width, spec.field.height) != (grid.width, grid.height):
            raise ShapeError(
                f"raw field is {spec.field.width}x{spec.field.height}, "
                f"grid is {grid.width}x{grid.height}"
            )
        return spec.field
    raise TypeError(f"unknown deformation spec {spec!r}")


# -- batched families used by smoothing and certification --------------------

FAMILIES = ("translation", "rotation", "scaling", "affine", "dct", "vectorfield")


@dataclass(frozen=True)
class Family:
    """A deformation family viewed as a map from parameter vectors to fields.

    Scaling is parameterized by ``alpha - 1`` so that the identity sits at the
    origin, like every other family.
    """

    name: str
    k: int = 2

    def __post_init__(self):
        if self.name not in FAMILIES:
            raise ParameterError(f"unknown family {self.name!r}; expected one of {FAMILIES}")

    def param_dim(self, width: int, height: int) -> int:
        return {
            "translation": 2,
            "rotation": 1,
            "scaling": 1,
            "affine": 6,
            "dct": 2 * self.k * self.k,
            "vectorfield": 2 * width * height,
        }[self.name]

    def fields(self, params: np.ndarray, width: int, height: int):
        """Displacements ``(u, v)``, each (B, H, W), for a (B, d) parameter batch."""
        params = np.atleast_2d(np.asarray(params, dtype=np.float64))
        dim = self.param_dim(width, height)
        if params.shape[1] != dim:
            raise ShapeError(f"{self.name} expects {dim} parameters, got {params.shape[1]}")
        grid = normalized_grid(width, height)
        n, m = grid.x[None], grid.y[None]
        col = lambda i: params[:, i, None, None]  # noqa: E731

        if self.name == "translation":
            shape = (params.shape[0], height, width)
            return np.broadcast_to(col(0), shape).copy(), np.broadcast_to(col(1), shape).copy()
        if self.name == "rotation":
            cos_1 = np.cos(col(0)) - 1.0
            sin = np.sin(col(0))
            return n * cos_1 - m * sin, n * sin + m * cos_1
        if self.name == "scaling":
            return col(0) * n, col(0) * m
        if self.name == "affine":
            return col(0) * n + col(1) * m + col(4), col(2) * n + col(3) * m + col(5)
        if self.name == "dct":
            funcs = dct_basis(self.k, width, height).functions
            kk = self.k * self.k
            u = np.tensordot(params[:, :kk], funcs, axes=1)
            v = np.tensordot(params[:, kk:], funcs, axes=1)
            return u, v
        plane = width * height
        return (
            params[:, :plane].reshape(-1, height, width),
            params[:, plane:].reshape(-1, height, width),
        )

    def spec(self, params, width: int | None = None, height: int | None = None) -> DeformSpec:
        p = np.asarray(params, dtype=np.float64).ravel()
        if self.name == "translation":
            return Translation(p[0], p[1])
        if self.name == "rotation":
            return Rotation(p[0])
        if self.name == "scaling":
            return Scaling(1.0 + p[0])
        if self.name == "affine":
            return Affine(*p)
        if self.name == "dct":
            return DCT(self.k, tuple(p))
        if width is None or height is None:
            raise ShapeError("vectorfield parameters need explicit grid dimensions")
        return RawField(self.field(p, width, height))

    def field(self, params, width: int, height: int) -> VectorField:
        u, v = self.fields(np.asarray(params, dtype=np.float64)[None], width, height)
        return VectorField(u[0], v[0])

