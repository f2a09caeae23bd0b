"""Certification of deformation-smoothed classifiers.

Two routes compute the smoothed score of a base classifier:

* Monte Carlo with a Clopper-Pearson lower bound (``certify_parametric``,
  ``certify_vectorfield``), usable for any family;
* deterministic quadrature (``smoothed_score_quadrature``,
  ``certify_quadrature``) for one-parameter families, used as an oracle.

Radii are l1 for uniform smoothing and l2 for Gaussian smoothing, measured in
parameter units (field units for raw vector fields).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaincinv

from .classifier import hard_labels
from .deform import (
    Family,
    rot_scale_trans_norm,
    shear_rotation_norm,
)
from .errors import ParameterError, ShapeError
from .grid_image import Image, pixels_per_unit, warp_pixels
from .smoothing import (
    L1,
    CounterStream,
    Gaussian,
    SmoothingDist,
    Uniform,
    sample_batch,
    std_normal_cdf,
    std_normal_quantile,
)

ABSTAIN = -1

# probabilities are kept this far from 0 and 1 before the normal quantile
_CLAMP = 1e-12


@dataclass(frozen=True)
class CertifyConfig:
    dist: SmoothingDist
    family: Family
    n0: int = 100
    n: int = 10_000
    alpha: float = 0.001
    seed: int = 0
    batch_size: int = 1000
    pb_mode: str = "one_sided"

    def __post_init__(self):
        if self.n0 < 1 or self.n < 1:
            raise ParameterError(f"sample counts must be >= 1 (n0={self.n0}, n={self.n})")
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.pb_mode not in ("one_sided", "two_sided"):
            raise ParameterError(f"pb_mode must be 'one_sided' or 'two_sided', got {self.pb_mode!r}")
        if not isinstance(self.dist, (Uniform, Gaussian)):
            raise ParameterError(f"unsupported smoothing distribution {self.dist!r}")


@dataclass(frozen=True)
class CertificationResult:
    verdict: int
    pA_lower: float
    radius: float
    norm_kind: str
    samples_used: int
    pB_upper: float | None = None

    @property
    def abstained(self) -> bool:
        return self.verdict == ABSTAIN

    def radius_pixels(self, size: int) -> float:
        """Radius converted from normalized units to pixels of an axis of ``size``."""
        return self.radius * pixels_per_unit(size)


# -- bounds and radii --------------------------------------------------------


def clopper_pearson_lower(successes, trials, alpha):
    """One-sided exact binomial lower confidence bound at level ``1 - alpha``.

    Solves ``P[Bin(trials, p) >= successes] = alpha`` for p. Accepts scalars or
    arrays of successes.
    """
    k = np.asarray(successes)
    trials = int(trials)
    if trials < 1:
        raise ParameterError(f"trials must be >= 1, got {trials}")
    if np.any(k < 0) or np.any(k > trials):
        raise ParameterError(f"successes must lie in [0, {trials}]")
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    kf = k.astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        inner = betaincinv(np.maximum(kf, 1.0), trials - kf + 1.0, alpha)
    out = np.where(k == 0, 0.0, np.where(k == trials, alpha ** (1.0 / trials), inner))
    return float(out) if out.ndim == 0 else out


def clopper_pearson_upper(successes, trials, alpha):
    return 1.0 - clopper_pearson_lower(trials - np.asarray(successes), trials, alpha)


def radius_uniform(lam: float, pA: float, pB: float) -> float:
    return max(0.0, lam * (pA - pB))


def radius_gaussian(sigma: float, pA: float, pB: float) -> float:
    if pA <= pB:
        return 0.0
    pA = min(max(pA, _CLAMP), 1.0 - _CLAMP)
    pB = min(max(pB, _CLAMP), 1.0 - _CLAMP)
    return max(0.0, 0.5 * sigma * (std_normal_quantile(pA) - std_normal_quantile(pB)))


def radius_for(dist: SmoothingDist, pA: float, pB: float) -> float:
    if isinstance(dist, Uniform):
        return radius_uniform(dist.lam, pA, pB)
    return radius_gaussian(dist.sigma, pA, pB)


# -- Monte Carlo -------------------------------------------------------------


def _check_dims(model, image: Image):
    if tuple(model.input_shape) != image.shape:
        raise ShapeError(f"model expects {tuple(model.input_shape)}, image is {image.shape}")


def _base_params(family: Family, image: Image, base) -> np.ndarray:
    d = family.param_dim(image.width, image.height)
    if base is None:
        return np.zeros(d)
    base = np.asarray(base, dtype=np.float64).ravel()
    if base.size != d:
        raise ShapeError(f"{family.name} base point needs {d} parameters, got {base.size}")
    return base


def _labels_at(model, image: Image, family: Family, params: np.ndarray) -> np.ndarray:
    u, v = family.fields(params, image.width, image.height)
    return hard_labels(model.predict_proba(warp_pixels(image.pixels, u, v)))


def sample_counts(
    model,
    image: Image,
    family: Family,
    dist: SmoothingDist,
    num: int,
    stream: CounterStream,
    base=None,
    batch_size: int = 1000,
) -> np.ndarray:
    """Hard-label counts of f(warp(x, family(base + eps))) over ``num`` draws."""
    base = _base_params(family, image, base)
    counts = np.zeros(model.num_classes, dtype=np.int64)
    for start in range(0, num, batch_size):
        idx = np.arange(start, min(num, start + batch_size))
        eps = sample_batch(dist, base.size, stream, idx)
        labels = _labels_at(model, image, family, base + eps)
        counts += np.bincount(labels, minlength=model.num_classes)
    return counts


def certify_parametric(model, image: Image, cfg: CertifyConfig, base=None) -> CertificationResult:
    """Select-then-estimate certification over the family's parameters.

    ``n0`` draws pick the majority class; ``n`` fresh draws bound its
    probability from below. Abstains when that bound does not exceed 1/2
    (or the runner-up's upper bound, in two-sided mode).
    """
    _check_dims(model, image)
    stream = CounterStream(cfg.seed)
    select = sample_counts(model, image, cfg.family, cfg.dist, cfg.n0, stream.child(0), base, cfg.batch_size)
    top = int(np.argmax(select))
    counts = sample_counts(model, image, cfg.family, cfg.dist, cfg.n, stream.child(1), base, cfg.batch_size)
    used = cfg.n0 + cfg.n
    kind = cfg.dist.norm_kind

    if cfg.pb_mode == "one_sided":
        pA = clopper_pearson_lower(int(counts[top]), cfg.n, cfg.alpha)
        if pA <= 0.5:
            return CertificationResult(ABSTAIN, pA, 0.0, kind, used)
        return CertificationResult(top, pA, radius_for(cfg.dist, pA, 1.0 - pA), kind, used)

    others = np.delete(counts, top)
    pA = clopper_pearson_lower(int(counts[top]), cfg.n, cfg.alpha / 2)
    pB = clopper_pearson_upper(int(others.max()) if others.size else 0, cfg.n, cfg.alpha / 2)
    if pA <= pB:
        return CertificationResult(ABSTAIN, pA, 0.0, kind, used, pB)
    return CertificationResult(top, pA, radius_for(cfg.dist, pA, pB), kind, used, pB)


def certify_vectorfield(model, image: Image, cfg: CertifyConfig) -> CertificationResult:
    """Certify against arbitrary per-pixel displacement fields (noise on all 2WH entries)."""
    if cfg.family.name != "vectorfield":
        cfg = CertifyConfig(cfg.dist, Family("vectorfield"), cfg.n0, cfg.n, cfg.alpha,
                            cfg.seed, cfg.batch_size, cfg.pb_mode)
    return certify_parametric(model, image, cfg)


# -- quadrature oracle -------------------------------------------------------

_GAUSS_SPAN = 6.0


def _simpson_weights(nodes: int) -> np.ndarray:
    w = np.ones(nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w


def quadrature_rule(dist: SmoothingDist, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Offsets and normalized weights of the composite Simpson rule.

    Uniform smoothing integrates over [-lam, lam]; Gaussian smoothing uses the
    density on [-6 sigma, 6 sigma]. An even node count is bumped to the next
    odd number.
    """
    if nodes < 3:
        raise ParameterError(f"quadrature needs >= 3 nodes, got {nodes}")
    nodes += 1 - nodes % 2
    w = _simpson_weights(nodes)
    if isinstance(dist, Uniform):
        offsets = np.linspace(-dist.lam, dist.lam, nodes)
    else:
        offsets = np.linspace(-_GAUSS_SPAN * dist.sigma, _GAUSS_SPAN * dist.sigma, nodes)
        w = w * np.exp(-0.5 * (offsets / dist.sigma) ** 2)
    return offsets, w / w.sum()


def _require_scalar_family(family: Family, image: Image):
    if family.param_dim(image.width, image.height) != 1:
        raise ParameterError(f"quadrature supports one-parameter families only, not {family.name!r}")


def _node_scores(model, image, family, params, mode) -> np.ndarray:
    u, v = family.fields(params[:, None], image.width, image.height)
    probs = model.predict_proba(warp_pixels(image.pixels, u, v))
    if mode == "soft":
        return probs
    if mode != "hard":
        raise ParameterError(f"mode must be 'hard' or 'soft', got {mode!r}")
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(probs)), hard_labels(probs)] = 1.0
    return onehot


def _quadrature(model, image, family, dist, nodes, base, mode):
    offsets, weights = quadrature_rule(dist, nodes)
    scores = _node_scores(model, image, family, base + offsets, mode)
    if mode == "hard":
        # same reduction for every class and the total, so a constant label scores exactly 1
        labels = np.argmax(scores, axis=1)
        probs = np.array([weights[labels == k].sum() for k in range(scores.shape[1])]) / weights.sum()
    else:
        probs = weights @ scores
    # Simpson vs. trapezoid on the same nodes bounds the smooth-integrand error
    trap = np.ones(len(offsets))
    trap[[0, -1]] = 0.5
    if isinstance(dist, Gaussian):
        trap = trap * np.exp(-0.5 * (offsets / dist.sigma) ** 2)
    err = float(np.max(np.abs(probs - (trap / trap.sum()) @ scores)))
    if mode == "hard":
        # a Simpson panel whose three nodes disagree can misplace at most its own weight
        panels = len(offsets) // 2
        mixed = (labels[0:-1:2] != labels[1::2]) | (labels[1::2] != labels[2::2])
        panel_w = weights[0:-1:2] * np.r_[1.0, np.full(panels - 1, 0.5)] \
            + weights[1::2] + weights[2::2] * np.r_[np.full(panels - 1, 0.5), 1.0]
        err = max(err, float(panel_w[mixed].sum()))
    if isinstance(dist, Gaussian):
        err += 2.0 * std_normal_cdf(-_GAUSS_SPAN)
    return probs, err


def smoothed_score_quadrature(model, image: Image, family: Family, dist: SmoothingDist,
                              nodes: int = 2001, base: float = 0.0, mode: str = "hard") -> np.ndarray:
    """Per-class smoothed score at parameter ``base`` by deterministic quadrature.

    ``mode="hard"`` averages one-hot argmax labels; ``"soft"`` averages the
    classifier's probability vectors.
    """
    _check_dims(model, image)
    _require_scalar_family(family, image)
    return _quadrature(model, image, family, dist, nodes, float(base), mode)[0]


def quadrature_error_bound(model, image, family, dist, nodes=2001, base=0.0, mode="hard") -> float:
    _check_dims(model, image)
    _require_scalar_family(family, image)
    return _quadrature(model, image, family, dist, nodes, float(base), mode)[1]


def certify_quadrature(model, image: Image, family: Family, dist: SmoothingDist,
                       nodes: int = 2001, mode: str = "hard", base: float = 0.0) -> CertificationResult:
    """Certificate with the quadrature score in place of a Monte Carlo bound.

    The top-class score is reduced by the quadrature error bound before the
    radius is computed, and the runner-up is bounded by ``1 - pA``.
    """
    _check_dims(model, image)
    _require_scalar_family(family, image)
    probs, err = _quadrature(model, image, family, dist, nodes, float(base), mode)
    top = int(np.argmax(probs))
    pA = min(1.0, max(0.0, float(probs[top]) - err))
    if pA <= 0.5:
        return CertificationResult(ABSTAIN, pA, 0.0, dist.norm_kind, len(quadrature_rule(dist, nodes)[0]))
    return CertificationResult(top, pA, radius_for(dist, pA, 1.0 - pA), dist.norm_kind,
                               len(quadrature_rule(dist, nodes)[0]))


# -- label tabulation for dense 1-D sweeps -----------------------------------


class LabelTrack:
    """Hard label of f(warp(x, family(t))) as a piecewise-constant function of t.

    Labels are evaluated on a lattice over [lo, hi]; every lattice gap whose
    endpoints disagree is bisected (recursively, to catch several switches)
    down to ``tol``. Switches that start and end inside one lattice gap are
    not resolved, so the lattice must be finer than the features of interest.
    """

    def __init__(self, model, image: Image, family: Family, lo: float, hi: float,
                 spacing: float, tol: float = 1e-12, batch_size: int = 4096):
        def evaluate(t):
            return self._labels(model, image, family, t, batch_size)

        count = max(2, int(math.ceil((hi - lo) / spacing)) + 1)
        grid = np.linspace(lo, hi, count)
        labels = evaluate(grid)
        work = [(grid[i], grid[i + 1], labels[i], labels[i + 1])
                for i in np.flatnonzero(labels[:-1] != labels[1:])]
        breaks = []
        while work:
            mids = np.array([(a + b) / 2 for a, b, _, _ in work])
            mlab = evaluate(mids)
            nxt = []
            for (a, b, la, lb), m, lm in zip(work, mids, mlab):
                if b - a <= tol:
                    breaks.append((b, lb))
                    continue
                if lm != la:
                    nxt.append((a, m, la, lm))
                if lm != lb:
                    nxt.append((m, b, lm, lb))
            work = nxt
        breaks.sort()
        self.lo, self.hi = lo, hi
        self.breakpoints = np.array([b for b, _ in breaks])
        self.segment_labels = np.array([labels[0]] + [lab for _, lab in breaks], dtype=np.int64)

    @staticmethod
    def _labels(model, image, family, t, batch_size):
        out = np.empty(len(t), dtype=np.int64)
        for s in range(0, len(t), batch_size):
            out[s:s + batch_size] = _labels_at(model, image, family, t[s:s + batch_size, None])
        return out

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < self.lo - 1e-12) or np.any(t > self.hi + 1e-12):
            raise ParameterError("query outside the tabulated interval")
        return self.segment_labels[np.searchsorted(self.breakpoints, t, side="right")]


def sweep_scores(model, image: Image, family: Family, dist: SmoothingDist, points,
                 nodes: int = 2001, chunk: int = 256) -> np.ndarray:
    """Hard-mode quadrature scores at many base parameters, shape (len(points), K)."""
    _check_dims(model, image)
    _require_scalar_family(family, image)
    points = np.asarray(points, dtype=np.float64).ravel()
    offsets, weights = quadrature_rule(dist, nodes)
    step = offsets[1] - offsets[0]
    track = LabelTrack(model, image, family, points.min() + offsets[0],
                       points.max() + offsets[-1], spacing=step / 2)
    K = model.num_classes
    out = np.empty((len(points), K))
    for s in range(0, len(points), chunk):
        pts = points[s:s + chunk]
        labels = track(np.clip(pts[:, None] + offsets[None, :], track.lo, track.hi))
        rows = np.zeros((len(pts), K))
        for k in range(K):
            rows[:, k] = (labels == k) @ weights
        out[s:s + chunk] = rows
    return out


# -- composite certificates --------------------------------------------------


def _axis(box, name, resolution):
    lo, hi = box[name]
    if lo > hi:
        raise ParameterError(f"empty interval for {name}: [{lo}, {hi}]")
    return np.linspace(lo, hi, resolution) if hi > lo else np.array([float(lo)])


def max_composite_lhs(composite, box: dict, resolution: int = 101) -> float:
    """Largest affine-parameter norm of a composite deformation over a box.

    ``composite`` is ``ShearRotation`` / ``"shear_rotation"`` with box keys
    ``s`` and ``theta``, or ``RotScaleTrans`` / ``"rot_scale_trans"`` with keys
    ``theta``, ``alpha`` and either ``t_sq`` (bounds on t_u^2 + t_v^2) or both
    ``t_u`` and ``t_v``. Every axis grid contains its interval endpoints.
    """
    if resolution < 2:
        raise ParameterError(f"resolution must be >= 2, got {resolution}")
    name = composite if isinstance(composite, str) else getattr(composite, "__name__", type(composite).__name__)
    if name in ("shear_rotation", "ShearRotation"):
        s, th = np.meshgrid(_axis(box, "s", resolution), _axis(box, "theta", resolution), indexing="ij")
        return float(shear_rotation_norm(s, th).max())
    if name in ("rot_scale_trans", "RotScaleTrans"):
        th = _axis(box, "theta", resolution)
        al = _axis(box, "alpha", resolution)
        if "t_sq" in box:
            tsq = _axis(box, "t_sq", resolution)
        else:
            tu, tv = np.meshgrid(_axis(box, "t_u", resolution), _axis(box, "t_v", resolution))
            tsq = np.unique((tu * tu + tv * tv).ravel())
        T, A, S = np.meshgrid(th, al, tsq, indexing="ij")
        return float(rot_scale_trans_norm(T, A, S).max())
    raise ParameterError(f"unknown composite {composite!r}")


# -- soundness fuzzer --------------------------------------------------------


def _ball_sample(rng, dim, radius, kind):
    if kind == L1:
        x = rng.exponential(size=dim) * rng.choice([-1.0, 1.0], size=dim)
        return radius * rng.uniform() ** (1.0 / dim) * x / np.abs(x).sum()
    x = rng.normal(size=dim)
    return radius * rng.uniform() ** (1.0 / dim) * x / np.linalg.norm(x)


def _clip_to_ball(p, radius, kind):
    norm = np.abs(p).sum() if kind == L1 else np.linalg.norm(p)
    return p if norm <= radius else p * (radius / norm)


def empirical_attack(model, image: Image, family: Family, dist: SmoothingDist, radius: float,
                     budget: int = 2001, seed: int = 0, certified_class: int | None = None,
                     nodes: int = 2001, mode: str = "hard", mc_samples: int = 2000):
    """Search the certified ball for a parameter where the smoothed verdict changes.

    One-parameter families are swept densely (``budget`` points, closest to
    the origin first) with the quadrature score. Other families use random
    points in the norm ball plus coordinate refinement, scored by Monte Carlo
    with ``mc_samples`` draws. Returns the first violating parameter vector, or
    ``None``.
    """
    if radius <= 0 or budget < 1:
        return None
    _check_dims(model, image)
    d = family.param_dim(image.width, image.height)

    if d == 1:
        if certified_class is None:
            certified_class = int(np.argmax(smoothed_score_quadrature(model, image, family, dist, nodes, 0.0, mode)))
        pts = np.linspace(-radius, radius, budget)
        pts = pts[np.argsort(np.abs(pts), kind="stable")]
        if mode == "hard":
            verdicts = np.argmax(sweep_scores(model, image, family, dist, pts, nodes), axis=1)
            bad = np.flatnonzero(verdicts != certified_class)
            return np.array([pts[bad[0]]]) if bad.size else None
        for t in pts:
            if int(np.argmax(smoothed_score_quadrature(model, image, family, dist, nodes, t, mode))) != certified_class:
                return np.array([t])
        return None

    rng = np.random.default_rng(seed)
    stream = CounterStream(seed, block=7)

    def freq(p):
        return sample_counts(model, image, family, dist, mc_samples, stream, p) / mc_samples

    if certified_class is None:
        certified_class = int(np.argmax(freq(np.zeros(d))))
    kind = dist.norm_kind
    best, best_score = None, np.inf
    evals = 0
    while evals < budget:
        if best is None or evals < budget // 2:
            cand = _ball_sample(rng, d, radius, kind)
        else:
            cand = best.copy()
            j = rng.integers(d)
            cand[j] += rng.choice([-1.0, 1.0]) * radius * rng.uniform(0.05, 0.5)
            cand = _clip_to_ball(cand, radius, kind)
        f = freq(cand)
        evals += 1
        if int(np.argmax(f)) != certified_class:
            return cand
        if f[certified_class] < best_score:
            best, best_score = cand, f[certified_class]
    return None
