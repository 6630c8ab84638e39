"""Sampling-based certification of symplectic embeddings.

Every check takes a map exposing ``apply`` (and ``jacobian`` when analytic
derivatives exist) plus a set of sample points, and returns a
:class:`VerificationReport`.  Point-wise checks run over fixed-size blocks, in
threads when ``SPIRALEMB_THREADS`` asks for it; blocks merge by summing counts,
taking extrema, and keeping the smallest violating index, so reports do not
depend on how the work was split.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from .maps_core import BallRegion, RectRegion, UsageError, det2

FD_STEP = 1e-5
# auto step = min(FD_STEP, FD_REL_STEP * feature_length)
FD_REL_STEP = 1e-4
FD_TOL = 1e-4
ANALYTIC_TOL = 1e-10
RNG_NAME = "numpy.PCG64"
_BLOCK = 1 << 15


@dataclass(frozen=True)
class SampleGrid:
    """Interior-offset grid over a rectangle, optionally followed by seeded random points."""

    region: RectRegion
    resolution: int
    random_count: int = 0
    seed: int = 0

    @property
    def step(self) -> float:
        return max(self.region.width, self.region.height) / self.resolution

    def points(self) -> np.ndarray:
        pts = self.region.grid(self.resolution)
        if self.random_count:
            rng = np.random.Generator(np.random.PCG64(self.seed))
            extra = self.region.uniform(rng, self.random_count)
            pts = np.concatenate([pts, extra[self.region.contains(extra)]])
        return pts

    def describe(self) -> dict:
        d = {"region": {"width": self.region.width, "height": self.region.height,
                        "anchor": list(self.region.anchor)},
             "resolution": self.resolution}
        if self.random_count:
            d.update(random_count=self.random_count, seed=self.seed, rng=RNG_NAME)
        return d


@dataclass
class VerificationReport:
    check: str
    map_id: str
    params: dict
    samples: int
    violations: int
    worst_violation: dict | None
    extrema: dict
    passed: bool
    wall_time: float = field(default=0.0, compare=False)

    def as_dict(self, timing: bool = False) -> dict:
        d = {"check": self.check, "map_id": self.map_id, "params": self.params,
             "samples": self.samples, "violations": self.violations,
             "worst_violation": self.worst_violation, "extrema": self.extrema,
             "passed": self.passed}
        if timing:
            d["wall_time"] = self.wall_time
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VerificationReport":
        return cls(d["check"], d["map_id"], d["params"], d["samples"], d["violations"],
                   d["worst_violation"], d["extrema"], d["passed"], d.get("wall_time", 0.0))


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("SPIRALEMB_THREADS", "1")))
    except ValueError:
        return 1


def _resolve(samples) -> tuple[np.ndarray, dict]:
    if isinstance(samples, SampleGrid):
        return samples.points(), samples.describe()
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    return pts, {"points": len(pts)}


def _map_name(m) -> str:
    return getattr(m, "name", type(m).__name__)


def _blockwise(points: np.ndarray, fn: Callable[[np.ndarray], tuple[np.ndarray, dict]],
               threads: int | None = None):
    """Run ``fn`` on blocks.

    ``fn`` returns per-point slack, optionally a violation mask (default
    ``slack < 0``), and a dict of block maxima.
    """
    n = len(points)
    starts = list(range(0, n, _BLOCK))

    def run(lo):
        out = fn(points[lo:lo + _BLOCK])
        if len(out) == 2:
            slack, ext = out
            mask = slack < 0
        else:
            slack, mask, ext = out
        bad = np.flatnonzero(mask)
        first = None
        if len(bad):
            j = int(bad[0])
            first = {"index": lo + j, "location": points[lo + j].tolist(), "slack": float(slack[j])}
        return int(len(bad)), first, ext

    nthreads = threads or worker_count()
    if nthreads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(nthreads) as ex:
            parts = list(ex.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    count, first, ext = 0, None, {}
    for c, f, e in parts:
        count += c
        if f is not None and (first is None or f["index"] < first["index"]):
            first = f
        for k, v in e.items():
            ext[k] = max(ext.get(k, -math.inf), v)
    return count, first, ext


def _report(check, m, params, n, count, first, ext, t0) -> VerificationReport:
    return VerificationReport(check, _map_name(m), params, n, count, first, ext,
                              count == 0, time.perf_counter() - t0)


# ---------------------------------------------------------------- jacobians


def fd_jacobian(m, points: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian, shape (N, d, d)."""
    n, d = points.shape
    jac = np.empty((n, d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = step
        jac[:, :, k] = (np.atleast_2d(m.apply(points + e)) - np.atleast_2d(m.apply(points - e))) / (2 * step)
    return jac


def resolve_fd_step(m, fd_step: float | str = FD_STEP) -> float:
    """Turn ``"auto"`` into a step well below the map's feature length.

    Central differences err by about ``step**2 * f3 / 6`` where ``f3`` is the
    third derivative, and ``f3`` grows like ``feature_length**-3``.
    """
    if fd_step != "auto":
        return float(fd_step)
    scale = getattr(m, "feature_length", None)
    return FD_STEP if scale is None else min(FD_STEP, FD_REL_STEP * scale)


def standard_form(d: int) -> np.ndarray:
    """Block-diagonal ``[[0, 1], [-1, 0]]`` for coordinates ``(x1, y1, x2, y2, ...)``."""
    omega = np.zeros((d, d))
    for i in range(0, d, 2):
        omega[i, i + 1] = 1.0
        omega[i + 1, i] = -1.0
    return omega


def check_symplectic(m, samples, tol: float = ANALYTIC_TOL, analytic: bool = True,
                     fd_step: float | str = FD_STEP,
                     threads: int | None = None) -> VerificationReport:
    """Violation where ``|det J - 1| > tol``; in dimension > 2 also where
    ``max |J^T Omega J - Omega| > tol``."""
    if not tol > 0:
        raise UsageError("tol must be positive")
    t0 = time.perf_counter()
    pts, params = _resolve(samples)
    if analytic and not hasattr(m, "jacobian"):
        raise UsageError(f"map {_map_name(m)} has no analytic jacobian")
    d = pts.shape[1]
    omega = standard_form(d)
    fd_step = resolve_fd_step(m, fd_step)

    def fn(block):
        jac = m.jacobian(block) if analytic else fd_jacobian(m, block, fd_step)
        jac = np.reshape(jac, (len(block), d, d))
        det = det2(jac) if d == 2 else np.linalg.det(jac)
        dev = np.abs(det - 1.0)
        ext = {"max_abs_det_minus_1": float(dev.max()), "min_det": -float(det.min()),
               "max_det": float(det.max())}
        if d > 2:
            form = np.abs(np.einsum("nji,jk,nkl->nil", jac, omega, jac) - omega).max(axis=(1, 2))
            ext["max_form_residual"] = float(form.max())
            dev = np.maximum(dev, form)
        return tol - dev, ext

    count, first, ext = _blockwise(pts, fn, threads)
    if "min_det" in ext:
        ext["min_det"] = -ext["min_det"]
    params = dict(params, tol=tol, jacobian="analytic" if analytic else f"fd(step={fd_step})")
    return _report("symplectic", m, params, len(pts), count, first, ext, t0)


def check_fd_agreement(m, samples, tol: float = FD_TOL, fd_step: float | str = FD_STEP,
                       threads: int | None = None) -> VerificationReport:
    """Entrywise ``|J_fd - J_analytic| <= tol``."""
    t0 = time.perf_counter()
    pts, params = _resolve(samples)
    d = pts.shape[1]
    fd_step = resolve_fd_step(m, fd_step)

    def fn(block):
        ja = np.reshape(m.jacobian(block), (len(block), d, d))
        jf = fd_jacobian(m, block, fd_step)
        err = np.abs(ja - jf).max(axis=(1, 2))
        return tol - err, {"max_abs_error": float(err.max())}

    count, first, ext = _blockwise(pts, fn, threads)
    return _report("fd_agreement", m, dict(params, tol=tol, fd_step=fd_step), len(pts),
                   count, first, ext, t0)


# ---------------------------------------------------------------- set checks


def check_injective(m, samples, image_tol: float = 1e-9, domain_sep: float | None = None,
                    images: np.ndarray | None = None) -> VerificationReport:
    """Flag sample pairs whose images are closer than ``image_tol`` although their
    preimages are more than ``domain_sep`` apart.

    ``domain_sep`` defaults to three grid steps when ``samples`` is a
    :class:`SampleGrid`.
    """
    t0 = time.perf_counter()
    pts, params = _resolve(samples)
    if domain_sep is None:
        if not isinstance(samples, SampleGrid):
            raise UsageError("domain_sep is required for raw point samples")
        domain_sep = 3 * samples.step
    if not (image_tol > 0 and domain_sep > 0):
        raise UsageError("image_tol and domain_sep must be positive")
    img = np.atleast_2d(m.apply(pts)) if images is None else images
    pairs = cKDTree(img).query_pairs(image_tol, output_type="ndarray")
    bad = []
    if len(pairs):
        dd = np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1)
        bad = pairs[dd > domain_sep]
    worst = None
    if len(bad):
        bad = bad[np.lexsort((bad[:, 1], bad[:, 0]))]
        i, j = map(int, bad[0])
        worst = {"index": [i, j], "location": [pts[i].tolist(), pts[j].tolist()],
                 "slack": -float(np.linalg.norm(pts[i] - pts[j]))}
    params = dict(params, image_tol=image_tol, domain_sep=domain_sep)
    ext = {"near_pairs": int(len(pairs))}
    return _report("injective", m, params, len(pts), int(len(bad)), worst, ext, t0)


def check_contained(m, samples, ball: BallRegion, tol: float = 0.0,
                    threads: int | None = None) -> VerificationReport:
    """Violation where ``|image|^2 > (radius + tol)^2``."""
    if tol < 0:
        raise UsageError("tol must be nonnegative")
    t0 = time.perf_counter()
    pts, params = _resolve(samples)
    lim = (ball.radius + tol) ** 2

    def fn(block):
        r2 = ball.norm_sq(m.apply(block))
        return lim - r2, {"max_norm_sq": float(r2.max())}

    if len(pts) == 0:
        return VerificationReport("contained", _map_name(m), dict(params, empty=True), 0, 0,
                                  None, {}, True, time.perf_counter() - t0)
    count, first, ext = _blockwise(pts, fn, threads)
    params = dict(params, radius=ball.radius, tol=tol)
    return _report("contained", m, params, len(pts), count, first, ext, t0)


def check_avoids(m, samples, closed_ball: BallRegion,
                 threads: int | None = None) -> VerificationReport:
    """Violation where ``|image|^2 <= radius^2``."""
    if not closed_ball.closed:
        raise UsageError("check_avoids needs a ball flagged closed")
    t0 = time.perf_counter()
    pts, params = _resolve(samples)
    lim = closed_ball.radius ** 2

    def fn(block):
        r2 = closed_ball.norm_sq(m.apply(block))
        return r2 - lim, r2 <= lim, {"max_neg_min_norm_sq": -float(r2.min())}

    count, first, ext = _blockwise(pts, fn, threads)
    ext = {"min_norm_sq": -ext.pop("max_neg_min_norm_sq")}
    params = dict(params, radius=closed_ball.radius)
    return _report("avoids", m, params, len(pts), count, first, ext, t0)


def min_cross_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Smallest distance between a point of ``a`` and a point of ``b``."""
    d, _ = cKDTree(b).query(a, k=1)
    return float(d.min())


def check_disjoint(named_images: dict[str, np.ndarray], tol: float = 1e-9) -> VerificationReport:
    """Pairwise minimum distances between image samples of several branches."""
    t0 = time.perf_counter()
    names = list(named_images)
    ext: dict[str, Any] = {}
    count = 0
    worst = None
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            d = min_cross_distance(named_images[a], named_images[b])
            ext[f"{a}|{b}"] = d
            if d <= tol:
                count += 1
                if worst is None:
                    worst = {"index": [a, b], "location": None, "slack": d - tol}
    n = sum(len(v) for v in named_images.values())
    return VerificationReport("disjoint", "+".join(names), {"tol": tol}, n, count, worst,
                              ext, count == 0, time.perf_counter() - t0)


# ---------------------------------------------------------------- area


def estimate_area(m, region: RectRegion, samples: int = 1_000_000, seed: int = 0) -> float:
    """Monte-Carlo area of the image of ``region``.

    Uniform seeded samples are mapped and binned on a square grid of cell size
    ``sqrt(area(region) / samples)``.  At about one sample per cell many covered
    cells stay empty, so the count of occupied cells ``k`` is corrected with the
    occupancy relation ``k = K (1 - exp(-samples / K))`` and the area is ``K``
    cells.
    """
    if samples < 10_000:
        raise UsageError("estimate_area needs at least 10^4 samples")
    rng = np.random.Generator(np.random.PCG64(seed))
    pts = region.uniform(rng, samples)
    pts = pts[region.contains(pts)]
    n = len(pts)
    img = np.atleast_2d(m.apply(pts))
    s = math.sqrt(region.area / n)
    cells = np.floor(img / s).astype(np.int64)
    k = len(np.unique(cells, axis=0))
    if k >= n:
        return k * s * s
    big = k
    while big * (1 - math.exp(-n / big)) < k:
        big *= 2
    K = brentq(lambda K: K * (1 - math.exp(-n / K)) - k, k, big)
    return K * s * s


def check_area(m, region: RectRegion, expected: float, rtol: float = 0.02,
               samples: int = 1_000_000, seed: int = 0) -> VerificationReport:
    t0 = time.perf_counter()
    area = estimate_area(m, region, samples, seed)
    rel = abs(area - expected) / expected
    ok = rel <= rtol
    worst = None if ok else {"index": None, "location": None, "slack": rtol - rel}
    params = {"samples": samples, "seed": seed, "rng": RNG_NAME, "rtol": rtol, "expected": expected}
    return VerificationReport("area", _map_name(m), params, samples, 0 if ok else 1, worst,
                              {"area": area, "relative_error": rel}, ok, time.perf_counter() - t0)


def check_param_smoothness(family: Callable[[float], np.ndarray], p0: float,
                           steps=(1e-3, 1e-4), rtol: float = 1e-2) -> VerificationReport:
    """Spot check of smooth parameter dependence.

    ``family(p)`` returns image points for a fixed set of domain points.  The
    central-difference derivative in ``p`` must agree at two step sizes, which
    fails for jumps and kinks at ``p0``.
    """
    t0 = time.perf_counter()
    derivs = [(family(p0 + h) - family(p0 - h)) / (2 * h) for h in steps]
    scale = max(1.0, float(np.abs(derivs[-1]).max()))
    err = float(np.abs(derivs[0] - derivs[-1]).max()) / scale
    ok = err <= rtol
    return VerificationReport("param_smoothness", "family", {"p0": p0, "steps": list(steps),
                              "rtol": rtol}, int(np.size(derivs[0]) // 2), 0 if ok else 1,
                              None if ok else {"index": None, "location": None, "slack": rtol - err},
                              {"relative_derivative_gap": err}, ok, time.perf_counter() - t0)
