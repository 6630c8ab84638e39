"""Two interleaved spirals glued around a small central disk.

``R2`` is wound by the spiral with ``A_tilde = A + 4 eps``, ``B = pi/A + 4 eps``,
``lam = eps / B``, ``delta = eps`` and ``r = M eps``.  Since ``B lam = delta = eps``
every strand is followed by a gap of exactly its own width, and ``R1`` (rotated
by pi onto the same local rectangle) is wound with a half-turn angle offset so
that its strands fill those gaps.  The column ``W`` where the rectangles meet is
squeezed affinely into the disk of radius ``sqrt(M eps / pi)`` that both spirals
avoid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .maps_core import (
    DomainError,
    ParameterError,
    PlanarMap,
    RectRegion,
    UsageError,
    affine_piece,
    as_points,
    compose,
)
from .spiral import SpiralParams, intervals_disjoint, radius_bound, spiral_map, strand_intervals
from .torus_strip import EPS0, DomainModel, TaggedPoints

DEFAULT_M = 8.0


def min_M(A: float, eps: float) -> float:
    """Smallest ``M`` with ``M eps >= 2 * (8 eps^2 B)``, i.e. ``16 eps B``."""
    B = math.pi / A + 4 * eps
    return 2 * 8 * eps**2 * B / eps


@dataclass(frozen=True)
class DoubleSpiralConfig:
    A: float
    eps: float
    M: float | None = None
    orientation: int = 1

    def __post_init__(self):
        if not (self.A > 0 and self.eps > 0):
            raise ParameterError("A and eps must be positive")
        if self.M is None:
            object.__setattr__(self, "M", max(DEFAULT_M, min_M(self.A, self.eps)))
        if not self.M > 0:
            raise ParameterError("M must be positive")

    @property
    def A_tilde(self) -> float:
        return self.A + 4 * self.eps

    @property
    def B(self) -> float:
        return math.pi / self.A + 4 * self.eps

    @property
    def lam(self) -> float:
        return self.eps / self.B

    @property
    def delta(self) -> float:
        return self.eps

    @property
    def r(self) -> float:
        return self.M * self.eps

    @property
    def model(self) -> DomainModel:
        return DomainModel(self.A, self.eps)

    def spiral_params(self, theta_offset: float = 0.0) -> SpiralParams:
        return SpiralParams(self.A_tilde, self.B, self.lam, self.delta, self.r,
                            theta_offset=theta_offset, orientation=self.orientation)

    @property
    def free_radius(self) -> float:
        """Radius of the disk left empty by both spirals."""
        return math.sqrt(self.r / math.pi)

    @property
    def outer_radius(self) -> float:
        return radius_bound(self.spiral_params(), self.A_tilde)

    def as_dict(self) -> dict:
        return {"A": self.A, "eps": self.eps, "M": self.M, "A_tilde": self.A_tilde,
                "B": self.B, "lambda": self.lam, "delta": self.delta, "r": self.r}


def central_region(config: DoubleSpiralConfig) -> tuple[RectRegion, float]:
    """``W`` as a rectangle together with its exact area."""
    w = config.model.W_rect
    return w, w.area


def beta2_map(config: DoubleSpiralConfig, local: bool = False) -> PlanarMap:
    sp = spiral_map(config.spiral_params(), name="beta2")
    if local:
        return sp
    model = config.model
    return compose([model.to_R2_local(), sp]).with_domain(model.R2, "beta2")


def beta1_map(config: DoubleSpiralConfig, local: bool = False) -> PlanarMap:
    sp = spiral_map(config.spiral_params(theta_offset=0.5), name="beta1")
    if local:
        return sp
    model = config.model
    return compose([model.to_R1_local(), sp]).with_domain(model.R1, "beta1")


def tuck_map(config: DoubleSpiralConfig) -> PlanarMap:
    """Affine squeeze of ``W`` onto a square centred at the origin.

    The square has the area of ``W``; it sits inside the free disk whenever
    ``area(W) < 2 M eps / pi``, which ``M eps >= 2 area(W)`` guarantees.
    """
    w, area = central_region(config)
    if config.r < 2 * area:
        raise ParameterError(
            f"M eps = {config.r:.6g} < 2 area(W) = {2 * area:.6g}; increase M")
    eta = math.sqrt(w.height / w.width)
    cx, cy = w.x0 + w.width / 2, w.y0 + w.height / 2
    return compose([
        affine_piece("translate", [-cx, -cy]),
        affine_piece("scale", [1.0 / eta]),
    ]).with_domain(w, "tuck")


def beta2_eval(config: DoubleSpiralConfig, p, local: bool = False):
    return beta2_map(config, local).apply(p)


def beta1_eval(config: DoubleSpiralConfig, p, local: bool = False):
    return beta1_map(config, local).apply(p)


def tuck_eval(config: DoubleSpiralConfig, p):
    return tuck_map(config).apply(p)


def double_spiral_eval(config: DoubleSpiralConfig, p, tags: TaggedPoints | None = None):
    """Glued map: ``W`` goes to the tuck, the rest of ``R_i`` to ``beta_i``."""
    pts, single = as_points(p)
    if tags is None:
        tags = config.model.classify(pts)
    elif len(tags) != len(pts):
        raise UsageError("tags do not match points")
    covered = tags.in_R1 | tags.in_R2
    if not np.all(covered):
        bad = pts[np.argmin(covered)]
        raise DomainError("double_spiral", f"point {tuple(bad)} outside R1 u R2")
    ambiguous = tags.in_R1 & tags.in_R2 & ~tags.in_W
    if np.any(ambiguous):
        raise UsageError("point tagged in both rectangles but not in W")
    out = np.empty_like(pts)
    w = tags.in_W
    b2 = tags.in_R2 & ~w
    b1 = tags.in_R1 & ~w
    if np.any(w):
        out[w] = tuck_map(config).apply(pts[w])
    if np.any(b2):
        out[b2] = beta2_map(config).apply(pts[b2])
    if np.any(b1):
        out[b1] = beta1_map(config).apply(pts[b1])
    return out[0] if single else out


def branch_of(tags: TaggedPoints) -> np.ndarray:
    """0 for the tuck, 1 for beta1, 2 for beta2."""
    return np.where(tags.in_W, 0, np.where(tags.in_R2, 2, 1))


def interleaving_holds(config: DoubleSpiralConfig, n_angles: int = 97) -> bool:
    """Strand action intervals of both spirals are pairwise disjoint at every sampled angle."""
    p2 = config.spiral_params()
    p1 = config.spiral_params(theta_offset=0.5)
    for theta in (np.arange(n_angles) + 0.5) / n_angles:
        iv = np.concatenate([strand_intervals(p1, theta), strand_intervals(p2, theta)])
        if not intervals_disjoint(iv):
            return False
    return True


__all__ = [
    "EPS0", "DEFAULT_M", "DoubleSpiralConfig", "min_M", "central_region", "beta1_map",
    "beta2_map", "tuck_map", "beta1_eval", "beta2_eval", "tuck_eval", "double_spiral_eval",
    "branch_of", "interleaving_holds",
]
