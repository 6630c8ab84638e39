"""The simple spiral: a thin rectangle wound into an annulus of equal area.

A point ``(x, y)`` of ``R(A, B) = (0, A) x (0, B)`` is sent to polar action-angle
coordinates

    I = y*lam + r + (x/lam) * (B*lam + delta),    theta = x/lam + theta_offset  (mod 1)

and then to ``(u, v)`` with ``u**2 + v**2 = I/pi``.  Each strand of angular
length one carries an action interval of width ``B*lam`` and consecutive strands
are separated by a gap ``delta``.

Orientation: with the literal ``v = +sqrt(I/pi) sin(2 pi theta)`` the map has
Jacobian determinant -1.  ``orientation=+1`` (the default) uses
``v = -sqrt(I/pi) sin(2 pi theta)``, which is area *and* orientation preserving;
``orientation=-1`` reproduces the literal formulas.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .maps_core import (
    DomainError,
    ParameterError,
    Piece,
    PlanarMap,
    RectRegion,
    UsageError,
    affine_piece,
    as_points,
    compose,
)


class ActionAngle(NamedTuple):
    I: np.ndarray
    theta: np.ndarray


@dataclass(frozen=True)
class SpiralParams:
    A: float
    B: float
    lam: float
    delta: float = 0.0
    r: float = 0.0
    theta_offset: float = 0.0
    orientation: int = 1

    def __post_init__(self):
        if not (self.A > 0 and self.B > 0 and self.lam > 0):
            raise ParameterError(f"A, B, lam must be positive: {self}")
        if not (self.delta >= 0 and self.r >= 0):
            raise ParameterError(f"delta and r must be nonnegative: {self}")
        if self.orientation not in (1, -1):
            raise ParameterError("orientation must be +1 or -1")
        if self.theta_offset not in (0.0, 0.5):
            raise ParameterError("theta_offset must be 0 or 1/2")

    @property
    def slope(self) -> float:
        """Action gained per unit of x/lam: ``B*lam + delta``."""
        return self.B * self.lam + self.delta

    @property
    def domain(self) -> RectRegion:
        return RectRegion(self.A, self.B)

    def in_family_set(self) -> bool:
        return param_set_contains(self.A, self.B, self.lam, self.delta, self.r)

    def with_(self, **kw) -> "SpiralParams":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return {
            "A": self.A, "B": self.B, "lambda": self.lam, "delta": self.delta, "r": self.r,
            "theta_offset": self.theta_offset, "orientation": self.orientation,
        }


def _affine_part(params: SpiralParams) -> PlanarMap:
    # (x, y) -> (x/lam, y*lam) -> (x/lam, y*lam + r) -> (x/lam, I)
    return compose([
        affine_piece("scale", [params.lam]),
        affine_piece("translate", [0.0, params.r]),
        affine_piece("shear", [params.slope]),
    ])


def spiral_map(params: SpiralParams, name: str = "spiral") -> PlanarMap:
    """The spiral as a :class:`PlanarMap` restricted to the open rectangle."""
    # one turn per lam in x, so the map bends on the scale lam / (2 pi)
    polar = PlanarMap((Piece("spiral_polar", (params.theta_offset, float(params.orientation))),),
                      name="spiral_polar", feature_length=params.lam / (2 * math.pi))
    return compose([_affine_part(params), polar]).with_domain(params.domain, name)


def spiral_action_angle(params: SpiralParams, p) -> ActionAngle:
    pts, single = as_points(p)
    if not np.all(params.domain.contains(pts)):
        raise DomainError("spiral", "point outside the open rectangle R(A, B)")
    xi = _affine_part(params).apply(pts)
    theta = xi[:, 0] + params.theta_offset
    theta = theta - np.floor(theta)
    I = xi[:, 1]
    if single:
        return ActionAngle(I[0], theta[0])
    return ActionAngle(I, theta)


def spiral_eval(params: SpiralParams, p):
    return spiral_map(params).apply(p)


def radius_bound(params: SpiralParams, L: float) -> float:
    """Radius of the disk containing the image of the subrectangle ``R(L, B)``."""
    if not 0 < L <= params.A * (1 + 1e-15):
        raise UsageError(f"L must lie in (0, A={params.A}], got {L}")
    p = params
    return math.sqrt((p.B * p.lam + p.r + L * p.B + L * p.delta / p.lam) / math.pi)


def inner_avoid_radius(params: SpiralParams) -> float:
    """Radius of the closed disk the image never meets."""
    return math.sqrt(params.r / math.pi)


def param_set_contains(A: float, B: float, lam: float, delta: float, r: float) -> bool:
    """Membership in the parameter set on which the spiral family is smooth.

    Either all five are positive, or ``r = 0`` with the other four positive,
    or ``delta = 0`` with the other four positive.
    """
    base = A > 0 and B > 0 and lam > 0
    if not base:
        return False
    if delta > 0 and r > 0:
        return True
    if delta > 0 and r == 0:
        return True
    if r > 0 and delta == 0:
        return True
    return False


def strand_intervals(params: SpiralParams, theta: float) -> np.ndarray:
    """Open action intervals ``(lo, hi)`` of all strands crossing angle ``theta``.

    Strand ``k`` crosses ``theta`` at ``x/lam = k + t`` with
    ``t = (theta - theta_offset) mod 1``; over ``y in (0, B)`` its action sweeps
    ``r + (k + t)*slope + (0, B*lam)``.  Only ``k`` with ``x`` inside ``(0, A)`` count.
    """
    t = (theta - params.theta_offset) % 1.0
    kmax = int(math.ceil(params.A / params.lam)) + 1
    k = np.arange(-1, kmax + 1)
    x = (k + t) * params.lam
    k = k[(x > 0) & (x < params.A)]
    lo = params.r + (k + t) * params.slope
    return np.column_stack([lo, lo + params.B * params.lam])


def intervals_disjoint(intervals: np.ndarray, rtol: float = 1e-12) -> bool:
    """Pairwise disjointness of open intervals.

    Touching endpoints are allowed; ``rtol`` absorbs the rounding of endpoints
    that coincide in exact arithmetic.
    """
    if len(intervals) < 2:
        return True
    iv = intervals[np.argsort(intervals[:, 0])]
    slack = rtol * max(1.0, float(np.max(np.abs(iv))))
    return bool(np.all(iv[1:, 0] >= iv[:-1, 1] - slack))
