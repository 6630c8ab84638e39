"""Planar symplectic building blocks and their composition.

Points are handled as numpy arrays of shape ``(2,)`` or ``(N, 2)``; every
piece is vectorised over the leading axis.  A :class:`PlanarMap` is an
ordered tuple of pieces applied left to right, so ``compose([f, g])``
evaluates ``g(f(p))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

SQRT_PI = math.sqrt(math.pi)


class SpiralembError(Exception):
    """Base class for errors raised by this package."""


class DomainError(SpiralembError, ValueError):
    """A point was evaluated outside the domain of a map or map piece."""

    def __init__(self, piece: str, message: str):
        self.piece = piece
        super().__init__(f"[{piece}] {message}")


class ParameterError(SpiralembError, ValueError):
    """A construction parameter is outside its admissible range."""


class UsageError(SpiralembError, ValueError):
    """An API was called with structurally invalid arguments."""


class PlanarPoint(NamedTuple):
    x: float
    y: float


class Point4(NamedTuple):
    x1: float
    y1: float
    x2: float
    y2: float


def as_points(p, dim: int = 2) -> tuple[np.ndarray, bool]:
    """Return ``(array of shape (N, dim), was_single)``; rejects non-finite input."""
    arr = np.asarray(p, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[-1] != dim or arr.ndim != 2:
        raise UsageError(f"expected points of shape (N, {dim}), got {np.shape(p)}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("input", "non-finite coordinates")
    return arr, single


# ---------------------------------------------------------------- regions


@dataclass(frozen=True)
class RectRegion:
    """Open rectangle ``anchor + (0, width) x (0, height)``.

    With ``unbounded_height`` only the x-interval is tested, which models the
    vertical strips ``E(b) = (-b/2, b/2) x R``.
    """

    width: float
    height: float = math.inf
    anchor: tuple[float, float] = (0.0, 0.0)
    unbounded_height: bool = False
    closed: bool = False

    def __post_init__(self):
        if not self.width > 0:
            raise ParameterError(f"rectangle width must be positive, got {self.width}")
        if not self.unbounded_height and not (self.height > 0 and math.isfinite(self.height)):
            raise ParameterError(f"rectangle height must be positive, got {self.height}")

    @classmethod
    def vertical_strip(cls, b: float, center: float = 0.0) -> "RectRegion":
        """The strip ``E(b)`` of width ``b`` centred at ``x = center``."""
        return cls(width=b, anchor=(center - b / 2, 0.0), unbounded_height=True)

    @property
    def x0(self) -> float:
        return self.anchor[0]

    @property
    def y0(self) -> float:
        return self.anchor[1]

    @property
    def area(self) -> float:
        return math.inf if self.unbounded_height else self.width * self.height

    def contains(self, p) -> np.ndarray:
        pts, _ = as_points(p)
        x = pts[:, 0] - self.x0
        if self.closed:
            inside = (x >= 0) & (x <= self.width)
        else:
            inside = (x > 0) & (x < self.width)
        if not self.unbounded_height:
            y = pts[:, 1] - self.y0
            if self.closed:
                inside &= (y >= 0) & (y <= self.height)
            else:
                inside &= (y > 0) & (y < self.height)
        return inside

    def grid(self, nx: int, ny: int | None = None) -> np.ndarray:
        """Interior-offset grid (offset = half a step), row-major: y outer, x inner."""
        if self.unbounded_height:
            raise UsageError("cannot grid an unbounded strip")
        ny = nx if ny is None else ny
        if nx < 1 or ny < 1:
            raise UsageError("grid resolution must be positive")
        xs = self.x0 + (np.arange(nx) + 0.5) * (self.width / nx)
        ys = self.y0 + (np.arange(ny) + 0.5) * (self.height / ny)
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        lo = np.array(self.anchor)
        return lo + rng.random((n, 2)) * np.array([self.width, self.height])


@dataclass(frozen=True)
class BallRegion:
    """Euclidean ball; open unless ``closed`` is set."""

    radius: float
    center: tuple[float, ...] | None = None
    dimension: int = 2
    closed: bool = False

    def __post_init__(self):
        if self.dimension not in (2, 4):
            raise ParameterError("ball dimension must be 2 or 4")
        if not self.radius >= 0:
            raise ParameterError(f"ball radius must be nonnegative, got {self.radius}")

    def norm_sq(self, p) -> np.ndarray:
        pts, _ = as_points(p, self.dimension)
        if self.center is not None:
            pts = pts - np.asarray(self.center, dtype=float)
        return np.einsum("ij,ij->i", pts, pts)

    def contains(self, p) -> np.ndarray:
        r2 = self.norm_sq(p)
        return r2 <= self.radius**2 if self.closed else r2 < self.radius**2


# ---------------------------------------------------------------- pieces


@dataclass(frozen=True)
class Piece:
    """One primitive map; ``kind`` selects the formula, ``params`` its constants."""

    kind: str
    params: tuple[float, ...] = ()

    def apply(self, pts: np.ndarray) -> np.ndarray:
        x, y = pts[:, 0], pts[:, 1]
        k = self.kind
        if k == "identity":
            return pts.copy()
        if k == "scale":
            (lam,) = self.params
            return np.column_stack([x / lam, y * lam])
        if k == "translate":
            tx, ty = self.params
            return np.column_stack([x + tx, y + ty])
        if k == "shear":
            (s,) = self.params
            return np.column_stack([x, y + s * x])
        if k == "rotate_translate":
            c, s, tx, ty = self._rotation()
            return np.column_stack([c * x - s * y + tx, s * x + c * y + ty])
        if k == "spiral_polar":
            return _polar_apply(self.params, pts)
        raise UsageError(f"unknown piece kind {k!r}")

    def jacobian(self, pts: np.ndarray) -> np.ndarray:
        n = len(pts)
        k = self.kind
        if k == "spiral_polar":
            return _polar_jacobian(self.params, pts)
        if k == "identity" or k == "translate":
            m = np.eye(2)
        elif k == "scale":
            (lam,) = self.params
            m = np.array([[1.0 / lam, 0.0], [0.0, lam]])
        elif k == "shear":
            m = np.array([[1.0, 0.0], [self.params[0], 1.0]])
        elif k == "rotate_translate":
            c, s, _, _ = self._rotation()
            m = np.array([[c, -s], [s, c]])
        else:
            raise UsageError(f"unknown piece kind {k!r}")
        return np.broadcast_to(m, (n, 2, 2)).copy()

    def _rotation(self) -> tuple[float, float, float, float]:
        angle, tx, ty = self.params
        quarter = angle / (math.pi / 2)
        if abs(quarter - round(quarter)) < 1e-12:
            # exact matrices for quarter turns keep det == 1 bit-for-bit
            c, s = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][round(quarter) % 4]
        else:
            c, s = math.cos(angle), math.sin(angle)
        return c, s, tx, ty


def _polar_apply(params, pts):
    theta_offset, orientation = params
    x, action = pts[:, 0], pts[:, 1]
    if np.any(action <= 0):
        raise DomainError("spiral_polar", "action must be positive before the polar piece")
    theta = x + theta_offset
    theta = theta - np.floor(theta)
    rho = np.sqrt(action / math.pi)
    phi = 2 * math.pi * theta
    return np.column_stack([rho * np.cos(phi), -orientation * rho * np.sin(phi)])


def _polar_jacobian(params, pts):
    theta_offset, orientation = params
    x, action = pts[:, 0], pts[:, 1]
    if np.any(action <= 0):
        raise DomainError("spiral_polar", "action must be positive before the polar piece")
    theta = x + theta_offset
    theta = theta - np.floor(theta)
    rho = np.sqrt(action / math.pi)
    phi = 2 * math.pi * theta
    c, s = np.cos(phi), np.sin(phi)
    sigma = -orientation
    jac = np.empty((len(pts), 2, 2))
    jac[:, 0, 0] = -2 * math.pi * rho * s
    jac[:, 0, 1] = c / (2 * math.pi * rho)
    jac[:, 1, 0] = sigma * 2 * math.pi * rho * c
    jac[:, 1, 1] = sigma * s / (2 * math.pi * rho)
    return jac


# ---------------------------------------------------------------- maps


@dataclass(frozen=True)
class PlanarMap:
    """Composition of pieces, applied in order, with an optional open domain."""

    pieces: tuple[Piece, ...]
    name: str = "map"
    domain: RectRegion | None = field(default=None, compare=False)
    # shortest length over which the map turns (None: no intrinsic scale)
    feature_length: float | None = field(default=None, compare=False)

    def _check_domain(self, pts):
        if self.domain is not None:
            inside = self.domain.contains(pts)
            if not np.all(inside):
                bad = pts[np.argmin(inside)]
                raise DomainError(self.name, f"point {tuple(bad)} outside the open domain")

    def apply(self, p):
        pts, single = as_points(p)
        self._check_domain(pts)
        for piece in self.pieces:
            pts = piece.apply(pts)
        return pts[0] if single else pts

    __call__ = apply

    def jacobian(self, p):
        pts, single = as_points(p)
        self._check_domain(pts)
        jac = np.broadcast_to(np.eye(2), (len(pts), 2, 2)).copy()
        for piece in self.pieces:
            jac = piece.jacobian(pts) @ jac
            pts = piece.apply(pts)
        return jac[0] if single else jac

    def with_domain(self, domain: RectRegion | None, name: str | None = None) -> "PlanarMap":
        return PlanarMap(self.pieces, name or self.name, domain, self.feature_length)


def identity() -> PlanarMap:
    return PlanarMap((Piece("identity"),), name="identity")


def affine_piece(kind: str, params: Sequence[float] = ()) -> PlanarMap:
    """Build a single affine symplectic piece.

    ``scale`` takes ``(lam,)`` and maps ``(x, y) -> (x/lam, y*lam)``;
    ``translate`` takes ``(tx, ty)``; ``shear`` takes ``(s,)`` and adds ``s*x``
    to ``y``; ``rotate_translate`` takes ``(angle, tx, ty)`` and defaults to a
    rotation by -pi/2 followed by translation by ``(0, sqrt(pi))``.
    """
    params = tuple(float(v) for v in params)
    if kind == "scale":
        if len(params) != 1:
            raise UsageError("scale takes one parameter")
        if not params[0] > 0:
            raise ParameterError(f"scale factor must be positive, got {params[0]}")
    elif kind == "translate":
        if len(params) != 2:
            raise UsageError("translate takes two parameters")
    elif kind == "shear":
        if len(params) != 1:
            raise UsageError("shear takes one parameter")
    elif kind == "rotate_translate":
        if not params:
            params = (-math.pi / 2, 0.0, SQRT_PI)
        if len(params) != 3:
            raise UsageError("rotate_translate takes (angle, tx, ty)")
    elif kind == "identity":
        return identity()
    else:
        raise UsageError(f"unknown affine piece {kind!r}")
    return PlanarMap((Piece(kind, params),), name=kind)


def compose(maps: Sequence[PlanarMap], name: str | None = None) -> PlanarMap:
    """Concatenate maps; the first one is applied first and supplies the domain."""
    if not maps:
        raise UsageError("compose needs at least one map")
    pieces = tuple(p for m in maps for p in m.pieces)
    scales = [m.feature_length for m in maps if m.feature_length is not None]
    return PlanarMap(pieces, name or "∘".join(m.name for m in reversed(maps)), maps[0].domain,
                     min(scales) if scales else None)


def apply(m: PlanarMap, p):
    return m.apply(p)


def jacobian(m: PlanarMap, p):
    return m.jacobian(p)


def det2(jac: np.ndarray) -> np.ndarray:
    return jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
