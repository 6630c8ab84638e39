"""Cutoff, Hamiltonian shear flow, and the rectangle model of the immersed domain.

The cutoff ``chi`` is the tent ``1 - |x|/A`` bent into a plateau on ``[-a, a]``
(``a = eps**2``) and cut to zero at ``|x| = A - eps**2``, then mollified by a
compactly supported C-infinity bump of total width ``eps / 4``.  Away from the
two kinks the mollified function is exactly affine (the bump is symmetric), so
quadrature is only needed in the four transition windows.

The flow of ``H(x1, y1, x2, y2) = -chi(x1) * x2 * sqrt(pi)`` for time one is the
closed-form shear

    (x1, y1 + chi'(x1) x2 sqrt(pi), x2, y2 + chi(x1) sqrt(pi)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .maps_core import (
    SQRT_PI,
    DomainError,
    ParameterError,
    PlanarMap,
    RectRegion,
    UsageError,
    affine_piece,
    as_points,
)

EPS0 = 0.1
_QUAD_ORDER = 64
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(_QUAD_ORDER)


def _bump(t: np.ndarray) -> np.ndarray:
    """Unnormalised bump ``exp(-1/(1-t^2))`` on (-1, 1)."""
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ti * ti))
    return out


_BUMP_MASS = float(np.sum(_WEIGHTS * _bump(_NODES)))


def _bump_cdf_moment(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For ``u`` in [-1, 1]: normalised ``int_{-1}^u psi`` and ``int_{-1}^u t psi``."""
    half = (u + 1.0) / 2.0
    t = -1.0 + half[:, None] * (_NODES[None, :] + 1.0)
    w = half[:, None] * _WEIGHTS[None, :] * _bump(t)
    mass = w.sum(axis=1) / _BUMP_MASS
    moment = (w * t).sum(axis=1) / _BUMP_MASS
    return mass, moment


@dataclass(frozen=True)
class CutoffProfile:
    A: float
    eps: float
    eps_max: float = EPS0

    @property
    def a(self) -> float:
        return self.eps**2

    @property
    def eps_tilde(self) -> float:
        # torus area used for the immersion; kept for bookkeeping only
        return 100 * self.eps

    @property
    def h(self) -> float:
        """Half-width of the mollifier."""
        # derivatives of order k scale like h**-k; eps/8 keeps them tame
        # while plateau, slope and tent margins still close for A = 1
        return self.eps / 8

    @property
    def knots(self) -> tuple[float, float]:
        """Kinks of the unmollified profile (plateau end, ramp end)."""
        return self.a + self.h, self.A - self.eps**2 - self.h

    @property
    def slope(self) -> float:
        lo, hi = self.knots
        return 1.0 / (hi - lo)

    @property
    def support_end(self) -> float:
        return self.A - self.eps**2

    # -- evaluation --------------------------------------------------------

    def _phi2(self, u: np.ndarray) -> np.ndarray:
        # int_{-inf}^{u} Psi, Psi the bump CDF, for |u| < h (scaled to the bump)
        h = self.h
        mass, moment = _bump_cdf_moment(u / h)
        return h * ((u / h) * mass - moment)

    def _psi_cdf(self, u):
        return _bump_cdf_moment(u / self.h)[0]

    def _psi_density(self, u):
        return _bump(u / self.h) / (_BUMP_MASS * self.h)

    def _profile(self, s: np.ndarray, order: int) -> np.ndarray:
        """The even profile and its derivatives in ``s = |x| >= 0``."""
        lo, hi = self.knots
        h, m = self.h, self.slope
        out = np.zeros_like(s)
        plateau = s <= lo - h
        kink_lo = (s > lo - h) & (s < lo + h)
        ramp = (s >= lo + h) & (s <= hi - h)
        kink_hi = (s > hi - h) & (s < hi + h)
        if order == 0:
            out[plateau] = 1.0
            out[kink_lo] = 1.0 - m * self._phi2(s[kink_lo] - lo)
            out[ramp] = m * (hi - s[ramp])
            out[kink_hi] = m * self._phi2(hi - s[kink_hi])
        elif order == 1:
            out[kink_lo] = -m * self._psi_cdf(s[kink_lo] - lo)
            out[ramp] = -m
            out[kink_hi] = -m * self._psi_cdf(hi - s[kink_hi])
        elif order == 2:
            out[kink_lo] = -m * self._psi_density(s[kink_lo] - lo)
            out[kink_hi] = m * self._psi_density(hi - s[kink_hi])
        else:
            raise UsageError("order must be 0, 1 or 2")
        return out

    def __call__(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        vals = self._profile(np.abs(flat), order)
        if order == 1:
            vals = np.sign(flat) * vals
        vals = vals.reshape(np.shape(np.atleast_1d(x)))
        return vals.reshape(x.shape) if x.ndim else float(vals[0])


def build_cutoff(A: float, eps: float, eps_max: float = EPS0) -> CutoffProfile:
    """Construct the concrete cutoff and check that its margins close."""
    if not 0 < eps <= eps_max:
        raise ParameterError(f"eps must lie in (0, {eps_max}], got {eps}")
    if not A >= 0.5:
        raise ParameterError(f"A must be at least 1/2, got {A}")
    prof = CutoffProfile(A, eps, eps_max)
    lo, hi = prof.knots
    if hi - lo <= 2 * prof.h:
        raise ParameterError("ramp shorter than the mollifier")
    if prof.slope > 1 / A + eps:
        raise ParameterError(f"ramp slope {prof.slope} exceeds 1/A + eps")
    # deviation from the tent is largest at the kinks and at |x| = A - eps/2
    dev = max(lo / A, (A - hi) / A, eps / (2 * A)) + prof.slope * prof.h
    if dev > eps:
        raise ParameterError(f"tent deviation {dev} exceeds eps")
    return prof


def cutoff_eval(profile: CutoffProfile, x, order: int = 0):
    if order not in (0, 1):
        raise UsageError("cutoff_eval order must be 0 or 1")
    return profile(x, order)


def cutoff_constraints(profile: CutoffProfile, n: int = 10_000) -> dict[str, dict]:
    """Evaluate the five cutoff constraints on ``n`` equally spaced points.

    The grid covers ``[-1.2 A, 1.2 A]``; each entry reports ``ok`` and the worst
    margin (positive = satisfied).
    """
    A, eps, a = profile.A, profile.eps, profile.a
    x = np.linspace(-1.2 * A, 1.2 * A, n)
    chi = profile(x)
    dchi = profile(x, 1)
    out = {}

    d = np.diff(chi)
    neg, pos = x[1:] <= 0, x[:-1] >= 0
    mono = min(float(np.min(d[neg], initial=np.inf)), float(np.min(-d[pos], initial=np.inf)))
    out["monotone"] = {"ok": mono >= 0, "margin": mono}

    xp = np.concatenate([x[np.abs(x) <= a], np.linspace(-a, a, 101)])
    plat = float(np.max(np.abs(profile(xp) - 1.0)))
    out["plateau"] = {"ok": plat == 0.0, "margin": 0.0 - plat}

    outside = np.abs(x) >= A - eps**2
    xs = np.concatenate([x[outside], [-(A - eps**2), A - eps**2]])
    supp = float(np.max(np.abs(profile(xs))))
    out["support"] = {"ok": supp == 0.0, "margin": 0.0 - supp}

    slope = float(np.max(np.abs(dchi)))
    out["slope"] = {"ok": slope <= 1 / A + eps, "margin": 1 / A + eps - slope}

    band = np.abs(x) <= A - eps / 2
    dev = float(np.max(np.abs(chi[band] - (1 - np.abs(x[band]) / A))))
    out["tent"] = {"ok": dev <= eps, "margin": eps - dev}
    return out


# ---------------------------------------------------------------- flow


def flow_time1(profile: CutoffProfile, q):
    """Time-one map of ``-chi(x1) x2 sqrt(pi)``; ``q`` has shape (4,) or (N, 4)."""
    pts, single = as_points(q, 4)
    x1, y1, x2, y2 = pts.T
    chi = profile(x1)
    dchi = profile(x1, 1)
    out = np.column_stack([x1, y1 + dchi * x2 * SQRT_PI, x2, y2 + chi * SQRT_PI])
    return out[0] if single else out


def flow_jacobian(profile: CutoffProfile, q):
    pts, single = as_points(q, 4)
    x1, _, x2, _ = pts.T
    n = len(pts)
    jac = np.broadcast_to(np.eye(4), (n, 4, 4)).copy()
    jac[:, 1, 0] = profile(x1, 2) * x2 * SQRT_PI
    jac[:, 1, 2] = profile(x1, 1) * SQRT_PI
    jac[:, 3, 0] = profile(x1, 1) * SQRT_PI
    return jac[0] if single else jac


def hamiltonian_field(profile: CutoffProfile, q: np.ndarray) -> np.ndarray:
    """Hamilton's equations for the shear Hamiltonian (x-dot = dH/dy, y-dot = -dH/dx)."""
    x1, _, x2, _ = q.T
    zero = np.zeros_like(x1)
    return np.column_stack([zero, profile(x1, 1) * x2 * SQRT_PI, zero, profile(x1) * SQRT_PI])


@dataclass(frozen=True)
class FlowMap:
    """The time-one flow packaged with its Jacobian for the verifier."""

    profile: CutoffProfile
    name: str = "flow"
    dimension: int = 4

    @property
    def feature_length(self) -> float:
        return self.profile.h

    def apply(self, q):
        return flow_time1(self.profile, q)

    __call__ = apply

    def jacobian(self, q):
        return flow_jacobian(self.profile, q)


# ---------------------------------------------------------------- domain model


@dataclass(frozen=True)
class StripModel:
    """The open strip ``(-A, A) x (-eps/2, eps/2)`` where the flow is switched on."""

    A: float
    eps: float

    @property
    def rect(self) -> RectRegion:
        return RectRegion(2 * self.A, self.eps, anchor=(-self.A, -self.eps / 2))

    def contains(self, p) -> np.ndarray:
        return self.rect.contains(p)


Q_SQRT_PI = RectRegion(SQRT_PI, SQRT_PI)


def interleave_eval(profile: CutoffProfile, strip: StripModel, p1, b):
    """Flow ``(p1, b)`` if ``p1`` lies in the strip, otherwise leave it alone."""
    p1a, single = as_points(p1)
    ba, _ = as_points(b)
    if len(ba) != len(p1a):
        raise UsageError("p1 and b must have the same number of points")
    if not np.all(Q_SQRT_PI.contains(ba)):
        raise DomainError("interleave", "b outside the open square Q(sqrt(pi))")
    q = np.column_stack([p1a, ba])
    in_strip = strip.contains(p1a)
    if np.any(in_strip):
        q[in_strip] = flow_time1(profile, q[in_strip])
    return q[0] if single else q


@dataclass
class TaggedPoints:
    points: np.ndarray
    in_R1: np.ndarray
    in_R2: np.ndarray
    in_strip: np.ndarray
    in_W: np.ndarray

    def __len__(self):
        return len(self.points)

    def subset(self, mask) -> "TaggedPoints":
        return TaggedPoints(self.points[mask], self.in_R1[mask], self.in_R2[mask],
                            self.in_strip[mask], self.in_W[mask])


@dataclass(frozen=True)
class DomainModel:
    """Two rectangles covering the flowed strip, plus the central column ``W``.

    ``R2`` spans ``(-2 eps^2, A_tilde - 2 eps^2) x (eps/2 - B, eps/2)`` and ``R1``
    is its image under rotation by pi about the origin, so ``R1 & R2`` lies in the
    column ``|x| < 2 eps^2``.  The flow moves strip points with ``x1 > 0`` down
    and points with ``x1 < 0`` up, by less than ``pi * slope``, which is why each
    rectangle hangs off the strip on the side the flow pushes towards.

    ``footprint`` is the x-extent ``(-A, A)`` of the strip; the immersed domain
    lives over it, and the chain estimates sample inside it.
    """

    A: float
    eps: float
    n_strands: int = 6
    strand_gap_factor: float = 0.5
    profile: CutoffProfile | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.profile is not None:
            reach = self.eps + math.pi * self.profile.slope
            if reach >= self.B:
                raise ParameterError(
                    f"flowed strip height {reach} does not fit in rectangles of height {self.B}")

    @classmethod
    def from_profile(cls, profile: CutoffProfile, **kw) -> "DomainModel":
        return cls(profile.A, profile.eps, profile=profile, **kw)

    @property
    def A_tilde(self) -> float:
        return self.A + 4 * self.eps

    @property
    def B(self) -> float:
        return math.pi / self.A + 4 * self.eps

    @property
    def w_half(self) -> float:
        return 2 * self.eps**2

    @property
    def R2(self) -> RectRegion:
        return RectRegion(self.A_tilde, self.B, anchor=(-self.w_half, self.eps / 2 - self.B))

    @property
    def R1(self) -> RectRegion:
        return RectRegion(self.A_tilde, self.B, anchor=(self.w_half - self.A_tilde, -self.eps / 2))

    @property
    def E(self) -> RectRegion:
        return RectRegion.vertical_strip(4 * self.eps**2)

    @property
    def strip(self) -> StripModel:
        return StripModel(self.A, self.eps)

    @property
    def W_rect(self) -> RectRegion:
        """The central piece as one rectangle: the column over both rectangles."""
        return RectRegion(2 * self.w_half, 2 * self.B - self.eps,
                          anchor=(-self.w_half, self.eps / 2 - self.B))

    @property
    def strand_gap(self) -> float:
        return self.strand_gap_factor * self.eps

    @property
    def W_area(self) -> float:
        return self.W_rect.area

    @property
    def W_area_bound(self) -> float:
        return 8 * self.eps**2 * self.B

    def to_R2_local(self) -> PlanarMap:
        return affine_piece("translate", [self.w_half, self.B - self.eps / 2])

    def to_R1_local(self) -> PlanarMap:
        """Rotation by pi then translation onto ``(0, A_tilde) x (0, B)``.

        The corner of R1 sent to the origin is ``(2 eps^2, B - eps/2)``.
        """
        return affine_piece("rotate_translate", [math.pi, self.w_half, self.B - self.eps / 2])

    def in_footprint(self, p) -> np.ndarray:
        pts, _ = as_points(p)
        return np.abs(pts[:, 0]) < self.A

    def classify(self, p) -> TaggedPoints:
        pts, _ = as_points(p)
        in1 = self.R1.contains(pts)
        in2 = self.R2.contains(pts)
        in_w = self.E.contains(pts) & (in1 | in2)
        return TaggedPoints(pts, in1, in2, self.strip.contains(pts), in_w)

    def strands(self) -> list[RectRegion]:
        """Thin zigzag band for figures: the strip plus stacked strands.

        Strands have height ``eps/2`` and are separated by ``strand_gap``.  Those
        above the strip run over ``(-A, 0)`` inside ``R1``; their rotations by pi
        run over ``(0, A)`` below the strip inside ``R2``.
        """
        h = self.eps / 2
        out = [self.strip.rect]
        for k in range(1, self.n_strands + 1):
            y0 = self.eps / 2 + k * self.strand_gap + (k - 1) * h
            if y0 + h >= self.B - self.eps / 2:
                break
            out.append(RectRegion(self.A, h, anchor=(-self.A, y0)))
            out.append(RectRegion(self.A, h, anchor=(0.0, -y0 - h)))
        return out


def sample_domain(model: DomainModel, resolution: int, parts=("R1", "R2"),
                  footprint: bool = False) -> TaggedPoints:
    """Interior-offset grids over the requested rectangles, tagged.

    ``parts`` may contain ``"R1"``, ``"R2"`` and ``"strip"``; grids are emitted
    in that order, each row-major.  With ``footprint`` points outside
    ``|x| < A`` are dropped.
    """
    if resolution < 2:
        raise UsageError("resolution must be at least 2")
    rects = {"R1": model.R1, "R2": model.R2, "strip": model.strip.rect}
    chunks = []
    for name in parts:
        if name not in rects:
            raise UsageError(f"unknown domain part {name!r}")
        chunks.append(rects[name].grid(resolution))
    pts = np.concatenate(chunks)
    if footprint:
        pts = pts[model.in_footprint(pts)]
    return model.classify(pts)
