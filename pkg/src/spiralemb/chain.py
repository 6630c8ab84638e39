"""The composite embedding into ``B^4(sqrt(3) + c eps)`` and its parameter planners.

``j_eval`` runs a sample ``(p1, b)`` through the strip shear, then sends the
first plane through the glued double spiral and the second through the
rotated Step-1 spiral ``F``.  ``bounds_check`` re-derives every intermediate
estimate per sample, so a violation points at the exact inequality that broke.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .double_spiral import DoubleSpiralConfig, double_spiral_eval
from .maps_core import (
    SQRT_PI,
    ParameterError,
    PlanarMap,
    RectRegion,
    UsageError,
    affine_piece,
    as_points,
    compose,
)
from .spiral import SpiralParams, spiral_map
from .torus_strip import EPS0, Q_SQRT_PI, DomainModel, build_cutoff, interleave_eval

SQRT3 = math.sqrt(3.0)
F_DOMAIN = RectRegion(SQRT_PI, 2 * SQRT_PI)


class Constants(NamedTuple):
    C: float
    C_tilde: float
    c: float


def compute_constants(eps: float, A: float, M: float) -> Constants:
    """Explicit constants of the estimate chain.

    ``C`` is the supremum over ``0 < x1 < A + 4 eps`` of the extra term
    ``(1 + M + 8 x1) / (2 pi)`` that separates ``|z1|^2 / 2`` from ``x1 / A``.
    """
    if not (eps > 0 and A > 0 and M >= 0):
        raise ParameterError("eps, A must be positive and M nonnegative")
    C = (1 + M + 8 * (A + 4 * eps)) / (2 * math.pi)
    return Constants(C, C + 4 / A, 1 + 2 * C + 1 / SQRT_PI + 4 / A)


def uniform_constant(A: float = 1.0, M: float | None = None, eps_max: float = EPS0) -> float:
    """``c`` evaluated at ``eps_max``; it dominates ``c(eps)`` for every ``eps <= eps_max``."""
    ds = DoubleSpiralConfig(A, eps_max, M)
    return compute_constants(eps_max, A, ds.M).c


@dataclass(frozen=True)
class ChainConfig:
    eps: float
    A: float = 1.0
    M: float | None = None
    eps_max: float = EPS0

    def __post_init__(self):
        if not 0 < self.eps <= self.eps_max:
            raise ParameterError(f"eps must lie in (0, {self.eps_max}], got {self.eps}")
        ds = DoubleSpiralConfig(self.A, self.eps, self.M)
        object.__setattr__(self, "M", ds.M)

    @property
    def double_spiral(self) -> DoubleSpiralConfig:
        return DoubleSpiralConfig(self.A, self.eps, self.M)

    @property
    def profile(self):
        return build_cutoff(self.A, self.eps, self.eps_max)

    @property
    def model(self) -> DomainModel:
        return DomainModel.from_profile(self.profile)

    @property
    def step1(self) -> SpiralParams:
        return SpiralParams(2 * SQRT_PI, SQRT_PI, self.eps, 0.0, 0.0)

    @property
    def constants(self) -> Constants:
        return compute_constants(self.eps, self.A, self.M)

    @property
    def bound(self) -> float:
        return 3 + self.constants.c * self.eps

    def as_dict(self) -> dict:
        k = self.constants
        return {"eps": self.eps, "A": self.A, "M": self.M, "C": k.C, "C_tilde": k.C_tilde,
                "c": k.c, "bound": self.bound}


def f_map(config: ChainConfig) -> PlanarMap:
    """Step-1 map: quarter turn onto ``(0, 2 sqrt(pi)) x (0, sqrt(pi))``, then spiral."""
    rot = affine_piece("rotate_translate", [-math.pi / 2, 0.0, SQRT_PI])
    return compose([rot, spiral_map(config.step1)]).with_domain(F_DOMAIN, "F")


def f_eval(config: ChainConfig, p):
    return f_map(config).apply(p)


@dataclass
class ChainRecord:
    """Instrumented output of ``j_eval`` for a batch of samples."""

    x1: np.ndarray
    y2: np.ndarray
    z1: np.ndarray
    z2: np.ndarray

    @property
    def z1_sq(self):
        return np.einsum("ij,ij->i", self.z1, self.z1)

    @property
    def z2_sq(self):
        return np.einsum("ij,ij->i", self.z2, self.z2)


def j_record(config: ChainConfig, p1, b, profile=None, model=None) -> ChainRecord:
    profile = profile or config.profile
    model = model or DomainModel.from_profile(profile)
    q = interleave_eval(profile, model.strip, p1, b)
    q = np.atleast_2d(q)
    z1 = double_spiral_eval(config.double_spiral, q[:, :2])
    z2 = f_map(config).apply(q[:, 2:])
    return ChainRecord(q[:, 0], q[:, 3], np.atleast_2d(z1), np.atleast_2d(z2))


def j_eval(config: ChainConfig, p1, b):
    """``(z1, z2)`` with ``z1`` from the double spiral and ``z2 = F(x2, y2)``."""
    _, single = as_points(p1)
    rec = j_record(config, p1, b)
    out = np.column_stack([rec.z1, rec.z2])
    return out[0] if single else out


INEQUALITIES = ("estimatez2", "estimatez2second", "dot", "dot2", "dot3", "abcd", "bb")


def bounds_check(config: ChainConfig, record: ChainRecord) -> dict[str, np.ndarray]:
    """Slack (right side minus left side) of every estimate, per sample.

    A sample passes an inequality when its slack is nonnegative.  For
    ``estimatez2second`` the lower bound ``y2 > 0`` is folded in as the
    minimum of both slacks.
    """
    eps, A = config.eps, config.A
    C, C_tilde, c = config.constants
    ax = np.abs(record.x1) / A
    z1, z2 = record.z1_sq, record.z2_sq
    y2 = record.y2
    return {
        "estimatez2": (y2 + eps) / SQRT_PI - z2,
        "estimatez2second": np.minimum(y2, SQRT_PI * (2 - ax + eps) - y2),
        "dot": 2 - ax + eps * (1 + 1 / SQRT_PI) - z2,
        "dot2": ax + C * eps - z1 / 2,
        "dot3": 1 + C_tilde * eps - z1 / 2,
        "abcd": 2 + (1 + C + 1 / SQRT_PI) * eps - (z1 / 2 + z2),
        "bb": 3 + c * eps - (z1 + z2),
    }


def bounds_summary(slacks: dict[str, np.ndarray]) -> dict[str, dict]:
    """Collapse per-sample slacks into pass flags and worst slack per inequality."""
    return {k: {"passed": bool(np.all(v >= 0)), "min_slack": float(np.min(v)),
                "violations": int(np.count_nonzero(v < 0))} for k, v in slacks.items()}


# ---------------------------------------------------------------- sampling


@dataclass(frozen=True)
class ChainSampler:
    """Deterministic sample plan: grid product first, then a seeded random supplement.

    Grid sample ``i`` pairs ``p1_grid[i % n_p1]`` with ``b_grid[i // n_p1]``.
    Random samples draw ``p1`` half from the footprint of ``R1 u R2`` and half
    from the strip, and ``b`` uniformly from ``Q(sqrt(pi))``, with numpy's PCG64.
    """

    model: DomainModel
    domain_res: int = 48
    strip_nx: int = 200
    strip_ny: int = 8
    b_res: int = 15
    n_random: int = 100_000
    seed: int = 0

    @property
    def p1_grid(self) -> np.ndarray:
        from .torus_strip import sample_domain
        dom = sample_domain(self.model, self.domain_res, footprint=True).points
        strip = self.model.strip.rect.grid(self.strip_nx, self.strip_ny)
        return np.concatenate([dom, strip])

    @property
    def b_grid(self) -> np.ndarray:
        return Q_SQRT_PI.grid(self.b_res)

    def random(self) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.Generator(np.random.PCG64(self.seed))
        n = self.n_random
        m = self.model
        n_dom = n - n // 2
        # the footprint of each rectangle is itself a rectangle
        r2 = RectRegion(m.A + m.w_half, m.B, anchor=m.R2.anchor)
        r1 = RectRegion(m.A + m.w_half, m.B, anchor=(-m.A, m.R1.y0))
        which = rng.random(n_dom) < 0.5
        dom = np.where(which[:, None], r1.uniform(rng, n_dom), r2.uniform(rng, n_dom))
        strip = m.strip.rect.uniform(rng, n - n_dom)
        p1 = np.concatenate([dom, strip])
        b = Q_SQRT_PI.uniform(rng, n)
        # uniform draws can land on the closed boundary only with probability ~0
        keep = m.in_footprint(p1) & Q_SQRT_PI.contains(b)
        return p1[keep], b[keep]


def _threads() -> int:
    raw = os.environ.get("SPIRALEMB_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


@dataclass
class ChainReport:
    config: dict
    samples: int
    sup_norm: float
    sup_index: int
    bound: float
    inequalities: dict[str, dict]
    first_violation: dict | None
    passed: bool
    wall_time: float = field(default=0.0, compare=False)

    def as_dict(self, timing: bool = False) -> dict:
        d = {
            "check": "main_bound",
            "params": self.config,
            "samples": self.samples,
            "sup_norm": self.sup_norm,
            "sup_index": self.sup_index,
            "bound": self.bound,
            "c": self.config["c"],
            "C": self.config["C"],
            "inequalities": self.inequalities,
            "first_violation": self.first_violation,
            "passed": self.passed,
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d


def verify_main_bound(config: ChainConfig, sampler: ChainSampler | None = None,
                      block: int = 1 << 16, threads: int | None = None) -> ChainReport:
    """Evaluate the full estimate chain on the sampler's points, in blocks.

    Blocks are independent; merging takes maxima, sums and the smallest
    violating index, so the report does not depend on the thread count.
    """
    t0 = time.perf_counter()
    profile = config.profile
    model = DomainModel.from_profile(profile)
    sampler = sampler or ChainSampler(model)
    p1g, bg = sampler.p1_grid, sampler.b_grid
    n_grid = len(p1g) * len(bg)
    p1r, br = sampler.random()
    total = n_grid + len(p1r)

    def fetch(lo, hi):
        idx = np.arange(lo, hi)
        g = idx < n_grid
        p1 = np.empty((hi - lo, 2))
        b = np.empty((hi - lo, 2))
        gi = idx[g]
        p1[g] = p1g[gi % len(p1g)]
        b[g] = bg[gi // len(p1g)]
        ri = idx[~g] - n_grid
        p1[~g] = p1r[ri]
        b[~g] = br[ri]
        return p1, b

    def run(lo):
        hi = min(lo + block, total)
        p1, b = fetch(lo, hi)
        rec = j_record(config, p1, b, profile, model)
        slacks = bounds_check(config, rec)
        norm = rec.z1_sq + rec.z2_sq
        k = int(np.argmax(norm))
        bad = np.zeros(hi - lo, dtype=bool)
        for v in slacks.values():
            bad |= v < 0
        first = None
        if np.any(bad):
            j = int(np.argmax(bad))
            first = {"index": lo + j, "p1": p1[j].tolist(), "b": b[j].tolist(),
                     "failed": [name for name, v in slacks.items() if v[j] < 0],
                     "slack": {name: float(v[j]) for name, v in slacks.items()}}
        summ = {name: (float(np.min(v)), int(np.count_nonzero(v < 0))) for name, v in slacks.items()}
        return float(norm[k]), lo + k, summ, first

    starts = range(0, total, block)
    nthreads = threads or _threads()
    if nthreads > 1:
        with ThreadPoolExecutor(nthreads) as ex:
            parts = list(ex.map(run, starts))
    else:
        parts = [run(s) for s in starts]

    sup, sup_idx = -math.inf, -1
    ineq = {name: {"min_slack": math.inf, "violations": 0} for name in INEQUALITIES}
    first = None
    for s, si, summ, fv in parts:
        if s > sup or (s == sup and si < sup_idx):
            sup, sup_idx = s, si
        for name, (mn, nv) in summ.items():
            ineq[name]["min_slack"] = min(ineq[name]["min_slack"], mn)
            ineq[name]["violations"] += nv
        if fv is not None and (first is None or fv["index"] < first["index"]):
            first = fv
    for v in ineq.values():
        v["passed"] = v["violations"] == 0
    passed = all(v["passed"] for v in ineq.values()) and sup <= config.bound
    return ChainReport(config.as_dict(), total, sup, sup_idx, config.bound, ineq, first,
                       passed, time.perf_counter() - t0)


# ---------------------------------------------------------------- planners


def kh_domain_contains(S: float, R: float, c: float) -> bool:
    """``S > 0`` and ``sqrt(3) < R < sqrt(3) + 9 c S^2``."""
    return S > 0 and SQRT3 < R < SQRT3 + 9 * c * S**2


@dataclass(frozen=True)
class PlanKH:
    eps: float
    T: float
    c: float
    S: float
    R: float
    C_kh: float
    C_prime: float
    inner_radius: float
    outer_bound: float
    in_domain: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def plan_kh(eps: float, T: float, c: float | None = None, A: float = 1.0,
            eps_max: float = EPS0) -> PlanKH:
    """Parameter change ``(S, R) = (sqrt(eps) T, sqrt(3) + c eps)``.

    ``inner_radius`` is the radius ``10 sqrt(eps) T^2`` carried by the rescaled
    torus embedding; ``outer_bound`` is ``C_kh S^2 / sqrt(R - sqrt(3))`` with
    ``C_kh = 10 sqrt(c)``, and the two agree identically.
    """
    if not 0 < eps <= eps_max:
        raise ParameterError(f"eps must lie in (0, {eps_max}], got {eps}")
    if not T > 1 / 3:
        raise ParameterError(f"T must exceed 1/3, got {T}")
    if c is None:
        c = uniform_constant(A, eps_max=eps_max)
    S = math.sqrt(eps) * T
    R = SQRT3 + c * eps
    C_kh = 10 * math.sqrt(c)
    return PlanKH(eps, T, c, S, R, C_kh, 9 * c, 10 * math.sqrt(eps) * T**2,
                  C_kh * S**2 / math.sqrt(R - SQRT3), kh_domain_contains(S, R, c))


@dataclass(frozen=True)
class PlanFamily:
    eps: float
    c: float
    S: float
    R: float
    domain_radii: tuple[float, float]
    target_radii: tuple[float, float]
    target_radius_conjugated: float
    in_domain: bool

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["domain_radii"] = list(self.domain_radii)
        d["target_radii"] = list(self.target_radii)
        return d


def plan_family(eps: float, c: float | None = None, A: float = 1.0,
                eps_max: float = EPS0) -> PlanFamily:
    """Rescaled family with ``S = 1/(eps (1 - eps))`` and ``R = sqrt(3)/(1 - eps)``.

    ``target_radius_conjugated`` recomputes the second target radius by pushing
    ``C_kh S^2 / sqrt(R - sqrt(3))`` through the conjugating dilation ``sqrt(3)/R``;
    it must equal the closed form ``3^(-1/4) C_kh / sqrt(eps^5 (1 - eps))``.
    """
    # eps_max itself is admitted, as for plan_kh
    if not (0 < eps <= eps_max and eps < 1):
        raise ParameterError(f"eps must lie in (0, {eps_max}] and below 1, got {eps}")
    if c is None:
        c = uniform_constant(A, eps_max=eps_max)
    C_kh = 10 * math.sqrt(c)
    S = 1 / (eps * (1 - eps))
    R = SQRT3 / (1 - eps)
    scale = SQRT3 / R
    domain = (scale * 1.0, scale * S)
    closed_form = 3 ** -0.25 * C_kh / math.sqrt(eps**5 * (1 - eps))
    conjugated = scale * C_kh * S**2 / math.sqrt(R - SQRT3)
    return PlanFamily(eps, c, S, R, domain, (SQRT3, closed_form), conjugated,
                      kh_domain_contains(S, R, c))


@dataclass
class NestingReport:
    eps_list: list[float]
    pairs: list[dict]
    witnesses: list[dict]
    passed: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def family_domain_contains(eps: float, rho1: float, rho2: float) -> bool:
    """Is a point with plane radii ``(rho1, rho2)`` in ``B^2(1-eps) x B(1/eps)``?"""
    return rho1 < 1 - eps and rho2 < 1 / eps


def check_nesting(eps_list: Sequence[float], probes: Sequence[tuple[float, float]] = (),
                  eps_max: float = EPS0, extend: int = 12) -> NestingReport:
    """Check closure-nesting of consecutive domains and find exhaustion witnesses.

    For each probe ``(|p1|, |p2|)`` with ``|p1| < 1`` the witness is the first
    ``eps`` of the list, continued by successive factors of 10 below its last
    element, whose open domain contains the probe.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise UsageError("eps_list is empty")
    if any(not 0 < e <= eps_max for e in eps_list):
        raise UsageError(f"every eps must lie in (0, {eps_max}]")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise UsageError("eps_list must be strictly decreasing")
    pairs = []
    for s, t in zip(eps_list, eps_list[1:]):
        # s > t: closure of W_s = B(1-s) x B(1/s) must sit inside the open W_t
        gaps = ((1 - t) - (1 - s), 1 / t - 1 / s)
        pairs.append({"s": s, "t": t, "gap_inner": gaps[0], "gap_outer": gaps[1],
                      "nested": gaps[0] > 0 and gaps[1] > 0})
    ladder = eps_list + [eps_list[-1] * 10.0**-k for k in range(1, extend + 1)]
    witnesses = []
    for rho1, rho2 in probes:
        w = next((e for e in ladder if family_domain_contains(e, rho1, rho2)), None)
        witnesses.append({"probe": [rho1, rho2], "witness": w})
    passed = all(p["nested"] for p in pairs) and all(
        w["witness"] is not None for w in witnesses if w["probe"][0] < 1)
    return NestingReport(eps_list, pairs, witnesses, passed)
