import math

import numpy as np
import pytest

from oracles import brute_force_collisions
from spiralemb.double_spiral import DoubleSpiralConfig, beta2_map, central_region, tuck_map
from spiralemb.maps_core import BallRegion, PlanarMap, RectRegion, UsageError, affine_piece, identity
from spiralemb.spiral import SpiralParams, inner_avoid_radius, radius_bound, spiral_map
from spiralemb.verifier import (
    RNG_NAME,
    SampleGrid,
    VerificationReport,
    check_area,
    check_avoids,
    check_contained,
    check_disjoint,
    check_fd_agreement,
    check_injective,
    check_param_smoothness,
    check_symplectic,
    estimate_area,
    resolve_fd_step,
)


class ModHalf:
    """(x, y) -> (x mod 0.5, y), a deliberately non-injective map."""

    name = "mod_half"

    def apply(self, p):
        p = np.atleast_2d(p)
        return np.column_stack([np.mod(p[:, 0], 0.5), p[:, 1]])


class NoJacobian:
    name = "no_jacobian"

    def apply(self, p):
        return np.atleast_2d(p)


UNIT = RectRegion(1.0, 1.0)


def test_identity_symplectic_zero_deviation():
    rep = check_symplectic(identity(), SampleGrid(UNIT, 30), tol=1e-300)
    assert rep.passed
    assert rep.extrema["max_abs_det_minus_1"] == 0.0
    assert rep.worst_violation is None


def test_spiral_orientations():
    good = spiral_map(SpiralParams(1, 1, 0.05))
    assert check_symplectic(good, SampleGrid(UNIT, 50), tol=1e-10).passed
    bad = spiral_map(SpiralParams(1, 1, 0.05, orientation=-1))
    rep = check_symplectic(bad, SampleGrid(UNIT, 50), tol=1e-10)
    assert not rep.passed
    assert rep.violations == rep.samples == 2500
    assert abs(rep.extrema["min_det"] + 1) < 1e-10 and abs(rep.extrema["max_det"] + 1) < 1e-10
    assert rep.worst_violation["index"] == 0


def test_symplectic_usage_errors():
    with pytest.raises(UsageError):
        check_symplectic(identity(), SampleGrid(UNIT, 3), tol=0.0)
    with pytest.raises(UsageError):
        check_symplectic(NoJacobian(), SampleGrid(UNIT, 3))
    # without a jacobian the finite-difference path still works
    assert check_symplectic(NoJacobian(), SampleGrid(UNIT, 3), tol=1e-6, analytic=False).passed


def test_fd_agreement_and_auto_step():
    m = spiral_map(SpiralParams(1, 1, 0.02))
    assert resolve_fd_step(m, "auto") == pytest.approx(1e-4 * 0.02 / (2 * math.pi))
    assert resolve_fd_step(identity(), "auto") == 1e-5
    assert resolve_fd_step(m, 3e-6) == 3e-6
    assert check_fd_agreement(m, SampleGrid(UNIT, 40), fd_step="auto").passed


def test_injective_examples():
    gap = spiral_map(SpiralParams(1, 1, 0.05, delta=0.25))
    assert check_injective(gap, SampleGrid(UNIT, 300), image_tol=1e-9).passed
    tight = spiral_map(SpiralParams(1, 1, 0.05))
    assert check_injective(tight, SampleGrid(UNIT, 300), image_tol=1e-9).passed
    rep = check_injective(ModHalf(), SampleGrid(UNIT, 20), image_tol=1e-9)
    assert not rep.passed
    assert rep.violations > 0


def test_injective_matches_brute_force(rng):
    pts = np.round(rng.uniform(0, 1, (400, 2)) * 8) / 8
    img = ModHalf().apply(pts)
    expect = brute_force_collisions(pts, img, 1e-9, 0.2)
    rep = check_injective(ModHalf(), pts, image_tol=1e-9, domain_sep=0.2)
    assert rep.violations == len(expect)
    if expect:
        assert rep.worst_violation["index"] == list(min(expect))


def test_injective_raw_points_need_separation():
    with pytest.raises(UsageError):
        check_injective(identity(), np.zeros((3, 2)))


@pytest.mark.parametrize("frac", [0.25, 0.5, 1.0])
def test_contained_subrectangles(frac):
    p = SpiralParams(2.0, 1.0, 0.04, 0.01, 0.2)
    L = frac * p.A
    region = RectRegion(L, p.B)
    rep = check_contained(spiral_map(p).with_domain(region), SampleGrid(region, 300),
                          BallRegion(radius_bound(p, L)), tol=1e-9)
    assert rep.passed


def test_contained_shrunk_ball_fails():
    p = SpiralParams(1, 1, 0.05)
    rep = check_contained(spiral_map(p), SampleGrid(p.domain, 100),
                          BallRegion(0.9 * radius_bound(p, p.A)))
    assert not rep.passed and rep.violations > 0
    assert rep.worst_violation["slack"] < 0


def test_contained_empty_sample():
    rep = check_contained(identity(), np.empty((0, 2)), BallRegion(1.0))
    assert rep.passed and rep.samples == 0 and rep.params["empty"]


def test_avoids_examples():
    cfg = DoubleSpiralConfig(1.0, 0.1)
    grid = SampleGrid(cfg.model.R2, 200)
    assert check_avoids(beta2_map(cfg), grid, BallRegion(cfg.free_radius, closed=True)).passed
    assert not check_avoids(beta2_map(cfg), grid, BallRegion(2 * cfg.free_radius, closed=True)).passed
    p = SpiralParams(1, 1, 0.05)
    assert check_avoids(spiral_map(p), SampleGrid(UNIT, 100),
                        BallRegion(inner_avoid_radius(p), closed=True)).passed
    with pytest.raises(UsageError):
        check_avoids(identity(), SampleGrid(UNIT, 3), BallRegion(1.0))


def test_avoid_boundary_counts():
    # an image point exactly on the closed ball is a violation
    m = affine_piece("translate", [0.0, 0.0])
    rep = check_avoids(m, np.array([[1.0, 0.0], [2.0, 0.0]]), BallRegion(1.0, closed=True))
    assert rep.violations == 1 and rep.worst_violation["index"] == 0


def test_area_examples():
    assert estimate_area(identity(), RectRegion(2.0, 3.0), 10**5) == pytest.approx(6.0, rel=0.02)
    p = SpiralParams(1, 1, 0.05)
    assert check_area(spiral_map(p), p.domain, 1.0, samples=200_000).passed
    cfg = DoubleSpiralConfig(1.0, 0.1)
    w, area = central_region(cfg)
    assert check_area(tuck_map(cfg), w, area, rtol=0.01, samples=200_000).passed
    with pytest.raises(UsageError):
        estimate_area(identity(), UNIT, 100)


def test_area_detects_squash():
    stretched = PlanarMap(affine_piece("scale", [2.0]).pieces + affine_piece("shear", [0.5]).pieces)

    class Half:
        name = "half"

        def apply(self, p):
            return 0.5 * np.atleast_2d(p)

    assert check_area(stretched, UNIT, 1.0, samples=50_000).passed
    assert not check_area(Half(), UNIT, 1.0, samples=50_000).passed


def test_area_seeded_deterministic():
    m = spiral_map(SpiralParams(1, 1, 0.1))
    a = estimate_area(m, UNIT, 50_000, seed=3)
    b = estimate_area(m, UNIT, 50_000, seed=3)
    assert a == b


def test_disjoint():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([[0.0, 0.5]])
    assert check_disjoint({"a": a, "b": b}).passed
    rep = check_disjoint({"a": a, "b": a.copy()})
    assert not rep.passed


def test_report_invariants_and_roundtrip():
    rep = check_symplectic(spiral_map(SpiralParams(1, 1, 0.1, orientation=-1)),
                           SampleGrid(UNIT, 5, random_count=10, seed=4))
    d = rep.as_dict()
    assert "wall_time" not in d
    assert d["params"]["rng"] == RNG_NAME and d["params"]["seed"] == 4
    assert VerificationReport.from_dict(d) == rep
    assert rep.passed == (rep.violations == 0)
    assert (rep.worst_violation is not None) == (rep.violations > 0)


def test_serial_and_parallel_identical(monkeypatch):
    m = spiral_map(SpiralParams(1, 1, 0.05, orientation=-1))
    grid = SampleGrid(UNIT, 400, random_count=5000, seed=1)
    serial = check_symplectic(m, grid, threads=1).as_dict()
    parallel = check_symplectic(m, grid, threads=4).as_dict()
    assert serial == parallel
    monkeypatch.setenv("SPIRALEMB_THREADS", "3")
    assert check_contained(m, grid, BallRegion(0.3)).as_dict() == \
        check_contained(m, grid, BallRegion(0.3), threads=1).as_dict()


def test_sample_grid_order():
    g = SampleGrid(RectRegion(1.0, 1.0), 2, random_count=3, seed=0)
    pts = g.points()
    assert np.allclose(pts[:4], [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]])
    assert len(pts) == 7
    assert np.array_equal(pts, g.points())


def test_param_smoothness():
    pts = np.array([[0.3, 0.4], [0.6, 0.9]])

    def fam(r):
        return spiral_map(SpiralParams(1, 1, 0.1, 0.05, r)).apply(pts).ravel()

    assert check_param_smoothness(fam, 0.3).passed

    def kinked(r):
        return np.array([abs(r - 0.3)])

    assert not check_param_smoothness(kinked, 0.3 + 5e-4).passed
