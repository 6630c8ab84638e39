import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from oracles import SQRT_PI, constants, step1_point
from spiralemb.chain import (
    SQRT3,
    ChainConfig,
    ChainRecord,
    ChainSampler,
    bounds_check,
    bounds_summary,
    check_nesting,
    compute_constants,
    f_eval,
    j_eval,
    j_record,
    plan_family,
    plan_kh,
    uniform_constant,
    verify_main_bound,
)
from spiralemb.double_spiral import double_spiral_eval
from spiralemb.maps_core import DomainError, ParameterError, UsageError
from spiralemb.torus_strip import Q_SQRT_PI

CFG = ChainConfig(0.1)


def test_constants_example():
    C, Ct, c = compute_constants(0.1, 1.0, 8.0)
    assert (C, Ct, c) == pytest.approx(constants(0.1, 1.0, 8.0), rel=1e-15)
    assert C == pytest.approx(20.2 / (2 * math.pi), rel=1e-15)
    # reference values 3.214874, 11.993937 are off in the sixth digit
    assert C == pytest.approx(3.214874, abs=1e-4)
    assert Ct == pytest.approx(C + 4, rel=1e-15)
    assert c == pytest.approx(11.993937, abs=3e-4)


def test_constants_dependence():
    a = compute_constants(0.1, 1.0, 8.0)
    b = compute_constants(0.1, 1.0, 9.0)
    assert (b.c - a.c) / (b.C - a.C) == pytest.approx(2.0)
    assert compute_constants(0.1, 1.0, 0.0).C == pytest.approx((1 + 8 * 1.4) / (2 * math.pi))


def test_f_example():
    z = f_eval(CFG, (0.5, 1.0))
    I, theta, u, v = step1_point(0.1, 0.5, 1.0)
    assert I == pytest.approx(1.899699, abs=1e-6)
    assert z == pytest.approx((u, v), abs=1e-12)
    assert z[0] == pytest.approx(0.777620, abs=1e-6)
    assert z @ z <= (1.0 + 0.1) / SQRT_PI
    assert z @ z == pytest.approx(0.604693, abs=1e-6)


def test_f_domain():
    with pytest.raises(DomainError):
        f_eval(CFG, (SQRT_PI, 1.0))


def test_f_r2_bound(rng):
    pts = np.column_stack([rng.uniform(0, SQRT_PI, 5000), rng.uniform(0, 2 * SQRT_PI, 5000)])
    z = f_eval(CFG, pts)
    assert np.all(np.sum(z**2, axis=1) <= (pts[:, 1] + 0.1) / SQRT_PI + 1e-12)


def test_j_eval_off_strip_example():
    p1 = np.array([-0.5, 1.0])  # in R1, above the strip
    b = np.array([0.5, 1.0])
    out = j_eval(CFG, p1, b)
    assert out[2:] == pytest.approx(f_eval(CFG, b), abs=1e-15)
    assert out[:2] == pytest.approx(double_spiral_eval(CFG.double_spiral, p1), abs=1e-15)


def test_j_eval_plateau_case():
    p1 = np.array([0.005, 0.0])
    b = np.array([0.3, 0.4])
    rec = j_record(CFG, p1, b)
    assert rec.y2[0] == pytest.approx(0.4 + SQRT_PI, abs=1e-15)
    assert rec.z2_sq[0] <= 2 + 0.1 / SQRT_PI
    sl = bounds_summary(bounds_check(CFG, rec))
    assert all(v["passed"] and v["min_slack"] > 0 for v in sl.values())


def test_off_strip_y2_trivial():
    p1 = np.array([[-0.5, 1.0]])
    b = np.array([[0.3, 1.7]])
    rec = j_record(CFG, p1, b)
    assert 0 < rec.y2[0] < SQRT_PI
    assert bounds_check(CFG, rec)["estimatez2second"][0] > 0


def test_inflated_record_fails_dot():
    p1 = np.array([[0.5, 0.0]])
    b = np.array([[0.3, 1.0]])
    rec = j_record(CFG, p1, b)
    bad = ChainRecord(rec.x1, rec.y2, rec.z1, 2 * rec.z2)
    summ = bounds_summary(bounds_check(CFG, bad))
    assert not summ["dot"]["passed"]
    assert summ["dot"]["min_slack"] < 0


@pytest.mark.parametrize("eps", [0.1, 0.05])
def test_main_bound_small_sample(eps):
    cfg = ChainConfig(eps)
    sampler = ChainSampler(cfg.model, domain_res=16, strip_nx=40, strip_ny=4, b_res=6,
                           n_random=5000)
    rep = verify_main_bound(cfg, sampler)
    assert rep.passed
    assert rep.sup_norm <= cfg.bound
    assert rep.first_violation is None


def test_main_bound_thread_independent():
    cfg = ChainConfig(0.05)
    sampler = ChainSampler(cfg.model, domain_res=12, b_res=5, n_random=3000)
    a = verify_main_bound(cfg, sampler, block=997, threads=1).as_dict()
    b = verify_main_bound(cfg, sampler, block=997, threads=3).as_dict()
    c = verify_main_bound(cfg, sampler, block=50_000, threads=1).as_dict()
    assert a == b == c


def test_j_eval_injective_on_random_sample():
    rng = np.random.Generator(np.random.PCG64(7))
    m = CFG.model
    n = 100_000
    p1 = np.concatenate([m.R2.uniform(rng, n // 2), m.R1.uniform(rng, n - n // 2)])
    b = Q_SQRT_PI.uniform(rng, n)
    out = j_eval(CFG, p1, b)
    assert len(cKDTree(out).query_pairs(1e-9)) == 0


def test_plan_kh_identity_grid():
    for eps in np.linspace(0.005, 0.1, 20):
        for T in np.linspace(0.34, 5, 20):
            p = plan_kh(eps, T)
            assert p.outer_bound == pytest.approx(10 * math.sqrt(eps) * T**2, rel=1e-12)
            assert p.in_domain


def test_plan_kh_example():
    p = plan_kh(0.01, 1.0)
    assert p.S == pytest.approx(0.1)
    assert p.R == pytest.approx(SQRT3 + 0.01 * p.c)
    assert p.outer_bound == pytest.approx(1.0, rel=1e-12)
    assert p.C_kh == pytest.approx(10 * math.sqrt(p.c))
    assert p.C_prime == pytest.approx(9 * p.c)


def test_plan_kh_rejects_small_T():
    with pytest.raises(ParameterError):
        plan_kh(0.1, 1 / 3)
    with pytest.raises(ParameterError):
        plan_kh(0.2, 1.0)


def test_plan_family_example():
    p = plan_family(0.1)
    assert p.S == pytest.approx(11.111111, abs=1e-6)
    assert p.R == pytest.approx(1.9245009, abs=1e-6)
    assert p.R == pytest.approx(SQRT3 / 0.9, rel=1e-15)
    assert p.domain_radii == pytest.approx((0.9, 10.0), rel=1e-14)
    assert p.target_radius_conjugated == pytest.approx(p.target_radii[1], rel=1e-12)
    assert p.in_domain


def test_plan_family_domain_everywhere():
    for eps in np.linspace(0.001, 0.1, 60):
        p = plan_family(eps)
        assert p.R > SQRT3
        assert p.R - SQRT3 == pytest.approx(SQRT3 * eps / (1 - eps), rel=1e-10)
        assert p.in_domain


def test_plan_family_range():
    with pytest.raises(ParameterError):
        plan_family(0.0)
    with pytest.raises(ParameterError):
        plan_family(0.2)


def test_uniform_constant_dominates():
    c0 = uniform_constant()
    for eps in (0.1, 0.05, 0.01):
        assert compute_constants(eps, 1.0, ChainConfig(eps).M).c <= c0 + 1e-15


def test_nesting_examples():
    rep = check_nesting([0.1, 0.05, 0.02])
    assert rep.passed
    assert all(p["nested"] for p in rep.pairs)
    with pytest.raises(UsageError):
        check_nesting([0.05, 0.1])


def test_nesting_probe_witness():
    rep = check_nesting([0.1, 0.05, 0.02, 0.01], probes=[(0.999, 50.0)])
    w = rep.witnesses[0]["witness"]
    # the open domain needs 1 - eps > 0.999 strictly, so 0.001 itself is excluded
    assert w is not None and w < 0.001
    assert 1 - w > 0.999 and 1 / w > 50
