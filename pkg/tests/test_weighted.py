import math

import numpy as np
import pytest

from oracles import synthetic_a_root
from weakbellman.closed_form import b_boundary
from weakbellman.errors import DomainError, StencilError
from weakbellman.weighted import (
    HeavyHalfSplit,
    SlicePoint,
    WeightedSplit,
    beta,
    concavity_spot_check,
    diagnostics_hx3,
    diagnostics_main1,
    dp_weighted,
    dp_weighted_iter,
    elementary_f,
    elementary_f2,
    elementary_inequality_check,
    find_a,
    gamma_op,
    m_bound,
    main1_samples,
    normalize,
    r_statistic,
)

SMALL = (17, 17, 9)


def synthetic(x1, x3, x4):
    return x4 * np.minimum(1.0, 2 * x3)


@pytest.fixture(scope="module")
def q4_run():
    return list(dp_weighted_iter(4, grid=SMALL, iters=3))


def test_normalize_examples():
    assert normalize(0.5, -1, 1.0, 3.0, 1) == (SlicePoint(0.5, 1.0, 3.0), 1)
    assert normalize(0, -2, 2, 4, 2) == (SlicePoint(0.0, 0.5, 2.0), 2)
    with pytest.raises(DomainError):
        normalize(0, 0, 1, 1, 1)
    with pytest.raises(DomainError):
        normalize(2, -1, 1, 1, 1)


def test_split_validation():
    with pytest.raises(ValueError):
        WeightedSplit(0.5, 1.0, 0.0)
    with pytest.raises(ValueError):
        WeightedSplit(0.5, 0.0, 0.0, 0.0, 2.0, 2.0)
    light, heavy = HeavyHalfSplit(0.5, 0.5, 0.0, 4.0).children(np.array([0.0]), np.array([1.0]), np.array([3.0]))
    assert (light[3] + heavy[3])[0] / 2 == 3.0


def test_dp_examples(q4_run):
    V = q4_run[-1]
    assert V(0.0, 0.5, 1.0) >= 0.75 - 1e-12
    for n, Vn in enumerate(q4_run):
        for x1 in (0.0, 0.5, 1.0, 1.5):
            assert Vn(x1, x1, 1.0) == pytest.approx(b_boundary(x1, -1.0), abs=1e-12)
        if n >= 2:
            assert Vn(0.0, 0.5, 4.0) >= (2 * 4 - 1) / 4 - 1e-12


def test_r_monotone_in_iterations(q4_run):
    rs = [r_statistic(V)[0] for V in q4_run]
    assert rs == sorted(rs)
    assert rs[2] >= 3.5


def test_r_monotone_in_q():
    rs = [r_statistic(dp_weighted(q, grid=SMALL, iters=2))[0] for q in (2, 4, 8)]
    assert rs == sorted(rs)
    assert rs[0] >= 1.5


def test_r_unweighted_face_at_most_two():
    R, _ = r_statistic(dp_weighted(1, grid=SMALL, iters=2))
    assert R <= 2 + 1e-9


def test_threads_do_not_change_values():
    a = dp_weighted(4, grid=(9, 9, 5), iters=2, workers=1)
    b = dp_weighted(4, grid=(9, 9, 5), iters=2, workers=3)
    np.testing.assert_array_equal(a.values, b.values)


def test_beta_examples():
    assert beta(lambda a, b, c: 2.5, (0.0, 1.0, 4.0)) == pytest.approx(2.5, abs=1e-12)
    assert beta(lambda a, b, c: b, (0.0, 1.2, 4.0)) == pytest.approx(0.75 * 1.2, abs=1e-9)
    with pytest.raises(DomainError):
        beta(lambda a, b, c: b, (0.0, 1.0, 1.5))


def test_gamma_examples():
    x = (0.1, 1.0, 3.0)
    assert gamma_op(lambda a, b, c: 2 * b - 3 * c + 1, x) == pytest.approx(0.0, abs=1e-6)
    assert gamma_op(lambda a, b, c: b * b, x) == pytest.approx(2.0, abs=1e-6)
    assert gamma_op(lambda a, b, c: c * c, x) == pytest.approx(2 * 9.0, abs=1e-5)
    with pytest.raises(StencilError):
        gamma_op(lambda a, b, c: b, (1.0, 1.0, 3.0))


def test_find_a_matches_symbolic_root():
    exact = float(synthetic_a_root())
    assert exact == pytest.approx(3 / 28, abs=1e-15)
    for x4 in (2.0, 4.0, 8.0):
        assert abs(find_a(synthetic, x4).root - exact) <= 1e-9
        assert abs(find_a(synthetic, x4, lo=0.05, hi=0.4).root - exact) <= 1e-9


def test_find_a_no_crossing():
    rep = find_a(lambda a, b, c: 0.0 * b, 4.0)
    assert not rep.crossing and rep.root is None
    assert rep.to_json()["a_root"] is None


def test_m_bound_branches():
    assert m_bound(0.0, 8.0, 2.0, 0.25) == pytest.approx(8.0 / (16 * 0.25))
    assert m_bound(10.0, 8.0, 2.0, 0.25) == 1.0


def test_main1_linear_v_passes():
    samples = main1_samples(16)
    rep = diagnostics_main1(lambda a, b, c: 0.3 * b + 0.1 * c + a, samples, R=1.0, steps=256)
    assert rep["passed"] == rep["total"] == len(samples)
    assert all(abs(r["lhs"]) < 1e-8 for r in rep["samples"])
    at_zero = next(r for r in rep["samples"] if r["x1"] == 0.0)
    assert at_zero["rhs"] == pytest.approx(8 * at_zero["x3"] / at_zero["x4"])
    with pytest.raises(DomainError):
        diagnostics_main1(synthetic, [SlicePoint(1.0, 1.0, 4.0)], R=1.0)


def test_hx3_uses_crossing_roots_only():
    roots = [find_a(synthetic, 4.0), find_a(lambda a, b, c: 0.0 * b, 8.0)]
    rep = diagnostics_hx3(synthetic, 2.0, 8, roots, h=0.005, steps=512)
    assert rep["total"] > 0 and all(r["x4"] == 4.0 for r in rep["samples"])


def test_elementary_inequality():
    rep = elementary_inequality_check()
    assert rep["passed"]
    assert rep["f4"] == pytest.approx(32 * math.log(2) - 16 - 4 * math.log(4), abs=1e-12)
    assert rep["f4"] == pytest.approx(0.635532, abs=1e-6)
    assert float(elementary_f2(4.0)) == 0.25
    assert float(elementary_f(1e6)) > 0
    with pytest.raises(ValueError):
        elementary_inequality_check(tmin=1.0)


def test_concavity_report_shape(q4_run):
    rep = concavity_spot_check(q4_run[-1], 4, n=200)
    assert rep["samples"] == 200 and 0 <= rep["violation_fraction"] <= 1
    assert concavity_spot_check(q4_run[0].with_values(np.ones_like(q4_run[0].values)), 4, n=50)["violations"] == 0
