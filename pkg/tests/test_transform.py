import json
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_weak_type
from weakbellman.dyadic import UNIT, DyadicInterval, HaarExpansion, StepFunction, haar_decompose, haar_reconstruct
from weakbellman.errors import MissingEpsilonError, NonPositiveWeightError, WitnessMismatch
from weakbellman.transform import (
    PM,
    SUB,
    A1Weight,
    EpsilonAssignment,
    TransformWitness,
    apply_transform,
    bellman_point,
    characteristic,
    level_set_measure,
    three_node_transform_witness,
    three_node_triple,
    replay_transform_witness,
    subordination_audit,
    weak_type_bruteforce,
    weak_type_ratio,
)

ONE = A1Weight.constant(1)
H = StepFunction.from_values([-1, 1])
H_EXP = haar_decompose(H)
QUANT = [F(c) for c in (0, "1/2", "-1/2", 1, -1, 2, -2)]
LAMBDAS = [F(1, 2), F(1), F(2)]


def test_epsilon_modes():
    with pytest.raises(ValueError):
        EpsilonAssignment({UNIT: F(1, 2)}, PM)
    with pytest.raises(ValueError):
        EpsilonAssignment({UNIT: 2}, SUB)
    sub = EpsilonAssignment({}, SUB)
    assert sub.get(UNIT, needed=True) == 0
    with pytest.raises(MissingEpsilonError):
        apply_transform(H_EXP, EpsilonAssignment({}, PM), 0)
    e = EpsilonAssignment({UNIT: 1, DyadicInterval(1, 1): -1}, PM)
    assert EpsilonAssignment.from_json(e.to_json(), PM).entries == e.entries


def test_apply_transform_examples():
    f = StepFunction.from_values([3, -1, 2, 2])
    e = haar_decompose(f)
    assert apply_transform(e, EpsilonAssignment.constant(1, 2), e.mean) == f
    ind = haar_decompose(StepFunction.from_values([0, 1]))
    assert apply_transform(ind, EpsilonAssignment.constant(-1, 1), F(1, 2)).values == (1, 0)
    t = three_node_triple(0, F(1, 2), 2)
    assert t.psi.values == (-2, -1, 0, -1)


def test_third_cell_value_pins_orientation():
    for x1, x3 in [(F(0), F(1, 2)), (F(1, 3), F(1)), (F(-1, 2), F(3, 4))]:
        t = three_node_triple(x1, x3, 3)
        assert t.psi.values[2] == 2 * x3 + x1 - 1
        assert t.phi.values[1:3] == (0, 0)
        assert t.w.w.values == (1, 5, 5, 1)


def test_characteristic_examples():
    assert characteristic(A1Weight.constant(5, 3)) == 1
    assert characteristic(three_node_triple(0, F(1, 2), 2).w) == 2
    for q in (1, 2, 4, 8, F(7, 3)):
        assert characteristic(three_node_triple(0, F(1, 2), q).w) == q
    with pytest.raises(NonPositiveWeightError):
        A1Weight(StepFunction.from_values([1, 0]))


def test_level_set_examples():
    assert level_set_measure(StepFunction.constant(F(0)), 0, ONE) == 1
    t = three_node_triple(0, F(1, 2), 2)
    assert level_set_measure(t.psi, 0, t.w) == F(3, 4)
    assert level_set_measure(H, 2, ONE) == 0


@given(st.lists(st.fractions(-4, 4, max_denominator=4), min_size=8, max_size=8),
       st.lists(st.fractions(F(1, 4), 4, max_denominator=4), min_size=8, max_size=8),
       st.lists(st.fractions(F(1, 4), 4, max_denominator=4), min_size=8, max_size=8))
@settings(max_examples=50, deadline=None)
def test_level_set_monotone_and_additive(psi, w1, w2):
    psi = StepFunction.from_values(psi)
    a, b = A1Weight(StepFunction.from_values(w1)), A1Weight(StepFunction.from_values(w2))
    lams = sorted(set(psi.values))
    meas = [level_set_measure(psi, lam, a) for lam in lams]
    assert all(x >= y for x, y in zip(meas, meas[1:]))
    ab = A1Weight(a.w + b.w)
    assert level_set_measure(psi, 0, ab) == level_set_measure(psi, 0, a) + level_set_measure(psi, 0, b)
    assert characteristic(a) >= 1


def test_bellman_point_examples():
    for x1, x3, x4 in [(F(0), F(1, 2), F(2)), (F(1, 4), F(1), F(5)), (F(-1), F(3, 2), F(1))]:
        t = three_node_triple(x1, x3, x4)
        assert bellman_point(t.phi, t.psi, t.w).as_tuple() == (x1, -1, x3, x4, 1)
    c = StepFunction.constant(F(-3, 2))
    assert bellman_point(c, c, ONE).as_tuple() == (F(-3, 2), F(-3, 2), F(3, 2), 1, 1)
    assert bellman_point(H, H - 1, ONE).as_tuple() == (0, -1, 1, 1, 1)


def test_degenerate_triple():
    t = three_node_triple(1, 1, 1)
    assert set(t.w.w.values) == {1}
    assert characteristic(t.w) == 1
    assert bellman_point(t.phi, t.psi, t.w).as_tuple() == (1, -1, 1, 1, 1)


def test_weak_type_ratio_examples():
    t = three_node_triple(0, F(1, 2), 2)
    assert weak_type_ratio(t.phi_expansion, t.eps, -1, t.w, 1) == F(3, 2)
    for q in (3, 8, F(9, 2)):
        t = three_node_triple(0, F(1, 2), q)
        assert weak_type_ratio(t.phi_expansion, t.eps, -1, t.w, 1) == (2 * F(q) - 1) / 2
    assert weak_type_ratio(H_EXP, EpsilonAssignment.constant(1, 1), 0, ONE, 1) == F(1, 2)
    with pytest.raises(ZeroDivisionError):
        weak_type_ratio(HaarExpansion(F(0), {}, 1), EpsilonAssignment({}, SUB), 0, ONE, 1)


@given(st.dictionaries(st.sampled_from(list(DyadicInterval(k, m) for k in range(3) for m in range(2 ** k))),
                       st.fractions(-1, 1, max_denominator=8), min_size=1))
@settings(max_examples=40, deadline=None)
def test_subordination_audit_sub(eps):
    phi = HaarExpansion(F(0), {J: F(J.level + J.position + 1, 3) for J in eps}, 3)
    assert subordination_audit(phi, EpsilonAssignment(eps, SUB))


def test_bruteforce_matches_naive_enumeration():
    fast = weak_type_bruteforce(2)
    violations, worst = naive_weak_type(2, QUANT, LAMBDAS)
    assert fast["violations"] == violations == 0
    assert fast["worst_ratio"] == worst == F(3, 4)
    small = [F(0), F(1), F(-1)]
    fast = weak_type_bruteforce(2, coeffs=small, lambdas=[F(1)])
    assert (fast["violations"], fast["worst_ratio"]) == naive_weak_type(2, small, [F(1)])


def test_bruteforce_rejects_one_sided_sets():
    with pytest.raises(ValueError):
        weak_type_bruteforce(1, coeffs=[0, 1])


def test_transform_witness_replay(tmp_path):
    w = three_node_transform_witness(0, F(1, 2), 4)
    report = replay_transform_witness(TransformWitness.from_json(json.loads(json.dumps(w.to_json()))))
    assert report["measure"] == "7/4" and report["characteristic"] == "4/1" and report["ratio"] == "7/2"
    bad = w.to_json()
    bad["claims"]["ratio"] = "4/1"
    with pytest.raises(WitnessMismatch) as exc:
        replay_transform_witness(TransformWitness.from_json(bad))
    assert exc.value.report["ok"] is False
