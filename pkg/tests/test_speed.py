import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwspeed.distributions import (
    ConductanceLaw,
    EpsilonMixture,
    OffspringLaw,
    PreconditionError,
)
from gwspeed.speed import (
    Estimate,
    agree,
    continuity_check,
    f_constant,
    f_degree,
    hat_survival_oracle,
    hat_survival_probability,
    monotone_toward,
    speed_conductance_formula,
    speed_invariant_formula,
    speed_lln,
    speed_on_pruned,
    stationarity_check,
    theorem1_check,
)

from conftest import within

NU = OffspringLaw.from_pairs([(1, 0.5), (2, 0.5)])
BINARY = OffspringLaw.point_mass(2)
UNIT = ConductanceLaw.point_mass(1.0)
TWO = ConductanceLaw.from_pairs([(0.5, 0.5), (2.0, 0.5)])


def test_estimate_helpers():
    a = Estimate(0.5, 0.01, 10, "lln", samples=np.zeros(3))
    assert a.ci == pytest.approx((0.47, 0.53))
    d = a.to_dict()
    assert "samples" not in d and d["ci_low"] == pytest.approx(0.47)
    assert agree(a, Estimate(0.54, 0.01, 10, "lln"))
    assert not agree(a, Estimate(0.56, 0.01, 10, "lln"))


def test_monotone_toward():
    assert monotone_toward([0.3, 0.2, 0.1], [0.01] * 3, 0.0)
    assert monotone_toward([0.3, 0.31, 0.1], [0.01] * 3, 0.0)
    assert not monotone_toward([0.1, 0.3], [0.01] * 2, 0.0)


# -- preconditions --------------------------------------------------------------------------
def test_estimators_reject_bad_offspring():
    sub = OffspringLaw.from_probs([0.5, 0.5])
    leafy = OffspringLaw.from_probs([0.1, 0.0, 0.9])
    for law in (sub, leafy):
        with pytest.raises(PreconditionError):
            speed_lln(law, UNIT, 10, 1)
        with pytest.raises(PreconditionError):
            speed_conductance_formula(law, UNIT, replicas=1)


def test_formula_estimators_need_ellipticity():
    mix = EpsilonMixture(UNIT, 0.2, 0.0)
    with pytest.raises(PreconditionError):
        speed_conductance_formula(NU, mix, replicas=2)
    with pytest.raises(PreconditionError):
        speed_invariant_formula(NU, mix, replicas=2)


# -- LLN -----------------------------------------------------------------------------------------
def test_lln_one_plus_two():
    est = speed_lln(NU, UNIT, 50000, 50, seed=3)
    assert within(est.value, 1 / 6, est.stderr)
    assert 0 <= est.stderr and -1 <= est.value <= 1


def test_lln_scale_invariant():
    a = speed_lln(NU, TWO, 5000, 8, seed=1)
    b = speed_lln(NU, ConductanceLaw.from_pairs([(1.0, 0.5), (4.0, 0.5)]), 5000, 8, seed=1)
    assert np.array_equal(a.samples, b.samples)
    c = speed_lln(NU, ConductanceLaw.point_mass(2.0), 5000, 8, seed=1)
    assert np.array_equal(c.samples, speed_lln(NU, UNIT, 5000, 8, seed=1).samples)


def test_lln_subcritical_cluster_is_zero():
    est = speed_lln(NU, EpsilonMixture(UNIT, 0.5, 0.0), 100, 3)
    assert est.value == 0.0 and est.stderr == 0.0


def test_lln_burn_in_validation():
    with pytest.raises(ValueError):
        speed_lln(NU, UNIT, 10, 1, burn_in=10)


# -- conductance formula -----------------------------------------------------------------------
def test_conductance_formula_binary():
    est = speed_conductance_formula(BINARY, UNIT, replicas=20)
    assert est.value == pytest.approx(1 / 3, abs=1e-4)
    assert est.stderr < 1e-10


def test_conductance_formula_scaling():
    a = speed_conductance_formula(NU, EpsilonMixture(TWO, 0.2, 0.1), replicas=200, seed=2)
    scaled = ConductanceLaw.from_pairs([(1.5, 0.5), (6.0, 0.5)])
    b = speed_conductance_formula(NU, EpsilonMixture(scaled, 0.2, 0.3), replicas=200, seed=2)
    np.testing.assert_allclose(a.samples, b.samples, rtol=1e-10, atol=1e-12)


def test_conductance_formula_vs_lln():
    f = speed_conductance_formula(NU, TWO, replicas=2000, seed=5)
    lln = speed_lln(NU, TWO, 50000, 40, seed=6)
    assert agree(f, lln)


# -- invariant-measure formula ------------------------------------------------------------------
def test_invariant_weights_average_one():
    est = speed_invariant_formula(NU, EpsilonMixture(TWO, 0.2, 0.1), M=16, replicas=4000, seed=1)
    w, se = est.extra["weight_mean"], est.extra["weight_stderr"]
    assert within(w, 1.0, se)


def test_invariant_vs_lln_unit():
    est = speed_invariant_formula(NU, UNIT, M=1024, replicas=4000, seed=4)
    assert within(est.value, 1 / 6, est.stderr)


def test_invariant_m_stability():
    a = speed_invariant_formula(NU, UNIT, M=512, replicas=3000, seed=8)
    b = speed_invariant_formula(NU, UNIT, M=1024, replicas=3000, seed=9)
    assert agree(a, b)
    assert b.extra["unstable_fraction"] <= 0.05


def test_invariant_plain_increment_matches_rao_blackwell():
    a = speed_invariant_formula(BINARY, UNIT, M=64, replicas=3000, seed=2, rao_blackwell=False)
    b = speed_invariant_formula(BINARY, UNIT, M=64, replicas=300, seed=2)
    assert within(a.value, 1 / 3, a.stderr)
    assert b.value == pytest.approx(1 / 3, abs=1e-12)


# -- hat survival ---------------------------------------------------------------------------------
def test_hat_survival_examples():
    assert hat_survival_probability(NU, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert hat_survival_probability(NU, 0.5) == 0.0
    assert hat_survival_probability(NU, 0.2) == pytest.approx(0.859375, abs=1e-12)


def test_hat_survival_by_hand():
    # root degree 2 or 3 with probability 1/2, q = 3/8, kept edges j ~ Bin(k, 0.8)
    q, total = 0.375, 0.0
    for k in (2, 3):
        for j in range(k + 1):
            pj = math.comb(k, j) * 0.8**j * 0.2 ** (k - j)
            total += 0.5 * pj * j * (1 - q**j) / (0.8 * k)
    assert hat_survival_probability(NU, 0.2) == pytest.approx(total, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3))
def test_hat_survival_range_and_monotone(ws):
    total = sum(ws)
    law = OffspringLaw.from_probs([0.0] + [w / total for w in ws])
    values = [hat_survival_probability(law, a) for a in np.linspace(0, 1, 21)]
    assert values[0] == pytest.approx(1.0, abs=1e-12)
    assert all(0.0 <= v <= 1.0 for v in values)
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_hat_survival_oracle_small():
    est = hat_survival_oracle(NU, 0.2, TWO, replicas=20000, seed=1)
    assert within(est.value, 0.859375, est.stderr)
    deeper = hat_survival_oracle(NU, 0.2, UNIT, replicas=5000, depth=4, seed=2)
    assert within(deeper.value, 0.859375, deeper.stderr)


# -- conditioned cluster ---------------------------------------------------------------------------
def test_pruned_alpha_zero_equals_lln():
    a = speed_on_pruned(NU, 0.0, TWO, 3000, 6, seed=4)
    b = speed_lln(NU, TWO, 3000, 6, seed=4)
    assert np.array_equal(a.samples, b.samples)


def test_pruned_samplers_agree():
    a = speed_on_pruned(NU, 0.2, UNIT, 20000, 40, seed=1)
    b = speed_on_pruned(NU, 0.2, UNIT, 20000, 40, seed=2, sampler="rejection")
    assert agree(a, b)


def test_pruned_slower_than_unthinned():
    pruned = speed_on_pruned(NU, 0.2, UNIT, 50000, 40, seed=1)
    full = speed_lln(NU, UNIT, 50000, 40, seed=3)
    assert pruned.value < full.value - 3 * math.hypot(pruned.stderr, full.stderr)


def test_pruned_errors():
    with pytest.raises(PreconditionError):
        speed_on_pruned(NU, 0.5, UNIT, 100, 2)
    with pytest.raises(ValueError):
        speed_on_pruned(NU, 0.2, UNIT, 100, 2, sampler="other")


# -- limit check --------------------------------------------------------------------------------------
def test_limit_check_subcritical_target_zero():
    rep = theorem1_check(NU, 0.5, UNIT, [0.2, 0.05], steps=20000, replicas=20, seed=1)
    assert rep.target == 0.0 and rep.pruned is None
    v = [e.value for e in rep.estimates]
    assert v[1] < v[0]
    assert rep.monotone
    assert len(list(rep.rows())) == 2


def test_limit_check_grid_validation():
    with pytest.raises(PreconditionError):
        theorem1_check(NU, 0.2, UNIT, [0.05, 0.1], steps=10, replicas=1)
    with pytest.raises(PreconditionError):
        theorem1_check(NU, 0.2, UNIT, [0.1, 0.0], steps=10, replicas=1)


def test_limit_check_time_budget_flags_incomplete():
    rep = theorem1_check(NU, 0.2, UNIT, [0.2, 0.1], steps=2000, replicas=4, seed=1,
                         time_budget=0.0)
    assert not rep.complete and not rep.passed and rep.estimates == []
    d = rep.to_dict()
    assert d["complete"] is False and d["target"] == rep.target


# -- continuity ---------------------------------------------------------------------------------------
def test_continuity_constant_sequence():
    rep = continuity_check(NU, [TWO, TWO], TWO, replicas=200, seed=1)
    assert rep.deviations == [0.0, 0.0] and rep.passed


def test_continuity_scale_copies():
    a = ConductanceLaw.from_pairs([(0.5, 0.5), (2.0, 0.5)], delta=0.25)
    b = ConductanceLaw.from_pairs([(1.0, 0.5), (4.0, 0.5)], delta=0.25)
    rep = continuity_check(NU, [b], a, replicas=200, seed=1)
    assert abs(rep.deviations[0]) < 1e-12


def test_continuity_delta_mismatch():
    a = ConductanceLaw.from_pairs([(0.5, 0.5), (2.0, 0.5)])
    with pytest.raises(PreconditionError, match="common delta"):
        continuity_check(NU, [a], UNIT, replicas=2)


# -- stationarity -----------------------------------------------------------------------------------------
def test_stationarity_constant_function():
    rep = stationarity_check(NU, EpsilonMixture(TWO, 0.2, 0.1), {"const": f_constant},
                             replicas=500, seed=1)
    assert rep.invariance[0]["difference"] == 0.0
    assert rep.symmetry[0]["difference"] == 0.0 and rep.passed


def test_stationarity_degree_unit():
    rep = stationarity_check(NU, UNIT, {"degree": f_degree}, replicas=5000, seed=2)
    assert rep.passed
    (sym,) = rep.symmetry
    assert (sym["f"], sym["g"]) == ("degree", "1")
    assert within(rep.weight_mean, 1.0, rep.weight_stderr)
