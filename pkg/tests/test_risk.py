import math

import numpy as np
import pytest

from pioracle.losses import SelectionRule
from pioracle.model import ParamVector, Permutation
from pioracle.permutation_engine import enumerate_exact
from pioracle.risk import (
    LOWER, UPPER, BenjaminiHochberg, ChiSquareTest, IdentityEstimator, JamesStein, NaiveSign, baseline_rules,
    benjamini_hochberg, build_oracle, compare_risks, estimate_risk, mc_upper_approx, paired_difference,
    subset_lower_bound,
)


class _Truth:
    problem = "estimate"
    name = "truth"

    def __init__(self, theta):
        self.theta = theta

    def decide_batch(self, Z, seed=0):
        return np.broadcast_to(self.theta.values, np.shape(Z)).copy()


def test_truth_revealing_estimator_zero():
    theta = ParamVector([1.0, -2.0, 0.0])
    rep = estimate_risk(theta, _Truth(theta), "estimate", draws=500, seed=1)
    assert rep.estimate == 0.0 and rep.std_error == 0.0


def test_identity_estimator_risk():
    theta = ParamVector([0.0, 1.0, 2.0, 3.0])
    rep = estimate_risk(theta, IdentityEstimator(), "estimate", draws=20_000, seed=2)
    assert abs(rep.estimate - 4.0) < 3 * rep.std_error
    assert rep.side_channels["avg_selected"][0] == 4


def test_bh_example():
    assert benjamini_hochberg([0.001, 0.8, 0.9], 0.05).tolist() == [[True, False, False]]
    assert benjamini_hochberg([0.01, 0.02, 0.03], 0.05).all()


def test_chi_square_null_rate():
    rep = estimate_risk(ParamVector(np.zeros(3)), ChiSquareTest(3, 0.05), "global", draws=100_000, seed=3)
    assert 0.045 <= rep.side_channels["reject_rate"][0] <= 0.055


def test_james_stein_refuses_small_n():
    with pytest.raises(ValueError):
        JamesStein(2)
    assert "james_stein" not in baseline_rules(2)
    with pytest.raises(ValueError):
        baseline_rules(2, names=["james_stein"])


def test_baselines_equivariant(rng):
    g = Permutation([2, 0, 3, 1])
    Z = rng.normal(size=(50, 4))
    for rule in baseline_rules(4).values():
        a = rule.decide_batch(Z)
        b = rule.decide_batch(Z[:, g.mapping])
        if np.ndim(a) == 1:
            assert np.array_equal(a, b)
        else:
            assert np.allclose(np.asarray(a)[:, g.mapping], b, atol=1e-12)


def test_seed_determinism():
    theta = ParamVector([0.0, 0.0, 2.0])
    rule = build_oracle(theta, enumerate_exact(3), "fdr", 0.2, calibration_draws=2000, seed=4)
    a = estimate_risk(theta, rule, "fdr", draws=2000, seed=5)
    b = estimate_risk(theta, rule, "fdr", draws=2000, seed=5)
    assert a.to_record() == b.to_record()
    assert np.array_equal(a.losses, b.losses)


def test_loss_mismatch_rejected():
    with pytest.raises(ValueError):
        estimate_risk(ParamVector([0.0, 1.0]), BenjaminiHochberg(), "estimate", draws=100)


def test_pi_oracle_orbit_risk():
    theta = ParamVector([0.0, 1.0, 3.0])
    ens = enumerate_exact(3)
    g = Permutation([2, 0, 1])
    rule = build_oracle(theta, ens, "estimate")
    rule_g = build_oracle(theta.permuted(g), ens, "estimate")
    a = estimate_risk(theta, rule, draws=20_000, seed=6)
    b = estimate_risk(theta.permuted(g), rule_g, draws=20_000, seed=7)
    assert abs(a.estimate - b.estimate) <= 2 * math.hypot(a.std_error, b.std_error)


def test_subset_full_group_matches_exact():
    theta = ParamVector([0.0, 1.0, 3.0])
    lb = subset_lower_bound(theta, 6, "estimate", draws=5000, seed=8)
    assert lb.ensemble_mode == "exact" and lb.bound_direction == LOWER
    ub = mc_upper_approx(theta, 6, "estimate", draws=5000, seed=8)
    assert ub.bound_direction == UPPER
    exact = estimate_risk(theta, build_oracle(theta, enumerate_exact(3), "estimate"), draws=20_000, seed=9)
    for rep in (lb, ub):
        assert abs(rep.estimate - exact.estimate) <= 2 * math.hypot(rep.std_error, exact.std_error)


def test_sandwich_estimation():
    theta = ParamVector([0.0, 0.5, 1.5, 3.0])
    exact = estimate_risk(theta, build_oracle(theta, enumerate_exact(4), "estimate"), draws=20_000, seed=10)
    lb = subset_lower_bound(theta, 3, "estimate", draws=20_000, seed=10)
    ub = mc_upper_approx(theta, 3, "estimate", draws=20_000, seed=10)
    assert lb.estimate <= exact.estimate + 2 * math.hypot(lb.std_error, exact.std_error)
    assert exact.estimate <= ub.estimate + 2 * math.hypot(ub.std_error, exact.std_error)


def test_compare_risks_common_draws():
    theta = ParamVector([0.0, 2.0, 4.0])
    reps = compare_risks(theta, {"id": IdentityEstimator(), "js": JamesStein(3)}, "estimate", draws=3000, seed=11)
    diff, se = paired_difference(reps["js"], reps["id"])
    assert se > 0 and np.isfinite(diff)


def test_naive_sign_labels():
    lab = NaiveSign(1.0).decide_batch([[2.0, -3.0, 0.5]])
    assert lab.tolist() == [[1, -1, 0]]


def test_selection_side_channels():
    theta = ParamVector([0.0, 1.0, 2.0])
    rep = estimate_risk(theta, IdentityEstimator(SelectionRule.argmax()), draws=1000, seed=12)
    assert rep.side_channels["avg_selected"][0] == 1.0
    assert rep.side_channels["degenerate_rate"][0] == 0.0
