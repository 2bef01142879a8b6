"""End-to-end acceptance checks, one per criterion, each printing a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from pioracle import cli
from pioracle.losses import (
    Estimate, GlobalTest, MultiTest, SelectionRule, SignClassify, dir_fdp, dir_fnp, fdp, fnp, global_loss,
    selective_sq_loss, selective_sq_loss_batch,
)
from pioracle.model import ParamVector, Permutation, apply_permutation
from pioracle.oracles import (
    calibrate_global, global_decide, lr_statistic, mt_rule_at_lambda, selective_estimate, sign_rule_at_lambda,
)
from pioracle.permutation_engine import enumerate_exact, posterior_weights
from pioracle.posterior import summarize_data
from pioracle.risk import (
    BenjaminiHochberg, ChiSquareTest, IdentityEstimator, JamesStein, build_oracle, estimate_risk,
    mc_upper_approx, paired_difference, subset_lower_bound,
)
from pioracle.simple_rule import gap_estimate, two_group

from conftest import (
    all_mt_actions, all_sign_actions, brute_dir_fdp, brute_dir_fnp, brute_fdp, brute_fnp, brute_log_marginal,
    brute_posterior, expected_loss, record_criterion,
)


def _report(number, ok, detail):
    record_criterion(number, ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def _hypot_se(*reports):
    return math.sqrt(sum(r.std_error**2 for r in reports))


# ------------------------------------------------------------------ 1
def test_criterion_1_bayes_optimality():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst, dominated = 0.0, 0
    for k in range(200):
        n = (2, 3, 4)[k % 3]
        theta = rng.choice([-2.0, -0.5, 0.0, 0.0, 1.0, 2.5], size=n)
        z = rng.normal(theta, 1.0)
        lam = float(np.exp(rng.uniform(np.log(0.05), np.log(20))))
        post = brute_posterior(list(theta), list(z))
        summ = summarize_data(ParamVector(theta), enumerate_exact(n), z)

        def mt_risk(a):
            return expected_loss(post, lambda xi, act: brute_fdp(xi, act) + lam * brute_fnp(xi, act), a)

        def sign_risk(a):
            return expected_loss(post, lambda xi, act: brute_dir_fdp(xi, act) + lam * brute_dir_fnp(xi, act), a)

        mt_gap = mt_risk(mt_rule_at_lambda(summ, lam).reject.astype(int).tolist()) - min(map(mt_risk, all_mt_actions(n)))
        sg_gap = (sign_risk(sign_rule_at_lambda(summ, lam).labels.tolist())
                  - min(map(sign_risk, all_sign_actions(n))))
        worst = max(worst, abs(mt_gap), abs(sg_gap))

        sel = [SelectionRule.all(), SelectionRule.argmax(), SelectionRule.topk(2)][k % 3].select(z)
        est = selective_estimate(summ).values
        xis = np.array([xi for xi, _ in post])
        ws = np.array([w for _, w in post])

        def est_risk(a):
            return float(ws @ selective_sq_loss_batch(xis, a, sel))

        base = est_risk(est)
        dominated += sum(est_risk(est + rng.normal(0, 1, n)) < base - 1e-12 for _ in range(100))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and dominated == 0 and elapsed < 120
    _report(1, ok, f"200 instances: max |rule - brute min| = {worst:.2e}, dominating perturbations = {dominated}, "
                   f"{elapsed:.1f}s")


# ------------------------------------------------------------------ 2
def test_criterion_2_equivariance():
    rng = np.random.default_rng(202)
    failures = []
    for k in range(100):
        n = int(rng.integers(1, 6))
        theta = ParamVector(rng.choice([-1.5, 0.0, 0.0, 1.0, 3.0], size=n))
        z = rng.normal(theta.values, 1.0)
        g = Permutation.random(n, rng)
        gz = apply_permutation(g, z)
        ens = enumerate_exact(n)
        lam = float(np.exp(rng.uniform(-2, 2)))
        s, sg = summarize_data(theta, ens, z), summarize_data(theta, ens, gz)

        if mt_rule_at_lambda(sg, lam) != mt_rule_at_lambda(s, lam).permuted(g):
            failures.append((k, "mt"))
        if sign_rule_at_lambda(sg, lam) != sign_rule_at_lambda(s, lam).permuted(g):
            failures.append((k, "sign"))
        if not np.allclose(selective_estimate(sg).values, selective_estimate(s).permuted(g).values,
                           rtol=1e-12, atol=1e-12):
            failures.append((k, "estimate"))
        if not math.isclose(lr_statistic(theta, ens, gz), lr_statistic(theta, ens, z), rel_tol=1e-12):
            failures.append((k, "lr"))
        if k % 10 == 0 and np.any(theta.values != 0):
            orc = calibrate_global(theta, ens, 0.05, draws=2000, seed=k)
            if global_decide(orc, gz) != global_decide(orc, z):
                failures.append((k, "global"))

        # losses: the relabelling identity
        t = rng.choice([-1.0, 0.0, 2.0], size=n)
        gt = apply_permutation(g, t)
        rej = MultiTest(rng.integers(0, 2, n))
        lab = SignClassify(rng.choice([1, -1, 0], size=n))
        est = Estimate(rng.normal(size=n))
        exact_pairs = [
            (fdp(gt, rej.permuted(g)), fdp(t, rej)), (fnp(gt, rej.permuted(g)), fnp(t, rej)),
            (dir_fdp(gt, lab.permuted(g)), dir_fdp(t, lab)), (dir_fnp(gt, lab.permuted(g)), dir_fnp(t, lab)),
            (global_loss(gt, GlobalTest(0)), global_loss(t, GlobalTest(0))),
        ]
        if any(a != b for a, b in exact_pairs):
            failures.append((k, "loss"))
        for rule in (SelectionRule.all(), SelectionRule.argmax(), SelectionRule.topk(2)):
            lhs = selective_sq_loss(gz, gt, est.permuted(g), rule)
            if not math.isclose(lhs, selective_sq_loss(z, t, est, rule), rel_tol=1e-12, abs_tol=1e-12):
                failures.append((k, "selective loss"))
    _report(2, not failures, f"100 (theta, z, g) triples, n <= 5: {len(failures)} violations {failures[:3]}")


# ------------------------------------------------------------------ 3
def test_criterion_3_orbit_constancy():
    rng = np.random.default_rng(303)
    problems = ("estimate", "fdr", "sign", "global")
    rows = []
    for k in range(20):
        n = int(rng.integers(3, 6))
        problem = problems[k % 4]
        theta = ParamVector(rng.choice([-1.0, 0.0, 0.0, 1.5, 3.0], size=n))
        if problem == "global" and not theta.values.any():
            theta = ParamVector(np.r_[2.0, theta.values[1:]])
        g = Permutation.random(n, rng)
        ens = enumerate_exact(n)
        # common random numbers: same seed for calibration and risk on both sides
        reps = []
        for th in (theta, theta.permuted(g)):
            rule = build_oracle(th, ens, problem, alpha=0.1, calibration_draws=20_000, seed=k)
            reps.append(estimate_risk(th, rule, problem, draws=10_000, seed=1000 + k))
        diff = reps[0].estimate - reps[1].estimate
        rows.append((problem, diff, _hypot_se(*reps)))
    bad = [(p, d, s) for p, d, s in rows if abs(d) > 2 * s]
    worst = max(abs(d) / s if s > 0 else 0.0 for _, d, s in rows)
    _report(3, not bad, f"20 (theta, g) pairs at 1e4 draws: max |diff|/SE = {worst:.2f}, outside 2 SE: {len(bad)}")


# ------------------------------------------------------------------ 4
def test_criterion_4_calibration():
    lines, ok = [], True
    sparse = [(3, 0, 0, 0, 0), (2, 2, 0, 0, 0), (1.5, 0, 0, 0, 0), (4, 4, 4, 0, 0), (-2, 3, 0, 0, 0)]
    ens5 = enumerate_exact(5)
    null_rule_rates = []
    for i, th in enumerate(sparse):
        theta = ParamVector(th)
        orc = calibrate_global(theta, ens5, 0.05, draws=100_000, seed=40 + i)
        # fresh null draws, independent of the calibration sample
        rep = estimate_risk(ParamVector(np.zeros(5)), _FixedGlobal(orc), "global", draws=100_000, seed=400 + i)
        rate = rep.side_channels["reject_rate"][0]
        null_rule_rates.append(rate)
        ok &= abs(rate - 0.05) <= 0.01
    lines.append("global null rates " + ", ".join(f"{r:.4f}" for r in null_rule_rates))

    theta = ParamVector([0, 0, 0, 0, 4, 4, 4, 4])
    orc = build_oracle(theta, enumerate_exact(8), "fdr", 0.1, calibration_draws=100_000, seed=44)
    fdr = estimate_risk(theta, orc, "fdr", draws=100_000, seed=45).side_channels["fdr"][0]
    ok &= abs(fdr - 0.1) <= 0.02
    lines.append(f"FDR {fdr:.4f} (lambda* {orc.lambda_star:.4g}, {orc.status})")

    theta = ParamVector([-1, -1, -1, -1, 1, 1, 1, 1])
    orc = build_oracle(theta, enumerate_exact(8), "sign", 0.1, calibration_draws=100_000, seed=46)
    dfdr = estimate_risk(theta, orc, "sign", draws=100_000, seed=47).side_channels["dir_fdr"][0]
    ok &= abs(dfdr - 0.1) <= 0.02
    lines.append(f"dir-FDR {dfdr:.4f} (lambda* {orc.lambda_star:.4g}, {orc.status})")
    _report(4, ok, "; ".join(lines))


class _FixedGlobal:
    """Wrap a calibrated global oracle so it can be scored at a different theta."""

    problem = "global"
    name = "global_oracle"

    def __init__(self, oracle):
        self.oracle = oracle

    def decide_batch(self, Z, seed=0):
        return self.oracle.decide_batch(Z, seed)


# ------------------------------------------------------------------ 5
def test_criterion_5_dominance():
    cases = {4: ParamVector([0.0, 0.0, 1.5, 3.0]), 6: ParamVector([0.0, 0.0, 0.0, 1.0, 2.5, 3.5])}
    lines, ok = [], True
    for n, theta in cases.items():
        ens = enumerate_exact(n)
        seed = 50 + n

        orc = build_oracle(theta, ens, "global", 0.05, calibration_draws=100_000, seed=seed)
        a = estimate_risk(theta, orc, "global", 10_000, seed)
        b = estimate_risk(theta, ChiSquareTest(n, 0.05), "global", 10_000, seed)
        d, se = paired_difference(a, b)
        ok &= d <= 2 * se
        lines.append(f"n={n} typeII oracle {a.estimate:.3f} vs chi2 {b.estimate:.3f}")

        orc = build_oracle(theta, ens, "fdr", 0.1, calibration_draws=100_000, seed=seed)
        a = estimate_risk(theta, orc, "fdr", 10_000, seed)
        b = estimate_risk(theta, BenjaminiHochberg(0.1), "fdr", 10_000, seed)
        bh_fdr, bh_se = b.side_channels["fdr"]
        member = bh_fdr <= 0.1 + 2 * bh_se
        d, se = paired_difference(a, b)
        ok &= member and d <= 2 * se
        lines.append(f"n={n} FNR oracle {a.estimate:.3f} vs BH {b.estimate:.3f} (BH FDR {bh_fdr:.3f})")

        for sel in (SelectionRule.all(), SelectionRule.topk(2)):
            orc = build_oracle(theta, ens, "estimate", selection=sel)
            a = estimate_risk(theta, orc, "estimate", 10_000, seed, selection=sel)
            for rival in (IdentityEstimator(sel), JamesStein(n, sel)):
                b = estimate_risk(theta, rival, "estimate", 10_000, seed, selection=sel)
                d, se = paired_difference(a, b)
                ok &= d <= 2 * se
                lines.append(f"n={n} {sel.describe()} oracle {a.estimate:.3f} vs {rival.name} {b.estimate:.3f}")
    _report(5, ok, "; ".join(lines))


# ------------------------------------------------------------------ 6
# a rule built on a few sampled permutations can be infeasible for FDR under the full group;
# it then falls back to no rejections, which is still a valid upper bound
@pytest.mark.filterwarnings("ignore::pioracle.oracles.InfeasibleConstraintWarning")
def test_criterion_6_sandwich():
    rng = np.random.default_rng(606)
    bad, count = [], 0
    for k in range(10):
        vals = np.where(rng.random(4) < 0.5, 0.0, rng.uniform(1.0, 4.0, 4))
        vals[0], vals[1] = 0.0, max(vals[1], 1.0)
        theta = ParamVector(rng.permutation(vals))
        for problem in ("estimate", "fdr"):
            kw = dict(alpha=0.1, draws=10_000, seed=600 + k, calibration_draws=20_000)
            exact_rule = build_oracle(theta, enumerate_exact(4), problem, 0.1, 20_000, 600 + k)
            ex = estimate_risk(theta, exact_rule, problem, 10_000, 600 + k)
            lb = subset_lower_bound(theta, 10, problem, **kw)
            ub = mc_upper_approx(theta, 10, problem, **kw)
            count += 1
            lo_ok = lb.estimate <= ex.estimate + 2 * _hypot_se(lb, ex)
            hi_ok = ex.estimate <= ub.estimate + 2 * _hypot_se(ub, ex)
            if not (lo_ok and hi_ok):
                bad.append((k, problem, lb.estimate, ex.estimate, ub.estimate))
    _report(6, not bad, f"{count} sandwiches (m = 10, n = 4): violations {bad}")


# ------------------------------------------------------------------ 7
def test_criterion_7_simple_rule():
    checks, ok = [], True
    cases = [
        (ParamVector([0.0, 0.0, 2.0, 2.0]), "estimate", None),
        (ParamVector([0.0, 0.0, 2.0, 2.0]), "estimate", SelectionRule.argmax()),
        (ParamVector([0.0, 1.0, 2.5, -1.0, 0.0]), "estimate", None),
        (ParamVector([0.0, 0.0, 0.0, 3.0, 3.0]), "fdr", None),
        (ParamVector([-1.0, -0.5, 0.5, 1.0, 0.0]), "sign", None),
    ]
    for i, (theta, problem, sel) in enumerate(cases):
        _, _, gap, se = gap_estimate(theta, 0.1, problem, draws=10_000, seed=70 + i, selection=sel,
                                     calibration_draws=20_000)
        ok &= gap >= -2 * se
        checks.append(f"{problem} gap {gap:.4f}+-{se:.4f}")
    _, _, g1, _ = gap_estimate(ParamVector([1.3]), draws=2000, seed=77)
    _, _, gt, _ = gap_estimate(ParamVector([2.0] * 5), draws=2000, seed=78)
    ok &= g1 == 0.0 and gt == 0.0
    checks.append(f"n=1 gap {g1}, tied gap {gt}")
    trend = []
    for n in (2, 4, 6, 8):
        _, _, gap, se = gap_estimate(two_group(n), draws=10_000, seed=79)
        trend.append(f"n={n}: {gap:.4f}+-{se:.4f}")
    print("exploratory two-group gap trend:", ", ".join(trend))
    _report(7, ok, "; ".join(checks) + " | trend (non-gating) " + ", ".join(trend))


# ------------------------------------------------------------------ 8
def test_criterion_8_spot_values():
    theta, ens, z = ParamVector([0.0, 2.0]), enumerate_exact(2), [0.0, 2.0]
    # brute-force values first, then the implementation against them
    post = brute_posterior([0.0, 2.0], z)
    w_brute = post[0][1]
    mean_brute = [sum(w * xi[i] for xi, w in post) for i in range(2)]
    lr_brute = math.exp(-math.log(2 * math.pi) - 2 - brute_log_marginal([0.0, 2.0], z))
    w = posterior_weights(ens, theta, z).weights[0]
    s = summarize_data(theta, ens, z)
    lr = lr_statistic(theta, ens, z)
    ok = (abs(w_brute - 0.982014) < 1e-6 and abs(w - w_brute) < 1e-6
          and np.allclose(mean_brute, [0.035972, 1.964028], atol=1e-6)
          and np.allclose(s.post_mean, mean_brute, atol=1e-6)
          and abs(lr_brute - 0.265802) < 1e-6 and abs(lr - lr_brute) < 1e-6)
    _report(8, ok, f"weight {w:.6f}, means ({s.post_mean[0]:.6f}, {s.post_mean[1]:.6f}), Lambda {lr:.6f}")


# ------------------------------------------------------------------ 9
def test_criterion_9_determinism(tmp_path):
    runs = [
        ["posterior", "--theta", "0,2", "--z", "0,2"],
        ["global-test", "--theta", "sparse(4,1,3)", "--z", "0.5,3,0,0", "--calibration-draws", "5000"],
        ["risk", "--theta", "0,0,2,3", "--problem", "fdr", "--draws", "3000", "--calibration-draws", "5000"],
        ["bound", "--theta", "0,1,2,3", "--problem", "estimate", "--m", "5", "--draws", "3000"],
        ["gap", "--theta", "0,0,2,2", "--problem", "estimate", "--draws", "3000", "--seed", "7"],
    ]
    same = []
    for i, argv in enumerate(runs):
        outs = []
        for rep in range(2):
            path = tmp_path / f"r{i}_{rep}.jsonl"
            assert cli.main(argv + ["-o", str(path)]) == 0
            outs.append(path.read_bytes())
        same.append(outs[0] == outs[1])
    _report(9, all(same), f"{sum(same)}/{len(same)} CLI commands byte-identical on rerun")
