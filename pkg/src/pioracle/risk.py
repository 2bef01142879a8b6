"""Monte Carlo risk estimation, sampled-permutation bounds and baseline rules.

A *rule* is any object with a ``problem`` attribute (``"global"``, ``"fdr"``,
``"sign"`` or ``"estimate"``) and a ``decide_batch(Z, seed=0)`` method
returning one action row per data row. The oracle classes in
:mod:`pioracle.oracles` and the baselines below all follow this shape.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _mc
from .losses import (
    MINUS, NA, PLUS, SelectionRule, dir_fdp_batch, dir_fnp_batch, fdp_batch, fnp_batch,
    global_loss_batch, selective_sq_loss_batch,
)
from .model import ParamVector
from .oracles import DIRFDR, FDR, EstimationOracle, calibrate_global, calibrate_lambda, joint_draws
from .permutation_engine import EXACT, N_MAX, PermutationEnsemble, enumerate_exact, sample_ensemble
from .posterior import NullSet

POINT = "point"
LOWER = "lower_bound"
UPPER = "upper_approx"

PROBLEMS = ("global", "fdr", "sign", "estimate")
_CONSTRAINED = {"fdr": FDR, "sign": DIRFDR}


def derive_seed(seed: int, tag: str) -> int:
    """Independent child seed for a named sub-task of a run."""
    return (int(seed) * 1_000_003 + zlib.crc32(tag.encode())) % (2**63)


@dataclass(eq=False)
class RiskReport:
    estimate: float
    std_error: float
    draws: int
    seed: int
    problem: str
    rule: str = ""
    side_channels: dict = field(default_factory=dict)
    ensemble_mode: str = "exact"
    bound_direction: str = POINT
    losses: np.ndarray | None = field(default=None, repr=False)
    extras: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = {
            "problem": self.problem,
            "rule": self.rule,
            "risk": self.estimate,
            "risk_se": self.std_error,
            "draws": self.draws,
            "seed": self.seed,
            "ensemble_mode": self.ensemble_mode,
            "bound_direction": self.bound_direction,
        }
        for name, (est, se) in sorted(self.side_channels.items()):
            rec[name] = est
            rec[f"{name}_se"] = se
        for name, value in sorted(self.extras.items()):
            rec[name] = value
        return rec


def paired_difference(a: RiskReport, b: RiskReport) -> tuple[float, float]:
    """Mean and standard error of ``a - b`` computed draw by draw (common random numbers)."""
    if a.losses is None or b.losses is None or a.losses.shape != b.losses.shape:
        raise ValueError("paired difference needs per-draw losses from the same draws")
    return _mc.mean_and_se(a.losses - b.losses)


def _problem_of(rule, loss):
    problem = loss or getattr(rule, "problem", None)
    if problem == "dirfdr":
        problem = "sign"
    if problem not in PROBLEMS:
        raise ValueError(f"unknown loss family {problem!r}")
    rp = getattr(rule, "problem", problem)
    rp = {"dirfdr": "sign"}.get(rp, rp)
    if rp != problem:
        raise ValueError(f"rule for problem {rp!r} cannot be scored with loss {problem!r}")
    return problem


def score(problem, truth, W, actions, selection=None, null_set=None):
    """Per-draw loss plus per-draw side-channel values for one loss family."""
    null_set = NullSet.parse(null_set)
    if problem == "global":
        rej = np.asarray(actions).astype(float)
        return global_loss_batch(truth, actions, null_set), {"reject_rate": rej}
    if problem == "fdr":
        rej = np.asarray(actions, dtype=bool)
        return fnp_batch(truth, rej, null_set), {
            "fdr": fdp_batch(truth, rej, null_set), "avg_rejections": rej.sum(axis=1).astype(float),
        }
    if problem == "sign":
        lab = np.asarray(actions)
        return dir_fnp_batch(truth, lab), {
            "dir_fdr": dir_fdp_batch(truth, lab), "avg_classifications": (lab != NA).sum(axis=1).astype(float),
        }
    sel, degen = (selection or SelectionRule()).select_batch(W)
    return selective_sq_loss_batch(truth, actions, sel), {
        "avg_selected": sel.sum(axis=1).astype(float), "degenerate_rate": degen.astype(float),
    }


def _report(problem, losses, side, draws, seed, rule_name, mode, direction, extras=None):
    est, se = _mc.mean_and_se(losses)
    return RiskReport(
        estimate=est, std_error=se, draws=int(draws), seed=int(seed), problem=problem, rule=rule_name,
        side_channels={k: _mc.mean_and_se(v) for k, v in side.items()},
        ensemble_mode=mode, bound_direction=direction, losses=losses, extras=dict(extras or {}),
    )


def rule_name(rule) -> str:
    return getattr(rule, "name", None) or type(rule).__name__


def _mode(rule):
    ens = getattr(rule, "ensemble", None)
    return ens.label if ens is not None else "n/a"


def estimate_risk(theta: ParamVector, rule, loss: str | None = None, draws: int = 10_000, seed: int = 0,
                  selection: SelectionRule | None = None, null_set=None) -> RiskReport:
    """Plain Monte Carlo estimate of R(theta, rule) over fresh Z ~ N(theta, sigma^2 I)."""
    problem = _problem_of(rule, loss)
    Z = _mc.gaussian_draws(theta.values, theta.sigma, draws, seed, _mc.STREAM_DATA)
    actions = rule.decide_batch(Z, seed=seed)
    selection = selection or getattr(rule, "selection", None)
    null_set = null_set if null_set is not None else getattr(rule, "null_set", None)
    losses, side = score(problem, theta.values, Z, actions, selection, null_set)
    return _report(problem, losses, side, draws, seed, rule_name(rule), _mode(rule), POINT)


def compare_risks(theta: ParamVector, rules: dict, loss: str, draws: int = 10_000, seed: int = 0,
                  selection: SelectionRule | None = None, null_set=None) -> dict:
    """Risk reports for several rules on the same draws."""
    return {name: estimate_risk(theta, rule, loss, draws, seed, selection, null_set) for name, rule in rules.items()}


# ================================================================ oracle factory
def build_oracle(theta: ParamVector, ensemble: PermutationEnsemble, problem: str, alpha: float = 0.1,
                 calibration_draws: int = 100_000, seed: int = 0, selection: SelectionRule | None = None,
                 null_set=None, joint_ensemble: PermutationEnsemble | None = None, summarizer: str = "pi"):
    """The oracle rule for ``problem`` with posteriors taken over ``ensemble``."""
    if problem == "estimate":
        return EstimationOracle(theta, ensemble, selection or SelectionRule(), summarizer)
    if problem == "global":
        if summarizer != "pi":
            raise ValueError("the global test has no coordinatewise simple-rule analogue")
        return calibrate_global(theta, ensemble, alpha, calibration_draws, derive_seed(seed, "calibrate"))
    if problem in _CONSTRAINED:
        return calibrate_lambda(theta, ensemble, alpha, _CONSTRAINED[problem], calibration_draws,
                                derive_seed(seed, "calibrate"), null_set,
                                joint_ensemble=joint_ensemble, summarizer=summarizer)
    raise ValueError(f"unknown problem {problem!r}")


def _oracle_extras(oracle) -> dict:
    out = {}
    if hasattr(oracle, "lambda_star"):
        out.update(lambda_star=oracle.lambda_star, calibration_status=oracle.status,
                   calibrated_constraint=oracle.constraint_estimate)
    if hasattr(oracle, "log_c"):
        out.update(threshold_c=oracle.c, threshold_c_se=oracle.c_std_error, degenerate=oracle.degenerate)
    return out


def _full_group(n: int) -> PermutationEnsemble:
    # marker for "G uniform on S_n" in joint draws; members are never materialized
    return PermutationEnsemble(n=n, mode=EXACT, m=math.factorial(n))


def _subset(n, m, seed):
    if m >= math.factorial(n) and n <= N_MAX:
        return enumerate_exact(n)
    return sample_ensemble(n, m, derive_seed(seed, "subset"))


def _mixture_risk(theta, joint_ens, oracle, problem, draws, seed, selection, null_set):
    xi, W = joint_draws(theta, joint_ens, draws, seed)
    actions = oracle.decide_batch(W, seed=seed)
    return score(problem, xi, W, actions, selection, null_set)


def subset_lower_bound(theta: ParamVector, m: int, problem: str, alpha: float = 0.1, draws: int = 10_000,
                       seed: int = 0, selection: SelectionRule | None = None, null_set=None,
                       calibration_draws: int = 100_000, ensemble: PermutationEnsemble | None = None) -> RiskReport:
    """Bayes risk of the optimal rule for a prior uniform on a sampled subset S of S_n.

    Both the rule and its calibration use the S-mixture, and the risk is the
    S-mixture Bayes risk, which lower-bounds the exact oracle risk. The rule
    itself is generally not permutation invariant.
    """
    if int(m) < 1:
        raise ValueError("m must be >= 1")
    S = ensemble or _subset(theta.n, int(m), seed)
    selection = selection or SelectionRule()
    oracle = build_oracle(theta, S, problem, alpha, calibration_draws, seed, selection, null_set, joint_ensemble=S)
    losses, side = _mixture_risk(theta, S, oracle, problem, draws, seed, selection, null_set)
    return _report(problem, losses, side, draws, seed, "subset_oracle", S.label, LOWER,
                   {"m": int(m), **_oracle_extras(oracle)})


def mc_upper_approx(theta: ParamVector, m: int, problem: str, alpha: float = 0.1, draws: int = 10_000,
                    seed: int = 0, selection: SelectionRule | None = None, null_set=None,
                    calibration_draws: int = 100_000, ensemble: PermutationEnsemble | None = None) -> RiskReport:
    """Risk of the rule built from one fixed sampled S, averaged over the orbit of theta.

    Each draw relabels theta by a fresh uniform permutation before drawing
    Z, so the estimate is the orbit-averaged risk of the (non-PI) subset
    rule: an upper bound on the exact oracle risk for every S, with the same
    expectation over S as its risk at theta. Constrained rules are
    calibrated under the full S_n law so they are feasible.
    """
    if int(m) < 1:
        raise ValueError("m must be >= 1")
    S = ensemble or _subset(theta.n, int(m), seed)
    selection = selection or SelectionRule()
    full = _full_group(theta.n)
    oracle = build_oracle(theta, S, problem, alpha, calibration_draws, seed, selection, null_set, joint_ensemble=full)
    losses, side = _mixture_risk(theta, full, oracle, problem, draws, seed, selection, null_set)
    return _report(problem, losses, side, draws, seed, "subset_oracle", S.label, UPPER,
                   {"m": int(m), **_oracle_extras(oracle)})


# ==================================================================== baselines
@dataclass(frozen=True)
class ChiSquareTest:
    """Reject theta = 0 when sum(z_i^2) / sigma^2 exceeds the chi-square(n) upper alpha point."""

    n: int
    alpha: float = 0.05
    sigma: float = 1.0
    problem: str = field(default="global", init=False)
    name: str = field(default="chi_square", init=False)

    @property
    def threshold(self) -> float:
        return float(stats.chi2.ppf(1 - self.alpha, self.n))

    def decide_batch(self, Z, seed: int = 0):
        Z = np.atleast_2d(Z)
        return (np.sum(Z * Z, axis=1) / self.sigma**2 > self.threshold).astype(np.int8)


def benjamini_hochberg(p, alpha: float) -> np.ndarray:
    """Step-up BH rejections for each row of p-values."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    D, n = p.shape
    order = np.argsort(p, axis=1, kind="stable")
    ps = np.take_along_axis(p, order, axis=1)
    below = ps <= alpha * np.arange(1, n + 1) / n
    k = np.where(below.any(axis=1), n - np.argmax(below[:, ::-1], axis=1), 0)
    cutoff = np.where(k > 0, ps[np.arange(D), np.maximum(k - 1, 0)], -np.inf)
    return p <= cutoff[:, None]


@dataclass(frozen=True)
class BenjaminiHochberg:
    """BH at level alpha on two-sided normal p-values."""

    alpha: float = 0.1
    sigma: float = 1.0
    problem: str = field(default="fdr", init=False)
    name: str = field(default="bh", init=False)

    def decide_batch(self, Z, seed: int = 0):
        p = 2 * stats.norm.sf(np.abs(np.atleast_2d(Z)) / self.sigma)
        return benjamini_hochberg(p, self.alpha)


@dataclass(frozen=True)
class IdentityEstimator:
    selection: SelectionRule = SelectionRule()
    problem: str = field(default="estimate", init=False)
    name: str = field(default="identity", init=False)

    def decide_batch(self, Z, seed: int = 0):
        return np.array(np.atleast_2d(Z), dtype=float)


@dataclass(frozen=True)
class JamesStein:
    """Classic James-Stein shrinkage toward 0; defined for n >= 3."""

    n: int
    selection: SelectionRule = SelectionRule()
    sigma: float = 1.0
    problem: str = field(default="estimate", init=False)
    name: str = field(default="james_stein", init=False)

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("James-Stein estimator requires n >= 3")

    def decide_batch(self, Z, seed: int = 0):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        shrink = 1 - (self.n - 2) * self.sigma**2 / np.sum(Z * Z, axis=1)
        return shrink[:, None] * Z


@dataclass(frozen=True)
class NaiveSign:
    """Label sign(z_i) when |z_i| > threshold * sigma, NA otherwise."""

    threshold: float = 1.96
    sigma: float = 1.0
    problem: str = field(default="sign", init=False)
    name: str = field(default="naive_sign", init=False)

    def decide_batch(self, Z, seed: int = 0):
        Z = np.atleast_2d(Z)
        lab = np.where(Z > 0, PLUS, MINUS).astype(np.int8)
        lab[np.abs(Z) <= self.threshold * self.sigma] = NA
        return lab


def baseline_rules(n: int, alpha: float = 0.1, sigma: float = 1.0, selection: SelectionRule | None = None,
                   names=None) -> dict:
    """Catalog of competitor PI rules keyed by name.

    Asking explicitly for ``"james_stein"`` with ``n < 3`` raises; without
    ``names`` it is simply left out.
    """
    selection = selection or SelectionRule()
    makers = {
        "chi_square": lambda: ChiSquareTest(n, alpha, sigma),
        "bh": lambda: BenjaminiHochberg(alpha, sigma),
        "identity": lambda: IdentityEstimator(selection),
        "james_stein": lambda: JamesStein(n, selection, sigma),
        "naive_sign": lambda: NaiveSign(float(stats.norm.isf(alpha / 2)), sigma),
    }
    if names is None:
        return {k: f() for k, f in makers.items() if not (k == "james_stein" and n < 3)}
    return {k: makers[k]() for k in names}
