"""Oracle permutation-invariant rules for the four decision problems.

All rules are functions of the posterior marginals of xi given W = z under
the permutation mixture at the true theta:

* global test: reject when the likelihood ratio phi(z) / mixture(z) <= c;
* multiple testing: reject the r* smallest q_i, r* minimizing the sorted scan
  rho(r) = mean of the r smallest q + lam * mean of (1 - q) over the rest;
* sign classification: the same scan over sign-error and miss probabilities;
* selective estimation: the posterior mean.

The constrained problems (FDR, directional FDR) are solved for a multiplier
``lam`` and ``lam`` is calibrated by Monte Carlo over the joint law of
(xi, W) so the constraint sits at ``alpha``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _mc
from .losses import (
    MINUS, NA, PLUS, Estimate, GlobalTest, MultiTest, SelectionRule, SignClassify,
    dir_fdp_batch, dir_fnp_batch, fdp_batch, fnp_batch,
)
from .model import LOG_2PI, DataVector, ParamVector, _check_dims
from .permutation_engine import EXACT, PermutationEnsemble
from .posterior import (
    NullSet, PosteriorSummary, marginal_log_density, marginal_log_density_batch, summarize_batch,
)

log = logging.getLogger(__name__)

FDR = "fdr"
DIRFDR = "dirfdr"
DEFAULT_BRACKET = (1e-4, 1e4)


class InfeasibleConstraintWarning(UserWarning):
    """The constraint is violated even at the smallest multiplier."""


def _zvec(z) -> np.ndarray:
    return z.values if isinstance(z, DataVector) else np.asarray(z, dtype=float)


# ====================================================================== global
def _log_null_density(Z, sigma):
    Z = np.atleast_2d(Z)
    n = Z.shape[1]
    return -0.5 * np.sum(Z * Z, axis=1) / sigma**2 - n * (0.5 * LOG_2PI + np.log(sigma))


def log_lr_batch(theta: ParamVector, ensemble: PermutationEnsemble, Z) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    return _log_null_density(Z, theta.sigma) - marginal_log_density_batch(theta, ensemble, Z)


def lr_statistic(theta: ParamVector, ensemble: PermutationEnsemble, z) -> float:
    """Likelihood ratio of the N(0, sigma^2 I) density to the permutation mixture at z."""
    zv = _check_dims(theta, _zvec(z))
    return float(np.exp(_log_null_density(zv, theta.sigma)[0] - marginal_log_density(theta, ensemble, zv)))


@dataclass(frozen=True, eq=False)
class GlobalTestOracle:
    """Most powerful permutation-invariant level-alpha test of theta = 0.

    ``log_c`` is the calibrated threshold on the log likelihood ratio. In the
    degenerate case (theta itself is the null) the statistic is constant and
    the test rejects by an independent alpha-coin seeded with ``coin_seed``.
    """

    theta: ParamVector
    ensemble: PermutationEnsemble
    alpha: float
    log_c: float
    c_std_error: float
    calibration_draws: int
    calibration_seed: int
    degenerate: bool = False
    coin_seed: int = 0
    null_rejection_rate: float = float("nan")
    problem: str = field(default="global", init=False)

    @property
    def c(self) -> float:
        return float(np.exp(self.log_c))

    def decide_batch(self, Z, seed: int = 0) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if self.degenerate:
            coins = np.concatenate([
                _mc.chunk_rng(seed, _mc.STREAM_COIN, j).random(b - a) for j, a, b in _mc.chunk_bounds(Z.shape[0])
            ])
            return (coins < self.alpha).astype(np.int8)
        return (log_lr_batch(self.theta, self.ensemble, Z) <= self.log_c).astype(np.int8)


def calibrate_global(theta: ParamVector, ensemble: PermutationEnsemble, alpha: float = 0.05,
                     draws: int = 100_000, seed: int = 0) -> GlobalTestOracle:
    """Set c to the empirical alpha-quantile of the likelihood ratio under Z ~ N(0, sigma^2 I)."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if draws < 1000:
        raise ValueError("calibration needs at least 1000 draws")
    Z0 = _mc.gaussian_draws(np.zeros(theta.n), theta.sigma, draws, seed, _mc.STREAM_NULL)
    llr = log_lr_batch(theta, ensemble, Z0)
    if np.all(theta.values == 0) or np.ptp(llr) < 1e-12:
        log.info("theta is the null point; global oracle degenerates to an alpha-coin")
        return GlobalTestOracle(theta, ensemble, alpha, 0.0, 0.0, draws, seed,
                                degenerate=True, coin_seed=seed, null_rejection_rate=alpha)
    s = np.sort(llr)
    k = int(np.floor(alpha * draws))
    log_c = s[k - 1] if k >= 1 else -np.inf
    # order-statistic spread over +-1 binomial sd of the rank
    half = np.sqrt(draws * alpha * (1 - alpha))
    lo = s[max(0, int(np.floor(k - 1 - half)))]
    hi = s[min(draws - 1, int(np.ceil(k - 1 + half)))]
    c_se = 0.5 * (np.exp(hi) - np.exp(lo))
    return GlobalTestOracle(theta, ensemble, alpha, float(log_c), float(c_se), draws, seed,
                            null_rejection_rate=float(np.mean(llr <= log_c)))


def global_decide(oracle: GlobalTestOracle, z, rng: np.random.Generator | None = None) -> GlobalTest:
    """Reject (1) iff Lambda(z) <= c; alpha-coin in the degenerate case."""
    if oracle.degenerate:
        rng = rng if rng is not None else np.random.default_rng(oracle.coin_seed)
        return GlobalTest(int(rng.random() < oracle.alpha), randomized=True)
    zv = _check_dims(oracle.theta, _zvec(z))
    return GlobalTest(int(log_lr_batch(oracle.theta, oracle.ensemble, zv)[0] <= oracle.log_c))


# ============================================================ multiple testing
def mt_scan_batch(Q, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Sorted scan over rejection counts for every row of ``Q``.

    Returns the rejection masks and the chosen counts r*. Only counts at
    boundaries between distinct q values are eligible: inside a block of tied
    q the objective is concave in r, so its minimum sits on a boundary, and
    tied coordinates are never split.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    D, n = Q.shape
    order = np.argsort(Q, axis=1, kind="stable")
    qs = np.take_along_axis(Q, order, axis=1)
    r = np.arange(n + 1)
    head = np.concatenate([np.zeros((D, 1)), np.cumsum(qs, axis=1)], axis=1)
    tail = np.concatenate([np.cumsum((1.0 - qs)[:, ::-1], axis=1)[:, ::-1], np.zeros((D, 1))], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(r > 0, head / np.maximum(r, 1), 0.0) + lam * np.where(r < n, tail / np.maximum(n - r, 1), 0.0)
    eligible = np.ones((D, n + 1), dtype=bool)
    eligible[:, 1:n] = qs[:, :-1] < qs[:, 1:]
    rho = np.where(eligible, rho, np.inf)
    rstar = np.argmin(rho, axis=1)
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(n)[None, :].repeat(D, axis=0), axis=1)
    return ranks < rstar[:, None], rstar


def rho_scan(q, lam: float) -> np.ndarray:
    """rho_lam(r) for r = 0..n on a single q vector (all counts, no eligibility mask)."""
    qs = np.sort(np.asarray(q, dtype=float))
    n = qs.size
    out = np.empty(n + 1)
    for r in range(n + 1):
        first = qs[:r].sum() / r if r > 0 else 0.0
        second = lam * (1.0 - qs[r:]).sum() / (n - r) if r < n else 0.0
        out[r] = first + second
    return out


def mt_rule_at_lambda(summary: PosteriorSummary, lam: float) -> MultiTest:
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    return MultiTest(mt_scan_batch(summary.q_null[None, :], lam)[0][0])


# ========================================================= sign classification
def sign_scan_batch(P_pos, P_neg, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Posterior-optimal sign labels for every row, plus a per-row tie flag.

    A classified coordinate costs min(p_pos, p_neg) (the wrong-sign
    probability of the better label); an unclassified one costs
    lam * (p_pos + p_neg) (the probability a nonzero sign is missed). For
    each count r the cheapest r coordinates to classify are those with the
    smallest q_i / r - lam * m_i / (n - r); r* minimizes over r.
    """
    P_pos = np.atleast_2d(np.asarray(P_pos, dtype=float))
    P_neg = np.atleast_2d(np.asarray(P_neg, dtype=float))
    D, n = P_pos.shape
    q = np.minimum(P_pos, P_neg)
    m = P_pos + P_neg
    m_tot = m.sum(axis=1)
    best_cost = lam * m_tot / n
    best_sel = np.zeros((D, n), dtype=bool)
    rows = np.arange(D)[:, None]
    for r in range(1, n + 1):
        if r < n:
            key = q / r - lam * m / (n - r)
            chosen = np.argsort(key, axis=1, kind="stable")[:, :r]
            cost = np.take_along_axis(key, chosen, axis=1).sum(axis=1) + lam * m_tot / (n - r)
        else:
            chosen = np.broadcast_to(np.arange(n), (D, n))
            cost = q.sum(axis=1) / n
        better = cost < best_cost
        if better.any():
            sel = np.zeros((D, n), dtype=bool)
            sel[rows, chosen] = True
            best_sel[better] = sel[better]
            best_cost = np.where(better, cost, best_cost)
    labels = np.where(P_neg > P_pos, MINUS, PLUS).astype(np.int8)
    labels[~best_sel] = NA
    ties = np.any(best_sel & (P_neg == P_pos), axis=1)
    return labels, ties


def sign_rule_at_lambda(summary: PosteriorSummary, lam: float) -> SignClassify:
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    labels, ties = sign_scan_batch(summary.p_pos[None, :], summary.p_neg[None, :], lam)
    return SignClassify(labels[0], tie_flag=bool(ties[0]))


# ================================================================= estimation
def selective_estimate(summary: PosteriorSummary, s: SelectionRule | None = None, z=None) -> Estimate:
    """Posterior means; unselected coordinates carry their posterior mean too."""
    return Estimate(np.array(summary.post_mean, dtype=float))


@dataclass(frozen=True, eq=False)
class EstimationOracle:
    theta: ParamVector
    ensemble: PermutationEnsemble
    selection: SelectionRule = SelectionRule()
    summarizer: str = "pi"
    problem: str = field(default="estimate", init=False)

    def decide_batch(self, Z, seed: int = 0) -> np.ndarray:
        return summaries(self.theta, self.ensemble, Z, None, self.summarizer).post_mean

    def decide(self, z) -> Estimate:
        return Estimate(self.decide_batch(_zvec(z)[None, :])[0])


# ================================================================= summaries
def summaries(theta, ensemble, Z, null_set=None, summarizer: str = "pi") -> PosteriorSummary:
    """Posterior marginals under the full PI posterior or the coordinatewise simple rule."""
    if summarizer == "pi":
        return summarize_batch(theta, ensemble, Z, null_set)
    if summarizer == "simple":
        from .simple_rule import EmpiricalPrior, simple_summary_batch
        return simple_summary_batch(EmpiricalPrior.from_theta(theta), Z, null_set)
    raise ValueError(f"unknown summarizer {summarizer!r}")


def joint_draws(theta: ParamVector, ensemble: PermutationEnsemble, draws: int, seed: int):
    """(xi, W) pairs from the permutation mixture: G uniform on the ensemble, xi = G(theta)."""
    if ensemble.mode == EXACT:
        perms = _mc.random_permutations(theta.n, draws, seed, _mc.STREAM_JOINT)
    else:
        idx = _mc.uniform_indices(ensemble.m, draws, seed, _mc.STREAM_JOINT)
        perms = ensemble.members[idx]
    xi = theta.values[perms]
    W = _mc.gaussian_draws(xi, theta.sigma, draws, seed, _mc.STREAM_DATA)
    return xi, W


# ================================================================ calibration
@dataclass(frozen=True)
class BisectionConfig:
    bracket: tuple[float, float] = DEFAULT_BRACKET
    rel_tol: float = 1e-4
    max_iter: int = 60
    grid_per_decade: int = 2


@dataclass(frozen=True, eq=False)
class LagrangianOracle:
    """Constrained oracle rule at calibrated multiplier ``lambda_star``.

    ``status`` is ``"ok"`` when the constraint binds inside the bracket,
    ``"edge"`` when it is slack at the upper bracket end, and ``"infeasible"``
    when even the no-rejection limit violates it (``lambda_star = 0``).
    """

    theta: ParamVector
    ensemble: PermutationEnsemble
    alpha: float
    problem: str
    lambda_star: float
    status: str
    constraint_estimate: float
    constraint_se: float
    calibration_draws: int
    calibration_seed: int
    null_set: NullSet = NullSet()
    bisection: BisectionConfig = BisectionConfig()
    trace: tuple = ()
    monotone: bool = True
    summarizer: str = "pi"

    @property
    def flagged(self) -> bool:
        return self.status != "ok"

    def summarize(self, Z) -> PosteriorSummary:
        return summaries(self.theta, self.ensemble, Z, self.null_set, self.summarizer)

    def decide_from_summary(self, summ: PosteriorSummary) -> np.ndarray:
        if self.problem == FDR:
            return mt_scan_batch(np.atleast_2d(summ.q_null), self.lambda_star)[0]
        return sign_scan_batch(np.atleast_2d(summ.p_pos), np.atleast_2d(summ.p_neg), self.lambda_star)[0]

    def decide_batch(self, Z, seed: int = 0) -> np.ndarray:
        return self.decide_from_summary(self.summarize(Z))

    def decide(self, z):
        row = self.decide_batch(_zvec(z)[None, :])[0]
        return MultiTest(row) if self.problem == FDR else SignClassify(row)


def _constraint_values(problem, xi, actions, null_set):
    if problem == FDR:
        return fdp_batch(xi, actions, null_set)
    return dir_fdp_batch(xi, actions)


def _miss_values(problem, xi, actions, null_set):
    if problem == FDR:
        return fnp_batch(xi, actions, null_set)
    return dir_fnp_batch(xi, actions)


def calibrate_lambda(theta: ParamVector, ensemble: PermutationEnsemble, alpha: float = 0.1,
                     problem: str = FDR, draws: int = 100_000, seed: int = 0, null_set=None,
                     bisection: BisectionConfig | None = None, joint_ensemble: PermutationEnsemble | None = None,
                     summarizer: str = "pi") -> LagrangianOracle:
    """Calibrate the multiplier so the expected fdp (or dir-fdp) equals ``alpha``.

    Expectations are over (xi, W) drawn from the permutation mixture on
    ``joint_ensemble`` (default: the rule's own ensemble). The empirical
    constraint curve is scanned on a log grid, then the last feasible grid
    point is refined by bisection against its infeasible neighbour. The
    result is the largest multiplier whose estimated constraint is <= alpha.
    """
    problem = problem.lower().replace("-", "")
    if problem not in (FDR, DIRFDR):
        raise ValueError(f"unknown constrained problem {problem!r}")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if draws < 1000:
        raise ValueError("calibration needs at least 1000 draws")
    cfg = bisection or BisectionConfig()
    null_set = NullSet.parse(null_set)
    lo_b, hi_b = cfg.bracket
    if not 0 < lo_b < hi_b:
        raise ValueError("bracket must satisfy 0 < lo < hi")

    xi, W = joint_draws(theta, joint_ensemble or ensemble, draws, seed)
    summ = summaries(theta, ensemble, W, null_set, summarizer)
    if problem == FDR:
        def act(lam):
            return mt_scan_batch(summ.q_null, lam)[0]
    else:
        def act(lam):
            return sign_scan_batch(summ.p_pos, summ.p_neg, lam)[0]

    cache = {}

    def evaluate(lam):
        if lam not in cache:
            cache[lam] = _mc.mean_and_se(_constraint_values(problem, xi, act(lam), null_set))
        return cache[lam]

    decades = np.log10(hi_b) - np.log10(lo_b)
    grid = np.logspace(np.log10(lo_b), np.log10(hi_b), int(np.ceil(decades * cfg.grid_per_decade)) + 1)
    vals = [evaluate(lam) for lam in grid]
    est = np.array([v[0] for v in vals])
    se = np.array([v[1] for v in vals])
    monotone = bool(np.all(np.diff(est) >= -2 * np.sqrt(se[1:] ** 2 + se[:-1] ** 2)))
    if not monotone:
        log.warning("estimated constraint is not monotone in lambda over the grid")

    feasible = est <= alpha
    if not feasible[0]:
        warnings.warn(
            f"{problem} constraint exceeds alpha={alpha} even at lambda={lo_b}; using the no-rejection rule",
            InfeasibleConstraintWarning, stacklevel=2,
        )
        lam_star, status = 0.0, "infeasible"
    elif feasible[-1]:
        lam_star, status = float(grid[-1]), "edge"
    else:
        i = int(np.flatnonzero(feasible)[-1])
        lo, hi = float(grid[i]), float(grid[i + 1])
        for _ in range(cfg.max_iter):
            if hi / lo - 1 < cfg.rel_tol:
                break
            mid = float(np.sqrt(lo * hi))
            if evaluate(mid)[0] <= alpha:
                lo = mid
            else:
                hi = mid
        lam_star, status = lo, "ok"

    if lam_star > 0:
        c_est, c_se = evaluate(lam_star)
    else:
        c_est, c_se = _mc.mean_and_se(_constraint_values(problem, xi, act(0.0), null_set))
    trace = tuple(sorted((lam, m, s) for lam, (m, s) in cache.items()))
    return LagrangianOracle(theta, ensemble, alpha, problem, lam_star, status, c_est, c_se, draws, seed,
                            null_set, cfg, trace, monotone, summarizer)


def constrained_oracle_risk_at_lambda(theta, ensemble, problem, lam, draws, seed, null_set=None):
    """Joint-law (constraint, miss) means at a fixed multiplier, for diagnostics."""
    null_set = NullSet.parse(null_set)
    xi, W = joint_draws(theta, ensemble, draws, seed)
    summ = summarize_batch(theta, ensemble, W, null_set)
    if problem == FDR:
        a = mt_scan_batch(summ.q_null, lam)[0]
    else:
        a = sign_scan_batch(summ.p_pos, summ.p_neg, lam)[0]
    return (_mc.mean_and_se(_constraint_values(problem, xi, a, null_set)),
            _mc.mean_and_se(_miss_values(problem, xi, a, null_set)))
