"""Oracle simple rules: coordinatewise Bayes rules under the empirical law of theta.

Each coordinate is treated as a draw from the n-atom prior putting mass 1/n
on every entry of theta, and decisions use only that coordinate's
observation. Feeding :func:`simple_summary` into the rule constructors of
:mod:`pioracle.oracles` gives the simple analogue of every oracle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DataVector, ParamVector
from .permutation_engine import N_MAX, CapacityError, enumerate_exact
from .posterior import NullSet, PosteriorSummary
from .risk import build_oracle, estimate_risk, paired_difference

_BLOCK_ELEMS = 1 << 22


@dataclass(frozen=True, eq=False)
class EmpiricalPrior:
    """Distinct atoms of theta with their multiplicities (weights count / n)."""

    atoms: np.ndarray
    counts: np.ndarray
    sigma: float = 1.0

    @classmethod
    def from_theta(cls, theta: ParamVector) -> "EmpiricalPrior":
        atoms, counts = np.unique(theta.values, return_counts=True)
        return cls(atoms, counts, theta.sigma)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def weights(self) -> np.ndarray:
        return self.counts / self.n

    def expanded(self) -> np.ndarray:
        """The atom multiset, one entry per coordinate of theta (sorted)."""
        return np.repeat(self.atoms, self.counts)


def _posterior_block(prior: EmpiricalPrior, z: np.ndarray, null_set: NullSet):
    # z: any shape; trailing axis added for atoms
    a = prior.atoms
    logw = np.log(prior.counts) - 0.5 * ((z[..., None] - a) / prior.sigma) ** 2
    logw -= logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=-1, keepdims=True)
    return w @ null_set.contains(a), w @ (a > 0), w @ (a < 0), w @ a


def simple_posterior(prior: EmpiricalPrior, z_i: float, null_set=None):
    """(q_null, p_pos, p_neg, post_mean) of the atom given one observation z_i."""
    if not np.isfinite(z_i):
        raise ValueError("z_i must be finite")
    out = _posterior_block(prior, np.asarray(float(z_i)), NullSet.parse(null_set))
    return tuple(float(v) for v in out)


def simple_summary_batch(prior: EmpiricalPrior, Z, null_set=None) -> PosteriorSummary:
    null_set = NullSet.parse(null_set)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    D, n = Z.shape
    outs = [np.empty((D, n)) for _ in range(4)]
    step = max(1, _BLOCK_ELEMS // max(n * prior.atoms.size, 1))
    for start in range(0, D, step):
        block = _posterior_block(prior, Z[start:start + step], null_set)
        for o, b in zip(outs, block):
            o[start:start + step] = b
    return PosteriorSummary(*outs, null_set=null_set, ensemble_mode="simple")


def simple_summary(prior: EmpiricalPrior, z, null_set=None) -> PosteriorSummary:
    """Coordinatewise posterior marginals for one data vector."""
    zv = z.values if isinstance(z, DataVector) else np.asarray(z, dtype=float)
    return simple_summary_batch(prior, zv[None, :], null_set).row(0)


def gap_estimate(theta: ParamVector, alpha: float = 0.1, problem: str = "estimate", draws: int = 10_000,
                 seed: int = 0, selection=None, null_set=None, calibration_draws: int = 100_000,
                 n_max: int = N_MAX):
    """Risks of the oracle simple rule and the exact PI oracle, and their difference.

    Both rules are scored on the same draws, and constrained rules are
    calibrated on the same joint draws, so the gap's standard error is that
    of the paired per-draw difference (returned as ``gap_se``).

    Returns
    -------
    risk_simple, risk_pi : RiskReport
    gap : float
    gap_se : float
    """
    if theta.n > n_max:
        raise CapacityError(
            f"gap needs the exact PI oracle but n = {theta.n} exceeds the exact cap {n_max}; "
            "only sampled lower/upper brackets are available at this size"
        )
    if problem == "global":
        raise ValueError("the global test has no coordinatewise simple-rule analogue")
    ens = enumerate_exact(theta.n, n_max)
    common = dict(alpha=alpha, calibration_draws=calibration_draws, seed=seed, selection=selection,
                  null_set=null_set)
    pi_rule = build_oracle(theta, ens, problem, summarizer="pi", **common)
    simple_rule = build_oracle(theta, ens, problem, summarizer="simple", **common)
    risk_pi = estimate_risk(theta, pi_rule, problem, draws, seed, selection, null_set)
    risk_simple = estimate_risk(theta, simple_rule, problem, draws, seed, selection, null_set)
    risk_pi.rule, risk_simple.rule = "pi_oracle", "simple_oracle"
    risk_simple.ensemble_mode = "simple"
    gap, gap_se = paired_difference(risk_simple, risk_pi)
    return risk_simple, risk_pi, gap, gap_se


def gap_trend(pattern, ns, **kwargs):
    """Gap at each n for a theta built by ``pattern(n)``; exploratory output only."""
    rows = []
    for n in ns:
        theta = pattern(n)
        rs, rp, gap, se = gap_estimate(theta, **kwargs)
        rows.append({"n": n, "risk_simple": rs.estimate, "risk_pi": rp.estimate, "gap": gap, "gap_se": se})
    return rows


def two_group(n: int, mu: float = 2.0, sigma: float = 1.0) -> ParamVector:
    """First half zeros, second half ``mu`` (n odd puts the extra entry at 0)."""
    k = n // 2
    return ParamVector(np.r_[np.zeros(n - k), np.full(k, mu)], sigma)
