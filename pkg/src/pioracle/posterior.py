"""Per-coordinate posterior marginals of xi = G(theta) given W = z."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _mc, kernels
from .model import LOG_2PI, DataVector, ParamVector, _check_dims
from .permutation_engine import PermutationEnsemble, WeightedPosterior, member_log_likelihoods


@dataclass(frozen=True)
class NullSet:
    """The null parameter set: the point {0} by default, or a closed interval."""

    lo: float = 0.0
    hi: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.lo > self.hi:
            raise ValueError(f"invalid null set [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, value: float = 0.0) -> "NullSet":
        return cls(float(value), float(value))

    @classmethod
    def parse(cls, spec) -> "NullSet":
        """Accept ``None``, a number, ``(lo, hi)``, or strings like ``"0"`` / ``"-0.5,0.5"``."""
        if spec is None:
            return cls()
        if isinstance(spec, NullSet):
            return spec
        if isinstance(spec, str):
            parts = [float(p) for p in spec.replace("[", "").replace("]", "").split(",") if p.strip()]
            spec = parts[0] if len(parts) == 1 else tuple(parts)
        if isinstance(spec, (int, float)):
            return cls.point(float(spec))
        lo, hi = spec
        return cls(float(lo), float(hi))

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def contains(self, values) -> np.ndarray:
        v = np.asarray(values)
        return (v >= self.lo) & (v <= self.hi)

    def describe(self) -> str:
        return f"{{{self.lo:g}}}" if self.is_point else f"[{self.lo:g}, {self.hi:g}]"


POINT_NULL = NullSet()


@dataclass(frozen=True, eq=False)
class PosteriorSummary:
    """Marginal posterior quantities for each coordinate.

    Attributes
    ----------
    q_null : P(xi_i in null set | W = z)
    p_pos, p_neg : P(xi_i > 0 | W = z), P(xi_i < 0 | W = z)
    post_mean : E[xi_i | W = z]
    """

    q_null: np.ndarray
    p_pos: np.ndarray
    p_neg: np.ndarray
    post_mean: np.ndarray
    null_set: NullSet = POINT_NULL
    ensemble_mode: str = "exact"

    @property
    def n(self) -> int:
        return self.q_null.shape[-1]

    @property
    def p_zero(self) -> np.ndarray:
        return np.clip(1.0 - self.p_pos - self.p_neg, 0.0, 1.0)

    def permuted(self, g) -> "PosteriorSummary":
        idx = g.mapping
        return PosteriorSummary(
            self.q_null[..., idx], self.p_pos[..., idx], self.p_neg[..., idx],
            self.post_mean[..., idx], self.null_set, self.ensemble_mode,
        )

    def row(self, d: int) -> "PosteriorSummary":
        """Single-data-vector summary out of a batch summary."""
        return PosteriorSummary(
            self.q_null[d], self.p_pos[d], self.p_neg[d], self.post_mean[d], self.null_set, self.ensemble_mode
        )


def summarize(wp: WeightedPosterior, null_set=None) -> PosteriorSummary:
    """Marginals from an explicit member-level posterior, in one pass over members."""
    null_set = NullSet.parse(null_set)
    w = wp.weights
    vals = wp.permuted_theta
    return PosteriorSummary(
        q_null=w @ null_set.contains(vals),
        p_pos=w @ (vals > 0),
        p_neg=w @ (vals < 0),
        post_mean=w @ vals,
        null_set=null_set,
        ensemble_mode=wp.ensemble.label,
    )


def summarize_batch(theta: ParamVector, ensemble: PermutationEnsemble, Z, null_set=None) -> PosteriorSummary:
    """Marginals for every row of ``Z`` via the compiled/numpy kernel.

    Rows of the returned summary line up with rows of ``Z``.
    """
    null_set = NullSet.parse(null_set)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    _check_dims(theta, Z)
    arr = ensemble.arrangements(theta)
    null_mask = null_set.contains(arr.values).astype(np.uint8)
    inv_var = 1.0 / theta.sigma**2

    def work(j, a, b):
        return kernels.posterior_batch(Z[a:b], arr.values, arr.log_mult, inv_var, null_mask)[:4]

    parts = _mc.map_chunks(work, Z.shape[0])
    q, pp, pn, mean = (np.concatenate([p[i] for p in parts]) for i in range(4))
    return PosteriorSummary(q, pp, pn, mean, null_set, ensemble.label)


def summarize_data(theta: ParamVector, ensemble: PermutationEnsemble, z, null_set=None) -> PosteriorSummary:
    """Single data vector convenience wrapper around :func:`summarize_batch`."""
    zv = z.values if isinstance(z, DataVector) else np.asarray(z, dtype=float)
    return summarize_batch(theta, ensemble, zv[None, :], null_set).row(0)


def marginal_log_density(theta: ParamVector, ensemble: PermutationEnsemble, z) -> float:
    """log of the ensemble-averaged likelihood (1/m) sum_g p(z | g(theta))."""
    ll = member_log_likelihoods(ensemble, theta, z)
    return float(logsumexp(ll) - np.log(ensemble.m))


def marginal_log_density_batch(theta: ParamVector, ensemble: PermutationEnsemble, Z) -> np.ndarray:
    """Kernel-backed :func:`marginal_log_density` for every row of ``Z``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    _check_dims(theta, Z)
    arr = ensemble.arrangements(theta)
    inv_var = 1.0 / theta.sigma**2

    def work(j, a, b):
        return kernels.log_mixture_batch(Z[a:b], arr.values, arr.log_mult, inv_var)

    lse = np.concatenate(_mc.map_chunks(work, Z.shape[0]))
    n = theta.n
    return lse - np.log(arr.total) - n * (0.5 * LOG_2PI + np.log(theta.sigma))
