"""Permutation ensembles playing the role of the uniform "prior" over relabelings.

An ensemble is either all of S_n (exact mode) or ``m`` uniform draws with
replacement (sampled mode). Posterior computations never touch the n! member
list directly: they run over the *distinct* arrangements ``g(theta)`` with
multiplicity weights, which gives the same posterior because tied
permutations only add identical mixture components.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from . import _mc
from .model import DataVector, ParamVector, Permutation, _check_dims, DimensionError

N_MAX = 10

EXACT = "exact"
SAMPLED = "sampled"


class CapacityError(ValueError):
    """Exact enumeration requested beyond the configured size cap."""


@dataclass(frozen=True, eq=False)
class PermutationEnsemble:
    n: int
    mode: str
    m: int
    seed: int | None = None
    _members: np.ndarray | None = None

    @cached_property
    def members(self) -> np.ndarray:
        """Index arrays, one row per member (n! rows in exact mode)."""
        if self._members is not None:
            return self._members
        rows = np.array(list(itertools.permutations(range(self.n))), dtype=np.intp)
        rows.setflags(write=False)
        return rows

    def __len__(self):
        return self.m

    def member(self, k: int) -> Permutation:
        return Permutation(self.members[k])

    @property
    def label(self) -> str:
        return "exact" if self.mode == EXACT else f"sampled({self.m})"

    def arrangements(self, theta: ParamVector) -> "Arrangements":
        if theta.n != self.n:
            raise DimensionError(f"theta of length {theta.n} vs ensemble on {self.n} labels")
        if self.mode == EXACT:
            return _exact_arrangements(theta.values)
        perm = theta.values[self.members]
        rows, counts = np.unique(perm, axis=0, return_counts=True)
        return Arrangements(rows, np.log(counts.astype(float)), self.m)


@dataclass(frozen=True)
class Arrangements:
    """Distinct rows ``g(theta)`` over the ensemble with log multiplicities.

    ``total`` is the ensemble size, so ``exp(log_mult).sum() == total``.
    """

    values: np.ndarray
    log_mult: np.ndarray
    total: int

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_mult - logsumexp(self.log_mult))


def _exact_arrangements(theta: np.ndarray) -> Arrangements:
    n = theta.size
    uniq, codes = np.unique(theta, return_inverse=True)
    counts = np.bincount(codes, minlength=uniq.size)
    # grow prefixes position by position; rows end up in lexicographic order
    prefix = np.zeros((1, 0), dtype=np.intp)
    remaining = counts[None, :].copy()
    for _ in range(n):
        parts, rems = [], []
        for v in range(uniq.size):
            keep = remaining[:, v] > 0
            if not keep.any():
                continue
            p = np.hstack([prefix[keep], np.full((int(keep.sum()), 1), v, dtype=np.intp)])
            r = remaining[keep].copy()
            r[:, v] -= 1
            parts.append(p)
            rems.append(r)
        prefix = np.vstack(parts)
        remaining = np.vstack(rems)
    order = np.lexsort(prefix.T[::-1])
    rows = uniq[prefix[order]]
    log_mult_each = float(sum(math.lgamma(c + 1) for c in counts))
    return Arrangements(rows, np.full(rows.shape[0], log_mult_each), math.factorial(n))


def enumerate_exact(n: int, n_max: int = N_MAX) -> PermutationEnsemble:
    """All of S_n, members in lexicographic order of their index arrays."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > n_max:
        raise CapacityError(
            f"exact enumeration of S_{n} exceeds the cap n <= {n_max}; use a sampled ensemble instead"
        )
    return PermutationEnsemble(n=n, mode=EXACT, m=math.factorial(n))


def sample_ensemble(n: int, m: int, seed: int) -> PermutationEnsemble:
    """``m`` uniform draws from S_n with replacement (seeded Fisher-Yates)."""
    if int(m) < 1:
        raise ValueError("m must be >= 1")
    rng = _mc.chunk_rng(seed, _mc.STREAM_ENSEMBLE, 0)
    members = _mc.fisher_yates(int(n), int(m), rng)
    members.setflags(write=False)
    return PermutationEnsemble(n=int(n), mode=SAMPLED, m=int(m), seed=int(seed), _members=members)


def ensemble_from_members(members, seed: int | None = None) -> PermutationEnsemble:
    """Sampled-mode ensemble over an explicit list of permutations."""
    rows = np.array([getattr(g, "mapping", g) for g in members], dtype=np.intp)
    for row in rows:
        Permutation(row)
    rows.setflags(write=False)
    return PermutationEnsemble(n=rows.shape[1], mode=SAMPLED, m=rows.shape[0], seed=seed, _members=rows)


@dataclass(frozen=True, eq=False)
class WeightedPosterior:
    """Conditional law of G given W = z over the ensemble members."""

    ensemble: PermutationEnsemble
    log_weights: np.ndarray
    data: DataVector
    theta: ParamVector

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @cached_property
    def permuted_theta(self) -> np.ndarray:
        return self.theta.values[self.ensemble.members]


def member_log_likelihoods(ensemble: PermutationEnsemble, theta: ParamVector, z) -> np.ndarray:
    zv = _check_dims(theta, z)
    if ensemble.n != theta.n:
        raise DimensionError("ensemble and theta sizes differ")
    s = theta.sigma
    r = (zv[None, :] - theta.values[ensemble.members]) / s
    return -0.5 * np.einsum("ki,ki->k", r, r) - theta.n * (0.5 * np.log(2 * np.pi) + np.log(s))


def posterior_weights(ensemble: PermutationEnsemble, theta: ParamVector, z) -> WeightedPosterior:
    """Normalized log weights ``P(G = g | W = z)`` for every member ``g``."""
    ll = member_log_likelihoods(ensemble, theta, z)
    lw = ll - logsumexp(ll)
    lw.setflags(write=False)
    data = z if isinstance(z, DataVector) else DataVector(z)
    return WeightedPosterior(ensemble, lw, data, theta)
