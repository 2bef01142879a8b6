"""Loss and constraint functionals for the four decision problems.

Every ratio uses the 0/0 = 0 convention. Each scalar loss has a ``*_batch``
twin that evaluates many (truth, action) rows at once for Monte Carlo.
Sign labels are encoded as int8: ``PLUS = 1``, ``MINUS = -1``, ``NA = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DataVector, DimensionError, ParamVector
from .posterior import NullSet

PLUS, MINUS, NA = 1, -1, 0
_LABELS = {"+": PLUS, "-": MINUS, "−": MINUS, "NA": NA, "na": NA, None: NA}


@dataclass(frozen=True, eq=False)
class GlobalTest:
    reject: int
    randomized: bool = False

    def __post_init__(self):
        if self.reject not in (0, 1):
            raise ValueError("global decision must be 0 or 1")

    def permuted(self, g):
        return self

    def __eq__(self, other):
        return isinstance(other, GlobalTest) and self.reject == other.reject


@dataclass(frozen=True, eq=False)
class MultiTest:
    reject: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.reject).astype(bool)
        arr.setflags(write=False)
        object.__setattr__(self, "reject", arr)

    @property
    def n(self):
        return self.reject.size

    def permuted(self, g):
        return MultiTest(self.reject[g.mapping])

    def __eq__(self, other):
        return isinstance(other, MultiTest) and np.array_equal(self.reject, other.reject)


@dataclass(frozen=True, eq=False)
class SignClassify:
    labels: np.ndarray
    tie_flag: bool = False

    def __post_init__(self):
        raw = self.labels
        if len(raw) and isinstance(next(iter(raw)), str):
            raw = [_LABELS[x] for x in raw]
        arr = np.asarray(raw, dtype=np.int8)
        if not np.isin(arr, (PLUS, MINUS, NA)).all():
            raise ValueError("sign labels must be +1, -1 or 0 (NA)")
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def n(self):
        return self.labels.size

    def as_strings(self) -> list[str]:
        return [{PLUS: "+", MINUS: "-", NA: "NA"}[int(v)] for v in self.labels]

    def permuted(self, g):
        return SignClassify(self.labels[g.mapping], self.tie_flag)

    def __eq__(self, other):
        return isinstance(other, SignClassify) and np.array_equal(self.labels, other.labels)


@dataclass(frozen=True, eq=False)
class Estimate:
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self):
        return self.values.size

    def permuted(self, g):
        return Estimate(self.values[g.mapping])

    def __eq__(self, other):
        return isinstance(other, Estimate) and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class ConfusionCounts:
    n10: int = 0
    n11: int = 0
    n00: int = 0
    n01: int = 0
    n_plus_minus: int = 0
    n_minus_plus: int = 0
    n_na_plus: int = 0
    n_na_minus: int = 0
    n_plus: int = 0
    n_minus: int = 0
    n_na: int = 0


def _truth(truth):
    return truth.values if isinstance(truth, ParamVector) else np.asarray(truth, dtype=float)


def _ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    return np.divide(num, den, out=np.zeros(np.broadcast(num, den).shape), where=den > 0)


def _check(t, a):
    if t.shape[-1] != a.shape[-1]:
        raise DimensionError(f"truth of length {t.shape[-1]} vs action of length {a.shape[-1]}")


def testing_counts(truth, action: MultiTest, null_set=None) -> ConfusionCounts:
    t = _truth(truth)
    rej = action.reject
    _check(t, rej)
    is_null = NullSet.parse(null_set).contains(t)
    return ConfusionCounts(
        n10=int(np.sum(rej & is_null)), n11=int(np.sum(rej & ~is_null)),
        n00=int(np.sum(~rej & is_null)), n01=int(np.sum(~rej & ~is_null)),
    )


def sign_counts(truth, action: SignClassify) -> ConfusionCounts:
    t = _truth(truth)
    lab = action.labels
    _check(t, lab)
    return ConfusionCounts(
        n_plus_minus=int(np.sum((lab == PLUS) & (t < 0))),
        n_minus_plus=int(np.sum((lab == MINUS) & (t > 0))),
        n_na_plus=int(np.sum((lab == NA) & (t > 0))),
        n_na_minus=int(np.sum((lab == NA) & (t < 0))),
        n_plus=int(np.sum(lab == PLUS)), n_minus=int(np.sum(lab == MINUS)), n_na=int(np.sum(lab == NA)),
    )


# ---------------------------------------------------------------- batch forms
def fdp_batch(truth, reject, null_set=None) -> np.ndarray:
    t, rej = _truth(truth), np.asarray(reject, dtype=bool)
    _check(t, rej)
    is_null = NullSet.parse(null_set).contains(t)
    return _ratio(np.sum(rej & is_null, axis=-1), np.sum(rej, axis=-1))


def fnp_batch(truth, reject, null_set=None) -> np.ndarray:
    t, rej = _truth(truth), np.asarray(reject, dtype=bool)
    _check(t, rej)
    is_null = NullSet.parse(null_set).contains(t)
    return _ratio(np.sum(~rej & ~is_null, axis=-1), np.sum(~rej, axis=-1))


def dir_fdp_batch(truth, labels) -> np.ndarray:
    t, lab = _truth(truth), np.asarray(labels)
    _check(t, lab)
    wrong = ((lab == PLUS) & (t < 0)) | ((lab == MINUS) & (t > 0))
    return _ratio(np.sum(wrong, axis=-1), np.sum(lab != NA, axis=-1))


def dir_fnp_batch(truth, labels) -> np.ndarray:
    t, lab = _truth(truth), np.asarray(labels)
    _check(t, lab)
    missed = (lab == NA) & (t != 0)
    return _ratio(np.sum(missed, axis=-1), np.sum(lab == NA, axis=-1))


def selective_sq_loss_batch(truth, estimates, selected) -> np.ndarray:
    t, a = _truth(truth), np.asarray(estimates, dtype=float)
    _check(t, a)
    sel = np.asarray(selected, dtype=bool)
    return np.sum(np.where(sel, (a - t) ** 2, 0.0), axis=-1)


def global_loss_batch(truth, reject, null_set=None) -> np.ndarray:
    t = _truth(truth)
    alt = ~np.all(NullSet.parse(null_set).contains(t), axis=-1)
    return (alt & (np.asarray(reject) == 0)).astype(float)


# ---------------------------------------------------------------- scalar forms
def fdp(truth, action: MultiTest, null_set=None) -> float:
    return float(fdp_batch(truth, action.reject, null_set))


def fnp(truth, action: MultiTest, null_set=None) -> float:
    return float(fnp_batch(truth, action.reject, null_set))


def dir_fdp(truth, action: SignClassify) -> float:
    return float(dir_fdp_batch(truth, action.labels))


def dir_fnp(truth, action: SignClassify) -> float:
    return float(dir_fnp_batch(truth, action.labels))


def selective_sq_loss(z, truth, action: Estimate, s: "SelectionRule") -> float:
    zv = z.values if isinstance(z, DataVector) else np.asarray(z, dtype=float)
    return float(selective_sq_loss_batch(truth, action.values, s.select(zv)))


def global_loss(truth, action: GlobalTest, null_set=None) -> float:
    return float(global_loss_batch(truth, action.reject, null_set))


# ---------------------------------------------------------------- selection
@dataclass(frozen=True)
class SelectionRule:
    """Data-dependent selection s(z) in {0,1}^n satisfying s(g(z)) = g(s(z)).

    ``kind`` is ``"all"``, ``"argmax"`` or ``"topk"``. Tied values at the
    selection boundary are selected together when they all fit within ``k``;
    otherwise only values strictly above the boundary are selected and the
    row is flagged degenerate.
    """

    kind: str = "all"
    k: int = 1

    def __post_init__(self):
        if self.kind not in ("all", "argmax", "topk"):
            raise ValueError(f"unknown selection kind {self.kind!r}")
        if self.kind == "topk" and self.k < 1:
            raise ValueError("TopK needs k >= 1")
        if self.kind == "argmax":
            object.__setattr__(self, "k", 1)

    @classmethod
    def all(cls):
        return cls("all")

    @classmethod
    def argmax(cls):
        return cls("argmax", 1)

    @classmethod
    def topk(cls, k: int):
        return cls("topk", int(k))

    @classmethod
    def parse(cls, spec) -> "SelectionRule":
        if isinstance(spec, SelectionRule):
            return spec
        s = str(spec or "all").strip().lower()
        if s in ("all", "argmax"):
            return cls(s)
        for prefix in ("topk:", "top", "topk"):
            if s.startswith(prefix):
                return cls.topk(int(s[len(prefix):].strip("():=")))
        raise ValueError(f"cannot parse selection rule {spec!r}")

    def describe(self) -> str:
        return "all" if self.kind == "all" else ("argmax" if self.kind == "argmax" else f"topk{self.k}")

    def select_batch(self, Z) -> tuple[np.ndarray, np.ndarray]:
        """Selection masks and degenerate-tie flags for every row of ``Z``."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        D, n = Z.shape
        if self.kind == "all" or self.k >= n:
            return np.ones((D, n), dtype=bool), np.zeros(D, dtype=bool)
        kth = -np.partition(-Z, self.k - 1, axis=1)[:, self.k - 1]
        geq = Z >= kth[:, None]
        fits = geq.sum(axis=1) <= self.k
        mask = np.where(fits[:, None], geq, Z > kth[:, None])
        return mask, ~fits

    def select(self, z) -> np.ndarray:
        zv = z.values if isinstance(z, DataVector) else np.asarray(z, dtype=float)
        return self.select_batch(zv[None, :])[0][0]
