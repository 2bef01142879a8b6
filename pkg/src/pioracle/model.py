"""Exchangeable Gaussian sequence model Z_i ~ N(theta_i, sigma^2).

Parameter and data vectors are thin immutable wrappers around float arrays.
Permutations are stored as 0-based index arrays acting by
``g(u) = (u[g[0]], ..., u[g[n-1]])``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


class DimensionError(ValueError):
    """Raised when vector lengths do not agree."""


def _frozen(values, name):
    arr = np.array(values, dtype=float, ndmin=1)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"{name} must be a non-empty 1-d vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Nonrandom parameter vector theta with a common known noise scale."""

    values: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, "theta"))
        sigma = float(self.sigma)
        if not (np.isfinite(sigma) and sigma > 0):
            raise ValueError("sigma must be positive and finite")
        object.__setattr__(self, "sigma", sigma)

    @property
    def n(self) -> int:
        return self.values.size

    def permuted(self, g: "Permutation") -> "ParamVector":
        return ParamVector(apply_permutation(g, self.values), self.sigma)

    def __eq__(self, other):
        if not isinstance(other, ParamVector):
            return NotImplemented
        return self.sigma == other.sigma and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.values.tobytes(), self.sigma))

    def __repr__(self):
        return f"ParamVector({self.values.tolist()}, sigma={self.sigma})"


@dataclass(frozen=True, eq=False)
class DataVector:
    """A realization z of Z (or of the mixed vector W)."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, "z"))

    @property
    def n(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, DataVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    def __repr__(self):
        return f"DataVector({self.values.tolist()})"


@dataclass(frozen=True, eq=False)
class Permutation:
    """A bijection on {0, ..., n-1} stored as an index array."""

    mapping: np.ndarray = field()

    def __post_init__(self):
        arr = np.array(self.mapping, dtype=np.intp, ndmin=1)
        if arr.ndim != 1 or not np.array_equal(np.sort(arr), np.arange(arr.size)):
            raise ValueError("mapping is not a bijection on {0, ..., n-1}")
        arr.setflags(write=False)
        object.__setattr__(self, "mapping", arr)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "Permutation":
        return cls(rng.permutation(n))

    @property
    def n(self) -> int:
        return self.mapping.size

    def inverse(self) -> "Permutation":
        return Permutation(np.argsort(self.mapping))

    def __matmul__(self, other: "Permutation") -> "Permutation":
        return compose(self, other)

    def __eq__(self, other):
        if not isinstance(other, Permutation):
            return NotImplemented
        return np.array_equal(self.mapping, other.mapping)

    def __hash__(self):
        return hash(self.mapping.tobytes())

    def __repr__(self):
        return f"Permutation({self.mapping.tolist()})"


def _as_array(u):
    if isinstance(u, (ParamVector, DataVector)):
        return u.values
    return np.asarray(u)


def apply_permutation(g: Permutation, u) -> np.ndarray:
    """Return ``g(u)``, i.e. ``out[i] = u[g[i]]``.

    Works on the last axis, so a batch of vectors can be permuted at once.
    """
    arr = _as_array(u)
    if arr.shape[-1] != g.n:
        raise DimensionError(f"vector of length {arr.shape[-1]} vs permutation of size {g.n}")
    return arr[..., g.mapping]


def compose(g: Permutation, h: Permutation) -> Permutation:
    """Composition with ``(g o h)(u) == g(h(u))``.

    ``g(h(u))[i] = h(u)[g[i]] = u[h[g[i]]]``, so the index array is ``h[g]``.
    """
    if g.n != h.n:
        raise DimensionError("cannot compose permutations of different sizes")
    return Permutation(h.mapping[g.mapping])


def _check_dims(theta: ParamVector, z) -> np.ndarray:
    zv = _as_array(z)
    if zv.shape[-1] != theta.n:
        raise DimensionError(f"data of length {zv.shape[-1]} vs theta of length {theta.n}")
    return zv


def log_likelihood(theta: ParamVector, z) -> float:
    """Gaussian log density of z under N(theta, sigma^2 I)."""
    zv = _check_dims(theta, z)
    s = theta.sigma
    r = (zv - theta.values) / s
    return float(-0.5 * np.sum(r * r) - theta.n * (0.5 * LOG_2PI + np.log(s)))


def sample_data(theta: ParamVector, seed: int, count: int) -> list[DataVector]:
    """Draw ``count`` independent realizations of Z, deterministic in ``seed``."""
    if int(count) < 1:
        raise ValueError("count must be >= 1")
    return [DataVector(row) for row in sample_matrix(theta, seed, count)]


def sample_matrix(theta: ParamVector, seed: int, count: int) -> np.ndarray:
    """Array form of :func:`sample_data`, shape ``(count, n)``."""
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((int(count), theta.n))
    return theta.values + theta.sigma * eps
