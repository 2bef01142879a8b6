import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pioracle.model import (
    DataVector, DimensionError, ParamVector, Permutation, apply_permutation, compose, log_likelihood,
    sample_data, sample_matrix,
)


def test_apply_identity():
    assert apply_permutation(Permutation.identity(2), [1.5, -2.0]).tolist() == [1.5, -2.0]


def test_apply_transposition():
    assert apply_permutation(Permutation([1, 0]), [1.5, -2.0]).tolist() == [-2.0, 1.5]


def test_apply_three_cycle():
    # (3,1,2) in 1-based notation
    assert apply_permutation(Permutation([2, 0, 1]), ["a", "b", "c"]).tolist() == ["c", "a", "b"]


def test_apply_length_mismatch():
    with pytest.raises(DimensionError):
        apply_permutation(Permutation([1, 0]), [1.0, 2.0, 3.0])


def test_permutation_rejects_non_bijection():
    with pytest.raises(ValueError):
        Permutation([0, 0, 1])


@pytest.mark.parametrize(
    "theta, z, expected",
    [
        ([0.0], [0.0], -0.5 * math.log(2 * math.pi)),
        ([0.0, 0.0], [1.0, -1.0], -math.log(2 * math.pi) - 1),
        ([0.0, 2.0], [0.0, 2.0], -math.log(2 * math.pi)),
    ],
)
def test_log_likelihood_closed_form(theta, z, expected):
    assert log_likelihood(ParamVector(theta), DataVector(z)) == pytest.approx(expected, abs=1e-12)


def test_log_likelihood_spec_values():
    assert log_likelihood(ParamVector([0.0]), [0.0]) == pytest.approx(-0.918939, abs=1e-6)
    assert log_likelihood(ParamVector([0.0, 0.0]), [1.0, -1.0]) == pytest.approx(-2.837877, abs=1e-6)
    assert log_likelihood(ParamVector([0.0, 2.0]), [0.0, 2.0]) == pytest.approx(-1.837877, abs=1e-6)


def test_log_likelihood_sigma():
    # N(0, 4) density at 2: -0.5 log(2 pi) - log 2 - 0.5
    got = log_likelihood(ParamVector([0.0], sigma=2.0), [2.0])
    assert got == pytest.approx(-0.5 * math.log(2 * math.pi) - math.log(2) - 0.5)


def test_log_likelihood_dimension_error():
    with pytest.raises(DimensionError):
        log_likelihood(ParamVector([0.0, 1.0]), [0.0])


def test_param_vector_validation():
    with pytest.raises(ValueError):
        ParamVector([np.nan])
    with pytest.raises(ValueError):
        ParamVector([1.0], sigma=0.0)
    with pytest.raises(ValueError):
        ParamVector([])


def test_sample_data_deterministic():
    theta = ParamVector([0.0, 1.0, 2.0])
    a = sample_data(theta, seed=3, count=5)
    b = sample_data(theta, seed=3, count=5)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))


def test_sample_data_bad_count():
    with pytest.raises(ValueError):
        sample_data(ParamVector([0.0]), 1, 0)


def test_sample_mean_lln():
    count = 100_000
    Z = sample_matrix(ParamVector(np.zeros(3)), seed=11, count=count)
    assert np.all(np.abs(Z.mean(axis=0)) < 4 / math.sqrt(count))


def test_sample_variance_moment():
    Z = sample_matrix(ParamVector([3.0]), seed=12, count=100_000)
    assert abs(Z[:, 0].var(ddof=1) - 1.0) < 0.05



@settings(max_examples=60, deadline=None)
@given(st.data())
def test_group_law(data):
    n = data.draw(st.integers(1, 7))
    g = Permutation(data.draw(st.permutations(list(range(n)))))
    h = Permutation(data.draw(st.permutations(list(range(n)))))
    u = np.array(data.draw(st.lists(st.floats(-10, 10), min_size=n, max_size=n)))
    assert np.array_equal(apply_permutation(compose(g, h), u), apply_permutation(g, apply_permutation(h, u)))
    assert np.array_equal(apply_permutation(g @ g.inverse(), u), u)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_model_permutation_invariance(data):
    n = data.draw(st.integers(1, 6))
    g = Permutation(data.draw(st.permutations(list(range(n)))))
    theta = ParamVector(data.draw(st.lists(st.floats(-5, 5), min_size=n, max_size=n)),
                        sigma=data.draw(st.floats(0.5, 2.0)))
    z = np.array(data.draw(st.lists(st.floats(-5, 5), min_size=n, max_size=n)))
    lhs = log_likelihood(theta.permuted(g), apply_permutation(g, z))
    assert lhs == pytest.approx(log_likelihood(theta, z), rel=1e-13, abs=1e-12)
    assert np.array_equal(np.sort(theta.permuted(g).values), np.sort(theta.values))
