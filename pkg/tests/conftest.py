import itertools
import math

import numpy as np
import pytest

_ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail=""):
    _ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# ---------------------------------------------------------------- brute force
# Plain-Python enumeration over every permutation; shares no code with the package.
def brute_posterior(theta, z, sigma=1.0):
    """List of (permuted theta tuple, posterior weight) over all n! permutations."""
    n = len(theta)
    perms = list(itertools.permutations(range(n)))
    logs = []
    for g in perms:
        s = 0.0
        for i in range(n):
            r = (z[i] - theta[g[i]]) / sigma
            s += -0.5 * r * r - 0.5 * math.log(2 * math.pi) - math.log(sigma)
        logs.append(s)
    mx = max(logs)
    w = [math.exp(v - mx) for v in logs]
    tot = sum(w)
    return [(tuple(theta[g[i]] for i in range(n)), wi / tot) for g, wi in zip(perms, w)]


def brute_log_marginal(theta, z, sigma=1.0):
    n = len(theta)
    terms = []
    for g in itertools.permutations(range(n)):
        s = 0.0
        for i in range(n):
            r = (z[i] - theta[g[i]]) / sigma
            s += -0.5 * r * r - 0.5 * math.log(2 * math.pi) - math.log(sigma)
        terms.append(s)
    mx = max(terms)
    return mx + math.log(sum(math.exp(t - mx) for t in terms) / len(terms))


def _ratio(a, b):
    return a / b if b else 0.0


def brute_fdp(xi, a):
    return _ratio(sum(1 for x, r in zip(xi, a) if r and x == 0), sum(a))


def brute_fnp(xi, a):
    return _ratio(sum(1 for x, r in zip(xi, a) if not r and x != 0), len(a) - sum(a))


def brute_dir_fdp(xi, lab):
    wrong = sum(1 for x, l in zip(xi, lab) if (l == 1 and x < 0) or (l == -1 and x > 0))
    return _ratio(wrong, sum(1 for l in lab if l != 0))


def brute_dir_fnp(xi, lab):
    return _ratio(sum(1 for x, l in zip(xi, lab) if l == 0 and x != 0), sum(1 for l in lab if l == 0))


def expected_loss(post, loss, action):
    return sum(w * loss(xi, action) for xi, w in post)


def all_mt_actions(n):
    return list(itertools.product((0, 1), repeat=n))


def all_sign_actions(n):
    return list(itertools.product((1, -1, 0), repeat=n))


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)
