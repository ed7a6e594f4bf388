from math import factorial

import numpy as np
import pytest

from bubblemesh.quadrature import RULES, triangle_rule


def exact_monomial(i, j):
    """Integral of x^i y^j over the unit right triangle."""
    return factorial(i) * factorial(j) / factorial(i + j + 2)


@pytest.mark.parametrize("degree", sorted(RULES))
def test_exact_to_degree(degree):
    bary, w = RULES[degree]
    x, y = bary[:, 1], bary[:, 2]
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            approx = 0.5 * np.sum(w * x**i * y**j)
            assert approx == pytest.approx(exact_monomial(i, j), rel=1e-14)


@pytest.mark.parametrize("degree", sorted(RULES))
def test_not_exact_beyond(degree):
    # one degree higher some monomial is missed: the rules are not over-claimed
    bary, w = RULES[degree]
    x, y = bary[:, 1], bary[:, 2]
    d = degree + 1
    errs = [abs(0.5 * np.sum(w * x**i * y ** (d - i)) - exact_monomial(i, d - i)) for i in range(d + 1)]
    assert max(errs) > 1e-10


@pytest.mark.parametrize("degree", sorted(RULES))
def test_rule_is_valid(degree):
    bary, w = RULES[degree]
    np.testing.assert_allclose(bary.sum(axis=1), 1.0, atol=1e-15)
    assert np.all(bary >= 0) and np.all(w > 0)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)


def test_rule_lookup():
    assert triangle_rule(0) is RULES[1]
    assert triangle_rule(3) is RULES[4]
    assert triangle_rule(5) is RULES[6]
    with pytest.raises(ValueError):
        triangle_rule(7)
