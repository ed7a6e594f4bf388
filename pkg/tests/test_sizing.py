import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bubblemesh.geometry import ConfigurationError, preset_domain
from bubblemesh.sizing import (
    SizeField,
    constant,
    evaluate,
    expression,
    graded,
    pair_target,
    parse_size,
    radial_ring,
)

pt = st.tuples(st.floats(-3, 3, allow_nan=False), st.floats(-3, 3, allow_nan=False))


def test_radial_ring_examples():
    f = radial_ring()
    assert evaluate(f, (0, 0)) == pytest.approx(0.1)
    assert evaluate(f, (3, 0)) == pytest.approx(0.3)
    assert pair_target(f, (0, 0), (3, 0)) == pytest.approx(0.2)
    assert pair_target(f, (3, 0), (3, 0)) == pytest.approx(0.3)


def test_constant_examples():
    f = constant(0.05)
    assert evaluate(f, (7.0, -2.0)) == 0.05
    np.testing.assert_array_equal(evaluate(f, np.zeros((4, 2))), 0.05)
    assert pair_target(constant(0.1), (0, 0), (5, 5)) == 0.1


@given(p=pt, q=pt)
def test_pair_target_symmetric(p, q):
    for f in (radial_ring(), constant(0.2), expression("0.1 + 0.05*abs(x)")):
        assert pair_target(f, p, q) == pair_target(f, q, p)


@given(p=pt, q=pt)
def test_radial_ring_lipschitz(p, q):
    f = radial_ring()
    assert abs(evaluate(f, p) - evaluate(f, q)) <= 0.2 * np.hypot(p[0] - q[0], p[1] - q[1]) + 1e-15


@pytest.mark.parametrize("field", [radial_ring(), constant(0.3), graded(0.2, power=0.8, radius=0.5, hmin=0.01),
                                   expression("0.1 + 0.2*sqrt(x*x + y*y)")])
def test_positive_on_bbox(field):
    g = preset_domain("square3")
    lo, hi = field.bounds(g.bbox)
    assert lo > 0 and hi >= lo


def test_graded_clamps():
    f = graded(0.2, radius=0.5, power=0.8, hmin=0.01)
    assert evaluate(f, (0, 0)) == 0.01
    assert evaluate(f, (0.9, 0)) == 0.2
    r = 0.25
    assert evaluate(f, (r, 0)) == pytest.approx(0.2 * (r / 0.5) ** 0.8)


def test_expression_grammar():
    f = expression("max(0.1, min(0.5, 0.2*abs(sqrt(x^2 + y^2) - 2) + 0.1))")
    pts = np.random.default_rng(0).uniform(-3, 3, (200, 2))
    r = np.hypot(pts[:, 0], pts[:, 1])
    np.testing.assert_allclose(evaluate(f, pts), np.clip(0.2 * np.abs(r - 2) + 0.1, 0.1, 0.5))
    outer = r >= 2
    np.testing.assert_allclose(evaluate(f, pts)[outer], np.minimum(evaluate(radial_ring(), pts), 0.5)[outer])


@pytest.mark.parametrize("bad", ["__import__('os')", "x.real", "foo(x)", "x +", "sqrt(x, y)"])
def test_expression_rejects(bad):
    with pytest.raises(ConfigurationError):
        expression(bad)


def test_parse_size_forms():
    assert parse_size("0.05") == constant(0.05)
    assert parse_size("radial-ring").kind == "radial_ring"
    assert parse_size("expr:0.1+x*0").kind == "custom_expression"
    with pytest.raises(ConfigurationError):
        parse_size("tiny")


def test_bad_kind_and_h():
    with pytest.raises(ConfigurationError):
        SizeField("anisotropic")
    with pytest.raises(ConfigurationError):
        constant(0.0)
