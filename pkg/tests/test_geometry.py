import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from matplotlib.path import Path as MplPath

from bubblemesh.geometry import (
    PRESETS,
    Arc,
    ConfigurationError,
    get_domain,
    load_polygon,
    polygon,
    preset_domain,
    project_to_boundary,
    signed_distance,
)

POLYGONS = ("equilateral_triangle", "regular_pentagon", "l_shape", "square3")


def unit_square():
    return polygon("square", [(0, 0), (1, 0), (1, 1), (0, 1)])


def test_circle_sdf_examples():
    g = preset_domain("unit_circle")
    assert signed_distance(g, (0, 0)) == pytest.approx(-1.0)
    assert signed_distance(g, (2, 0)) == pytest.approx(1.0)
    assert signed_distance(g, (0, 0.5)) == pytest.approx(-0.5)


def test_projection_examples():
    g = preset_domain("unit_circle")
    np.testing.assert_allclose(project_to_boundary(g, (2, 0)), (1, 0))
    np.testing.assert_allclose(project_to_boundary(g, (0, 0.25)), (0, 1), atol=1e-15)
    np.testing.assert_allclose(project_to_boundary(unit_square(), (0.5, 1.2)), (0.5, 1.0))


def test_preset_shapes():
    tri = preset_domain("equilateral_triangle")
    expected = {(0.0, 0.0), (1.0, 0.0), (0.5, round(np.sqrt(3) / 2, 12))}
    assert {(round(x, 12), round(y, 12)) for x, y in tri.corners} == expected
    circ = preset_domain("unit_circle")
    assert len(circ.corners) == 0
    assert len(circ.boundary_loops) == 1 and isinstance(circ.boundary_loops[0], Arc)
    ell = preset_domain("l_shape")
    assert len(ell.corners) == 6
    assert any(np.allclose(c, (0, 0)) for c in ell.corners)
    sq = preset_domain("square3")
    np.testing.assert_allclose(sq.bbox, [[-3, -3], [3, 3]])


def test_unknown_preset():
    with pytest.raises(ConfigurationError):
        preset_domain("hexagon")


def test_pentagon_circumradius():
    g = preset_domain("regular_pentagon")
    np.testing.assert_allclose(np.linalg.norm(g.corners, axis=1), 1.0, atol=1e-12)
    assert any(np.allclose(c, (0, 1)) for c in g.corners)


@pytest.mark.parametrize("name", PRESETS)
def test_domain_invariants(name):
    g = preset_domain(name)
    diam = g.diameter
    for c in g.corners:
        assert abs(signed_distance(g, c)) <= 1e-12 * diam
    for loop in g.boundary_loops:
        if isinstance(loop, Arc):
            assert loop.theta1 - loop.theta0 == pytest.approx(2 * np.pi)
        else:
            np.testing.assert_array_equal(loop.vertices[0], loop.vertices[-1])
            assert np.all(loop.vertices >= g.bbox[0]) and np.all(loop.vertices <= g.bbox[1])
    interior = {"l_shape": (-0.5, 0.5)}.get(name, tuple(g.corners.mean(axis=0)) if len(g.corners) else (0, 0))
    assert signed_distance(g, interior) < 0


def test_reentrant_corner_is_concave():
    g = preset_domain("l_shape")
    # a point just inside the removed quadrant is outside, its mirror inside
    assert signed_distance(g, (0.1, -0.1)) > 0
    assert signed_distance(g, (-0.1, 0.1)) < 0


@pytest.mark.parametrize("name", PRESETS)
def test_sign_agrees_with_even_odd_oracle(name, rng):
    g = preset_domain(name)
    pts = rng.uniform(g.bbox[0], g.bbox[1], size=(10_000, 2))
    sd = signed_distance(g, pts)
    if g.is_circle:
        ref = np.linalg.norm(pts, axis=1) < 1
    else:
        ref = MplPath(g.boundary_loops[0].vertices).contains_points(pts)
    clear = np.abs(sd) > 1e-9
    np.testing.assert_array_equal((sd < 0)[clear], ref[clear])


@pytest.mark.parametrize("name", ("equilateral_triangle", "regular_pentagon", "square3"))
def test_convex_sdf_is_exact(name, rng):
    # oracle: brute-force distance to a dense sampling of the boundary
    g = preset_domain(name)
    v = g.boundary_loops[0].vertices
    t = np.linspace(0, 1, 2001)[:, None]
    dense = np.concatenate([a + t * (b - a) for a, b in zip(v[:-1], v[1:])])
    pts = rng.uniform(g.bbox[0], g.bbox[1], size=(300, 2))
    dist = np.min(np.linalg.norm(pts[:, None] - dense[None], axis=2), axis=1)
    np.testing.assert_allclose(np.abs(signed_distance(g, pts)), dist, atol=3e-3)


coords = st.floats(-4, 4, allow_nan=False)


@given(name=st.sampled_from(PRESETS), x=coords, y=coords)
def test_projection_lands_on_boundary_and_is_idempotent(name, x, y):
    g = preset_domain(name)
    q = project_to_boundary(g, (x, y))
    assert abs(signed_distance(g, q)) <= 1e-9 * g.diameter
    q2 = project_to_boundary(g, q)
    assert np.linalg.norm(q2 - q) <= 1e-9 * g.diameter


@given(x=coords, y=coords)
def test_projection_is_nearest_on_square(x, y):
    g = unit_square()
    q = project_to_boundary(g, (x, y))
    # nearest point on the square's boundary by clamping to each side
    cands = [(np.clip(x, 0, 1), 0.0), (np.clip(x, 0, 1), 1.0), (0.0, np.clip(y, 0, 1)), (1.0, np.clip(y, 0, 1))]
    best = min(np.hypot(x - a, y - b) for a, b in cands)
    assert np.hypot(x - q[0], y - q[1]) == pytest.approx(best, abs=1e-12)


def test_load_polygon(tmp_path):
    f = tmp_path / "quad.txt"
    f.write_text("# square\n0 0\n1 0\n1 1\n0 1\n")
    g = load_polygon(f)
    assert len(g.corners) == 4
    assert signed_distance(g, (0.5, 0.5)) == pytest.approx(-0.5)
    assert get_domain(str(f)).name == "quad"


def test_load_polygon_rejects_garbage(tmp_path):
    f = tmp_path / "bad.txt"
    f.write_text("0 0\n1 oops\n")
    with pytest.raises(ConfigurationError, match="bad.txt:2"):
        load_polygon(f)


def test_clockwise_input_is_reoriented():
    g = polygon("cw", [(0, 0), (0, 1), (1, 1), (1, 0)])
    assert signed_distance(g, (0.5, 0.5)) < 0
