import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bubblemesh import bubbles
from bubblemesh.geometry import preset_domain
from bubblemesh.sizing import constant
from bubblemesh.triangulate import (
    DegenerateInputError,
    DuplicatePointError,
    EmptyMeshError,
    TriMesh,
    clip_to_domain,
    delaunay,
    structured_square,
    triangulate,
)


def empty_circumcircle_violations(mesh, tol=1e-10):
    """Brute force: every triangle's circumcircle against every other point."""
    P = mesh.nodes
    diam2 = np.sum(np.ptp(P, axis=0) ** 2)
    bad = 0
    for t in mesh.tris:
        a, b, c = P[t]
        d = 2 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
        ux = ((a @ a) * (b[1] - c[1]) + (b @ b) * (c[1] - a[1]) + (c @ c) * (a[1] - b[1])) / d
        uy = ((a @ a) * (c[0] - b[0]) + (b @ b) * (a[0] - c[0]) + (c @ c) * (b[0] - a[0])) / d
        r2 = (a[0] - ux) ** 2 + (a[1] - uy) ** 2
        inside = (P[:, 0] - ux) ** 2 + (P[:, 1] - uy) ** 2 < r2 - tol * diam2
        inside[t] = False
        bad += int(inside.sum())
    return bad


def check_mesh(mesh):
    assert np.all(mesh.areas() > 0)
    counts = np.bincount(mesh.tri_edges.ravel(), minlength=mesh.n_edges)
    np.testing.assert_array_equal(counts, 1 + (mesh.edge_tris[:, 1] >= 0))
    # unique edge list agrees with a recount from triangles
    rec = {tuple(sorted((t[i], t[j]))) for t in mesh.tris.tolist() for i, j in ((0, 1), (1, 2), (2, 0))}
    assert rec == {tuple(e) for e in mesh.edges.tolist()}
    # tri_edges[t, k] is opposite vertex k
    for t in range(min(mesh.n_tris, 50)):
        for k in range(3):
            assert mesh.tris[t, k] not in mesh.edges[mesh.tri_edges[t, k]]


def test_simplex():
    m = delaunay([(0, 0), (1, 0), (0, 1)])
    assert m.n_tris == 1 and m.n_edges == 3
    assert m.boundary_flags.all()


def test_square_cocircular():
    m = delaunay([(0, 0), (1, 0), (1, 1), (0, 1)])
    assert m.n_tris == 2 and m.n_edges == 5
    again = delaunay([(0, 0), (1, 0), (1, 1), (0, 1)])
    np.testing.assert_array_equal(m.tris, again.tris)


@pytest.mark.parametrize("seed", range(50))
def test_random_cloud_is_delaunay(seed):
    pts = np.random.default_rng(seed).random((200, 2))
    m = delaunay(pts)
    check_mesh(m)
    assert empty_circumcircle_violations(m) == 0
    # covers the convex hull
    from scipy.spatial import ConvexHull

    assert m.areas().sum() == pytest.approx(ConvexHull(pts).volume, rel=1e-12)
    assert m.euler_characteristic() == 1


@given(arrays(np.float64, (30, 2), elements=st.floats(0, 1, allow_nan=False)))
def test_hypothesis_clouds(pts):
    pts = np.unique(np.round(pts, 6), axis=0)
    try:
        m = delaunay(pts)
    except DegenerateInputError:
        return
    check_mesh(m)
    assert empty_circumcircle_violations(m) == 0


def test_degenerate_inputs():
    with pytest.raises(DegenerateInputError):
        delaunay([(0, 0), (1, 1)])
    with pytest.raises(DegenerateInputError):
        delaunay([(0, 0), (1, 1), (2, 2), (3, 3)])
    with pytest.raises(DuplicatePointError) as info:
        delaunay([(0, 0), (1, 0), (0, 1), (1, 0)])
    np.testing.assert_array_equal(info.value.pairs, [[1, 3]])


def test_clip_convex_unchanged():
    g = preset_domain("unit_circle")
    ang = np.linspace(0, 2 * np.pi, 40, endpoint=False)
    pts = np.vstack([np.column_stack([np.cos(ang), np.sin(ang)]), 0.5 * np.random.default_rng(0).random((30, 2))])
    m = delaunay(pts)
    c = clip_to_domain(m, g)
    assert c.n_tris == m.n_tris


def test_clip_lshape_and_idempotent():
    g = preset_domain("l_shape")
    xs = np.linspace(-1, 1, 11)
    X, Y = np.meshgrid(xs, xs)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts = pts[~((pts[:, 0] > 1e-9) & (pts[:, 1] < -1e-9))]
    m = clip_to_domain(delaunay(pts + 1e-7 * np.random.default_rng(0).random(pts.shape)), g)
    cen = m.centroids()
    assert not np.any((cen[:, 0] > 0) & (cen[:, 1] < 0))
    twice = clip_to_domain(m, g)
    np.testing.assert_array_equal(twice.tris, m.tris)
    assert m.euler_characteristic() == 1


def test_clip_to_nothing():
    g = preset_domain("unit_circle")
    with pytest.raises(EmptyMeshError):
        clip_to_domain(delaunay([(5, 5), (6, 5), (5, 6)]), g)


def test_bpm_circle_mesh(circle_run):
    m = circle_run["mesh"]
    check_mesh(m)
    assert m.euler_characteristic() == 1
    assert np.all(m.areas() >= 1e-14 * circle_run["geom"].diameter ** 2)
    # the edges are exactly the pairs used for the final fusion report
    s = circle_run["result"].system
    pairs = bubbles.delaunay_pairs(s)
    key = lambda e: {tuple(sorted(p)) for p in np.round(e, 12).reshape(-1, 4).tolist()}  # noqa: E731
    assert key(s.pos[pairs]) == key(m.nodes[m.edges])


def test_structured_square():
    m = structured_square(4)
    check_mesh(m)
    assert m.n_nodes == 25 and m.n_tris == 32
    assert m.areas().sum() == pytest.approx(1.0)
    assert m.euler_characteristic() == 1


def test_from_triangles_orients_ccw():
    m = TriMesh.from_triangles([(0, 0), (1, 0), (0, 1)], [(0, 2, 1)])
    assert m.areas()[0] > 0


def test_triangulate_pipeline():
    g = preset_domain("regular_pentagon")
    s = bubbles.initialize(g, constant(0.3), seed=0)
    m = triangulate(s.pos, g)
    check_mesh(m)
    assert m.areas().sum() == pytest.approx(2.5 * np.sin(2 * np.pi / 5), rel=1e-12)
