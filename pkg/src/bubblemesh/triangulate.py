"""Delaunay triangulation of bubble centres and clipping to the domain."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .geometry import signed_distance

# local edge k of a triangle is opposite local vertex k
LOCAL_EDGES = np.array([(1, 2), (2, 0), (0, 1)])


class MeshError(ValueError):
    pass


class DegenerateInputError(MeshError):
    pass


class DuplicatePointError(MeshError):
    def __init__(self, pairs):
        self.pairs = [tuple(int(i) for i in p) for p in pairs]
        shown = ", ".join(f"{i}-{j}" for i, j in self.pairs[:10])
        more = "" if len(self.pairs) <= 10 else f" (+{len(self.pairs) - 10} more)"
        super().__init__(f"duplicate points at indices {shown}{more}")


class EmptyMeshError(MeshError):
    pass


def signed_areas(nodes, tris):
    p0, p1, p2 = nodes[tris[:, 0]], nodes[tris[:, 1]], nodes[tris[:, 2]]
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0]))


@dataclass(frozen=True)
class TriMesh:
    """Triangle mesh with a unique edge list.

    ``edge_tris[e]`` holds the one or two triangles sharing edge ``e`` (``-1``
    pads boundary edges); ``tri_edges[t, k]`` is the edge opposite local
    vertex ``k`` of triangle ``t``.
    """

    nodes: np.ndarray
    tris: np.ndarray
    edges: np.ndarray
    edge_tris: np.ndarray
    tri_edges: np.ndarray
    boundary_flags: np.ndarray

    @classmethod
    def from_triangles(cls, nodes, tris):
        nodes = np.asarray(nodes, dtype=float)
        tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
        flip = signed_areas(nodes, tris) < 0
        tris = tris.copy()
        tris[flip] = tris[flip][:, [0, 2, 1]]
        local = tris[:, LOCAL_EDGES]  # (T, 3, 2)
        flat = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(flat, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        tri_edges = inverse.reshape(-1, 3)
        owner = np.repeat(np.arange(len(tris)), 3)
        order = np.argsort(inverse, kind="stable")
        counts = np.bincount(inverse, minlength=len(edges))
        if counts.max(initial=0) > 2:
            raise MeshError("non-manifold edge shared by more than two triangles")
        start = np.cumsum(counts) - counts
        edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
        edge_tris[:, 0] = owner[order][start]
        two = counts == 2
        edge_tris[two, 1] = owner[order][start[two] + 1]
        boundary = np.zeros(len(nodes), dtype=bool)
        boundary[edges[counts == 1].ravel()] = True
        return cls(nodes, tris, edges, edge_tris, tri_edges, boundary)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_tris(self):
        return len(self.tris)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def boundary_edges(self):
        return np.flatnonzero(self.edge_tris[:, 1] < 0)

    def areas(self):
        return signed_areas(self.nodes, self.tris)

    def edge_lengths(self):
        d = self.nodes[self.edges[:, 1]] - self.nodes[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def centroids(self):
        return self.nodes[self.tris].mean(axis=1)

    def euler_characteristic(self):
        return self.n_nodes - self.n_edges + self.n_tris


def _check_points(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DegenerateInputError(f"expected (N, 2) points, got shape {pts.shape}")
    if len(pts) < 3:
        raise DegenerateInputError(f"need at least 3 points, got {len(pts)}")
    if not np.all(np.isfinite(pts)):
        raise DegenerateInputError("non-finite point coordinates")
    span = pts.max(axis=0) - pts.min(axis=0)
    diam = float(np.hypot(*span))
    if diam == 0:
        raise DegenerateInputError("all points coincide")
    pairs = cKDTree(pts).query_pairs(1e-12 * diam, output_type="ndarray")
    if len(pairs):
        raise DuplicatePointError(pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))])
    centred = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[1] <= 1e-12 * sv[0]:
        raise DegenerateInputError("points are collinear")
    return pts, diam


def delaunay(points) -> TriMesh:
    """Delaunay triangulation of the convex hull of ``points``.

    Cocircular ties are resolved by Qhull's triangulated output, which is a
    deterministic function of the input order.
    """
    pts, diam = _check_points(points)
    tri = Delaunay(pts, qhull_options="Qbb Qc Qz Q12 Qt")
    simplices = tri.simplices.astype(np.int64)
    area = np.abs(signed_areas(pts, simplices))
    simplices = simplices[area >= 1e-14 * diam**2]
    if len(simplices) == 0:
        raise DegenerateInputError("triangulation has no non-degenerate triangle")
    return TriMesh.from_triangles(pts, simplices)


def compress(nodes, tris):
    """Drop nodes not referenced by any triangle; returns the mesh and the kept node ids."""
    used = np.unique(tris)
    remap = np.full(len(nodes), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriMesh.from_triangles(nodes[used], remap[tris]), used


def clip_to_domain(mesh: TriMesh, geom) -> TriMesh:
    """Keep exactly the triangles whose centroid lies inside ``geom``."""
    keep = signed_distance(geom, mesh.centroids()) < 0
    if not keep.any():
        raise EmptyMeshError(f"no triangle centroid inside domain {geom.name!r}")
    clipped, _ = compress(mesh.nodes, mesh.tris[keep])
    return clipped


def clip_with_ids(mesh: TriMesh, geom):
    keep = signed_distance(geom, mesh.centroids()) < 0
    if not keep.any():
        raise EmptyMeshError(f"no triangle centroid inside domain {geom.name!r}")
    return compress(mesh.nodes, mesh.tris[keep])


def triangulate(points, geom) -> TriMesh:
    return clip_to_domain(delaunay(points), geom)


def structured_square(n, lo=(0.0, 0.0), hi=(1.0, 1.0)) -> TriMesh:
    """Uniform right-triangle mesh of a rectangle, ``n`` cells per side, diagonals SW-NE."""
    xs = np.linspace(lo[0], hi[0], n + 1)
    ys = np.linspace(lo[1], hi[1], n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    a = (j * (n + 1) + i).ravel()
    b, c, d = a + 1, a + n + 2, a + n + 1
    tris = np.vstack([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return TriMesh.from_triangles(nodes, tris)
