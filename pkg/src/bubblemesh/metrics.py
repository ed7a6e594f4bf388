"""Mesh quality and edge-length statistics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sizing import SizeField, evaluate
from .triangulate import EmptyMeshError, TriMesh

CSV_FIELDS = (
    "domain", "h", "N_nodes", "N_tris", "q_avg", "q_min", "edge_mean", "edge_var",
    "h_err", "max_edge_err", "n_bad_edges", "alpha_hat",
)


def shape_quality(a, b, c):
    """q = (b+c-a)(c+a-b)(a+b-c)/(abc): twice inradius over circumradius.

    Vectorized. Sides violating the strict triangle inequality give 0.
    """
    a, b, c = (np.asarray(s, dtype=float) for s in (a, b, c))
    if np.any(a < 0) or np.any(b < 0) or np.any(c < 0):
        raise ValueError("side lengths must be non-negative")
    f1, f2, f3 = b + c - a, c + a - b, a + b - c
    ok = (f1 > 0) & (f2 > 0) & (f3 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(ok, f1 * f2 * f3 / (a * b * c), 0.0)
    q = np.minimum(q, 1.0)
    return float(q) if q.ndim == 0 else q


def triangle_sides(mesh: TriMesh):
    L = mesh.edge_lengths()
    return L[mesh.tri_edges]  # (T, 3), column k opposite vertex k


def edge_targets(mesh: TriMesh, size: SizeField):
    d = evaluate(size, mesh.nodes)
    return 0.5 * (d[mesh.edges[:, 0]] + d[mesh.edges[:, 1]])


@dataclass(frozen=True)
class BadEdges:
    e1: np.ndarray
    e2: np.ndarray
    area_sum: float
    sigma_area: float
    sigma_count: float
    alpha: float
    threshold_factor: float


@dataclass(frozen=True)
class MeshReport:
    q_avg: float
    q_min: float
    edge_mean: float
    edge_var: float
    h_err: float
    max_edge_err: float
    bad_edges: BadEdges
    lambda_weights: np.ndarray = field(repr=False)
    opposite_diff_mean: float = float("nan")
    n_nodes: int = 0
    n_tris: int = 0
    n_edges: int = 0

    @property
    def n_bad_edges(self):
        return len(self.bad_edges.e2)

    def as_row(self, domain, h, alpha_hat=float("nan")):
        return {
            "domain": domain, "h": h, "N_nodes": self.n_nodes, "N_tris": self.n_tris,
            "q_avg": self.q_avg, "q_min": self.q_min, "edge_mean": self.edge_mean,
            "edge_var": self.edge_var, "h_err": self.h_err, "max_edge_err": self.max_edge_err,
            "n_bad_edges": self.n_bad_edges, "alpha_hat": alpha_hat,
        }


def opposite_edge_differences(mesh: TriMesh):
    """|l_{e+1} - l_{e'+1}| and |l_{e+2} - l_{e'+2}| for each interior edge.

    For the quadrilateral formed by the two triangles on edge e these are the
    length differences of its two pairs of opposite sides.
    """
    inner = np.flatnonzero(mesh.edge_tris[:, 1] >= 0)
    t0, t1 = mesh.edge_tris[inner, 0], mesh.edge_tris[inner, 1]
    k0 = np.argmax(mesh.tri_edges[t0] == inner[:, None], axis=1)
    k1 = np.argmax(mesh.tri_edges[t1] == inner[:, None], axis=1)
    L = mesh.edge_lengths()
    out = []
    for s in (1, 2):
        a = L[mesh.tri_edges[t0, (k0 + s) % 3]]
        b = L[mesh.tri_edges[t1, (k1 + s) % 3]]
        out.append(np.abs(a - b))
    return np.column_stack(out) if len(inner) else np.zeros((0, 2))


def classify_bad_edges(mesh: TriMesh, size: SizeField, threshold_factor=3.0, alpha=1.0) -> BadEdges:
    """Split edges into E1 and E2 = {|l - l̄| > factor * l̄^(1+alpha)}.

    sigma_area solves sum of incident triangle areas = hbar^(2 sigma);
    sigma_count solves #E2 = N^sigma with N the node count.
    """
    L = mesh.edge_lengths()
    lbar = edge_targets(mesh, size)
    if not np.isfinite(alpha):
        alpha = 1.0
    bad = np.abs(L - lbar) > threshold_factor * lbar ** (1 + alpha)
    e2 = np.flatnonzero(bad)
    e1 = np.flatnonzero(~bad)
    area = np.abs(mesh.areas())
    et = mesh.edge_tris[e2]
    area_sum = float(np.where(et >= 0, area[np.maximum(et, 0)], 0.0).sum())
    if len(e2) == 0:
        sa = sc = 0.0
    else:
        hbar = float(lbar.mean())
        sa = float(np.log(area_sum) / (2 * np.log(hbar))) if hbar != 1 else float("nan")
        sc = float(np.log(len(e2)) / np.log(mesh.n_nodes))
    return BadEdges(e1, e2, area_sum, sa, sc, float(alpha), float(threshold_factor))


def mesh_report(mesh: TriMesh, size: SizeField, threshold_factor=3.0, alpha=1.0) -> MeshReport:
    if mesh.n_tris == 0:
        raise EmptyMeshError("mesh has no triangles")
    sides = triangle_sides(mesh)
    q = shape_quality(sides[:, 0], sides[:, 1], sides[:, 2])
    L = mesh.edge_lengths()
    lbar = edge_targets(mesh, size)
    err = np.abs(L - lbar)
    opp = opposite_edge_differences(mesh)
    return MeshReport(
        q_avg=float(q.mean()),
        q_min=float(q.min()),
        edge_mean=float(L.mean()),
        edge_var=float(L.var()),
        h_err=float(err.mean()),
        max_edge_err=float(err.max()),
        bad_edges=classify_bad_edges(mesh, size, threshold_factor, alpha),
        lambda_weights=lbar / lbar.sum(),
        opposite_diff_mean=float(opp.mean()) if len(opp) else 0.0,
        n_nodes=mesh.n_nodes,
        n_tris=mesh.n_tris,
        n_edges=mesh.n_edges,
    )


def estimate_alpha(series):
    """Least-squares slope of log h_err against log h, minus one.

    ``series`` is ``[(h, h_err), ...]``; any zero h_err means an ideal
    subdivision and returns ``inf``.
    """
    data = np.asarray([(float(h), float(e)) for h, e in series])
    if len(data) < 2:
        raise ValueError("need at least two size levels")
    if np.any(data[:, 1] < 0) or np.any(data[:, 0] <= 0):
        raise ValueError("sizes must be positive and errors non-negative")
    if np.any(data[:, 1] == 0):
        return float("inf")
    slope = np.polyfit(np.log(data[:, 0]), np.log(data[:, 1]), 1)[0]
    return float(slope - 1)
