"""Conforming P1/P2 Lagrange elements for -Δu = f with Dirichlet data.

Local P2 ordering: three vertex DOFs, then the midpoints of local edges
(1,2), (2,0), (0,1), i.e. midpoint k sits opposite vertex k.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted
from scipy.spatial import cKDTree

from .geometry import DomainGeometry, preset_domain
from .quadrature import triangle_rule
from .triangulate import LOCAL_EDGES, MeshError, TriMesh

AREA_TOL = 1e-14
# load-vector quadrature degree per element degree; the 1-point rule for P1
# keeps the O(h^2) consistency term that an exact load cancels on
# equilateral meshes
LOAD_DEGREE = {1: 1, 2: 6}


class AssemblyError(MeshError):
    def __init__(self, tri, area):
        self.triangle = int(tri)
        super().__init__(f"degenerate element {tri} (area {area:.3e})")


class SolverError(RuntimeError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"CG did not converge in {iterations} iterations (relative residual {residual:.3e})")


# ---------------------------------------------------------------- spaces

@dataclass(frozen=True)
class FemSpace:
    degree: int
    mesh: TriMesh
    dof_map: np.ndarray
    dirichlet_dofs: np.ndarray
    dof_coords: np.ndarray

    @property
    def n_dofs(self):
        return len(self.dof_coords)

    @property
    def n_free(self):
        return self.n_dofs - len(self.dirichlet_dofs)

    @property
    def free_dofs(self):
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return np.flatnonzero(mask)


def function_space(mesh: TriMesh, degree: int) -> FemSpace:
    if degree not in (1, 2):
        raise ValueError(f"degree must be 1 or 2, got {degree}")
    bnodes = np.flatnonzero(mesh.boundary_flags)
    if degree == 1:
        return FemSpace(1, mesh, mesh.tris.copy(), bnodes, mesh.nodes.copy())
    n = mesh.n_nodes
    dof_map = np.hstack([mesh.tris, n + mesh.tri_edges])
    mids = 0.5 * (mesh.nodes[mesh.edges[:, 0]] + mesh.nodes[mesh.edges[:, 1]])
    bd = np.concatenate([bnodes, n + mesh.boundary_edges])
    return FemSpace(2, mesh, dof_map, bd, np.vstack([mesh.nodes, mids]))


# ---------------------------------------------------------------- basis

def _geometry(mesh: TriMesh, check=True):
    """Areas and barycentric gradients (T, 3, 2)."""
    p = mesh.nodes[mesh.tris]
    area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    if check:
        scale = max(np.ptp(mesh.nodes, axis=0).max(), 1e-300) ** 2
        bad = np.flatnonzero(area <= AREA_TOL * scale)
        if len(bad):
            raise AssemblyError(bad[0], area[bad[0]])
    # grad λ_i = rot90(p_{i+2} - p_{i+1}) / (2A)
    e = p[:, [2, 0, 1]] - p[:, [1, 2, 0]]
    grads = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2 * area[:, None, None])
    return area, grads


def shape_values(degree, bary):
    """Basis values at barycentric points: (Q, ndof)."""
    if degree == 1:
        return bary.copy()
    a, b = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    return np.hstack([bary * (2 * bary - 1), 4 * bary[:, a] * bary[:, b]])


def shape_gradients(degree, bary, grads):
    """Physical basis gradients: (T, Q, ndof, 2)."""
    T, Q = len(grads), len(bary)
    if degree == 1:
        return np.broadcast_to(grads[:, None], (T, Q, 3, 2))
    a, b = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
    vert = (4 * bary - 1)[None, :, :, None] * grads[:, None, :, :]
    edge = 4 * (bary[:, a][None, :, :, None] * grads[:, None, b, :]
                + bary[:, b][None, :, :, None] * grads[:, None, a, :])
    return np.concatenate([vert, edge], axis=2)


def _physical_points(mesh, bary):
    # (T, Q, 2)
    return np.einsum("qk,tkd->tqd", bary, mesh.nodes[mesh.tris])


# ---------------------------------------------------------------- problems

@dataclass(frozen=True)
class BenchmarkProblem:
    name: str
    exact_u: Callable
    exact_grad: Callable
    rhs_f: Callable
    domain: DomainGeometry


def _xy(p):
    p = np.asarray(p, dtype=float)
    return p[..., 0], p[..., 1]


def _triangle_problem():
    tp = 2 * np.pi

    def u(p):
        x, y = _xy(p)
        return np.cos(tp * x) * np.sin(tp * y)

    def grad(p):
        x, y = _xy(p)
        return np.stack([-tp * np.sin(tp * x) * np.sin(tp * y), tp * np.cos(tp * x) * np.cos(tp * y)], axis=-1)

    return BenchmarkProblem("triangle", u, grad, lambda p: 2 * tp**2 * u(p), preset_domain("equilateral_triangle"))


def _circle_problem():
    def u(p):
        x, y = _xy(p)
        return np.sin(x) * np.sin(y)

    def grad(p):
        x, y = _xy(p)
        return np.stack([np.cos(x) * np.sin(y), np.sin(x) * np.cos(y)], axis=-1)

    return BenchmarkProblem("circle", u, grad, lambda p: 2 * u(p), preset_domain("unit_circle"))


def _pentagon_problem():
    def u(p):
        x, y = _xy(p)
        return np.exp(x + y)

    def grad(p):
        v = u(p)
        return np.stack([v, v], axis=-1)

    return BenchmarkProblem("pentagon", u, grad, lambda p: -2 * u(p), preset_domain("regular_pentagon"))


def _polar(p):
    x, y = _xy(p)
    phi = np.arctan2(y, x)
    # angle in [0, 2π); the domain occupies [0, 3π/2]
    phi = np.where(phi < 0, phi + 2 * np.pi, phi)
    return np.hypot(x, y), phi


def _lshape_problem():
    # r^{2/3} sin(2φ/3), φ measured from the edge y = 0, x > 0 through the
    # domain to the edge x = 0, y < 0; zero on both re-entrant edges
    def u(p):
        r, phi = _polar(p)
        return r ** (2 / 3) * np.sin(2 * phi / 3)

    def grad(p):
        r, phi = _polar(p)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(r > 0, (2 / 3) * r ** (-1 / 3), 0.0)
        return np.stack([-s * np.sin(phi / 3), s * np.cos(phi / 3)], axis=-1)

    def f(p):
        return np.zeros(np.shape(p)[:-1])

    return BenchmarkProblem("lshape", u, grad, f, preset_domain("l_shape"))


BENCHMARKS = {
    "triangle": _triangle_problem,
    "circle": _circle_problem,
    "pentagon": _pentagon_problem,
    "lshape": _lshape_problem,
}

# domain preset -> benchmark name
DOMAIN_BENCHMARK = {
    "equilateral_triangle": "triangle",
    "unit_circle": "circle",
    "regular_pentagon": "pentagon",
    "l_shape": "lshape",
}


def get_benchmark(name) -> BenchmarkProblem:
    if isinstance(name, BenchmarkProblem):
        return name
    key = DOMAIN_BENCHMARK.get(name, name)
    if key not in BENCHMARKS:
        raise ValueError(f"unknown benchmark {name!r}; expected one of {', '.join(BENCHMARKS)}")
    return BENCHMARKS[key]()


def custom_problem(u, grad, f, domain=None, name="custom"):
    return BenchmarkProblem(name, u, grad, f, domain)


# ---------------------------------------------------------------- assembly

@dataclass(frozen=True)
class SparseSystem:
    """Constrained system: identity rows/columns on Dirichlet DOFs.

    ``stiffness`` and ``load`` keep the unconstrained operator.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    stiffness: sp.csr_matrix = field(repr=False)
    load: np.ndarray = field(repr=False)
    dirichlet_values: np.ndarray = field(repr=False)


def stiffness_matrix(space: FemSpace):
    mesh = space.mesh
    area, grads = _geometry(mesh)
    bary, w = triangle_rule(2 * (space.degree - 1))
    G = shape_gradients(space.degree, bary, grads)
    Ke = np.einsum("q,tqid,tqjd->tij", w, G, G) * area[:, None, None]
    K = _scatter(space, Ke)
    # duplicate sums may round differently for (i, j) and (j, i); CG wants exact symmetry
    return ((K + K.T) * 0.5).tocsr()


def mass_matrix(space: FemSpace):
    mesh = space.mesh
    area, _ = _geometry(mesh)
    bary, w = triangle_rule(2 * space.degree)
    phi = shape_values(space.degree, bary)
    Me = np.einsum("q,qi,qj->ij", w, phi, phi)[None] * area[:, None, None]
    return _scatter(space, Me)


def _scatter(space, Ke):
    dm = space.dof_map
    k = dm.shape[1]
    rows = np.repeat(dm, k, axis=1).ravel()
    cols = np.tile(dm, (1, k)).ravel()
    n = space.n_dofs
    # coo -> csr sums duplicates in a fixed order
    return sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def load_vector(space: FemSpace, f, degree=None):
    mesh = space.mesh
    degree = LOAD_DEGREE[space.degree] if degree is None else degree
    area, _ = _geometry(mesh)
    bary, w = triangle_rule(degree)
    phi = shape_values(space.degree, bary)
    fq = f(_physical_points(mesh, bary))
    Fe = np.einsum("q,tq,qi->ti", w, fq, phi) * area[:, None]
    return np.bincount(space.dof_map.ravel(), weights=Fe.ravel(), minlength=space.n_dofs)


def assemble(space: FemSpace, problem: BenchmarkProblem, load_degree=None) -> SparseSystem:
    K = stiffness_matrix(space)
    F = load_vector(space, problem.rhs_f, load_degree)
    bd = space.dirichlet_dofs
    g = np.zeros(space.n_dofs)
    g[bd] = problem.exact_u(space.dof_coords[bd])
    rhs = F - K @ g
    rhs[bd] = g[bd]
    keep = np.ones(space.n_dofs)
    keep[bd] = 0.0
    D = sp.diags(keep)
    A = (D @ K @ D + sp.diags(1.0 - keep)).tocsr()
    A.eliminate_zeros()
    A.sort_indices()
    return SparseSystem(A, rhs, K, F, g)


# ---------------------------------------------------------------- solver

def solve(system, rel_tol=1e-10, x0=None, max_iter=None):
    """Jacobi-preconditioned conjugate gradients.

    ``system`` is a SparseSystem or a ``(matrix, rhs)`` pair.
    """
    if isinstance(system, SparseSystem):
        A, b = system.matrix, system.rhs
        # starting from the boundary data keeps the identity rows exact
        if x0 is None:
            x0 = system.dirichlet_values
    else:
        A, b = system
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = len(b)
    max_iter = 10 * n if max_iter is None else max_iter
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0:
        return np.zeros(n)
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError(0, np.inf)
    minv = 1.0 / diag
    r = b - A @ x
    z = minv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverError(it, np.linalg.norm(r) / bnorm)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= rel_tol * bnorm:
            # confirm with the true residual; recursion drift is possible
            r = b - A @ x
            if np.linalg.norm(r) <= rel_tol * bnorm:
                return x
        z = minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(max_iter, np.linalg.norm(b - A @ x) / bnorm)


# ---------------------------------------------------------------- solutions

@dataclass(frozen=True)
class FemSolution:
    space: FemSpace
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.space.n_dofs,):
            raise ValueError(f"expected {self.space.n_dofs} coefficients, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self):
        return self.space.degree


def interpolate(space: FemSpace, u) -> FemSolution:
    return FemSolution(space, np.asarray(u(space.dof_coords), dtype=float))


def solve_problem(space: FemSpace, problem: BenchmarkProblem, rel_tol=1e-10, load_degree=None) -> FemSolution:
    x = solve(assemble(space, problem, load_degree), rel_tol=rel_tol)
    return FemSolution(space, x)


@dataclass(frozen=True)
class H1Error:
    l2: float
    semi: float

    @property
    def full(self):
        return float(np.hypot(self.l2, self.semi))

    def __float__(self):
        return self.full


def _same_space(a, b):
    sa, sb = a.space, b.space
    return sa is sb or (
        sa.degree == sb.degree
        and sa.dof_map.shape == sb.dof_map.shape
        and np.array_equal(sa.dof_map, sb.dof_map)
        and np.array_equal(sa.mesh.nodes, sb.mesh.nodes)
    )


def _local_fields(sol: FemSolution, bary, grads):
    phi = shape_values(sol.degree, bary)
    G = shape_gradients(sol.degree, bary, grads)
    c = sol.coeffs[sol.space.dof_map]  # (T, k)
    val = c @ phi.T  # (T, Q)
    grad = np.einsum("tk,tqkd->tqd", c, G)
    return val, grad


def h1_error_diff(a: FemSolution, b: FemSolution) -> H1Error:
    if not _same_space(a, b):
        raise ValueError("solutions live on different spaces")
    diff = FemSolution(a.space, a.coeffs - b.coeffs)
    area, grads = _geometry(a.space.mesh, check=False)
    bary, w = triangle_rule(4)
    val, grad = _local_fields(diff, bary, grads)
    l2 = np.einsum("q,tq,t->", w, val**2, area)
    semi = np.einsum("q,tqd,t->", w, grad**2, area)
    return H1Error(float(np.sqrt(l2)), float(np.sqrt(semi)))


def h1_error_exact(a: FemSolution, problem: BenchmarkProblem) -> H1Error:
    mesh = a.space.mesh
    area, grads = _geometry(mesh, check=False)
    bary, w = triangle_rule(6)
    val, grad = _local_fields(a, bary, grads)
    pts = _physical_points(mesh, bary)
    ev = val - problem.exact_u(pts)
    eg = grad - problem.exact_grad(pts)
    l2 = np.einsum("q,tq,t->", w, ev**2, area)
    semi = np.einsum("q,tqd,t->", w, eg**2, area)
    return H1Error(float(np.sqrt(l2)), float(np.sqrt(semi)))


def h1_norm_diff(a: FemSolution, b: FemSolution) -> float:
    """Full H¹ norm of a - b (degree-4 quadrature, exact for P2 differences)."""
    return h1_error_diff(a, b).full


def h1_norm_vs_exact(a: FemSolution, problem: BenchmarkProblem) -> float:
    """Full H¹ norm of a - u with the degree-6 rule."""
    return h1_error_exact(a, problem).full


def convergence_order(errors):
    """Pairwise orders log(e_i/e_{i+1}) / log(h_i/h_{i+1}) for ``[(h, e), ...]``."""
    pairs = [(float(h), float(e)) for h, e in errors]
    for h, e in pairs:
        if not (e > 0 and h > 0):
            raise ValueError(f"sizes and errors must be positive, got h={h}, e={e}")
    return [
        float(np.log(e0 / e1) / np.log(h0 / h1))
        for (h0, e0), (h1, e1) in zip(pairs[:-1], pairs[1:])
    ]


def residual_inf(system: SparseSystem, x):
    return float(np.abs(system.matrix @ x - system.rhs).max())


# ---------------------------------------------------------------- evaluation

def locate(mesh: TriMesh, points, k=8):
    """Containing triangle and barycentric coordinates of each point.

    Points outside every candidate triangle get the nearest candidate with
    clamped coordinates.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    tree = cKDTree(mesh.centroids())
    k = min(k, mesh.n_tris)
    _, cand = tree.query(pts, k=k)
    cand = cand.reshape(len(pts), k)
    P = mesh.nodes[mesh.tris[cand]]  # (M, k, 3, 2)
    v0, v1, v2 = P[..., 0, :], P[..., 1, :], P[..., 2, :]
    det = (v1[..., 0] - v0[..., 0]) * (v2[..., 1] - v0[..., 1]) - (v1[..., 1] - v0[..., 1]) * (v2[..., 0] - v0[..., 0])
    d = pts[:, None, :] - v0
    l1 = (d[..., 0] * (v2[..., 1] - v0[..., 1]) - d[..., 1] * (v2[..., 0] - v0[..., 0])) / det
    l2 = ((v1[..., 0] - v0[..., 0]) * d[..., 1] - (v1[..., 1] - v0[..., 1]) * d[..., 0]) / det
    bary = np.stack([1 - l1 - l2, l1, l2], axis=-1)
    worst = bary.min(axis=-1)
    best = np.argmax(worst, axis=1)
    rows = np.arange(len(pts))
    b = np.clip(bary[rows, best], 0.0, None)
    b /= b.sum(axis=1, keepdims=True)
    return cand[rows, best], b


def evaluate(sol: FemSolution, points):
    tri, bary = locate(sol.space.mesh, points)
    c = sol.coeffs[sol.space.dof_map[tri]]
    if sol.degree == 1:
        phi = bary
    else:
        a, b = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
        phi = np.hstack([bary * (2 * bary - 1), 4 * bary[:, a] * bary[:, b]])
    return np.einsum("mk,mk->m", c, phi)


# ---------------------------------------------------------------- estimator

class PoissonFEM(BaseEstimator):
    """Lagrange FEM solve of a benchmark problem on a fixed mesh.

    ``fit(mesh)`` assembles and solves; ``predict(points)`` evaluates u_h;
    ``score(mesh)`` returns minus the supercloseness norm.
    """

    def __init__(self, degree=1, benchmark="circle", rel_tol=1e-10):
        self.degree = degree
        self.benchmark = benchmark
        self.rel_tol = rel_tol

    def fit(self, mesh, y=None):
        if self.degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {self.degree!r}")
        if not self.rel_tol > 0:
            raise ValueError(f"rel_tol must be positive, got {self.rel_tol!r}")
        self.problem_ = get_benchmark(self.benchmark)
        self.space_ = function_space(mesh, self.degree)
        self.system_ = assemble(self.space_, self.problem_)
        self.solution_ = FemSolution(self.space_, solve(self.system_, self.rel_tol))
        self.interpolant_ = interpolate(self.space_, self.problem_.exact_u)
        self.n_dofs_ = self.space_.n_dofs
        self.n_free_dofs_ = self.space_.n_free
        return self

    def predict(self, X):
        check_is_fitted(self, "solution_")
        return evaluate(self.solution_, X)

    def supercloseness(self):
        check_is_fitted(self, "solution_")
        return h1_norm_diff(self.solution_, self.interpolant_)

    def error(self):
        check_is_fitted(self, "solution_")
        return h1_norm_vs_exact(self.solution_, self.problem_)

    def score(self, X=None, y=None):
        return -self.supercloseness()
