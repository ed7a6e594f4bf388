"""Bubble placement: damped bubble dynamics plus population control.

Bubbles interact through a short-range pair force that is repulsive when two
bubbles overlap (centre distance below the target spacing) and attractive when
they drift apart, up to 1.5 target spacings.  The inner loop integrates damped
Newtonian dynamics to force equilibrium; the outer loop deletes crowded
bubbles and inserts bubbles into gaps while the worst fusion degree keeps
improving.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Arc, DomainGeometry, inward_normal, nearest_boundary, signed_distance
from .sizing import SizeField, evaluate

log = logging.getLogger(__name__)

FIXED_CORNER, BOUNDARY_SLIDE, INTERIOR = 0, 1, 2
MOBILITY_NAMES = {FIXED_CORNER: "fixed_corner", BOUNDARY_SLIDE: "boundary_slide", INTERIOR: "interior"}

SUPPORT = 1.5  # force vanishes beyond 1.5 target spacings
SKIN = 0.3  # relative Verlet skin on top of the force support

# population control
THETA_DELETE = 0.15
THETA_INSERT = -0.15
CHURN = 0.10


class SimulationDivergenceError(RuntimeError):
    def __init__(self, dt, step):
        self.dt, self.step = dt, step
        super().__init__(f"bubble dynamics diverged at step {step} (dt={dt}); reduce dt or raise damping")


def interbubble_force_magnitude(w, k0=1.0):
    """Pair force at normalised distance ``w = l / l_target``.

    Positive values push the bubbles apart, negative values pull them
    together; the force is zero at tangency (``w = 1``) and beyond ``w = 1.5``.
    """
    w_arr = np.asarray(w, dtype=float)
    if np.any(w_arr < 0):
        raise ValueError(f"normalised distance must be non-negative, got {w}")
    f = k0 * ((1.25 * w_arr - 2.375) * w_arr * w_arr + 1.125)
    f = np.where(w_arr <= SUPPORT, f, 0.0)
    return float(f) if np.ndim(w) == 0 else f


def fusion_degree(l_target, l_actual):
    """Relative overlap ``1 - l_actual / l_target``: >0 overlap, 0 tangent, <0 gap."""
    lt = np.asarray(l_target, dtype=float)
    if np.any(lt <= 0):
        raise ValueError(f"target length must be positive, got {l_target}")
    c = 1.0 - np.asarray(l_actual, dtype=float) / lt
    return float(c) if c.ndim == 0 else c


@dataclass(frozen=True)
class Bubble:
    pos: tuple
    vel: tuple
    mobility: str
    boundary_id: int | None


@dataclass
class EquilibriumReport:
    steps_taken: int
    max_residual_force: float
    max_abs_fusion_degree: float
    max_speed: float = 0.0
    converged: bool = True


@dataclass
class BubbleSystem:
    """State of all bubbles.

    Boundary bubbles carry the index of the boundary segment they slide on
    (``-1`` on the circle); corners never move.  Velocities are stored in
    units of the local target spacing per unit time so that the dynamics is
    identical at every mesh size.
    """

    pos: np.ndarray
    vel: np.ndarray
    mobility: np.ndarray
    boundary_id: np.ndarray
    geom: DomainGeometry
    size: SizeField
    k0: float = 1.0
    c_damp: float = 0.6
    dt: float = 0.5
    _pairs: np.ndarray | None = field(default=None, repr=False)
    _ref_pos: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self):
        return len(self.pos)

    @property
    def mobile(self):
        return self.mobility != FIXED_CORNER

    @property
    def bubbles(self):
        return [
            Bubble(
                tuple(self.pos[i]),
                tuple(self.vel[i]),
                MOBILITY_NAMES[int(self.mobility[i])],
                int(self.boundary_id[i]) if self.mobility[i] == BOUNDARY_SLIDE else None,
            )
            for i in range(self.n)
        ]

    def local_size(self, pos=None):
        pos = self.pos if pos is None else pos
        if self.size.is_constant:
            return np.full(len(pos), self.size.h)
        return evaluate(self.size, pos)

    def copy(self):
        return copy.deepcopy(self)

    def invalidate(self):
        self._pairs = None
        self._ref_pos = None

    # -- neighbour search -------------------------------------------------
    def candidate_pairs(self):
        """Verlet list containing every pair closer than ``SUPPORT * pair_target``.

        The list is built with a relative skin and rebuilt once any bubble
        has moved more than half the skin times its local size.
        """
        d = self.local_size()
        if self._pairs is not None:
            moved = np.linalg.norm(self.pos - self._ref_pos, axis=1)
            if np.all(moved <= 0.5 * SKIN * d):
                return self._pairs
        tree = cKDTree(self.pos)
        if self.size.is_constant:
            pairs = tree.query_pairs(SUPPORT * (1 + SKIN) * self.size.h, output_type="ndarray")
        else:
            lists = tree.query_ball_point(self.pos, SUPPORT * (1 + SKIN) * d, return_sorted=False)
            lens = np.fromiter((len(l) for l in lists), dtype=np.int64, count=self.n)
            cols = np.fromiter((j for l in lists for j in l), dtype=np.int64, count=int(lens.sum()))
            rows = np.repeat(np.arange(self.n, dtype=np.int64), lens)
            lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
            key = np.unique(lo[lo < hi] * self.n + hi[lo < hi])
            pairs = np.column_stack([key // self.n, key % self.n])
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
        self._pairs = pairs
        self._ref_pos = self.pos.copy()
        return pairs

    def pair_geometry(self, pairs=None):
        """Distances, unit vectors i->j and targets for candidate pairs."""
        pairs = self.candidate_pairs() if pairs is None else pairs
        d = self.local_size()
        diff = self.pos[pairs[:, 1]] - self.pos[pairs[:, 0]]
        dist = np.hypot(diff[:, 0], diff[:, 1])
        target = 0.5 * (d[pairs[:, 0]] + d[pairs[:, 1]])
        return pairs, dist, diff, target

    def force_pairs(self):
        """Pairs inside the force support and their fusion degrees."""
        pairs, dist, _, target = self.pair_geometry()
        inside = dist < SUPPORT * target
        return pairs[inside], fusion_degree(target[inside], dist[inside])

    def forces(self):
        """Net force on every bubble, in units of ``k0``.

        Each pair is evaluated once and applied with opposite signs, so the
        action-reaction pair is exactly antisymmetric; the one exception is
        that sliding and corner bubbles ignore the reaction from interior
        bubbles, like the fixed end bubbles of a 1D chain.
        """
        pairs, dist, diff, target = self.pair_geometry()
        w = dist / target
        active = w <= SUPPORT
        pairs, dist, diff, w = pairs[active], dist[active], diff[active], w[active]
        mag = interbubble_force_magnitude(w, 1.0)
        unit = diff / dist[:, None]
        fij = -mag[:, None] * unit  # force on i from j
        # boundary bubbles push interior bubbles but only boundary neighbours move them
        inner = self.mobility[pairs] == INTERIOR
        on_i = ~(~inner[:, 0] & inner[:, 1])
        on_j = ~(~inner[:, 1] & inner[:, 0])
        n = self.n
        fx = np.bincount(pairs[:, 0], fij[:, 0] * on_i, n) - np.bincount(pairs[:, 1], fij[:, 0] * on_j, n)
        fy = np.bincount(pairs[:, 0], fij[:, 1] * on_i, n) - np.bincount(pairs[:, 1], fij[:, 1] * on_j, n)
        return np.column_stack([fx, fy])

    def pair_forces(self):
        """Force on the first bubble of every interacting pair from the second."""
        pairs, dist, diff, target = self.pair_geometry()
        w = dist / target
        active = w <= SUPPORT
        mag = interbubble_force_magnitude(w[active], 1.0)
        return pairs[active], -mag[:, None] * diff[active] / dist[active][:, None]

    def tangents(self):
        """Unit tangent of the boundary at every sliding bubble."""
        idx = np.flatnonzero(self.mobility == BOUNDARY_SLIDE)
        tang = np.zeros((self.n, 2))
        if len(idx) == 0:
            return tang
        if self.geom.is_circle:
            _, t, _ = nearest_boundary(self.geom, self.pos[idx])
        else:
            a, b = _segments(self.geom)
            seg = self.boundary_id[idx]
            t = b[seg] - a[seg]
            t = t / np.linalg.norm(t, axis=1)[:, None]
        tang[idx] = t
        return tang

    def residual(self, f=None, tang=None):
        """Largest net force (tangential part for sliding bubbles) over mobile bubbles."""
        f = self.forces() if f is None else f
        tang = self.tangents() if tang is None else tang
        slide = self.mobility == BOUNDARY_SLIDE
        f = f.copy()
        f[slide] = np.sum(f[slide] * tang[slide], axis=1)[:, None] * tang[slide]
        f[~self.mobile] = 0.0
        return float(np.max(np.hypot(f[:, 0], f[:, 1]), initial=0.0))

    def max_abs_fusion(self):
        _, c = self.force_pairs()
        return float(np.max(np.abs(c), initial=0.0))

    # -- constraints ------------------------------------------------------
    def enforce_constraints(self):
        """Put sliding bubbles back on their segment and keep interior bubbles inside."""
        d = self.local_size()
        slide = np.flatnonzero(self.mobility == BOUNDARY_SLIDE)
        if len(slide):
            if self.geom.is_circle:
                arc = self.geom.boundary_loops[0]
                c = np.asarray(arc.center)
                r = self.pos[slide] - c
                self.pos[slide] = c + arc.radius * r / np.linalg.norm(r, axis=1)[:, None]
            else:
                a, b = _segments(self.geom)
                seg = self.boundary_id[slide]
                ab = b[seg] - a[seg]
                length = np.linalg.norm(ab, axis=1)
                t = np.einsum("ij,ij->i", self.pos[slide] - a[seg], ab) / length**2
                margin = np.minimum(0.1 * d[slide] / length, 0.25)
                t = np.clip(t, margin, 1 - margin)
                self.pos[slide] = a[seg] + t[:, None] * ab
        inner = np.flatnonzero(self.mobility == INTERIOR)
        if len(inner):
            sd = signed_distance(self.geom, self.pos[inner])
            out = sd > -0.01 * d[inner]
            if np.any(out):
                ids = inner[out]
                q, tang, _ = nearest_boundary(self.geom, self.pos[ids])
                nin = inward_normal(tang)
                self.pos[ids] = q + 0.05 * d[ids][:, None] * nin
                vn = np.sum(self.vel[ids] * nin, axis=1)
                self.vel[ids] -= np.minimum(vn, 0.0)[:, None] * nin
                # a bubble pushed onto a concave corner can still be outside
                still = signed_distance(self.geom, self.pos[ids]) >= 0
                if np.any(still):
                    bad = ids[still]
                    self.pos[bad] = self.pos[bad] + 0.2 * d[bad][:, None] * _towards_inside(self.geom, self.pos[bad])
                    self.vel[bad] = 0.0

    def step(self, f=None, tang=None):
        """One semi-implicit Euler step; returns the force used."""
        f = self.forces() if f is None else f
        tang = self.tangents() if tang is None else tang
        d = self.local_size()
        mobile = self.mobile
        slide = self.mobility == BOUNDARY_SLIDE
        vel = self.vel + self.dt * (self.k0 * f - self.c_damp * self.vel)
        vel[slide] = np.sum(vel[slide] * tang[slide], axis=1)[:, None] * tang[slide]
        vel[~mobile] = 0.0
        self.vel = vel
        self.pos = self.pos + self.dt * vel * d[:, None]
        self.enforce_constraints()
        return f

    def positions_by_mobility(self):
        return {name: self.pos[self.mobility == m] for m, name in MOBILITY_NAMES.items()}


def _segments(geom):
    a = np.concatenate([loop.segments[0] for loop in geom.boundary_loops])
    b = np.concatenate([loop.segments[1] for loop in geom.boundary_loops])
    return a, b


def _towards_inside(geom, pts):
    """Unit direction from ``pts`` towards the interior, from a central-difference sdf gradient."""
    eps = 1e-7 * geom.diameter
    gx = signed_distance(geom, pts + [eps, 0]) - signed_distance(geom, pts - [eps, 0])
    gy = signed_distance(geom, pts + [0, eps]) - signed_distance(geom, pts - [0, eps])
    g = -np.column_stack([gx, gy])
    n = np.linalg.norm(g, axis=1)
    n[n == 0] = 1.0
    return g / n[:, None]


# -- initialisation ------------------------------------------------------------


def _subdivide_segment(a, b, size, tol=0.25):
    """Interior points of a 1D subdivision of segment ab with spacing ~ size.

    The count is ``round(integral of ds / d)`` and points sit at equal
    increments of that integral.
    """
    a, b = np.asarray(a, float), np.asarray(b, float)
    length = float(np.linalg.norm(b - a))
    if size.is_constant:
        n = max(int(round(length / size.h)), 1)
        t = np.arange(1, n) / n
        return a + t[:, None] * (b - a)
    # adaptive sampling in the parameter so that every sample interval is a
    # fraction of the local size
    ts = np.array([0.0, 1.0])
    for _ in range(60):
        mid = 0.5 * (ts[:-1] + ts[1:])
        pts = a + ts[:, None] * (b - a)
        d = evaluate(size, pts)
        dmin = np.minimum(d[:-1], d[1:])
        coarse = np.diff(ts) * length > tol * dmin
        if not coarse.any():
            break
        ts = np.sort(np.concatenate([ts, mid[coarse]]))
    d = evaluate(size, a + ts[:, None] * (b - a))
    dens = 1.0 / d
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[:-1] + dens[1:]) * np.diff(ts) * length)])
    n = max(int(round(cum[-1])), 1)
    targets = cum[-1] * np.arange(1, n) / n
    t = np.interp(targets, cum, ts)
    return a + t[:, None] * (b - a)


def _subdivide_arc(arc: Arc, size):
    c = np.asarray(arc.center)
    if size.is_constant:
        n = max(int(round(arc.length / size.h)), 3)
        th = arc.theta0 + (arc.theta1 - arc.theta0) * np.arange(n) / n
    else:
        th_f = np.linspace(arc.theta0, arc.theta1, 20001)
        pts = c + arc.radius * np.column_stack([np.cos(th_f), np.sin(th_f)])
        dens = arc.radius / evaluate(size, pts)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[:-1] + dens[1:]) * np.diff(th_f))])
        n = max(int(round(cum[-1])), 3)
        th = np.interp(cum[-1] * np.arange(n) / n, cum, th_f)
    return c + arc.radius * np.column_stack([np.cos(th), np.sin(th)])


def _hex_lattice(bbox, pitch, origin=(0.0, 0.0)):
    a = np.array([pitch, 0.0])
    b = np.array([0.5 * pitch, 0.5 * np.sqrt(3.0) * pitch])
    lo, hi = np.asarray(bbox[0]) - pitch, np.asarray(bbox[1]) + pitch
    o = np.asarray(origin, float)
    j0 = int(np.floor((lo[1] - o[1]) / b[1])) - 1
    j1 = int(np.ceil((hi[1] - o[1]) / b[1])) + 1
    j = np.arange(j0, j1 + 1)
    span = hi[0] - lo[0]
    i0 = int(np.floor((lo[0] - o[0]) / pitch - 0.5 * j1)) - 2
    i1 = i0 + int(np.ceil(span / pitch + 0.5 * (j1 - j0))) + 4
    I, J = np.meshgrid(np.arange(i0, i1 + 1), j)
    pts = o + I.ravel()[:, None] * a + J.ravel()[:, None] * b
    keep = np.all((pts >= lo) & (pts <= hi), axis=1)
    return pts[keep], a, b


def _lattice_candidates(geom, size, rng, fill=1.0):
    """Hexagonal candidates at the local pitch.

    A constant field gives one hexagonal lattice of pitch ``h``.  Otherwise
    the lattice starts at the largest size and every candidate whose local
    size is smaller than the current pitch is replaced by its four children on
    the half-pitch lattice; accepted candidates are thinned to the local
    density.
    """
    shrink = 1.0 / np.sqrt(fill)
    if size.is_constant:
        pts, _, _ = _hex_lattice(geom.bbox, size.h * shrink)
        return pts
    lo, hi = size.bounds(geom.bbox)
    lo, hi = lo * shrink, hi * shrink
    pitch = hi
    pts, a, b = _hex_lattice(geom.bbox, pitch)
    out = []
    while len(pts):
        d = evaluate(size, pts) * shrink
        inside = signed_distance(geom, pts) < 0.5 * pitch
        pts, d = pts[inside], d[inside]
        accept = (d >= pitch) | (pitch <= lo)
        keep = rng.random(int(accept.sum())) < (pitch / np.maximum(d[accept], pitch)) ** 2
        out.append(pts[accept][keep])
        parents = pts[~accept]
        if len(parents) == 0:
            break
        a, b, pitch = 0.5 * a, 0.5 * b, 0.5 * pitch
        offsets = np.array([[0.0, 0.0], a, b, a + b])
        pts = (parents[:, None, :] + offsets[None]).reshape(-1, 2)
    return np.concatenate(out) if out else np.zeros((0, 2))


def initialize(geom: DomainGeometry, size: SizeField, seed=0, k0=1.0, c_damp=0.6, dt=0.5, fill=1.0) -> BubbleSystem:
    """Corners, 1D-subdivided boundary bubbles and jittered lattice interior bubbles.

    ``fill`` multiplies the interior seeding density (lattice pitch divided by
    ``sqrt(fill)``); values above 1 start from an over-full population that the
    outer loop has to thin out.
    """
    rng = np.random.default_rng(seed)
    pos, mob, bid = [], [], []
    for c in geom.corners:
        pos.append(np.asarray(c, float)[None])
        mob.append([FIXED_CORNER])
        bid.append([-1])
    seg = 0
    for loop in geom.boundary_loops:
        if isinstance(loop, Arc):
            pts = _subdivide_arc(loop, size)
            pos.append(pts)
            mob.append([BOUNDARY_SLIDE] * len(pts))
            bid.append([-1] * len(pts))
            continue
        a, b = loop.segments
        for k in range(len(a)):
            pts = _subdivide_segment(a[k], b[k], size)
            pos.append(pts.reshape(-1, 2))
            mob.append([BOUNDARY_SLIDE] * len(pts))
            bid.append([seg] * len(pts))
            seg += 1
    cand = _lattice_candidates(geom, size, rng, fill)
    if len(cand):
        d = evaluate(size, cand)
        ang = rng.random(len(cand)) * 2 * np.pi
        rad = 0.1 * d * np.sqrt(rng.random(len(cand)))
        cand = cand + rad[:, None] * np.column_stack([np.cos(ang), np.sin(ang)])
        keep = signed_distance(geom, cand) < -0.3 * evaluate(size, cand)
        cand = cand[keep]
        pos.append(cand)
        mob.append([INTERIOR] * len(cand))
        bid.append([-1] * len(cand))
    pos = np.concatenate(pos) if pos else np.zeros((0, 2))
    return BubbleSystem(
        pos=pos,
        vel=np.zeros_like(pos),
        mobility=np.concatenate(mob).astype(np.int8),
        boundary_id=np.concatenate(bid).astype(np.int64),
        geom=geom,
        size=size,
        k0=k0,
        c_damp=c_damp,
        dt=dt,
    )


# -- inner loop ----------------------------------------------------------------


def inner_loop(sys: BubbleSystem, max_steps=400, tol_force=1e-3, snapshot=None, snapshot_every=0):
    """Integrate damped dynamics until the largest residual force drops below tolerance."""
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    tang = sys.tangents()
    f = sys.forces()
    res = sys.residual(f, tang)
    steps = 0
    vmax = 0.0
    while res >= tol_force * sys.k0 and steps < max_steps:
        with np.errstate(invalid="ignore", divide="ignore"):
            sys.step(f, tang)
            steps += 1
            if not (np.all(np.isfinite(sys.pos)) and np.all(np.isfinite(sys.vel))):
                raise SimulationDivergenceError(sys.dt, steps)
            vmax = max(vmax, float(np.max(np.hypot(sys.vel[:, 0], sys.vel[:, 1]), initial=0.0)))
            if sys.geom.is_circle:
                tang = sys.tangents()
            f = sys.forces()
            res = sys.residual(f, tang)
        # coincident bubbles give a NaN force, which would silently end the loop
        if not np.isfinite(res):
            raise SimulationDivergenceError(sys.dt, steps)
        if snapshot is not None and snapshot_every and steps % snapshot_every == 0:
            snapshot(steps, sys)
    return EquilibriumReport(
        steps_taken=steps,
        max_residual_force=res,
        max_abs_fusion_degree=sys.max_abs_fusion(),
        max_speed=vmax,
        converged=res < tol_force * sys.k0,
    )


# -- outer loop ----------------------------------------------------------------


def delaunay_pairs(sys: BubbleSystem):
    """Bubble pairs joined by an edge of the domain-clipped Delaunay triangulation."""
    from .triangulate import clip_with_ids, delaunay

    mesh, ids = clip_with_ids(delaunay(sys.pos), sys.geom)
    return ids[mesh.edges]


def edge_fusion(sys: BubbleSystem, pairs=None):
    pairs = delaunay_pairs(sys) if pairs is None else pairs
    diff = sys.pos[pairs[:, 1]] - sys.pos[pairs[:, 0]]
    dist = np.hypot(diff[:, 0], diff[:, 1])
    d = sys.local_size()
    target = 0.5 * (d[pairs[:, 0]] + d[pairs[:, 1]])
    return pairs, fusion_degree(target, dist)


def epsilon(sys: BubbleSystem, adjacency="delaunay"):
    """Worst absolute fusion degree over adjacent bubbles.

    ``adjacency`` selects Delaunay edges (default) or force-support pairs.
    """
    if adjacency == "force":
        return sys.max_abs_fusion()
    _, c = edge_fusion(sys)
    return float(np.max(np.abs(c), initial=0.0))


def mean_fusion(sys: BubbleSystem, pairs, c):
    n = sys.n
    s = np.bincount(pairs[:, 0], c, n) + np.bincount(pairs[:, 1], c, n)
    k = np.bincount(pairs[:, 0], None, n) + np.bincount(pairs[:, 1], None, n)
    return np.where(k > 0, s / np.maximum(k, 1), 0.0)


def adjust_population(sys: BubbleSystem, theta_del=THETA_DELETE, theta_ins=THETA_INSERT, churn=CHURN):
    """Delete crowded bubbles and insert bubbles beside sparse ones.

    The overlapping ratio of a bubble is its mean fusion degree over its
    Delaunay neighbours.  Interior bubbles above ``theta_del`` are deleted;
    next to interior bubbles below ``theta_ins`` a bubble is inserted one
    target spacing away from the nearest neighbour.  Along the boundary the
    same thresholds act on consecutive boundary bubbles: a gap gets a new
    sliding bubble at its midpoint, a crowded sliding bubble is removed.
    At most ``churn * N`` bubbles are touched, worst offenders first, and
    neighbours of a modified bubble are left alone for the round.

    Returns ``(n_deleted, n_inserted)``.
    """
    pairs, c = edge_fusion(sys)
    cbar = mean_fusion(sys, pairs, c)
    d = sys.local_size()
    nbrs = _neighbour_lists(sys.n, pairs)
    interior = sys.mobility == INTERIOR
    slide = sys.mobility == BOUNDARY_SLIDE

    # (severity, action, index) with action 0 delete, 1 insert near bubble, 2 split boundary edge
    actions = [(cbar[i] - theta_del, 0, int(i)) for i in np.flatnonzero(interior & (cbar > theta_del))]
    actions += [(theta_ins - cbar[i], 1, int(i)) for i in np.flatnonzero(interior & (cbar < theta_ins))]
    on_bnd = ~interior[pairs[:, 0]] & ~interior[pairs[:, 1]]
    bnd_pairs = _boundary_chain_pairs(sys, pairs[on_bnd])
    if len(bnd_pairs):
        cb = edge_fusion(sys, bnd_pairs)[1]
        for k in np.flatnonzero(cb < theta_ins):
            actions.append((theta_ins - cb[k], 2, int(k)))
        for k in np.flatnonzero(cb > theta_del):
            i, j = bnd_pairs[k]
            victim = j if slide[j] else i
            if slide[victim]:
                actions.append((cb[k] - theta_del, 0, int(victim)))
    actions.sort(key=lambda a: (-a[0], a[1], a[2]))
    budget = max(int(churn * sys.n), 1)

    blocked = np.zeros(sys.n, bool)
    deleted, new_pos, new_mob, new_bid = [], [], [], []
    for _, action, idx in actions:
        if len(deleted) + len(new_pos) >= budget:
            break
        if action == 2:
            i, j = bnd_pairs[idx]
            if blocked[i] or blocked[j]:
                continue
            p, seg = _boundary_midpoint(sys, i, j)
            if p is None:
                continue
            new_pos.append(p)
            new_mob.append(BOUNDARY_SLIDE)
            new_bid.append(seg)
            touched = [i, j]
        elif blocked[idx]:
            continue
        elif action == 0:
            deleted.append(idx)
            touched = [idx]
        else:
            nb = nbrs[idx]
            if len(nb) == 0:
                continue
            dist = np.linalg.norm(sys.pos[nb] - sys.pos[idx], axis=1)
            j = nb[np.argmin(dist)]
            away = (sys.pos[idx] - sys.pos[j]) / dist.min()
            p = sys.pos[idx] + 0.5 * (d[idx] + d[j]) * away
            if signed_distance(sys.geom, p) >= -0.3 * evaluate(sys.size, p):
                continue
            new_pos.append(p)
            new_mob.append(INTERIOR)
            new_bid.append(-1)
            touched = [idx]
        for t in touched:
            blocked[t] = True
            blocked[nbrs[t]] = True

    keep = np.ones(sys.n, bool)
    keep[deleted] = False
    sys.pos = sys.pos[keep]
    sys.vel = sys.vel[keep]
    sys.mobility = sys.mobility[keep]
    sys.boundary_id = sys.boundary_id[keep]
    if new_pos:
        new_pos = np.asarray(new_pos)
        sys.pos = np.vstack([sys.pos, new_pos])
        sys.vel = np.vstack([sys.vel, np.zeros_like(new_pos)])
        sys.mobility = np.concatenate([sys.mobility, np.asarray(new_mob, np.int8)])
        sys.boundary_id = np.concatenate([sys.boundary_id, np.asarray(new_bid, np.int64)])
    sys.invalidate()
    return len(deleted), len(new_pos)


def _boundary_chain_pairs(sys, pairs):
    """Pairs of non-interior bubbles that are neighbours along the same boundary piece."""
    if len(pairs) == 0:
        return pairs
    if sys.geom.is_circle:
        return pairs
    a, b = _segments(sys.geom)
    keep = []
    for i, j in pairs:
        si = _segments_of(sys, i, a, b)
        sj = _segments_of(sys, j, a, b)
        keep.append(bool(si & sj))
    return pairs[np.asarray(keep, bool)]


def _segments_of(sys, i, a, b):
    if sys.mobility[i] == BOUNDARY_SLIDE:
        return {int(sys.boundary_id[i])}
    hit = np.flatnonzero(
        (np.linalg.norm(a - sys.pos[i], axis=1) < 1e-12 * sys.geom.diameter)
        | (np.linalg.norm(b - sys.pos[i], axis=1) < 1e-12 * sys.geom.diameter)
    )
    return set(int(s) for s in hit)


def _boundary_midpoint(sys, i, j):
    p = 0.5 * (sys.pos[i] + sys.pos[j])
    if sys.geom.is_circle:
        arc = sys.geom.boundary_loops[0]
        c = np.asarray(arc.center)
        r = p - c
        n = np.linalg.norm(r)
        if n == 0:
            return None, None
        return c + arc.radius * r / n, -1
    a, b = _segments(sys.geom)
    common = _segments_of(sys, i, a, b) & _segments_of(sys, j, a, b)
    if not common:
        return None, None
    return p, min(common)


def _neighbour_lists(n, pairs):
    both = np.concatenate([pairs, pairs[:, ::-1]])
    both = both[np.lexsort((both[:, 1], both[:, 0]))]
    starts = np.searchsorted(both[:, 0], np.arange(n + 1))
    return [both[starts[i] : starts[i + 1], 1] for i in range(n)]


@dataclass
class OuterLoopResult:
    system: BubbleSystem
    epsilon_history: list
    populations: list
    best_round: int


def outer_loop(
    sys: BubbleSystem, max_rounds=20, max_inner_steps=400, tol_force=1e-3, snapshot=None, snapshot_every=0, **adjust
):
    """Population control around the inner loop; keeps the configuration with the smallest epsilon.

    Stops once epsilon has failed to improve on the best value for two
    consecutive rounds.
    """
    eps = epsilon(sys)
    history, populations = [eps], [sys.n]
    best, best_eps, best_round = sys.copy(), eps, 0
    stale = 0
    for rnd in range(1, max_rounds + 1):
        n_del, n_ins = adjust_population(sys, **adjust)
        rep = inner_loop(sys, max_inner_steps, tol_force, snapshot, snapshot_every)
        eps = epsilon(sys)
        history.append(eps)
        populations.append(sys.n)
        log.info(
            "round %d: -%d +%d bubbles, N=%d, eps=%.4f, inner steps=%d", rnd, n_del, n_ins, sys.n, eps, rep.steps_taken
        )
        if eps < best_eps:
            best, best_eps, best_round = sys.copy(), eps, rnd
            stale = 0
        else:
            stale += 1
            if stale >= 2:
                break
    return OuterLoopResult(best, history, populations, best_round)
