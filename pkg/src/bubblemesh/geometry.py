"""Planar domains described by a signed distance plus an explicit boundary.

Polygons keep their vertex loops (counterclockwise, closed) so that corners are
exact; the only curved boundary supported is a full circle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PRESETS = ("equilateral_triangle", "unit_circle", "regular_pentagon", "l_shape", "square3")


class ConfigurationError(ValueError):
    """Raised for invalid user-supplied configuration (unknown presets, bad files)."""


@dataclass(frozen=True)
class Polyline:
    """Closed polyline; ``vertices[0] == vertices[-1]``, counterclockwise."""

    vertices: np.ndarray

    @property
    def segments(self):
        v = self.vertices
        return v[:-1], v[1:]

    @property
    def length(self):
        a, b = self.segments
        return float(np.linalg.norm(b - a, axis=1).sum())


@dataclass(frozen=True)
class Arc:
    center: tuple
    radius: float
    theta0: float = 0.0
    theta1: float = 2 * np.pi

    @property
    def length(self):
        return self.radius * (self.theta1 - self.theta0)


@dataclass(frozen=True)
class DomainGeometry:
    name: str
    boundary_loops: tuple
    corners: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    bbox: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))

    @property
    def diameter(self):
        return float(np.linalg.norm(self.bbox[1] - self.bbox[0]))

    @property
    def is_circle(self):
        return len(self.boundary_loops) == 1 and isinstance(self.boundary_loops[0], Arc)

    def sdf(self, p):
        return signed_distance(self, p)

    def project(self, p):
        return project_to_boundary(self, p)


def _as_points(p):
    p = np.asarray(p, dtype=float)
    return p.reshape(-1, 2), p.ndim == 1


def _segment_nearest(pts, a, b):
    """Nearest point of every segment to every point: arrays (M, S, 2) and distances (M, S)."""
    ab = b - a
    ab2 = np.einsum("ij,ij->i", ab, ab)
    t = np.einsum("msk,sk->ms", pts[:, None, :] - a[None], ab) / ab2
    t = np.clip(t, 0.0, 1.0)
    q = a[None] + t[..., None] * ab[None]
    d = np.linalg.norm(pts[:, None, :] - q, axis=2)
    return q, d, t


def _inside_polygon(pts, a, b):
    # crossing number with half-open rule on y
    y = pts[:, 1][:, None]
    x = pts[:, 0][:, None]
    ay, by = a[None, :, 1], b[None, :, 1]
    ax, bx = a[None, :, 0], b[None, :, 0]
    straddle = (ay > y) != (by > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = ax + (y - ay) * (bx - ax) / (by - ay)
    hits = straddle & (x < xcross)
    return (hits.sum(axis=1) % 2) == 1


def _all_segments(geom):
    a = np.concatenate([loop.segments[0] for loop in geom.boundary_loops])
    b = np.concatenate([loop.segments[1] for loop in geom.boundary_loops])
    return a, b


def signed_distance(geom: DomainGeometry, p):
    """Signed distance to the boundary: negative inside, positive outside.

    Accepts a single point ``(2,)`` or an array ``(M, 2)``.
    """
    pts, single = _as_points(p)
    if geom.is_circle:
        arc = geom.boundary_loops[0]
        d = np.linalg.norm(pts - np.asarray(arc.center), axis=1) - arc.radius
    else:
        a, b = _all_segments(geom)
        _, dist, _ = _segment_nearest(pts, a, b)
        dmin = dist.min(axis=1)
        inside = _inside_polygon(pts, a, b)
        d = np.where(inside, -dmin, dmin)
    return float(d[0]) if single else d


def nearest_boundary(geom: DomainGeometry, p):
    """Nearest boundary point, unit tangent there and the segment index (-1 on arcs)."""
    pts, single = _as_points(p)
    if geom.is_circle:
        arc = geom.boundary_loops[0]
        c = np.asarray(arc.center)
        r = pts - c
        n = np.linalg.norm(r, axis=1)
        # centre point: any direction is nearest
        r = np.where(n[:, None] > 0, r, np.array([1.0, 0.0]))
        n = np.where(n > 0, n, 1.0)
        u = r / n[:, None]
        q = c + arc.radius * u
        tang = np.column_stack([-u[:, 1], u[:, 0]])
        seg = np.full(len(pts), -1)
    else:
        a, b = _all_segments(geom)
        qs, dist, _ = _segment_nearest(pts, a, b)
        seg = np.argmin(dist, axis=1)
        q = qs[np.arange(len(pts)), seg]
        t = b - a
        t = t / np.linalg.norm(t, axis=1)[:, None]
        tang = t[seg]
    if single:
        return q[0], tang[0], int(seg[0])
    return q, tang, seg


def project_to_boundary(geom: DomainGeometry, p):
    q, _, _ = nearest_boundary(geom, p)
    return q


def inward_normal(tangent):
    """Inward normal of a counterclockwise boundary with the given tangent."""
    t = np.asarray(tangent, dtype=float)
    return np.stack([-t[..., 1], t[..., 0]], axis=-1)


def polygon(name, vertices):
    v = np.asarray(vertices, dtype=float)
    if np.allclose(v[0], v[-1]):
        v = v[:-1]
    if len(v) < 3:
        raise ConfigurationError(f"polygon {name!r} needs at least 3 vertices, got {len(v)}")
    x, y = v[:, 0], v[:, 1]
    area2 = np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)
    if area2 < 0:
        v = v[::-1]
    loop = Polyline(np.vstack([v, v[:1]]))
    bbox = np.array([v.min(axis=0), v.max(axis=0)])
    return DomainGeometry(name=name, boundary_loops=(loop,), corners=v.copy(), bbox=bbox)


def circle(name="unit_circle", center=(0.0, 0.0), radius=1.0):
    c = np.asarray(center, dtype=float)
    bbox = np.array([c - radius, c + radius])
    return DomainGeometry(
        name=name,
        boundary_loops=(Arc(tuple(c), float(radius)),),
        corners=np.zeros((0, 2)),
        bbox=bbox,
    )


def preset_domain(name: str) -> DomainGeometry:
    if name == "equilateral_triangle":
        return polygon(name, [(0.0, 0.0), (1.0, 0.0), (0.5, np.sqrt(3.0) / 2)])
    if name == "unit_circle":
        return circle()
    if name == "regular_pentagon":
        ang = np.pi / 2 + 2 * np.pi * np.arange(5) / 5
        verts = np.column_stack([np.cos(ang), np.sin(ang)])
        verts[0] = (0.0, 1.0)
        return polygon(name, verts)
    if name == "l_shape":
        return polygon(
            name,
            [(-1.0, -1.0), (0.0, -1.0), (0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (-1.0, 1.0)],
        )
    if name == "square3":
        return polygon(name, [(-3.0, -3.0), (3.0, -3.0), (3.0, 3.0), (-3.0, 3.0)])
    raise ConfigurationError(f"unknown domain {name!r}; expected one of {', '.join(PRESETS)}")


def load_polygon(path, name=None) -> DomainGeometry:
    """Read a vertex loop from a text file with one ``x y`` pair per line."""
    path = Path(path)
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigurationError(f"{path}:{lineno}: expected 'x y', got {line!r}")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise ConfigurationError(f"{path}:{lineno}: {exc}") from None
    return polygon(name or path.stem, rows)


def get_domain(spec) -> DomainGeometry:
    """Preset name, path to a vertex-loop file, or an existing geometry."""
    if isinstance(spec, DomainGeometry):
        return spec
    if spec in PRESETS:
        return preset_domain(spec)
    if Path(str(spec)).is_file():
        return load_polygon(spec)
    return preset_domain(spec)
