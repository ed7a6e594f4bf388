"""Text and SVG exchange formats.

Meshes use the Triangle-style ``.node`` / ``.ele`` layout with 1-based
indices; bubble dumps are ``x y mobility`` lines; FEM coefficients are
``index value`` lines.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import ConfigurationError
from .triangulate import TriMesh


class MeshFormatError(ConfigurationError):
    pass


def _lines(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MeshFormatError(f"{path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def write_node(path, mesh: TriMesh):
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"{mesh.n_nodes} 2 0 1\n")
        for i, ((x, y), b) in enumerate(zip(mesh.nodes, mesh.boundary_flags), 1):
            fh.write(f"{i} {x:.17g} {y:.17g} {int(b)}\n")
    return path


def write_ele(path, mesh: TriMesh):
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"{mesh.n_tris} 3 0\n")
        for i, (a, b, c) in enumerate(mesh.tris + 1, 1):
            fh.write(f"{i} {a} {b} {c}\n")
    return path


def write_mesh(stem, mesh: TriMesh):
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    return write_node(stem.with_suffix(".node"), mesh), write_ele(stem.with_suffix(".ele"), mesh)


def read_node(path):
    """Coordinates ``(N, 2)`` and markers; the first index may be 0 or 1."""
    rows = list(_lines(path))
    if not rows:
        raise MeshFormatError(f"{path}: empty node file")
    _, head = rows[0]
    n, dim = int(head[0]), int(head[1])
    nattr = int(head[2]) if len(head) > 2 else 0
    if dim != 2:
        raise MeshFormatError(f"{path}: only 2D nodes supported, got dim={dim}")
    body = rows[1 : n + 1]
    if len(body) != n:
        raise MeshFormatError(f"{path}: header says {n} nodes, found {len(body)}")
    idx = np.array([int(r[0]) for _, r in body])
    xy = np.array([[float(r[1]), float(r[2])] for _, r in body])
    markers = np.array([int(r[3 + nattr]) if len(r) > 3 + nattr else 0 for _, r in body])
    base = int(idx.min())
    order = np.argsort(idx)
    return xy[order], markers[order], base


def read_ele(path, base=1):
    rows = list(_lines(path))
    if not rows:
        raise MeshFormatError(f"{path}: empty element file")
    _, head = rows[0]
    n, k = int(head[0]), int(head[1])
    if k != 3:
        raise MeshFormatError(f"{path}: only 3-node triangles supported, got {k}")
    body = rows[1 : n + 1]
    if len(body) != n:
        raise MeshFormatError(f"{path}: header says {n} triangles, found {len(body)}")
    return np.array([[int(v) for v in r[1:4]] for _, r in body], dtype=np.int64) - base


def read_mesh(node_path, ele_path) -> TriMesh:
    xy, _, base = read_node(node_path)
    tris = read_ele(ele_path, base)
    if tris.min(initial=0) < 0 or tris.max(initial=0) >= len(xy):
        raise MeshFormatError(f"{ele_path}: node index out of range")
    return TriMesh.from_triangles(xy, tris)


_MOBILITY = ("fixed_corner", "boundary_slide", "interior")


def write_bubbles(path_or_fh, pos, mobility):
    """One ``x y mobility`` line per bubble, mobility by name."""
    lines = "".join(f"{x:.17g} {y:.17g} {_MOBILITY[int(m)]}\n" for (x, y), m in zip(pos, mobility))
    if hasattr(path_or_fh, "write"):
        path_or_fh.write(lines)
        return None
    path = Path(path_or_fh)
    path.write_text(lines)
    return path


def read_bubbles(path):
    """Blank lines separate snapshots; returns a list of ``(pos, mobility codes)``."""
    snaps, cur = [], []
    for line in Path(path).read_text().splitlines() + [""]:
        line = line.strip()
        if not line:
            if cur:
                a = np.array(cur, dtype=float)
                snaps.append((a[:, :2], a[:, 2].astype(int)))
                cur = []
            continue
        x, y, m = line.split()[:3]
        code = _MOBILITY.index(m) if m in _MOBILITY else int(m)
        cur.append([float(x), float(y), code])
    return snaps


def write_solution(path, coeffs):
    path = Path(path)
    path.write_text("".join(f"{i} {v:.17g}\n" for i, v in enumerate(np.asarray(coeffs), 1)))
    return path


def read_solution(path):
    rows = [r for _, r in _lines(path)]
    return np.array([float(r[1]) for r in rows])


def mesh_svg(mesh: TriMesh, width=600, stroke=None, bubbles=None) -> str:
    """Static SVG of the triangulation, y axis pointing up."""
    lo = mesh.nodes.min(axis=0)
    hi = mesh.nodes.max(axis=0)
    span = max(hi - lo)
    pad = 0.02 * span
    scale = width / (span + 2 * pad)
    W = (hi[0] - lo[0] + 2 * pad) * scale
    H = (hi[1] - lo[1] + 2 * pad) * scale

    def tx(p):
        return (p[..., 0] - lo[0] + pad) * scale, (hi[1] + pad - p[..., 1]) * scale

    X, Y = tx(mesh.nodes)
    sw = stroke or max(0.2, min(1.0, 2.0 * width / max(np.sqrt(mesh.n_tris), 1) / 40))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.1f}" height="{H:.1f}" '
        f'viewBox="0 0 {W:.1f} {H:.1f}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    d = " ".join(
        f"M{X[a]:.2f},{Y[a]:.2f}L{X[b]:.2f},{Y[b]:.2f}L{X[c]:.2f},{Y[c]:.2f}Z" for a, b, c in mesh.tris
    )
    parts.append(f'<path d="{d}" fill="#eef3fb" stroke="#1f3b73" stroke-width="{sw:.2f}"/>')
    if bubbles is not None:
        bx, by = tx(np.asarray(bubbles))
        parts += [f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{1.5 * sw:.2f}" fill="#c0392b"/>' for x, y in zip(bx, by)]
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path, mesh: TriMesh, **kw):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(mesh_svg(mesh, **kw))
    return path
