"""scikit-learn style wrappers around the mesher and the FEM solver."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import bubbles, metrics
from .fem import PoissonFEM
from .geometry import DomainGeometry, get_domain
from .sizing import SizeField, constant, parse_size
from .triangulate import triangulate

__all__ = ["BubbleMesher", "PoissonFEM", "check_size", "check_domain"]


def check_domain(domain) -> DomainGeometry:
    return get_domain(domain)


def check_size(size) -> SizeField:
    if isinstance(size, SizeField):
        return size
    if isinstance(size, (int, float, np.floating)):
        return constant(float(size))
    return parse_size(size)


class BubbleMesher(BaseEstimator):
    """Bubble placement followed by Delaunay triangulation.

    ``fit(domain)`` runs the inner and outer loops; ``transform`` returns the
    node coordinates and ``predict(points)`` the containing triangle index
    (``-1`` outside the mesh).
    """

    def __init__(self, size=0.1, seed=0, max_inner_steps=3000, tol_force=1e-3, max_rounds=20, fill=1.0,
                 k0=1.0, c_damp=0.6, dt=0.5):
        self.size = size
        self.seed = seed
        self.max_inner_steps = max_inner_steps
        self.tol_force = tol_force
        self.max_rounds = max_rounds
        self.fill = fill
        self.k0 = k0
        self.c_damp = c_damp
        self.dt = dt

    def _validate(self):
        if int(self.max_inner_steps) < 1:
            raise ValueError(f"max_inner_steps must be >= 1, got {self.max_inner_steps}")
        if not self.tol_force > 0:
            raise ValueError(f"tol_force must be positive, got {self.tol_force}")
        if int(self.max_rounds) < 0:
            raise ValueError(f"max_rounds must be >= 0, got {self.max_rounds}")
        if not self.fill > 0:
            raise ValueError(f"fill must be positive, got {self.fill}")
        for name in ("k0", "c_damp", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def fit(self, X, y=None):
        """``X`` is a preset name, a vertex-loop path or a DomainGeometry."""
        self._validate()
        geom = check_domain(X)
        size = check_size(self.size)
        sys_ = bubbles.initialize(geom, size, seed=self.seed, k0=self.k0, c_damp=self.c_damp, dt=self.dt,
                                  fill=self.fill)
        self.inner_report_ = bubbles.inner_loop(sys_, self.max_inner_steps, self.tol_force)
        res = bubbles.outer_loop(sys_, self.max_rounds, self.max_inner_steps, self.tol_force)
        self.geometry_ = geom
        self.size_field_ = size
        self.system_ = res.system
        self.epsilon_history_ = list(res.epsilon_history)
        self.populations_ = list(res.populations)
        self.best_round_ = res.best_round
        self.mesh_ = triangulate(res.system.pos, geom)
        self.report_ = metrics.mesh_report(self.mesh_, size)
        self.n_bubbles_ = res.system.n
        return self

    def transform(self, X=None):
        check_is_fitted(self, "mesh_")
        return self.mesh_.nodes.copy()

    def fit_transform(self, X, y=None):
        return self.fit(X).transform()

    def predict(self, X):
        check_is_fitted(self, "mesh_")
        from .fem import locate

        pts = np.asarray(X, dtype=float).reshape(-1, 2)
        tri, bary = locate(self.mesh_, pts)
        # locate clamps; recompute the raw coordinates to flag outside points
        P = self.mesh_.nodes[self.mesh_.tris[tri]]
        rec = np.einsum("mk,mkd->md", bary, P)
        inside = np.linalg.norm(rec - pts, axis=1) <= 1e-10 * max(self.geometry_.diameter, 1.0)
        return np.where(inside, tri, -1)

    def score(self, X=None, y=None):
        """Mean shape quality of the mesh."""
        check_is_fitted(self, "mesh_")
        return self.report_.q_avg
