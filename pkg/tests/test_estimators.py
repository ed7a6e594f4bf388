import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from bubblemesh import BubbleMesher, PoissonFEM, fem


def cross(u, v):
    return u[0] * v[1] - u[1] * v[0]


@pytest.fixture(scope="module")
def fitted():
    return BubbleMesher(size=0.2, seed=0).fit("regular_pentagon")


def test_params_roundtrip():
    m = BubbleMesher(size=0.1, seed=3, fill=1.2)
    assert m.get_params()["seed"] == 3
    c = clone(m)
    assert c.get_params() == m.get_params()
    m.set_params(size=0.05)
    assert m.size == 0.05


def test_fit_attributes(fitted):
    assert fitted.n_bubbles_ == fitted.mesh_.n_nodes
    assert fitted.epsilon_history_[fitted.best_round_] == min(fitted.epsilon_history_)
    assert fitted.transform().shape == (fitted.n_bubbles_, 2)
    assert 0.9 < fitted.score() <= 1.0


def test_predict_locates_points(fitted):
    pts = np.array([[0.0, 0.0], [0.2, 0.3], [5.0, 5.0]])
    tri = fitted.predict(pts)
    assert tri[2] == -1
    m = fitted.mesh_
    for p, t in zip(pts[:2], tri[:2]):
        a, b, c = m.nodes[m.tris[t]]
        # point inside the triangle: all three edge orientations non-negative
        orient = [cross(b - a, p - a), cross(c - b, p - b), cross(a - c, p - c)]
        assert min(orient) >= -1e-12


def test_not_fitted():
    with pytest.raises(NotFittedError):
        BubbleMesher().transform()
    with pytest.raises(NotFittedError):
        PoissonFEM().predict([[0, 0]])


@pytest.mark.parametrize("kw", [{"max_inner_steps": 0}, {"tol_force": 0}, {"fill": -1}, {"dt": 0}])
def test_bad_params(kw):
    with pytest.raises(ValueError):
        BubbleMesher(**kw).fit("unit_circle")


def test_poisson_estimator(fitted):
    est = PoissonFEM(degree=2, benchmark="pentagon").fit(fitted.mesh_)
    assert est.n_dofs_ == fitted.mesh_.n_nodes + fitted.mesh_.n_edges
    assert est.score() == -est.supercloseness()
    assert est.supercloseness() < est.error()
    pts = fitted.mesh_.nodes[:5]
    np.testing.assert_allclose(est.predict(pts), est.solution_.coeffs[:5], atol=1e-12)
    u = fem.get_benchmark("pentagon").exact_u(pts)
    np.testing.assert_allclose(est.predict(pts), u, atol=1e-3)
    with pytest.raises(ValueError):
        PoissonFEM(degree=3).fit(fitted.mesh_)
