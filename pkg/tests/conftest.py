import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bubblemesh import bubbles, harness
from bubblemesh.geometry import preset_domain
from bubblemesh.sizing import constant
from bubblemesh.triangulate import triangulate

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def circle_run():
    """Full BPM pipeline on the unit circle at h = 0.1 (seed 0)."""
    geom = preset_domain("unit_circle")
    size = constant(0.1)
    sys_ = bubbles.initialize(geom, size, seed=0)
    first = bubbles.inner_loop(sys_, 3000, 1e-3)
    after_inner = sys_.copy()
    res = bubbles.outer_loop(sys_, 20, 3000, 1e-3)
    mesh = triangulate(res.system.pos, geom)
    return {"geom": geom, "size": size, "first": first, "equilibrated": after_inner, "result": res, "mesh": mesh}


@pytest.fixture(scope="session")
def triangle_mesh_h01():
    cfg = harness.ExperimentConfig(domain="equilateral_triangle", sizes=(0.1,))
    mesh, sys_, res = harness.build_mesh(cfg, 0.1)
    return mesh


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unit_tri():
    """The reference right triangle (0,0), (1,0), (0,1)."""
    from bubblemesh.triangulate import TriMesh

    return TriMesh.from_triangles([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], [(0, 1, 2)])


# criterion verdicts collected by test_acceptance, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0].split("(")[0])):
            terminalreporter.write_line(line)
