import xml.etree.ElementTree as ET

import numpy as np
import pytest

from bubblemesh import io
from bubblemesh.triangulate import delaunay, structured_square


@pytest.fixture
def mesh():
    return delaunay(np.random.default_rng(5).random((40, 2)))


def test_node_ele_layout(tmp_path, mesh):
    node, ele = io.write_mesh(tmp_path / "m", mesh)
    lines = node.read_text().splitlines()
    assert lines[0] == f"{mesh.n_nodes} 2 0 1"
    first = lines[1].split()
    assert first[0] == "1" and float(first[1]) == mesh.nodes[0, 0] and int(first[3]) == int(mesh.boundary_flags[0])
    elines = ele.read_text().splitlines()
    assert elines[0] == f"{mesh.n_tris} 3 0"
    assert [int(v) for v in elines[1].split()] == [1, *(mesh.tris[0] + 1)]


def test_mesh_roundtrip(tmp_path, mesh):
    io.write_mesh(tmp_path / "m", mesh)
    back = io.read_mesh(tmp_path / "m.node", tmp_path / "m.ele")
    np.testing.assert_array_equal(back.nodes, mesh.nodes)
    np.testing.assert_array_equal(back.tris, mesh.tris)
    np.testing.assert_array_equal(back.boundary_flags, mesh.boundary_flags)


def test_zero_based_files(tmp_path):
    (tmp_path / "z.node").write_text("3 2 0 0\n0 0 0\n1 1 0\n2 0 1\n")
    (tmp_path / "z.ele").write_text("1 3 0\n0 0 1 2\n")
    m = io.read_mesh(tmp_path / "z.node", tmp_path / "z.ele")
    assert m.n_tris == 1 and m.areas()[0] == pytest.approx(0.5)


@pytest.mark.parametrize("node,ele,msg", [
    ("2 2 0 0\n1 0 0\n", "1 3 0\n1 1 2 3\n", "found 1"),
    ("3 3 0 0\n1 0 0 0\n2 1 0 0\n3 0 1 0\n", "1 3 0\n1 1 2 3\n", "dim=3"),
    ("3 2 0 0\n1 0 0\n2 1 0\n3 0 1\n", "1 4 0\n1 1 2 3 3\n", "3-node"),
    ("3 2 0 0\n1 0 0\n2 1 0\n3 0 1\n", "1 3 0\n1 1 2 9\n", "out of range"),
    ("", "1 3 0\n1 1 2 3\n", "empty"),
])
def test_malformed(tmp_path, node, ele, msg):
    (tmp_path / "a.node").write_text(node)
    (tmp_path / "a.ele").write_text(ele)
    with pytest.raises(io.MeshFormatError, match=msg):
        io.read_mesh(tmp_path / "a.node", tmp_path / "a.ele")


def test_missing_file(tmp_path):
    with pytest.raises(io.MeshFormatError):
        io.read_node(tmp_path / "nope.node")


def test_bubble_dump(tmp_path):
    pos = np.array([[0.0, 0.0], [0.5, 0.25], [0.1, 0.2]])
    mob = np.array([0, 1, 2])
    with (tmp_path / "b.txt").open("w") as fh:
        io.write_bubbles(fh, pos, mob)
        fh.write("\n")
        io.write_bubbles(fh, pos + 1, mob)
    text = (tmp_path / "b.txt").read_text().splitlines()
    assert text[1] == "0.5 0.25 boundary_slide"
    snaps = io.read_bubbles(tmp_path / "b.txt")
    assert len(snaps) == 2
    np.testing.assert_array_equal(snaps[1][0], pos + 1)
    np.testing.assert_array_equal(snaps[0][1], mob)


def test_solution_roundtrip(tmp_path):
    c = np.random.default_rng(0).normal(size=17)
    p = io.write_solution(tmp_path / "u.txt", c)
    assert p.read_text().splitlines()[0].split()[0] == "1"
    np.testing.assert_array_equal(io.read_solution(p), c)


def test_svg_is_valid_xml(tmp_path):
    m = structured_square(3)
    p = io.write_svg(tmp_path / "sub" / "m.svg", m, bubbles=m.nodes)
    root = ET.parse(p).getroot()
    assert root.tag.endswith("svg")
    paths = [e for e in root.iter() if e.tag.endswith("path")]
    assert paths[0].get("d").count("Z") == m.n_tris
    assert sum(e.tag.endswith("circle") for e in root.iter()) == m.n_nodes
