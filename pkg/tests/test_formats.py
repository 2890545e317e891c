import numpy as np
import pytest

from shapeflow import formats, mesh
from shapeflow.fem import WallProfile

GMSH = """$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
2
1 1 "wall"
1 2 "inflow"
$EndPhysicalNames
$Nodes
5
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
5 0.5 0.5 0
$EndNodes
$Elements
8
1 1 2 1 1 1 2
2 1 2 2 2 2 3
3 1 2 1 3 3 4
4 1 2 1 4 4 1
5 2 2 0 1 1 2 5
6 2 2 0 1 2 3 5
7 2 2 0 1 5 3 4
8 2 2 0 1 1 5 4
$EndElements
"""


def test_text_round_trip(tmp_path, annulus_meshes):
    m = annulus_meshes[1]
    p = tmp_path / "m.txt"
    formats.write_mesh(m, p)
    back = formats.read_mesh(p)
    assert np.array_equal(back.nodes, m.nodes)
    assert np.array_equal(back.triangles, m.triangles)
    assert np.array_equal(back.bloop, m.bloop)
    assert np.array_equal(back.bs0, m.bs0)
    formats.write_mesh(back, tmp_path / "m2.txt")
    assert (tmp_path / "m2.txt").read_bytes() == p.read_bytes()


def test_read_rejects_garbage(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("hello\n")
    with pytest.raises(mesh.MeshError):
        formats.read_mesh(p)


def test_gmsh_import(tmp_path):
    p = tmp_path / "sq.msh"
    p.write_text(GMSH)
    m = formats.read_gmsh(p)
    assert m.nv == 5 and len(m.triangles) == 4 and len(m.bedges) == 4
    assert np.all(mesh.element_min_jacobian(m) > 0)
    assert m.bs1.max() == pytest.approx(4.0)
    labels = sorted(formats.CODE_LABEL[int(c)] for c in m.blabel)
    assert labels == ["inflow", "wall", "wall", "wall"]


def test_gmsh_unlabelled_boundary_rejected(tmp_path):
    p = tmp_path / "sq.msh"
    p.write_text(GMSH.replace('1 2 "inflow"', '1 2 "outlet"'))
    with pytest.raises(mesh.MeshError, match="physical group"):
        formats.read_gmsh(p)


def test_profile_csv_is_exact(annulus_meshes):
    q = mesh.wall_quadrature(annulus_meshes[0], 4)
    prof = WallProfile(q, np.sin(q.s), "x")
    text = formats.profile_csv(prof)
    rows = [ln.split(",") for ln in text.splitlines()[1:]]
    assert np.array_equal(np.array([float(r[2]) for r in rows]), prof.values)
    assert text == formats.profile_csv(prof)


def test_quadrature_csv_header(annulus_meshes):
    q = mesh.wall_quadrature(annulus_meshes[0], 2)
    lines = formats.quadrature_csv(q).splitlines()
    assert lines[0] == "loop,s,weight,x,y,nx,ny,kappa"
    assert len(lines) == len(q) + 1
