"""
Tests for scene and boundary file loading.
"""

import numpy as np
import pytest
import trimesh

from app.errors import BoundaryError, GeometryError
from app.services.geometry import POINT, SEGMENT, TRIANGLE
from app.services.mesh_io import load_boundary, load_surface, read_obj, write_ply


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_obj_faces_are_fan_triangulated(tmp_path):
    """A quad becomes two triangles."""
    path = write(tmp_path / "quad.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    scene = load_surface(path)
    np.testing.assert_array_equal(scene.triangles, [[0, 1, 2], [0, 2, 3]])
    assert np.all(scene.primitive_kinds() == TRIANGLE)


def test_obj_mixed_dimensions(tmp_path):
    """Faces, polylines and normal-carrying points load into one scene."""
    text = "\n".join(
        [
            "v 0 0 0",
            "v 1 0 0",
            "v 0 1 0",
            "v 2 0 0",
            "v 3 0 0",
            "v 4 0 0",
            "v 0 0 5",
            "vn 0 0 1",
            "f 1 2 3",
            "l 4 5 6",
            "p 7//1",
        ]
    )
    scene = load_surface(write(tmp_path / "mixed.obj", text))
    kinds = scene.primitive_kinds()
    assert (kinds == TRIANGLE).sum() == 1
    assert (kinds == SEGMENT).sum() == 2
    assert (kinds == POINT).sum() == 1


def test_obj_point_cloud_with_aligned_normals(tmp_path):
    """Index-aligned vn records turn free vertices into oriented points."""
    text = "v 1 0 0\nv 0 1 0\nv 0 0 1\nvn 1 0 0\nvn 0 1 0\nvn 0 0 1\n"
    data = read_obj(write(tmp_path / "cloud.obj", text))
    np.testing.assert_array_equal(data["points"], [0, 1, 2])
    np.testing.assert_allclose(data["normals"], np.eye(3))
    assert data["unreferenced"] == 0


def test_unreferenced_vertices(tmp_path):
    """Stray vertices without normals are ignored unless normals are required."""
    path = write(tmp_path / "stray.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 5 5 5\nf 1 2 3\n")
    assert load_surface(path).primitive_count == 1
    with pytest.raises(GeometryError):
        load_surface(path, require_normals=True)


def test_obj_negative_indices(tmp_path):
    """Relative indices count back from the latest vertex."""
    data = read_obj(write(tmp_path / "rel.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n"))
    np.testing.assert_array_equal(data["triangles"], [[0, 1, 2]])


@pytest.mark.parametrize(
    "name, text",
    [
        ("short.obj", "v 0 0 0\nv 1 0 0\nf 1 2\n"),
        ("garbage.obj", "v 0 zero 0\n"),
        ("scene.stl", "solid\n"),
    ],
)
def test_bad_geometry_files(tmp_path, name, text):
    """Malformed files and unknown formats raise GeometryError."""
    with pytest.raises(GeometryError):
        load_surface(write(tmp_path / name, text))


def test_missing_file(tmp_path):
    """Unreadable paths raise GeometryError."""
    with pytest.raises(GeometryError):
        load_surface(str(tmp_path / "absent.obj"))


def test_ply_round_trip(tmp_path):
    """A written mesh PLY loads back with the same connectivity."""
    mesh = trimesh.creation.icosphere(subdivisions=1)
    path = str(tmp_path / "out" / "sphere.ply")
    write_ply(path, mesh.vertices, faces=mesh.faces, scalars={"u": np.arange(len(mesh.vertices))})
    scene = load_surface(path)
    np.testing.assert_allclose(scene.vertices, mesh.vertices)
    np.testing.assert_array_equal(scene.triangles, mesh.faces)


def test_boundary_with_inline_values(tmp_path):
    """Polylines become curve boundaries carrying the given constant."""
    path = write(tmp_path / "curve.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nl 1 2 3\n")
    boundary = load_boundary(path, values=2.5)
    assert boundary.kind == "curve"
    assert len(boundary.segments) == 2
    np.testing.assert_allclose(boundary.values[:, 0], 2.5)


def test_boundary_with_sidecar(tmp_path):
    """CSV columns give channels; _other and nx,ny,nz make a two-sided point set."""
    path = write(tmp_path / "pts.obj", "v 0 0 0\nv 1 0 0\n")
    csv_path = write(
        tmp_path / "values.csv",
        "index,u,u_other,nx,ny,nz\n1,4,6,0,1,0\n0,1,3,0,1,0\n",
    )
    boundary = load_boundary(path, values_path=csv_path)
    assert boundary.kind == "points"
    assert boundary.two_sided
    np.testing.assert_allclose(boundary.values[:, 0], [1.0, 4.0])
    np.testing.assert_allclose(boundary.values_other[:, 0], [3.0, 6.0])


@pytest.mark.parametrize(
    "csv_text",
    [
        "u\n1\n2\n",
        "index,u\n0,1\n",
        "index,u\n0,1\n5,2\n",
        "index\n0\n1\n",
        "index,u\n0,one\n1,2\n",
    ],
)
def test_bad_sidecars(tmp_path, csv_text):
    """Missing columns, rows or parseable values raise BoundaryError."""
    path = write(tmp_path / "curve.obj", "v 0 0 0\nv 1 0 0\nl 1 2\n")
    csv_path = write(tmp_path / "values.csv", csv_text)
    with pytest.raises(BoundaryError):
        load_boundary(path, values_path=csv_path)


def test_boundary_needs_values(tmp_path):
    """Neither inline values nor a sidecar is an error."""
    path = write(tmp_path / "curve.obj", "v 0 0 0\nv 1 0 0\nl 1 2\n")
    with pytest.raises(BoundaryError):
        load_boundary(path)
