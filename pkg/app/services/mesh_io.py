"""
Reading and writing scene geometry.

Functions:
- read_obj: Parse v / vn / f / l / p records of an OBJ file.
- load_surface: Build a SurfaceScene from an OBJ or PLY file.
- load_boundary: Build a DirichletBoundary from an OBJ polyline or point file plus
  inline values or a CSV sidecar.
- read_boundary_values: Parse a CSV sidecar `index,<channels>[,<channels>_other][,nx,ny,nz]`.
- write_ply: Write vertices (and optional faces) with per-vertex scalars and colors.
"""

import csv
import os

import numpy as np
import trimesh

from app.errors import BoundaryError, GeometryError
from app.services.geometry import DirichletBoundary, SurfaceScene
from app.utils import get_logger

geometry_logger = get_logger("geometry_logger", "geometry.log")


def _obj_index(token, count):
    """Resolve a 1-based (or negative, relative) OBJ index to a 0-based one."""
    idx = int(token.split("/")[0])
    return idx - 1 if idx > 0 else count + idx


def read_obj(path):
    """
    Parse an OBJ file.

    Faces of any arity are fan-triangulated; `l` records become consecutive
    segments. Vertices that carry a normal (index-aligned `vn` records or a
    `v//vn` reference in a `p` record) and are not used by faces or lines become
    oriented points.

    :param path: OBJ file path.
    :return: dict with vertices, triangles, segments, points, normals.
    """
    vertices, vertex_normals = [], []
    triangles, segments, point_refs = [], [], []
    try:
        with open(path, "r", encoding="utf-8") as file:
            for line_no, raw in enumerate(file, start=1):
                parts = raw.split("#", 1)[0].split()
                if not parts:
                    continue
                tag, args = parts[0], parts[1:]
                if tag == "v":
                    vertices.append([float(a) for a in args[:3]])
                elif tag == "vn":
                    vertex_normals.append([float(a) for a in args[:3]])
                elif tag == "f":
                    idx = [_obj_index(a, len(vertices)) for a in args]
                    if len(idx) < 3:
                        raise GeometryError(f"{path}:{line_no}: face with fewer than 3 vertices")
                    triangles.extend([idx[0], idx[k], idx[k + 1]] for k in range(1, len(idx) - 1))
                elif tag == "l":
                    idx = [_obj_index(a, len(vertices)) for a in args]
                    segments.extend([idx[k], idx[k + 1]] for k in range(len(idx) - 1))
                elif tag == "p":
                    for a in args:
                        fields = a.split("/")
                        normal_ref = (
                            _obj_index(fields[2], len(vertex_normals))
                            if len(fields) > 2 and fields[2]
                            else None
                        )
                        point_refs.append((_obj_index(fields[0], len(vertices)), normal_ref))
    except (ValueError, IndexError) as e:
        raise GeometryError(f"Failed to parse OBJ file {path}: {e}") from e
    except OSError as e:
        raise GeometryError(f"Cannot read {path}: {e}") from e

    vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
    vertex_normals = np.asarray(vertex_normals, dtype=float).reshape(-1, 3)
    triangles = np.asarray(triangles, dtype=np.intp).reshape(-1, 3)
    segments = np.asarray(segments, dtype=np.intp).reshape(-1, 2)

    points, normals = [], []
    if point_refs:
        for v_idx, n_idx in point_refs:
            if n_idx is None:
                if len(vertex_normals) != len(vertices):
                    continue
                n_idx = v_idx
            points.append(v_idx)
            normals.append(vertex_normals[n_idx])
    elif len(vertex_normals) == len(vertices) and len(vertices):
        used = np.zeros(len(vertices), dtype=bool)
        used[triangles.ravel()] = True
        used[segments.ravel()] = True
        points = np.flatnonzero(~used).tolist()
        normals = vertex_normals[points].tolist()

    return {
        "vertices": vertices,
        "triangles": triangles,
        "segments": segments,
        "points": np.asarray(points, dtype=np.intp),
        "normals": np.asarray(normals, dtype=float).reshape(-1, 3),
        "unreferenced": _count_unreferenced(len(vertices), triangles, segments, points),
    }


def _count_unreferenced(count, triangles, segments, points):
    used = np.zeros(count, dtype=bool)
    used[np.asarray(triangles, dtype=np.intp).ravel()] = True
    used[np.asarray(segments, dtype=np.intp).ravel()] = True
    used[np.asarray(points, dtype=np.intp).ravel()] = True
    return int((~used).sum())


def _read_ply(path):
    try:
        with open(path, "rb") as file:
            kwargs = trimesh.exchange.ply.load_ply(file)
    except OSError as e:
        raise GeometryError(f"Cannot read {path}: {e}") from e
    except Exception as e:
        raise GeometryError(f"Failed to parse PLY file {path}: {e}") from e

    vertices = np.asarray(kwargs.get("vertices", []), dtype=float).reshape(-1, 3)
    faces = kwargs.get("faces")
    faces = np.empty((0, 3), dtype=np.intp) if faces is None else np.asarray(faces)
    if faces.ndim == 2 and faces.shape[1] == 4:
        faces = trimesh.geometry.triangulate_quads(faces)
    normals = kwargs.get("vertex_normals")
    if normals is None:
        raw = kwargs.get("metadata", {}).get("_ply_raw", {}).get("vertex", {}).get("data")
        if raw is not None and all(k in raw.dtype.names for k in ("nx", "ny", "nz")):
            normals = np.column_stack([raw["nx"], raw["ny"], raw["nz"]])
    return vertices, np.asarray(faces, dtype=np.intp).reshape(-1, 3), normals


def load_surface(path, file_format=None, require_normals=False):
    """
    Load a scene from disk.

    :param path: OBJ or PLY file.
    :param file_format: "obj" or "ply"; inferred from the extension when omitted.
    :param require_normals: Raise when vertices without faces carry no normals.
    :return: SurfaceScene.
    """
    file_format = (file_format or os.path.splitext(path)[1].lstrip(".")).lower()
    if file_format == "obj":
        data = read_obj(path)
        if require_normals and data["unreferenced"]:
            raise GeometryError(f"{path}: point cloud vertices without normals.")
        scene = SurfaceScene(
            data["vertices"],
            triangles=data["triangles"],
            segments=data["segments"],
            points=data["points"],
            normals=data["normals"],
        )
    elif file_format == "ply":
        vertices, faces, normals = _read_ply(path)
        if len(faces):
            scene = SurfaceScene(vertices, triangles=faces)
        elif normals is not None:
            scene = SurfaceScene(vertices, points=np.arange(len(vertices)), normals=normals)
        else:
            raise GeometryError(f"{path}: point cloud without normals.")
    else:
        raise GeometryError(f"Unsupported geometry format: {file_format!r}")
    geometry_logger.info("Loaded %s (%d primitives).", path, scene.primitive_count)
    return scene


def read_boundary_values(path, count):
    """
    Parse a boundary value sidecar.

    Columns: `index`, one column per channel, optional `<channel>_other` columns for
    the second side and optional `nx, ny, nz` side orientations for points.

    :param path: CSV file path.
    :param count: Number of boundary vertices.
    :return: (values (count, C), values_other or None, orientations or None)
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as file:
            reader = csv.DictReader(file)
            rows = list(reader)
            header = reader.fieldnames or []
    except OSError as e:
        raise BoundaryError(f"Cannot read boundary values {path}: {e}") from e
    if "index" not in header:
        raise BoundaryError(f"{path}: missing 'index' column.")

    orient_cols = ["nx", "ny", "nz"]
    channels = [
        h for h in header if h != "index" and not h.endswith("_other") and h not in orient_cols
    ]
    other_cols = [f"{c}_other" for c in channels]
    has_other = all(c in header for c in other_cols)
    has_orient = all(c in header for c in orient_cols)
    if not channels:
        raise BoundaryError(f"{path}: no value columns.")

    values = np.full((count, len(channels)), np.nan)
    other = np.full((count, len(channels)), np.nan) if has_other else None
    orient = np.zeros((count, 3)) if has_orient else None
    try:
        for row in rows:
            i = int(row["index"])
            if not 0 <= i < count:
                raise BoundaryError(f"{path}: index {i} outside 0..{count - 1}.")
            values[i] = [float(row[c]) for c in channels]
            if other is not None:
                other[i] = [float(row[c]) for c in other_cols]
            if orient is not None:
                orient[i] = [float(row[c]) for c in orient_cols]
    except (TypeError, ValueError) as e:
        raise BoundaryError(f"{path}: malformed row: {e}") from e
    if np.isnan(values).any() or (other is not None and np.isnan(other).any()):
        raise BoundaryError(f"{path}: every boundary vertex needs a value.")
    return values, other, orient


def load_boundary(path, values=None, values_path=None):
    """
    Load boundary geometry from an OBJ file (polylines, or bare points).

    :param path: OBJ file with `v` and optional `l` records.
    :param values: Inline per-vertex values (scalar, list or array).
    :param values_path: CSV sidecar; used when `values` is None.
    :return: DirichletBoundary.
    """
    data = read_obj(path)
    vertices = data["vertices"]
    other = orient = None
    if values is None:
        if values_path is None:
            raise BoundaryError("Boundary values are required (inline or CSV sidecar).")
        values, other, orient = read_boundary_values(values_path, len(vertices))
    segments = data["segments"] if len(data["segments"]) else None
    return DirichletBoundary(
        vertices, values, segments=segments, values_other=other, orientations=orient
    )


def write_ply(path, vertices, faces=None, scalars=None, colors=None):
    """
    Write a mesh or point cloud as binary PLY.

    :param path: Output file.
    :param vertices: (n, 3) positions.
    :param faces: Optional (m, 3) triangles.
    :param scalars: Optional mapping name -> (n,) values stored as vertex properties.
    :param colors: Optional (n, 3) linear colors in [0, 1].
    """
    vertices = np.asarray(vertices, dtype=float)
    rgba = None
    if colors is not None:
        rgb = np.clip(np.asarray(colors, dtype=float).reshape(len(vertices), 3), 0.0, 1.0)
        rgba = np.column_stack([np.round(rgb * 255), np.full(len(vertices), 255)]).astype(np.uint8)
    if faces is not None and len(faces):
        geom = trimesh.Trimesh(vertices=vertices, faces=faces, vertex_colors=rgba, process=False)
    else:
        geom = trimesh.PointCloud(vertices, colors=rgba)
    if scalars:
        if getattr(geom, "vertex_attributes", None) is None:
            geom.vertex_attributes = {}
        for name, value in scalars.items():
            geom.vertex_attributes[name] = np.asarray(value, dtype=np.float64).reshape(len(vertices))
    data = trimesh.exchange.ply.export_ply(geom, encoding="binary", include_attributes=True)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as file:
        file.write(data)
    geometry_logger.info("Wrote %s (%d vertices).", path, len(vertices))
