"""Triangle meshes: ASCII OBJ/PLY parsing and export, procedural primitives.

Understands plain geometry only (v/f lines in OBJ, vertex/face elements in
PLY); polygon faces are fan-triangulated and winding is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import EmptyMeshError, MeshIndexOutOfRange, MeshParseError
from .geometry import Aabb, Rotation, TransformTRS, Vec3
from .jsoncanon import fmt_real


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray  # (N, 3) float64
    triangles: np.ndarray  # (M, 3) int64, CCW winding as authored

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        t = np.asarray(self.triangles, dtype=np.int64)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if len(t) == 0:
            raise EmptyMeshError("mesh has no triangles")
        if t.min() < 0 or t.max() >= len(v):
            raise IndexError("triangle index out of range")

    @property
    def aabb(self) -> Aabb:
        return Aabb(Vec3.from_array(self.vertices.min(axis=0)),
                    Vec3.from_array(self.vertices.max(axis=0)))

    def transformed(self, t: TransformTRS) -> "Mesh":
        return Mesh(t.apply_many(self.vertices), self.triangles)

    def triangle_corners(self) -> np.ndarray:
        """(M, 3, 3) corner positions per triangle."""
        return self.vertices[self.triangles]


# --- parsing ---------------------------------------------------------------------


def load_mesh(data: bytes | str, format: str) -> Mesh:
    """Parse ASCII OBJ or PLY bytes into a Mesh (with computed bounds)."""
    text = data.decode("utf-8", errors="replace") if isinstance(data, bytes) else data
    if format == "obj":
        return _parse_obj(text)
    if format == "ply":
        return _parse_ply(text)
    raise ValueError(f"unsupported mesh format {format!r}")


def _resolve_index(token: str, n_vertices: int, line_no: int) -> int:
    first = token.split("/")[0]
    try:
        idx = int(first)
    except ValueError:
        raise MeshParseError(line_no, f"bad face index {token!r}")
    if idx > 0:
        resolved = idx - 1
    elif idx < 0:
        resolved = n_vertices + idx
    else:
        raise MeshIndexOutOfRange(line_no, "face index 0 is not valid")
    if not (0 <= resolved < n_vertices):
        raise MeshIndexOutOfRange(
            line_no, f"face references vertex {idx} of {n_vertices}")
    return resolved


def _parse_obj(text: str) -> Mesh:
    vertices: list[list[float]] = []
    triangles: list[tuple[int, int, int]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            if len(parts) < 4:
                raise MeshParseError(line_no, "vertex needs 3 coordinates")
            try:
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError:
                raise MeshParseError(line_no, f"bad vertex coordinate in {line!r}")
        elif parts[0] == "f":
            if len(parts) < 4:
                raise MeshParseError(line_no, "face needs at least 3 indices")
            idx = [_resolve_index(tok, len(vertices), line_no) for tok in parts[1:]]
            for k in range(1, len(idx) - 1):  # fan triangulation
                triangles.append((idx[0], idx[k], idx[k + 1]))
        # all other records (vn, vt, o, g, s, usemtl, ...) carry no geometry
    if not triangles:
        raise EmptyMeshError("OBJ contains no faces")
    return Mesh(np.array(vertices), np.array(triangles))


def _parse_ply(text: str) -> Mesh:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshParseError(1, "not a PLY file")
    elements: list[tuple[str, int]] = []
    vertex_props: list[str] = []
    in_vertex_element = False
    body_start = None
    for line_no, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if line.startswith("comment") or not line:
            continue
        if line.startswith("format"):
            if "ascii" not in line:
                raise MeshParseError(line_no, "only ASCII PLY is supported")
        elif line.startswith("element"):
            parts = line.split()
            if len(parts) != 3:
                raise MeshParseError(line_no, f"bad element line {line!r}")
            try:
                elements.append((parts[1], int(parts[2])))
            except ValueError:
                raise MeshParseError(line_no, f"bad element count in {line!r}")
            in_vertex_element = parts[1] == "vertex"
        elif line.startswith("property"):
            if in_vertex_element and not line.startswith("property list"):
                vertex_props.append(line.split()[-1])
        elif line == "end_header":
            body_start = line_no
            break
    if body_start is None:
        raise MeshParseError(len(lines), "missing end_header")
    try:
        ix, iy, iz = (vertex_props.index(a) for a in ("x", "y", "z"))
    except ValueError:
        raise MeshParseError(body_start, "vertex element lacks x/y/z properties")

    vertices: list[list[float]] = []
    triangles: list[tuple[int, int, int]] = []
    cursor = body_start  # 1-based line index of end_header
    for name, count in elements:
        for _ in range(count):
            if cursor >= len(lines):
                raise MeshParseError(len(lines), f"unexpected end of {name} data")
            line_no = cursor + 1
            parts = lines[cursor].split()
            cursor += 1
            if name == "vertex":
                if len(parts) < len(vertex_props):
                    raise MeshParseError(line_no, "short vertex row")
                try:
                    vertices.append([float(parts[ix]), float(parts[iy]), float(parts[iz])])
                except ValueError:
                    raise MeshParseError(line_no, f"bad vertex value in {parts!r}")
            elif name == "face":
                try:
                    k = int(parts[0])
                    idx = [int(p) for p in parts[1:1 + k]]
                except (ValueError, IndexError):
                    raise MeshParseError(line_no, f"bad face row {lines[cursor - 1]!r}")
                if len(idx) != k or k < 3:
                    raise MeshParseError(line_no, "face needs at least 3 indices")
                for i in idx:
                    if not (0 <= i < len(vertices)):
                        raise MeshIndexOutOfRange(
                            line_no, f"face references vertex {i} of {len(vertices)}")
                for k2 in range(1, len(idx) - 1):
                    triangles.append((idx[0], idx[k2], idx[k2 + 1]))
            # other elements are skipped row by row
    if not triangles:
        raise EmptyMeshError("PLY contains no faces")
    return Mesh(np.array(vertices), np.array(triangles))


# --- export ----------------------------------------------------------------------


def dump_obj(mesh: Mesh) -> bytes:
    out = []
    for v in mesh.vertices:
        out.append(f"v {fmt_real(float(v[0]))} {fmt_real(float(v[1]))} {fmt_real(float(v[2]))}")
    for t in mesh.triangles:
        out.append(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}")
    return ("\n".join(out) + "\n").encode("utf-8")


def dump_ply(mesh: Mesh) -> bytes:
    out = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(mesh.vertices)}",
        "property float x",
        "property float y",
        "property float z",
        f"element face {len(mesh.triangles)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for v in mesh.vertices:
        out.append(f"{fmt_real(float(v[0]))} {fmt_real(float(v[1]))} {fmt_real(float(v[2]))}")
    for t in mesh.triangles:
        out.append(f"3 {t[0]} {t[1]} {t[2]}")
    return ("\n".join(out) + "\n").encode("utf-8")


def dump_mesh(mesh: Mesh, format: str) -> bytes:
    if format == "obj":
        return dump_obj(mesh)
    if format == "ply":
        return dump_ply(mesh)
    raise ValueError(f"unsupported mesh format {format!r}")


# --- procedural primitives ---------------------------------------------------------


def merge_meshes(meshes: Iterable[Mesh]) -> Mesh:
    verts, tris, base = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + base)
        base += len(m.vertices)
    if not verts:
        raise EmptyMeshError("nothing to merge")
    return Mesh(np.vstack(verts), np.vstack(tris))


def box_mesh(width: float, height: float, depth: float) -> Mesh:
    """Axis-aligned box with its base centered at the origin (y in [0, height])."""
    hx, hz = width / 2.0, depth / 2.0
    v = np.array([
        [-hx, 0, -hz], [hx, 0, -hz], [hx, 0, hz], [-hx, 0, hz],
        [-hx, height, -hz], [hx, height, -hz], [hx, height, hz], [-hx, height, hz],
    ])
    f = np.array([
        [0, 2, 1], [0, 3, 2],  # bottom (faces -y)
        [4, 5, 6], [4, 6, 7],  # top
        [0, 1, 5], [0, 5, 4],  # -z side
        [2, 3, 7], [2, 7, 6],  # +z side
        [1, 2, 6], [1, 6, 5],  # +x side
        [3, 0, 4], [3, 4, 7],  # -x side
    ])
    return Mesh(v, f)


def cylinder_mesh(radius: float, height: float, segments: int = 12) -> Mesh:
    """Y-axis cylinder, base at y = 0."""
    ang = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    ring = np.stack([radius * np.cos(ang), np.zeros(segments), radius * np.sin(ang)], axis=1)
    bottom = ring.copy()
    top = ring + np.array([0, height, 0])
    verts = [bottom, top, np.array([[0, 0, 0]]), np.array([[0, height, 0]])]
    v = np.vstack(verts)
    cb, ct = 2 * segments, 2 * segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris.append([i, j, segments + j])
        tris.append([i, segments + j, segments + i])
        tris.append([cb, j, i])
        tris.append([ct, segments + i, segments + j])
    return Mesh(v, np.array(tris))


def uv_sphere(radius: float, segments: int = 8, rings: int = 6) -> Mesh:
    lat = np.linspace(0, np.pi, rings + 1)
    lon = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    verts = []
    for a in lat:
        for b in lon:
            verts.append([radius * np.sin(a) * np.cos(b),
                          radius * np.cos(a),
                          radius * np.sin(a) * np.sin(b)])
    v = np.array(verts)
    tris = []
    for i in range(rings):
        for j in range(segments):
            j2 = (j + 1) % segments
            a, b = i * segments + j, i * segments + j2
            c, d = (i + 1) * segments + j, (i + 1) * segments + j2
            tris.append([a, b, d])
            tris.append([a, d, c])
    return Mesh(v, np.array(tris))


def capsule_mesh(p0: Vec3, p1: Vec3, radius: float, segments: int = 8,
                 rings: int = 3) -> Mesh:
    """Capsule between two world points; degenerates to a sphere when p0 == p1."""
    axis = p1 - p0
    length = axis.norm()
    if length < 1e-9:
        sphere = uv_sphere(radius, segments, 2 * rings)
        return Mesh(sphere.vertices + p0.to_array(), sphere.triangles)
    # Build along +y then rotate/translate into place.
    half = np.pi / 2
    lat_top = np.linspace(0, half, rings + 1)       # upper hemisphere
    lat_bot = np.linspace(half, np.pi, rings + 1)   # lower hemisphere
    lon = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    verts = []
    for a in lat_top:
        for b in lon:
            verts.append([radius * np.sin(a) * np.cos(b),
                          length + radius * np.cos(a),
                          radius * np.sin(a) * np.sin(b)])
    for a in lat_bot:
        for b in lon:
            verts.append([radius * np.sin(a) * np.cos(b),
                          radius * np.cos(a),
                          radius * np.sin(a) * np.sin(b)])
    v = np.array(verts)
    n_rings = 2 * (rings + 1)
    tris = []
    for i in range(n_rings - 1):
        for j in range(segments):
            j2 = (j + 1) % segments
            a, b = i * segments + j, i * segments + j2
            c, d = (i + 1) * segments + j, (i + 1) * segments + j2
            tris.append([a, b, d])
            tris.append([a, d, c])
    rot = Rotation.between(Vec3(0, 1, 0), axis)
    m = rot.matrix()
    placed = (m @ v.T).T + p0.to_array()
    return Mesh(placed, np.array(tris))
