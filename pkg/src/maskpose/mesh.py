"""Triangle meshes: OBJ loading, validation, and surface point sampling.

Only geometry is kept; normals, textures, and materials in OBJ files are
ignored.  Point clouds sampled here feed the 3D-space pose losses, so
sampling is seeded and bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyMeshError, MeshParseError

DEGENERATE_AREA = 1e-12  # m^2; triangles thinner than this are dropped on load


@dataclass(frozen=True)
class TriangleMesh:
    """Immutable vertex/triangle soup in the object frame (meters)."""

    vertices: np.ndarray  # (v, 3) float64
    triangles: np.ndarray  # (t, 3) int64 vertex indices
    name: str = "mesh"

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must be (n, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError(f"triangles must be (n, 3), got {t.shape}")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    def triangle_areas(self) -> np.ndarray:
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def surface_area(self) -> float:
        return float(self.triangle_areas().sum())

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass(frozen=True)
class PointCloud:
    """Points on a mesh surface, tagged with their sampling provenance."""

    points: np.ndarray  # (m, 3) float64
    mesh_id: str
    seed: int

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if p.ndim != 2 or p.shape[1] != 3 or len(p) < 4:
            raise ValueError(f"point cloud must be (m>=4, 3), got {p.shape}")
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return len(self.points)


def _parse_face_index(token: str, n_vertices: int, lineno: int) -> int:
    # OBJ faces may carry v/vt/vn groups; only the vertex index is used
    head = token.split("/", 1)[0]
    try:
        idx = int(head)
    except ValueError:
        raise MeshParseError(f"bad face index {token!r}", lineno) from None
    if idx < 0:
        raise MeshParseError(f"negative (relative) indices not supported: {token!r}", lineno)
    if not 1 <= idx <= n_vertices:
        raise MeshParseError(f"face index {idx} out of range (1..{n_vertices})", lineno)
    return idx - 1


def load_obj(path) -> TriangleMesh:
    """Read an ASCII OBJ (v/f records; '#' comments; faces fan-triangulated).

    Degenerate triangles (area < 1e-12 m^2) are dropped; a file yielding
    no triangles at all raises EmptyMeshError.
    """
    path = Path(path)
    vertices: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            kind = tokens[0]
            if kind == "v":
                if len(tokens) != 4:
                    raise MeshParseError(
                        f"vertex record needs 3 coordinates, got {len(tokens) - 1}", lineno
                    )
                try:
                    vertices.append([float(t) for t in tokens[1:]])
                except ValueError:
                    raise MeshParseError(f"bad vertex coordinate in {line!r}", lineno) from None
            elif kind == "f":
                if len(tokens) < 4:
                    raise MeshParseError("face record needs at least 3 indices", lineno)
                idx = [_parse_face_index(t, len(vertices), lineno) for t in tokens[1:]]
                for i in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[i], idx[i + 1]))
            # other record types (vn, vt, o, g, usemtl, ...) are ignored

    if not faces:
        raise EmptyMeshError(f"{path}: no faces")
    mesh = TriangleMesh(np.array(vertices), np.array(faces, dtype=np.int64), name=path.stem)
    keep = mesh.triangle_areas() >= DEGENERATE_AREA
    if not keep.any():
        raise EmptyMeshError(f"{path}: all triangles degenerate")
    if not keep.all():
        mesh = TriangleMesh(mesh.vertices, mesh.triangles[keep], name=mesh.name)
    lo, hi = mesh.bounding_box()
    if not float(np.linalg.norm(hi - lo)) > 0.0:
        raise EmptyMeshError(f"{path}: zero bounding-box diagonal")
    return mesh


def save_obj(mesh: TriangleMesh, path) -> None:
    """Write the mesh back out as a minimal v/f OBJ."""
    path = Path(path)
    with open(path, "w", encoding="ascii") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def sample_surface(mesh: TriangleMesh, m: int, seed: int) -> PointCloud:
    """Draw m points area-weighted uniformly over the mesh surface.

    Triangle choice inverts the cumulative-area distribution; the point
    within a triangle uses the square-root barycentric trick.  Identical
    (mesh, m, seed) give bitwise-identical clouds.
    """
    if m < 4:
        raise ValueError(f"need at least 4 points, got {m}")
    areas = mesh.triangle_areas()
    cum = np.cumsum(areas)
    total = cum[-1]
    rng = np.random.default_rng(seed)
    tri = np.searchsorted(cum, rng.random(m) * total, side="right")
    tri = np.minimum(tri, len(areas) - 1)
    a = mesh.vertices[mesh.triangles[tri, 0]]
    b = mesh.vertices[mesh.triangles[tri, 1]]
    c = mesh.vertices[mesh.triangles[tri, 2]]
    r1 = np.sqrt(rng.random((m, 1)))
    r2 = rng.random((m, 1))
    points = (1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c
    return PointCloud(points=points, mesh_id=mesh.name, seed=seed)


def vertex_cloud(mesh: TriangleMesh, seed: int = 0) -> PointCloud:
    """Mesh vertices as a loss cloud (alternative to surface sampling)."""
    return PointCloud(points=mesh.vertices.copy(), mesh_id=mesh.name, seed=seed)
