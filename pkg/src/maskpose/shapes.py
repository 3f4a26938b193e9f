"""Procedural test meshes.

The repository ships no mesh assets; experiments and tests synthesize
their objects from these builders.  The training object must pin down
its own orientation from a silhouette alone, so the default "widget" is
deliberately chiral and has no rotational symmetry.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh

_BOX_FACES = np.array(
    [
        [0, 1, 2], [0, 2, 3],  # z-
        [4, 6, 5], [4, 7, 6],  # z+
        [0, 4, 5], [0, 5, 1],  # y-
        [3, 2, 6], [3, 6, 7],  # y+
        [0, 3, 7], [0, 7, 4],  # x-
        [1, 5, 6], [1, 6, 2],  # x+
    ],
    dtype=np.int64,
)


def make_box(lo, hi, name: str = "box") -> TriangleMesh:
    """Axis-aligned box spanning [lo, hi] per axis, 12 triangles."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if not np.all(hi > lo):
        raise ValueError("box needs hi > lo on every axis")
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    verts = np.array(
        [
            [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
            [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
        ]
    )
    return TriangleMesh(verts, _BOX_FACES.copy(), name=name)


def make_cube(side: float, origin: str = "center", name: str = "cube") -> TriangleMesh:
    """Cube with the given side; origin either at the center or at the
    center of the z=0 face ("front", useful for exact depth arithmetic)."""
    h = side / 2.0
    if origin == "center":
        return make_box([-h, -h, -h], [h, h, h], name=name)
    if origin == "front":
        return make_box([-h, -h, 0.0], [h, h, side], name=name)
    raise ValueError(f"unknown origin {origin!r}")


def merge(meshes: list[TriangleMesh], name: str) -> TriangleMesh:
    """Concatenate meshes into one triangle soup (no welding)."""
    verts = []
    tris = []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += len(m.vertices)
    return TriangleMesh(np.vstack(verts), np.vstack(tris), name=name)


def make_widget(scale: float = 1.0, name: str = "widget") -> TriangleMesh:
    """Chiral compound of three unequal boxes, about 0.29 m long at scale 1.

    A long bar, an upright block on one end (+z), and a side tab on the
    other end (+y).  No mirror plane and no rotational symmetry, so its
    silhouette is orientation-revealing from (almost) every viewpoint.
    """
    s = scale
    bar = make_box([-0.145 * s, -0.040 * s, -0.032 * s], [0.145 * s, 0.040 * s, 0.032 * s])
    upright = make_box([0.055 * s, -0.040 * s, 0.032 * s], [0.145 * s, 0.040 * s, 0.150 * s])
    tab = make_box([-0.145 * s, 0.040 * s, -0.032 * s], [-0.073 * s, 0.140 * s, 0.032 * s])
    return merge([bar, upright, tab], name=name)


def make_tetrahedron(scale: float = 1.0, name: str = "tetra") -> TriangleMesh:
    """Scalene tetrahedron; small and convex, handy for fast unit tests."""
    v = scale * np.array(
        [
            [0.0, 0.0, 0.0],
            [0.12, 0.0, 0.01],
            [0.03, 0.09, -0.01],
            [0.02, 0.03, 0.11],
        ]
    )
    t = np.array([[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]], dtype=np.int64)
    return TriangleMesh(v, t, name=name)


BUILDERS = {
    "widget": make_widget,
    "tetra": make_tetrahedron,
    "cube": lambda scale=1.0, name="cube": make_cube(0.2 * scale, name=name),
}
