"""Pinhole projection, silhouette/shaded rasterization, random pose sampling.

The synthetic-data engine: meshes posed in the camera frame are projected
through fixed pinhole intrinsics and rasterized in software.  Masks are
boolean (H, W) arrays; shaded renders are uint8 (H, W) grayscale with
background 0.  Pixel (i, j) has its center at (j + 0.5, i + 0.5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import BehindCameraError, SamplerExhaustedError
from .mesh import TriangleMesh
from .pose import Pose, Quaternion, canonicalize, quat_to_rotation, random_rotation

MIN_CAMERA_Z = 1e-6  # vertices must be strictly in front of this plane
DEFAULT_LIGHT = (0.0, 0.0, -1.0)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def scaled(self, factor: float) -> "CameraIntrinsics":
        """Equivalent intrinsics at a resolution scaled by `factor`."""
        return CameraIntrinsics(
            fx=self.fx * factor,
            fy=self.fy * factor,
            cx=self.cx * factor,
            cy=self.cy * factor,
            width=round(self.width * factor),
            height=round(self.height * factor),
        )


# 640x480 desk camera; use .scaled(1/8) for the 80x60 network inputs
DEFAULT_INTRINSICS = CameraIntrinsics(fx=525.0, fy=525.0, cx=320.0, cy=240.0, width=640, height=480)


@dataclass(frozen=True)
class PoseSamplerConfig:
    """Random-pose distribution: uniform rotations, uniform depth in
    [z_min, z_max], lateral placement uniform in the margin-shrunk
    frustum, rejection until the silhouette is big enough and clear of
    the image border."""

    z_min: float
    z_max: float
    lateral_margin: float = 0.25
    min_pixels: int = 50
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.z_min <= self.z_max:
            raise ValueError("need 0 < z_min <= z_max")
        if not 0 <= self.lateral_margin < 0.5:
            raise ValueError("lateral margin must lie in [0, 0.5)")
        if self.min_pixels < 1:
            raise ValueError("min_pixels must be >= 1")


def project_point(k: CameraIntrinsics, p) -> np.ndarray:
    """Pinhole projection of one camera-frame point to pixel coordinates."""
    p = np.asarray(p, dtype=np.float64)
    if p[2] <= 0:
        raise BehindCameraError(f"point z={p[2]!r} not in front of camera")
    return np.array([k.fx * p[0] / p[2] + k.cx, k.fy * p[1] / p[2] + k.cy])


def _camera_vertices(mesh: TriangleMesh, pose: Pose) -> np.ndarray:
    r = quat_to_rotation(pose.orientation)
    return mesh.vertices @ r.T + pose.position


def _project_vertices(k: CameraIntrinsics, v: np.ndarray) -> np.ndarray:
    if v[:, 2].min() <= MIN_CAMERA_Z:
        raise BehindCameraError(
            f"mesh vertex at z={v[:, 2].min()!r} behind the near plane; no clipping is done"
        )
    pts = np.empty((len(v), 2), dtype=np.float64)
    pts[:, 0] = k.fx * v[:, 0] / v[:, 2] + k.cx
    pts[:, 1] = k.fy * v[:, 1] / v[:, 2] + k.cy
    return pts


def rasterize_silhouette(mesh: TriangleMesh, pose: Pose, k: CameraIntrinsics) -> np.ndarray:
    """Boolean (H, W) silhouette of the posed mesh."""
    pts = _project_vertices(k, _camera_vertices(mesh, pose))
    return kernels.fill_mask(pts, mesh.triangles, k.width, k.height).astype(bool)


def _triangle_shades(v: np.ndarray, triangles: np.ndarray, light_dir) -> np.ndarray:
    """Two-sided flat Lambertian intensity per triangle, range 1..255.

    The floor of 1 keeps the shaded support identical to the silhouette
    even for faces edge-on to the light.
    """
    light = np.asarray(light_dir, dtype=np.float64)
    norm = float(np.linalg.norm(light))
    if not norm > 0:
        raise ValueError("light direction must be nonzero")
    light = light / norm
    a = v[triangles[:, 0]]
    n = np.cross(v[triangles[:, 1]] - a, v[triangles[:, 2]] - a)
    nn = np.linalg.norm(n, axis=1)
    nn[nn == 0.0] = 1.0
    lambert = np.abs((n / nn[:, None]) @ light)
    return np.maximum(1, np.rint(255.0 * lambert)).astype(np.uint8)


def render_shaded(
    mesh: TriangleMesh, pose: Pose, k: CameraIntrinsics, light_dir=DEFAULT_LIGHT
) -> np.ndarray:
    """Z-buffered flat-shaded grayscale render, uint8 (H, W), background 0."""
    v = _camera_vertices(mesh, pose)
    pts = _project_vertices(k, v)
    shade = _triangle_shades(v, mesh.triangles, light_dir)
    return kernels.fill_shaded(pts, v[:, 2].copy(), mesh.triangles, shade, k.width, k.height)


def _touches_border(mask: np.ndarray) -> bool:
    return bool(mask[0].any() or mask[-1].any() or mask[:, 0].any() or mask[:, -1].any())


def sample_pose(
    cfg: PoseSamplerConfig,
    mesh: TriangleMesh,
    k: CameraIntrinsics,
    rng: np.random.Generator,
    max_rejections: int = 1000,
) -> Pose:
    """Draw one renderable pose; the RNG is caller-owned.

    The draw sequence per attempt is fixed (3 rotation uniforms, depth,
    two lateral pixel coordinates) so a seeded generator reproduces the
    same pose stream.
    """
    u_lo = cfg.lateral_margin * k.width
    u_hi = (1.0 - cfg.lateral_margin) * k.width
    v_lo = cfg.lateral_margin * k.height
    v_hi = (1.0 - cfg.lateral_margin) * k.height
    for _ in range(max_rejections):
        q = random_rotation(rng)
        z = rng.uniform(cfg.z_min, cfg.z_max)
        u = rng.uniform(u_lo, u_hi)
        v = rng.uniform(v_lo, v_hi)
        position = np.array([(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z])
        pose = Pose(position, q)
        cam = _camera_vertices(mesh, pose)
        if cam[:, 2].min() <= MIN_CAMERA_Z:
            continue
        mask = kernels.fill_mask(
            _project_vertices(k, cam), mesh.triangles, k.width, k.height
        )
        if int(mask.sum()) < cfg.min_pixels:
            continue
        if _touches_border(mask):
            continue
        return pose
    raise SamplerExhaustedError(
        f"{max_rejections} consecutive rejections; sampler config infeasible for this mesh"
    )


def mask_centroid(mask: np.ndarray) -> tuple[float, float]:
    """(x, y) centroid of set pixel centers; helper for renderer checks."""
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        raise ValueError("empty mask has no centroid")
    return float(xs.mean() + 0.5), float(ys.mean() + 0.5)


def look_at_pose(distance: float, quaternion: Quaternion | None = None) -> Pose:
    """Convenience pose centered on the optical axis at the given depth."""
    q = canonicalize(quaternion) if quaternion is not None else Quaternion(1.0, 0.0, 0.0, 0.0)
    return Pose(np.array([0.0, 0.0, float(distance)]), q)


def rotation_about_axis(axis, angle_rad: float) -> Quaternion:
    """Unit-axis rotation quaternion without the (-pi, pi) range limits."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle_rad
    s = math.sin(half)
    return canonicalize(
        Quaternion(math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s)
    )
