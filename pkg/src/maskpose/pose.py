"""Rigid-body pose representation and quaternion algebra.

Conventions used throughout the package:

- Quaternions are (q0, qx, qy, qz) with the scalar part first.
- A rotation has exactly one canonical quaternion: unit norm, q0 >= 0,
  and when q0 == 0 the first nonzero component of (qx, qy, qz) is
  positive.  q and -q encode the same rotation; canonicalization picks
  one representative so equality of rotations is equality of values.
- Positions are in meters, in the camera frame (x right, y down,
  z forward), so anything renderable has position z > 0.
- Axis-angle pairs use a unit axis and an angle strictly inside
  (-pi, pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidQuaternionError

UNIT_NORM_TOL = 1e-9


@dataclass(frozen=True)
class Quaternion:
    q0: float
    qx: float
    qy: float
    qz: float

    def as_array(self) -> np.ndarray:
        return np.array([self.q0, self.qx, self.qy, self.qz], dtype=np.float64)

    @staticmethod
    def from_array(q) -> "Quaternion":
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (4,):
            raise InvalidQuaternionError(f"expected 4 components, got shape {q.shape}")
        return Quaternion(float(q[0]), float(q[1]), float(q[2]), float(q[3]))

    def norm(self) -> float:
        return math.sqrt(self.q0**2 + self.qx**2 + self.qy**2 + self.qz**2)


@dataclass(frozen=True)
class Pose:
    """Position (meters) plus canonical orientation, camera frame."""

    position: np.ndarray
    orientation: Quaternion

    def __post_init__(self):
        object.__setattr__(
            self, "position", np.asarray(self.position, dtype=np.float64).reshape(3)
        )

    @staticmethod
    def from_arrays(position, quaternion) -> "Pose":
        return Pose(np.asarray(position, dtype=np.float64), Quaternion.from_array(quaternion))


@dataclass(frozen=True)
class AxisAngle:
    axis: np.ndarray
    angle: float

    def __post_init__(self):
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=np.float64).reshape(3))


def canonicalize(q: Quaternion) -> Quaternion:
    """Return the unique canonical representative of q's rotation.

    Normalizes to unit length, then fixes the sign: q0 > 0 keeps the
    sign, q0 < 0 flips all components, and at q0 == 0 the first nonzero
    of (qx, qy, qz) is made positive.  Idempotent, and canonicalize(q)
    equals canonicalize(-q) bitwise.
    """
    arr = q.as_array()
    n = math.sqrt(float(arr @ arr))
    if n <= 1e-12:
        raise InvalidQuaternionError("cannot canonicalize a zero-norm quaternion")
    arr = arr / n
    if arr[0] < 0.0:
        arr = -arr
    elif arr[0] == 0.0:
        for v in arr[1:]:
            if v != 0.0:
                if v < 0.0:
                    arr = -arr
                break
    # -0.0 components would break bitwise idempotence of the sign flip
    arr[arr == 0.0] = 0.0
    return Quaternion(float(arr[0]), float(arr[1]), float(arr[2]), float(arr[3]))


def is_canonical(q: Quaternion, tol: float = UNIT_NORM_TOL) -> bool:
    """Check the canonical-form invariants: unit norm and sign rule."""
    if abs(q.norm() - 1.0) > tol:
        return False
    if q.q0 > 0.0:
        return True
    if q.q0 < 0.0:
        return False
    for v in (q.qx, q.qy, q.qz):
        if v != 0.0:
            return v > 0.0
    return False


def _require_unit(q: Quaternion) -> np.ndarray:
    arr = q.as_array()
    if abs(math.sqrt(float(arr @ arr)) - 1.0) > UNIT_NORM_TOL:
        raise InvalidQuaternionError(f"expected unit quaternion, norm={q.norm()!r}")
    return arr


def quat_to_rotation(q: Quaternion) -> np.ndarray:
    """3x3 proper rotation matrix for a unit quaternion."""
    w, x, y, z = _require_unit(q)
    return np.array(
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ],
        dtype=np.float64,
    )


def pose_to_matrix(pose: Pose) -> np.ndarray:
    """4x4 homogeneous transform: rotation block plus translation column."""
    m = np.eye(4, dtype=np.float64)
    m[:3, :3] = quat_to_rotation(pose.orientation)
    m[:3, 3] = pose.position
    return m


def transform_points(pose: Pose, points: np.ndarray) -> np.ndarray:
    """Apply the pose to an (n, 3) array of object-frame points."""
    r = quat_to_rotation(pose.orientation)
    return np.asarray(points, dtype=np.float64) @ r.T + pose.position


def orientation_angle_deg(qa: Quaternion, qb: Quaternion) -> float:
    """Geodesic angle between two rotations, in degrees [0, 180].

    Computed as 2*arccos(|<qa, qb>|), which is symmetric and invariant
    to the sign of either quaternion.
    """
    a = _require_unit(qa)
    b = _require_unit(qb)
    dot = min(1.0, abs(float(a @ b)))
    return math.degrees(2.0 * math.acos(dot))


def axis_angle_to_quat(aa: AxisAngle) -> Quaternion:
    """Convert a unit-axis rotation of angle in (-pi, pi) to canonical form."""
    axis = np.asarray(aa.axis, dtype=np.float64)
    n = float(np.linalg.norm(axis))
    if abs(n - 1.0) > UNIT_NORM_TOL:
        raise ValueError(f"axis must be unit length, got norm {n!r}")
    if not -math.pi < aa.angle < math.pi:
        raise ValueError(f"angle must lie strictly inside (-pi, pi), got {aa.angle!r}")
    half = 0.5 * aa.angle
    s = math.sin(half)
    return canonicalize(
        Quaternion(math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s)
    )


def quat_to_axis_angle(q: Quaternion) -> AxisAngle:
    """Inverse of axis_angle_to_quat for canonical quaternions.

    The identity rotation maps to axis +x, angle 0.  A canonical
    quaternion with q0 == 0 encodes a half-turn (angle pi), which has no
    representative strictly inside (-pi, pi) and is rejected.
    """
    w, x, y, z = _require_unit(q)
    if w < 0.0:
        raise InvalidQuaternionError("expected canonical quaternion (q0 >= 0)")
    vnorm = math.sqrt(x * x + y * y + z * z)
    if vnorm == 0.0:
        return AxisAngle(np.array([1.0, 0.0, 0.0]), 0.0)
    angle = 2.0 * math.atan2(vnorm, w)
    if not angle < math.pi:
        raise ValueError("half-turn rotation (angle pi) has no axis-angle form in (-pi, pi)")
    return AxisAngle(np.array([x, y, z]) / vnorm, angle)


def random_rotation(rng: np.random.Generator) -> Quaternion:
    """Draw a rotation uniformly over the rotation group, canonical form.

    Uses the standard construction mapping three independent uniforms to
    a uniform point on the unit 4-sphere.
    """
    u1, u2, u3 = rng.random(3)
    a = math.sqrt(1.0 - u1)
    b = math.sqrt(u1)
    return canonicalize(
        Quaternion(
            a * math.sin(2.0 * math.pi * u2),
            a * math.cos(2.0 * math.pi * u2),
            b * math.sin(2.0 * math.pi * u3),
            b * math.cos(2.0 * math.pi * u3),
        )
    )
