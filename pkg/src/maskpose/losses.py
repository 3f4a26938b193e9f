"""Pose regression losses with analytic gradients.

All four losses take a predicted position and a *raw* (pre-normalization)
quaternion, because that is what the network emits; the quaternion is
normalized to unit magnitude inside the loss and gradients are
propagated through the normalization.  Vector absolute values are
elementwise L1 norms throughout.

Losses:
  l1  pose_l1_loss              sum|dp| + alpha * sum|dq|
  l2  quat_dot_loss             sum|dp| + alpha * (1 - <q_pred, q_target>)
  l3  pointcloud_loss           L1 distance between the object point
                                cloud transformed by the two poses
  l4  pointcloud_penalized_loss l3 plus max(-q0, 0) on the predicted
                                normalized quaternion, which breaks the
                                q/-q sign ambiguity

Subgradient convention: 0 exactly at every kink (L1 corners and the
max(-q0, 0) hinge).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidQuaternionError
from .pose import Pose, quat_to_rotation


@dataclass(frozen=True)
class LossValueGrad:
    value: float
    d_position: np.ndarray  # (3,)
    d_raw_quaternion: np.ndarray  # (4,)


def normalize_raw_quaternion(raw) -> tuple[np.ndarray, float]:
    """Unit quaternion and the norm it was divided by."""
    raw = np.asarray(raw, dtype=np.float64).reshape(4)
    n = float(np.sqrt(raw @ raw))
    if n <= 1e-12:
        raise InvalidQuaternionError("raw quaternion has (near-)zero norm")
    return raw / n, n


def _chain_through_normalization(g_unit: np.ndarray, q_unit: np.ndarray, n: float) -> np.ndarray:
    # d(q/|q|)/dq = (I - q_unit q_unit^T) / |q|, applied to the gradient
    return (g_unit - q_unit * float(q_unit @ g_unit)) / n


def rotation_from_unit_quat(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    )


def rotation_grad(q: np.ndarray) -> np.ndarray:
    """(4, 3, 3) partial derivatives of the rotation matrix entries with
    respect to the quaternion components, at unit norm."""
    w, x, y, z = q
    return 2.0 * np.array(
        [
            [[0, -z, y], [z, 0, -x], [-y, x, 0]],
            [[0, y, z], [y, -2 * x, -w], [z, w, -2 * x]],
            [[-2 * y, x, w], [x, 0, z], [-w, z, -2 * y]],
            [[-2 * z, -w, x], [w, -2 * z, y], [x, y, 0]],
        ],
        dtype=np.float64,
    )


def _position_l1(pred_position, target_position) -> tuple[float, np.ndarray]:
    dp = np.asarray(pred_position, dtype=np.float64).reshape(3) - target_position
    return float(np.abs(dp).sum()), np.sign(dp)


def _check_alpha(alpha: float) -> float:
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha!r}")
    return float(alpha)


def pose_l1_loss(pred_position, pred_quat_raw, target: Pose, alpha: float = 1.0) -> LossValueGrad:
    """Direct L1 distance on the pose vector, orientation weighted by alpha.

    Blind to the quaternion sign ambiguity: a prediction of -q scores
    badly even though it is the same rotation.
    """
    alpha = _check_alpha(alpha)
    q_unit, n = normalize_raw_quaternion(pred_quat_raw)
    pos_val, dpos = _position_l1(pred_position, target.position)
    dq = q_unit - target.orientation.as_array()
    g_unit = alpha * np.sign(dq)
    return LossValueGrad(
        value=pos_val + alpha * float(np.abs(dq).sum()),
        d_position=dpos,
        d_raw_quaternion=_chain_through_normalization(g_unit, q_unit, n),
    )


def quat_dot_loss(pred_position, pred_quat_raw, target: Pose, alpha: float = 1.0) -> LossValueGrad:
    """L1 position term plus alpha * (1 - <q_pred, q_target>)."""
    alpha = _check_alpha(alpha)
    q_unit, n = normalize_raw_quaternion(pred_quat_raw)
    pos_val, dpos = _position_l1(pred_position, target.position)
    qt = target.orientation.as_array()
    g_unit = -alpha * qt
    return LossValueGrad(
        value=pos_val + alpha * (1.0 - float(q_unit @ qt)),
        d_position=dpos,
        d_raw_quaternion=_chain_through_normalization(g_unit, q_unit, n),
    )


def _pointcloud_terms(pred_position, q_unit, n, target, points, reduction):
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3 or len(points) == 0:
        raise ValueError(f"point cloud must be a nonempty (m, 3) array, got {points.shape}")
    if reduction not in ("sum", "mean"):
        raise ValueError(f"reduction must be 'sum' or 'mean', got {reduction!r}")
    scale = 1.0 / len(points) if reduction == "mean" else 1.0
    r_pred = rotation_from_unit_quat(q_unit)
    r_tgt = quat_to_rotation(target.orientation)
    pred_position = np.asarray(pred_position, dtype=np.float64).reshape(3)
    d = (points @ r_pred.T + pred_position) - (points @ r_tgt.T + target.position)
    s = np.sign(d)
    value = scale * float(np.abs(d).sum())
    dpos = scale * s.sum(axis=0)
    g_rot = s.T @ points  # (3, 3) gradient w.r.t. rotation matrix entries
    g_unit = scale * np.tensordot(rotation_grad(q_unit), g_rot, axes=([1, 2], [0, 1]))
    return value, dpos, _chain_through_normalization(g_unit, q_unit, n)


def pointcloud_loss(
    pred_position, pred_quat_raw, target: Pose, points, reduction: str = "sum"
) -> LossValueGrad:
    """L1 distance between the cloud transformed by predicted vs target pose.

    Compares poses in 3D space, so position and orientation need no
    balancing weight.  Invariant to the predicted quaternion's sign.
    `reduction="mean"` averages over points (scale-comparison variant);
    the default sums, one term per point.
    """
    q_unit, n = normalize_raw_quaternion(pred_quat_raw)
    value, dpos, draw = _pointcloud_terms(pred_position, q_unit, n, target, points, reduction)
    return LossValueGrad(value=value, d_position=dpos, d_raw_quaternion=draw)


def pointcloud_penalized_loss(
    pred_position, pred_quat_raw, target: Pose, points, reduction: str = "sum"
) -> LossValueGrad:
    """pointcloud_loss plus a hinge max(-q0, 0) on the normalized
    predicted quaternion, pushing predictions onto the canonical sheet."""
    q_unit, n = normalize_raw_quaternion(pred_quat_raw)
    value, dpos, draw = _pointcloud_terms(pred_position, q_unit, n, target, points, reduction)
    penalty = max(-float(q_unit[0]), 0.0)
    if q_unit[0] < 0.0:
        g_unit = np.array([-1.0, 0.0, 0.0, 0.0])
        draw = draw + _chain_through_normalization(g_unit, q_unit, n)
    return LossValueGrad(value=value + penalty, d_position=dpos, d_raw_quaternion=draw)


LOSSES = {
    "l1": pose_l1_loss,
    "l2": quat_dot_loss,
    "l3": pointcloud_loss,
    "l4": pointcloud_penalized_loss,
}

# the 3D-space losses need no position/orientation balancing weight
ALPHA_FREE = frozenset(["l3", "l4"])


def evaluate_loss(
    loss_id: str,
    pred_position,
    pred_quat_raw,
    target: Pose,
    points=None,
    alpha: float = 1.0,
    reduction: str = "sum",
) -> LossValueGrad:
    """Uniform dispatcher used by training and the gradient checker."""
    if loss_id not in LOSSES:
        raise ValueError(f"unknown loss {loss_id!r}; expected one of {sorted(LOSSES)}")
    if loss_id in ALPHA_FREE:
        return LOSSES[loss_id](pred_position, pred_quat_raw, target, points, reduction=reduction)
    return LOSSES[loss_id](pred_position, pred_quat_raw, target, alpha=alpha)


def _random_config(loss_id: str, rng: np.random.Generator):
    """One random (pred, target, cloud) tuple resampled away from kinks."""
    from .pose import random_rotation

    while True:
        target = Pose(
            np.array([0.0, 0.0, 1.0]) + rng.uniform(-0.3, 0.3, size=3),
            random_rotation(rng),
        )
        pred_position = target.position + rng.normal(0.0, 0.1, size=3)
        raw = rng.normal(0.0, 1.0, size=4)
        if np.sqrt(raw @ raw) < 0.5:
            continue
        points = rng.normal(0.0, 0.08, size=(8, 3))
        q_unit, _ = normalize_raw_quaternion(raw)
        if np.abs(pred_position - target.position).min() < 1e-4:
            continue
        if loss_id == "l1":
            if np.abs(q_unit - target.orientation.as_array()).min() < 1e-4:
                continue
        if loss_id in ("l3", "l4"):
            d = points @ (
                rotation_from_unit_quat(q_unit) - quat_to_rotation(target.orientation)
            ).T + (pred_position - target.position)
            if np.abs(d).min() < 1e-4:
                continue
        if loss_id == "l4" and abs(float(q_unit[0])) < 1e-5:
            # hinge kink: subgradient is 0 there, finite differences are not
            continue
        return pred_position, raw, target, points


def gradcheck(loss_id: str, trials: int, seed: int, step: float = 1e-6) -> float:
    """Worst relative error between analytic and central-difference
    gradients over seeded random configurations away from kinks.

    Per trial the error is ||analytic - numeric||_inf normalized by
    max(||numeric||_inf, 1).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        pred_position, raw, target, points = _random_config(loss_id, rng)

        def f(pos, rq) -> float:
            return evaluate_loss(loss_id, pos, rq, target, points).value

        res = evaluate_loss(loss_id, pred_position, raw, target, points)
        analytic = np.concatenate([res.d_position, res.d_raw_quaternion])
        numeric = np.empty(7)
        for i in range(3):
            e = np.zeros(3)
            e[i] = step
            numeric[i] = (f(pred_position + e, raw) - f(pred_position - e, raw)) / (2 * step)
        for i in range(4):
            e = np.zeros(4)
            e[i] = step
            numeric[3 + i] = (f(pred_position, raw + e) - f(pred_position, raw - e)) / (2 * step)
        err = float(np.abs(analytic - numeric).max() / max(np.abs(numeric).max(), 1.0))
        worst = max(worst, err)
    return worst
