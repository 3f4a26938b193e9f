"""Mask-to-pose regression network with hand-derived reverse-mode gradients.

Architecture: a plain stack of unpadded 3x3 stride-2 convolutions (each
followed by a rectifier), flattened *without* global pooling so spatial
layout survives, then one fully connected hidden layer feeding two
parallel linear branches: positions (3 outputs per class) and
orientations (4 outputs per class).  Only the known class's slice of
each branch is read, and only that slice receives loss gradient.  The
orientation output is normalized to unit magnitude but never sign-fixed;
resolving the quaternion sign is the loss's job.

All math is float64 numpy; the conv data movement goes through the
kernels backend.  Everything is deterministic for fixed seeds.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels, losses
from .errors import ConfigError, FormatError, InvalidQuaternionError
from .imageio import read_mask
from .occlusion import random_occlusion
from .pose import Pose, Quaternion

KERNEL = 3
STRIDE = 2

CHECKPOINT_MAGIC = b"MPNC"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkConfig:
    input_width: int = 80
    input_height: int = 60
    conv_channels: tuple[int, ...] = (8, 16, 32, 64)
    hidden: int = 256
    num_classes: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        if self.hidden < 8:
            raise ConfigError(f"hidden width must be >= 8, got {self.hidden}")
        if self.num_classes < 1:
            raise ConfigError(f"need at least one class, got {self.num_classes}")
        if not self.conv_channels or any(c < 1 for c in self.conv_channels):
            raise ConfigError(f"bad conv channel sequence {self.conv_channels}")
        self.feature_shapes()  # raises on spatial collapse

    def feature_shapes(self) -> list[tuple[int, int, int]]:
        """(channels, height, width) entering each conv layer, plus the
        final feature map appended last."""
        shapes = [(1, self.input_height, self.input_width)]
        h, w = self.input_height, self.input_width
        for c in self.conv_channels:
            if h < KERNEL or w < KERNEL:
                raise ConfigError(
                    f"spatial size collapsed below {KERNEL}x{KERNEL} at {h}x{w}: "
                    f"too many stride-{STRIDE} convs for a "
                    f"{self.input_height}x{self.input_width} input"
                )
            h = (h - KERNEL) // STRIDE + 1
            w = (w - KERNEL) // STRIDE + 1
            shapes.append((c, h, w))
        return shapes

    def flat_size(self) -> int:
        c, h, w = self.feature_shapes()[-1]
        return c * h * w

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d

    @staticmethod
    def from_dict(d: dict) -> "NetworkConfig":
        return NetworkConfig(
            input_width=d["input_width"],
            input_height=d["input_height"],
            conv_channels=tuple(d["conv_channels"]),
            hidden=d["hidden"],
            num_classes=d["num_classes"],
            seed=d["seed"],
        )


@dataclass
class NetworkParams:
    config: NetworkConfig
    conv_w: list[np.ndarray]
    conv_b: list[np.ndarray]
    fc_w: np.ndarray
    fc_b: np.ndarray
    pos_w: np.ndarray
    pos_b: np.ndarray
    ori_w: np.ndarray
    ori_b: np.ndarray

    def tensors(self) -> list[np.ndarray]:
        """Parameter tensors in the declared (checkpoint) order."""
        out: list[np.ndarray] = []
        for w, b in zip(self.conv_w, self.conv_b):
            out.extend([w, b])
        out.extend([self.fc_w, self.fc_b, self.pos_w, self.pos_b, self.ori_w, self.ori_b])
        return out

    def num_params(self) -> int:
        return sum(t.size for t in self.tensors())

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            config=self.config,
            conv_w=[w.copy() for w in self.conv_w],
            conv_b=[b.copy() for b in self.conv_b],
            fc_w=self.fc_w.copy(),
            fc_b=self.fc_b.copy(),
            pos_w=self.pos_w.copy(),
            pos_b=self.pos_b.copy(),
            ori_w=self.ori_w.copy(),
            ori_b=self.ori_b.copy(),
        )


@dataclass(frozen=True)
class PosePrediction:
    class_id: int
    position: np.ndarray  # (3,) meters
    quaternion: Quaternion  # unit norm, not sign-fixed
    raw_quaternion: np.ndarray  # (4,) pre-normalization branch output


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "l4"
    alpha: float = 1.0  # position/orientation balance, l1 and l2 only
    batch_size: int = 32
    weight_decay: float = 1e-4
    learning_rate: float = 0.01
    decay_epochs: tuple[int, ...] = (7, 14)
    decay_factor: float = 10.0
    epochs: int = 21
    momentum: float = 0.9
    occlusion_radius: int = 0  # 0 disables training-time occlusion
    cloud_reduction: str = "mean"  # per-point mean keeps lr 0.01 stable
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "decay_epochs", tuple(int(e) for e in self.decay_epochs))
        if self.loss not in losses.LOSSES:
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.batch_size < 1 or self.epochs < 1 or self.learning_rate <= 0:
            raise ConfigError("need batch_size >= 1, epochs >= 1, learning_rate > 0")
        if self.occlusion_radius < 0:
            raise ConfigError("occlusion radius must be >= 0")

    def learning_rate_at(self, epoch: int) -> float:
        """Learning rate for a 1-based epoch index."""
        drops = sum(1 for d in self.decay_epochs if epoch > d)
        return self.learning_rate / self.decay_factor**drops

    def to_dict(self) -> dict:
        d = asdict(self)
        d["decay_epochs"] = list(self.decay_epochs)
        return d


@dataclass
class TrainingData:
    """In-memory training arrays; images stay uint8 until batching."""

    images: np.ndarray  # (N, H, W) uint8; masks hold only 0/255
    class_ids: np.ndarray  # (N,) int64
    positions: np.ndarray  # (N, 3) float64
    quaternions: np.ndarray  # (N, 4) float64, canonical
    clouds: dict[int, np.ndarray]  # class id -> (m, 3) loss cloud

    def __len__(self) -> int:
        return len(self.images)

    def target(self, i: int) -> Pose:
        return Pose(self.positions[i], Quaternion.from_array(self.quaternions[i]))


def init_params(cfg: NetworkConfig) -> NetworkParams:
    """Fan-in-scaled normal weights (std sqrt(2/fan_in)), zero biases."""
    rng = np.random.default_rng(cfg.seed)
    shapes = cfg.feature_shapes()
    conv_w, conv_b = [], []
    for (c_in, _, _), c_out in zip(shapes[:-1], cfg.conv_channels):
        fan_in = c_in * KERNEL * KERNEL
        conv_w.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(c_out, c_in, KERNEL, KERNEL)))
        conv_b.append(np.zeros(c_out))
    flat = cfg.flat_size()
    fc_w = rng.normal(0.0, np.sqrt(2.0 / flat), size=(cfg.hidden, flat))
    pos_w = rng.normal(0.0, np.sqrt(2.0 / cfg.hidden), size=(3 * cfg.num_classes, cfg.hidden))
    ori_w = rng.normal(0.0, np.sqrt(2.0 / cfg.hidden), size=(4 * cfg.num_classes, cfg.hidden))
    return NetworkParams(
        config=cfg,
        conv_w=conv_w,
        conv_b=conv_b,
        fc_w=fc_w,
        fc_b=np.zeros(cfg.hidden),
        pos_w=pos_w,
        pos_b=np.zeros(3 * cfg.num_classes),
        ori_w=ori_w,
        ori_b=np.zeros(4 * cfg.num_classes),
    )


def _forward_batch(params: NetworkParams, x: np.ndarray, keep_cache: bool):
    """x is (B, 1, H, W) float64 in [0, 1]; returns head outputs and, when
    requested, the activations backward() needs."""
    cfg = params.config
    cache = {"cols": [], "pre": [], "x_shapes": []} if keep_cache else None
    a = x
    for w, b in zip(params.conv_w, params.conv_b):
        c_out = w.shape[0]
        cols = kernels.im2col(a, KERNEL, KERNEL, STRIDE, STRIDE)
        pre = w.reshape(c_out, -1) @ cols + b[:, None]
        if keep_cache:
            cache["x_shapes"].append(a.shape)
            cache["cols"].append(cols)
            cache["pre"].append(pre)
        bsz = a.shape[0]
        oh = (a.shape[2] - KERNEL) // STRIDE + 1
        ow = (a.shape[3] - KERNEL) // STRIDE + 1
        a = np.maximum(pre, 0.0).reshape(bsz, c_out, oh, ow)
    flat = a.reshape(a.shape[0], -1)
    hidden_pre = flat @ params.fc_w.T + params.fc_b
    hidden = np.maximum(hidden_pre, 0.0)
    pos_out = hidden @ params.pos_w.T + params.pos_b
    ori_out = hidden @ params.ori_w.T + params.ori_b
    if keep_cache:
        cache["flat"] = flat
        cache["hidden_pre"] = hidden_pre
        cache["hidden"] = hidden
    return pos_out, ori_out, cache


def _image_to_input(image: np.ndarray, cfg: NetworkConfig) -> np.ndarray:
    img = np.asarray(image)
    if img.shape != (cfg.input_height, cfg.input_width):
        raise ConfigError(
            f"input is {img.shape}, network expects "
            f"({cfg.input_height}, {cfg.input_width})"
        )
    if img.dtype == bool:
        return img.astype(np.float64)
    return img.astype(np.float64) / 255.0


def forward(params: NetworkParams, image: np.ndarray, class_id: int) -> PosePrediction:
    """One forward pass; reads only the class's output slices."""
    cfg = params.config
    if not 0 <= class_id < cfg.num_classes:
        raise ValueError(f"class {class_id} out of range (num_classes={cfg.num_classes})")
    x = _image_to_input(image, cfg)[None, None]
    pos_out, ori_out, _ = _forward_batch(params, x, keep_cache=False)
    position = pos_out[0, 3 * class_id : 3 * class_id + 3]
    raw = ori_out[0, 4 * class_id : 4 * class_id + 4]
    n = float(np.sqrt(raw @ raw))
    if n <= 1e-12:
        raise InvalidQuaternionError("orientation branch emitted a zero quaternion")
    q = raw / n
    return PosePrediction(
        class_id=class_id,
        position=position.copy(),
        quaternion=Quaternion(float(q[0]), float(q[1]), float(q[2]), float(q[3])),
        raw_quaternion=raw.copy(),
    )


def predict_file(params: NetworkParams, mask_path, class_id: int) -> PosePrediction:
    """forward() on a mask PGM from disk."""
    return forward(params, read_mask(mask_path), class_id)


def _zero_grads(params: NetworkParams) -> NetworkParams:
    return NetworkParams(
        config=params.config,
        conv_w=[np.zeros_like(w) for w in params.conv_w],
        conv_b=[np.zeros_like(b) for b in params.conv_b],
        fc_w=np.zeros_like(params.fc_w),
        fc_b=np.zeros_like(params.fc_b),
        pos_w=np.zeros_like(params.pos_w),
        pos_b=np.zeros_like(params.pos_b),
        ori_w=np.zeros_like(params.ori_w),
        ori_b=np.zeros_like(params.ori_b),
    )


def backward(
    params: NetworkParams,
    images: np.ndarray,
    class_ids: np.ndarray,
    targets: list[Pose],
    loss_id: str,
    clouds: dict[int, np.ndarray] | None = None,
    alpha: float = 1.0,
    cloud_reduction: str = "sum",
) -> tuple[NetworkParams, float]:
    """Summed batch loss and its gradients for every parameter.

    `images` is (B, H, W) float64 in [0, 1].  Per-class head rows receive
    gradient only from samples of that class.  The batch loss is the
    plain sum over samples, so gradients are linear in the batch.
    """
    cfg = params.config
    bsz = len(images)
    if bsz == 0:
        raise ValueError("empty batch")
    x = images[:, None, :, :].astype(np.float64, copy=False)
    pos_out, ori_out, cache = _forward_batch(params, x, keep_cache=True)

    d_pos_out = np.zeros_like(pos_out)
    d_ori_out = np.zeros_like(ori_out)
    total = 0.0
    for i in range(bsz):
        c = int(class_ids[i])
        if not 0 <= c < cfg.num_classes:
            raise ValueError(f"class {c} out of range")
        points = clouds.get(c) if clouds is not None else None
        res = losses.evaluate_loss(
            loss_id,
            pos_out[i, 3 * c : 3 * c + 3],
            ori_out[i, 4 * c : 4 * c + 4],
            targets[i],
            points=points,
            alpha=alpha,
            reduction=cloud_reduction,
        )
        total += res.value
        d_pos_out[i, 3 * c : 3 * c + 3] = res.d_position
        d_ori_out[i, 4 * c : 4 * c + 4] = res.d_raw_quaternion

    grads = _zero_grads(params)
    grads.pos_w = d_pos_out.T @ cache["hidden"]
    grads.pos_b = d_pos_out.sum(axis=0)
    grads.ori_w = d_ori_out.T @ cache["hidden"]
    grads.ori_b = d_ori_out.sum(axis=0)
    d_hidden = d_pos_out @ params.pos_w + d_ori_out @ params.ori_w
    d_hidden_pre = d_hidden * (cache["hidden_pre"] > 0.0)
    grads.fc_w = d_hidden_pre.T @ cache["flat"]
    grads.fc_b = d_hidden_pre.sum(axis=0)
    d_flat = d_hidden_pre @ params.fc_w

    shapes = cfg.feature_shapes()
    c_last, h_last, w_last = shapes[-1]
    d_act = d_flat.reshape(bsz, c_last, h_last, w_last)
    for li in range(len(params.conv_w) - 1, -1, -1):
        pre = cache["pre"][li]
        cols = cache["cols"][li]
        c_out = params.conv_w[li].shape[0]
        d_pre = d_act.reshape(bsz, c_out, -1) * (pre > 0.0)
        grads.conv_w[li] = (
            np.matmul(d_pre, cols.transpose(0, 2, 1)).sum(axis=0).reshape(params.conv_w[li].shape)
        )
        grads.conv_b[li] = d_pre.sum(axis=(0, 2))
        d_cols = params.conv_w[li].reshape(c_out, -1).T @ d_pre
        _, c_in, h_in, w_in = cache["x_shapes"][li]
        d_act = kernels.col2im(d_cols, c_in, h_in, w_in, KERNEL, KERNEL, STRIDE, STRIDE)
    return grads, total


@dataclass
class TrainingLog:
    network: dict
    train: dict
    optimizer: str
    initializer: str
    kernels_backend: str
    epochs: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _evaluate_quick(params: NetworkParams, data: TrainingData) -> dict:
    """Mean/median errors over a held-out set (used for per-epoch logs)."""
    from .evaluation import pose_errors

    pos, ori = [], []
    for i in range(len(data)):
        pred = forward(params, data.images[i], int(data.class_ids[i]))
        pc, od = pose_errors(pred, data.target(i))
        pos.append(pc)
        ori.append(od)
    pos_a, ori_a = np.array(pos), np.array(ori)
    lower_median = lambda a: float(np.sort(a)[(len(a) - 1) // 2])
    return {
        "pos_err_cm_mean": float(pos_a.mean()),
        "pos_err_cm_median": lower_median(pos_a),
        "ori_err_deg_mean": float(ori_a.mean()),
        "ori_err_deg_median": lower_median(ori_a),
    }


def train(
    data: TrainingData,
    net_cfg: NetworkConfig,
    train_cfg: TrainConfig,
    val_data: TrainingData | None = None,
    progress=None,
) -> tuple[NetworkParams, TrainingLog]:
    """SGD with momentum and decoupled weight decay, bit-reproducible for
    fixed seeds (fixed shuffle order, fixed occlusion draws).

    The step uses the batch-mean gradient; weight decay multiplies every
    parameter by (1 - lr * decay) each step regardless of loss gradient.
    """
    n = len(data)
    if n == 0:
        raise ValueError("empty training dataset")
    if int(data.class_ids.max()) >= net_cfg.num_classes:
        raise ValueError("dataset contains classes outside the network's range")
    params = init_params(net_cfg)
    velocity = [np.zeros_like(t) for t in params.tensors()]
    rng = np.random.default_rng(train_cfg.seed)
    log = TrainingLog(
        network=net_cfg.to_dict(),
        train=train_cfg.to_dict(),
        optimizer=f"sgd(momentum={train_cfg.momentum}, decoupled_decay={train_cfg.weight_decay})",
        initializer="normal(std=sqrt(2/fan_in)), zero biases",
        kernels_backend=kernels.BACKEND,
    )
    for epoch in range(1, train_cfg.epochs + 1):
        lr = train_cfg.learning_rate_at(epoch)
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, train_cfg.batch_size):
            idx = perm[start : start + train_cfg.batch_size]
            images = data.images[idx].astype(np.float64) / 255.0
            if train_cfg.occlusion_radius > 0:
                for j in range(len(idx)):
                    images[j] = random_occlusion(images[j], train_cfg.occlusion_radius, rng)
            targets = [data.target(int(i)) for i in idx]
            grads, batch_loss = backward(
                params,
                images,
                data.class_ids[idx],
                targets,
                train_cfg.loss,
                clouds=data.clouds,
                alpha=train_cfg.alpha,
                cloud_reduction=train_cfg.cloud_reduction,
            )
            epoch_loss += batch_loss
            inv_b = 1.0 / len(idx)
            # multiplicative decay so a zero-gradient parameter shrinks by
            # exactly (1 - lr * weight_decay) per step
            decay_mult = 1.0 - lr * train_cfg.weight_decay
            for p, g, v in zip(params.tensors(), grads.tensors(), velocity):
                v *= train_cfg.momentum
                v += g * inv_b
                p -= lr * v
                p *= decay_mult
        entry = {"epoch": epoch, "learning_rate": lr, "train_loss_mean": epoch_loss / n}
        if val_data is not None:
            entry.update(_evaluate_quick(params, val_data))
        log.epochs.append(entry)
        if progress is not None:
            progress(entry)
    return params, log


def save_checkpoint(params: NetworkParams, path) -> None:
    """Versioned header (magic, version, config echo) followed by the
    parameter tensors as little-endian float32 in declared order."""
    cfg_json = json.dumps(params.config.to_dict(), sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(cfg_json)))
    buf.write(cfg_json)
    for t in params.tensors():
        buf.write(t.astype("<f4").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path, expect_config: NetworkConfig | None = None) -> NetworkParams:
    """Read a checkpoint; refuses config mismatches and size mismatches."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a network checkpoint")
    version, cfg_len = struct.unpack("<II", data[4:12])
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    if len(data) < 12 + cfg_len:
        raise FormatError(f"{path}: truncated config block")
    try:
        cfg = NetworkConfig.from_dict(json.loads(data[12 : 12 + cfg_len].decode("utf-8")))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad config block: {exc}") from None
    if expect_config is not None and cfg != expect_config:
        raise ConfigError(f"{path}: checkpoint config does not match the expected config")
    params = init_params(cfg)
    offset = 12 + cfg_len
    for t in params.tensors():
        nbytes = t.size * 4
        chunk = data[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise FormatError(f"{path}: truncated tensor data")
        t[...] = np.frombuffer(chunk, dtype="<f4").reshape(t.shape).astype(np.float64)
        offset += nbytes
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes")
    return params


def network_gradcheck(
    cfg: NetworkConfig | None = None,
    loss_id: str = "l4",
    trials: int = 3,
    seed: int = 0,
    step: float = 1e-6,
) -> float:
    """Full-network check of backward() against central finite differences
    on a toy configuration; returns the worst relative error."""
    if cfg is None:
        cfg = NetworkConfig(
            input_width=16, input_height=12, conv_channels=(2, 2), hidden=16, num_classes=2, seed=3
        )
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        params = init_params(cfg)
        # perturb so biases are nonzero too
        for t in params.tensors():
            t += rng.normal(0.0, 0.05, size=t.shape)
        images = (rng.random((2, cfg.input_height, cfg.input_width)) < 0.4).astype(np.float64)
        class_ids = rng.integers(0, cfg.num_classes, size=2)
        targets = [
            Pose(np.array([0.0, 0.0, 1.0]) + rng.uniform(-0.2, 0.2, 3), _rand_quat(rng))
            for _ in range(2)
        ]
        clouds = {c: rng.normal(0.0, 0.08, size=(5, 3)) for c in range(cfg.num_classes)}
        grads, _ = backward(
            params, images, class_ids, targets, loss_id, clouds=clouds, cloud_reduction="sum"
        )

        def f() -> float:
            pos_out, ori_out, _ = _forward_batch(
                params, images[:, None, :, :], keep_cache=False
            )
            total = 0.0
            for i in range(2):
                c = int(class_ids[i])
                total += losses.evaluate_loss(
                    loss_id,
                    pos_out[i, 3 * c : 3 * c + 3],
                    ori_out[i, 4 * c : 4 * c + 4],
                    targets[i],
                    points=clouds[c],
                    reduction="sum",
                ).value
            return total

        for p, g in zip(params.tensors(), grads.tensors()):
            flat_p = p.reshape(-1)
            flat_g = g.reshape(-1)
            numeric = np.empty_like(flat_g)
            for k in range(flat_p.size):
                old = flat_p[k]
                flat_p[k] = old + step
                up = f()
                flat_p[k] = old - step
                down = f()
                flat_p[k] = old
                numeric[k] = (up - down) / (2 * step)
            err = float(
                np.abs(flat_g - numeric).max() / max(float(np.abs(numeric).max()), 1.0)
            )
            worst = max(worst, err)
    return worst


def _rand_quat(rng: np.random.Generator) -> Quaternion:
    from .pose import random_rotation

    return random_rotation(rng)
