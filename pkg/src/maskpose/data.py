"""Synthetic dataset generation, persistence, and loading.

On disk a dataset is a directory with a JSON Lines manifest next to an
images/ tree of PGM files.  The first manifest line is a header
(format version, intrinsics, sampler config, per-class mesh + loss-cloud
parameters); every following line is one record with its ground-truth
pose.  All floats are written with 17 significant digits so parsing
recovers them exactly, and nothing in the format depends on wall-clock
time: regenerating with the same seeds reproduces every byte.

Loss clouds are not persisted; they are regenerated from
(mesh, seed, m) at load time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetValidationError, FormatError
from .imageio import read_mask, read_pgm, write_pgm
from .mesh import TriangleMesh, load_obj, sample_surface
from .net import TrainingData
from .pose import Pose, Quaternion, is_canonical
from .render import (
    CameraIntrinsics,
    DEFAULT_LIGHT,
    PoseSamplerConfig,
    render_shaded,
    rasterize_silhouette,
    sample_pose,
)

MANIFEST_FORMAT = "maskpose-dataset"
MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.jsonl"

KINDS = ("mask", "shaded", "both")


def _fmt(v) -> str:
    """Minimal JSON emitter with floats at 17 significant digits."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if not np.isfinite(v):
            raise ValueError(f"cannot serialize non-finite float {v!r}")
        return format(v, ".17g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return json.dumps(v)
    if v is None:
        return "null"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ",".join(_fmt(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{_fmt(x)}" for k, x in v.items()) + "}"
    raise TypeError(f"cannot serialize {type(v)!r}")


@dataclass(frozen=True)
class ClassSpec:
    """One object class: mesh on disk plus loss-cloud sampling parameters."""

    name: str
    mesh_path: str  # relative to the dataset directory (or absolute)
    count: int
    cloud_seed: int = 0
    cloud_m: int = 1000


@dataclass(frozen=True)
class DatasetRecord:
    record_id: str
    class_id: int
    position: np.ndarray
    quaternion: np.ndarray
    mask_path: str | None
    shaded_path: str | None

    def target(self) -> Pose:
        return Pose(self.position, Quaternion.from_array(self.quaternion))


class Dataset:
    """Loaded manifest: header info plus validated records."""

    def __init__(self, root: Path, header: dict, records: list[DatasetRecord]):
        self.root = Path(root)
        self.header = header
        self.records = records

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(**self.header["intrinsics"])

    @property
    def classes(self) -> list[dict]:
        return self.header["classes"]

    def __len__(self) -> int:
        return len(self.records)

    def class_mesh(self, class_id: int) -> TriangleMesh:
        return load_obj(self.root / self.classes[class_id]["mesh"])

    def clouds(self) -> dict[int, np.ndarray]:
        out = {}
        for ci, spec in enumerate(self.classes):
            cloud = sample_surface(self.class_mesh(ci), spec["cloud_m"], spec["cloud_seed"])
            out[ci] = cloud.points
        return out

    def subset(self, record_ids: list[str] | None = None, per_class: int | None = None) -> "Dataset":
        """Restrict to named records, or to the first n of each class in
        manifest order (deterministic nesting for data-quantity sweeps)."""
        if (record_ids is None) == (per_class is None):
            raise ValueError("pass exactly one of record_ids / per_class")
        if record_ids is not None:
            wanted = set(record_ids)
            recs = [r for r in self.records if r.record_id in wanted]
        else:
            seen: dict[int, int] = {}
            recs = []
            for r in self.records:
                k = seen.get(r.class_id, 0)
                if k < per_class:
                    recs.append(r)
                    seen[r.class_id] = k + 1
        return Dataset(self.root, self.header, recs)

    def split(self, train_fraction: float, seed: int) -> tuple["Dataset", "Dataset"]:
        """Disjoint, exhaustive, per-class stratified, deterministic."""
        if not 0.0 < train_fraction < 1.0:
            raise ValueError(f"train fraction must lie in (0, 1), got {train_fraction}")
        rng = np.random.default_rng(seed)
        by_class: dict[int, list[int]] = {}
        for i, r in enumerate(self.records):
            by_class.setdefault(r.class_id, []).append(i)
        train_idx: list[int] = []
        test_idx: list[int] = []
        for c in sorted(by_class):
            idx = np.array(by_class[c])
            if len(idx) < 2:
                raise DatasetValidationError(
                    f"class {c} has {len(idx)} records; need >= 2 to stratify"
                )
            perm = rng.permutation(len(idx))
            n_train = min(max(int(len(idx) * train_fraction), 1), len(idx) - 1)
            train_idx.extend(idx[perm[:n_train]])
            test_idx.extend(idx[perm[n_train:]])
        train_idx.sort()
        test_idx.sort()
        mk = lambda ids: Dataset(self.root, self.header, [self.records[i] for i in ids])
        return mk(train_idx), mk(test_idx)

    def load_training_data(self, kind: str = "mask") -> TrainingData:
        """Read images into memory (uint8) and bundle training arrays."""
        if kind not in ("mask", "shaded"):
            raise ValueError(f"kind must be mask|shaded, got {kind!r}")
        n = len(self.records)
        if n == 0:
            raise DatasetValidationError("dataset has no records")
        k = self.intrinsics
        images = np.empty((n, k.height, k.width), dtype=np.uint8)
        class_ids = np.empty(n, dtype=np.int64)
        positions = np.empty((n, 3))
        quaternions = np.empty((n, 4))
        for i, r in enumerate(self.records):
            rel = r.mask_path if kind == "mask" else r.shaded_path
            if rel is None:
                raise DatasetValidationError(f"no {kind} image stored", r.record_id)
            img = read_pgm(self.root / rel)
            if img.shape != (k.height, k.width):
                raise DatasetValidationError(
                    f"image is {img.shape}, intrinsics say {(k.height, k.width)}", r.record_id
                )
            images[i] = img
            class_ids[i] = r.class_id
            positions[i] = r.position
            quaternions[i] = r.quaternion
        return TrainingData(
            images=images,
            class_ids=class_ids,
            positions=positions,
            quaternions=quaternions,
            clouds=self.clouds(),
        )

    def record_ids(self) -> list[str]:
        return [r.record_id for r in self.records]


def generate_dataset(
    classes: list[ClassSpec],
    sampler: PoseSamplerConfig,
    intrinsics: CameraIntrinsics,
    out_dir,
    seed: int,
    kind: str = "mask",
    light_dir=DEFAULT_LIGHT,
    progress=None,
) -> Dataset:
    """Render and persist a dataset; bit-reproducible for a fixed seed.

    Every record draws from its own RNG stream derived from
    (seed, class index, record index), so records are independent of
    generation order and counts.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    if not classes:
        raise ValueError("need at least one class")
    if any(c.count < 1 for c in classes):
        raise ValueError("per-class counts must be >= 1")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)

    header = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "kind": kind,
        "seed": seed,
        "intrinsics": {
            "fx": intrinsics.fx,
            "fy": intrinsics.fy,
            "cx": intrinsics.cx,
            "cy": intrinsics.cy,
            "width": intrinsics.width,
            "height": intrinsics.height,
        },
        "sampler": {
            "z_min": sampler.z_min,
            "z_max": sampler.z_max,
            "lateral_margin": sampler.lateral_margin,
            "min_pixels": sampler.min_pixels,
            "seed": sampler.seed,
        },
        "light": list(light_dir),
        "classes": [
            {
                "name": c.name,
                "mesh": c.mesh_path,
                "cloud_seed": c.cloud_seed,
                "cloud_m": c.cloud_m,
                "count": c.count,
            }
            for c in classes
        ],
    }

    lines = [_fmt(header)]
    done = 0
    total = sum(c.count for c in classes)
    for ci, spec in enumerate(classes):
        mesh = load_obj(out / spec.mesh_path)
        for i in range(spec.count):
            rng = np.random.default_rng(np.random.SeedSequence([seed, ci, i]))
            pose = sample_pose(sampler, mesh, intrinsics, rng)
            rid = f"{spec.name}-{i:06d}"
            mask_rel = shaded_rel = None
            if kind in ("mask", "both"):
                mask = rasterize_silhouette(mesh, pose, intrinsics)
                mask_rel = f"images/{rid}.pgm"
                write_pgm(out / mask_rel, mask)
            if kind in ("shaded", "both"):
                shaded = render_shaded(mesh, pose, intrinsics, light_dir)
                shaded_rel = f"images/{rid}-shaded.pgm"
                write_pgm(out / shaded_rel, shaded)
            record = {
                "id": rid,
                "class": ci,
                "position": [float(v) for v in pose.position],
                "quaternion": [
                    pose.orientation.q0,
                    pose.orientation.qx,
                    pose.orientation.qy,
                    pose.orientation.qz,
                ],
                "mask": mask_rel,
                "shaded": shaded_rel,
            }
            lines.append(_fmt(record))
            done += 1
            if progress is not None and (done % 1000 == 0 or done == total):
                progress(done, total)
    (out / MANIFEST_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return load_dataset(out / MANIFEST_NAME)


def load_dataset(manifest_path) -> Dataset:
    """Parse and validate a manifest; errors name the offending record."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise FormatError(f"manifest not found: {manifest_path}")
    root = manifest_path.parent
    with open(manifest_path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in (line.strip() for line in fh) if ln]
    if not lines:
        raise FormatError(f"{manifest_path}: empty manifest")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: bad header: {exc}") from None
    if header.get("format") != MANIFEST_FORMAT:
        raise FormatError(f"{manifest_path}: not a {MANIFEST_FORMAT} manifest")
    if header.get("version") != MANIFEST_VERSION:
        raise FormatError(f"{manifest_path}: unsupported version {header.get('version')}")

    records: list[DatasetRecord] = []
    seen: set[str] = set()
    for ln in lines[1:]:
        try:
            rec = json.loads(ln)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{manifest_path}: bad record line: {exc}") from None
        rid = rec["id"]
        if rid in seen:
            raise DatasetValidationError("duplicate id", rid)
        seen.add(rid)
        q = np.array(rec["quaternion"], dtype=np.float64)
        if not is_canonical(Quaternion.from_array(q)):
            raise DatasetValidationError(
                f"quaternion {q.tolist()} is not in canonical form", rid
            )
        for key in ("mask", "shaded"):
            rel = rec.get(key)
            if rel is not None and not (root / rel).exists():
                raise DatasetValidationError(f"missing {key} file {rel}", rid)
        if not 0 <= rec["class"] < len(header["classes"]):
            raise DatasetValidationError(f"class {rec['class']} out of range", rid)
        records.append(
            DatasetRecord(
                record_id=rid,
                class_id=int(rec["class"]),
                position=np.array(rec["position"], dtype=np.float64),
                quaternion=q,
                mask_path=rec.get("mask"),
                shaded_path=rec.get("shaded"),
            )
        )
    return Dataset(root, header, records)


def verify_mask_roundtrip(dataset: Dataset, record: DatasetRecord) -> bool:
    """Re-render one record from its stored pose and compare bitwise."""
    mesh = dataset.class_mesh(record.class_id)
    mask = rasterize_silhouette(mesh, record.target(), dataset.intrinsics)
    stored = read_mask(dataset.root / record.mask_path)
    return bool(np.array_equal(mask, stored))
