"""Error metrics, the success criterion, and aggregate reports.

Position error is the Euclidean distance in centimeters; orientation
error is the geodesic angle in degrees, computed sign-invariantly so the
quaternion double cover never inflates it.  A prediction succeeds when
position error < 5 cm AND orientation error < 15 deg (strict at both
boundaries).  Medians use the lower-middle convention for even counts.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pose import Pose, canonicalize, orientation_angle_deg

SUCCESS_POS_CM = 5.0
SUCCESS_ORI_DEG = 15.0

POS_BIN_CM = 0.5
POS_BIN_MAX_CM = 20.0
ORI_BIN_DEG = 2.0
ORI_BIN_MAX_DEG = 180.0

MEDIAN_CONVENTION = "lower-middle"


def pose_errors(pred, gt: Pose) -> tuple[float, float]:
    """(position error cm, orientation error deg) for a prediction.

    `pred` needs .position and .quaternion attributes (PosePrediction or
    a Pose); the predicted quaternion is canonicalized before comparison.
    """
    quat = pred.quaternion if hasattr(pred, "quaternion") else pred.orientation
    pos_cm = float(np.linalg.norm(np.asarray(pred.position) - gt.position)) * 100.0
    ori_deg = orientation_angle_deg(canonicalize(quat), gt.orientation)
    return pos_cm, ori_deg


def is_success(pos_cm: float, ori_deg: float) -> bool:
    """Strict-inequality success criterion."""
    if pos_cm < 0 or ori_deg < 0:
        raise ValueError("errors must be nonnegative")
    return pos_cm < SUCCESS_POS_CM and ori_deg < SUCCESS_ORI_DEG


@dataclass(frozen=True)
class EvalRecord:
    sample_id: str
    class_id: int
    pos_err_cm: float
    ori_err_deg: float

    @property
    def success(self) -> bool:
        return is_success(self.pos_err_cm, self.ori_err_deg)


def _lower_median(values: np.ndarray) -> float:
    return float(np.sort(values)[(len(values) - 1) // 2])


def _stats(pos: np.ndarray, ori: np.ndarray, successes: np.ndarray) -> dict:
    return {
        "n": int(len(pos)),
        "pos_err_cm_mean": float(pos.mean()),
        "pos_err_cm_median": _lower_median(pos),
        "ori_err_deg_mean": float(ori.mean()),
        "ori_err_deg_median": _lower_median(ori),
        "success_rate": float(successes.mean()),
    }


def _histogram(values: np.ndarray, bin_width: float, bin_max: float) -> list[dict]:
    """Fixed-width bins up to bin_max plus one overflow bin, so counts
    always sum to the number of records."""
    edges = np.arange(0.0, bin_max + bin_width / 2, bin_width)
    bins = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        count = int(((values >= lo) & (values < hi)).sum())
        bins.append({"bin_lo": float(lo), "bin_hi": float(hi), "count": count})
    # orientation errors can equal 180 exactly; fold them into the last bin
    if bins:
        bins[-1]["count"] += int((values == bin_max).sum())
    overflow = int((values > bin_max).sum())
    bins.append({"bin_lo": float(bin_max), "bin_hi": float("inf"), "count": overflow})
    return bins


@dataclass
class EvalReport:
    overall: dict
    per_class: dict[int, dict]
    pos_histogram: list[dict]
    ori_histogram: list[dict]
    median_convention: str = MEDIAN_CONVENTION
    records: list[EvalRecord] = field(default_factory=list, repr=False)

    def to_dict(self, include_records: bool = False) -> dict:
        d = {
            "overall": self.overall,
            "per_class": {str(k): v for k, v in self.per_class.items()},
            "pos_histogram_cm": self.pos_histogram,
            "ori_histogram_deg": self.ori_histogram,
            "median_convention": self.median_convention,
            "success_criterion": {
                "pos_cm_strictly_below": SUCCESS_POS_CM,
                "ori_deg_strictly_below": SUCCESS_ORI_DEG,
            },
        }
        if include_records:
            d["records"] = [
                {
                    "id": r.sample_id,
                    "class": r.class_id,
                    "pos_err_cm": r.pos_err_cm,
                    "ori_err_deg": r.ori_err_deg,
                    "success": r.success,
                }
                for r in self.records
            ]
        return d

    def save_json(self, path, include_records: bool = False) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(include_records), indent=2, sort_keys=True) + "\n"
        )

    def save_histogram_csvs(self, pos_path, ori_path) -> None:
        for path, hist in ((pos_path, self.pos_histogram), (ori_path, self.ori_histogram)):
            with open(Path(path), "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["bin_lo", "bin_hi", "count"])
                for b in hist:
                    writer.writerow([b["bin_lo"], b["bin_hi"], b["count"]])


def aggregate(records: list[EvalRecord]) -> EvalReport:
    """Exact means, lower-middle medians, per-class breakdown, histograms."""
    if not records:
        raise ValueError("cannot aggregate an empty record list")
    pos = np.array([r.pos_err_cm for r in records])
    ori = np.array([r.ori_err_deg for r in records])
    succ = np.array([r.success for r in records], dtype=np.float64)
    per_class: dict[int, dict] = {}
    for c in sorted({r.class_id for r in records}):
        sel = np.array([r.class_id == c for r in records])
        per_class[c] = _stats(pos[sel], ori[sel], succ[sel])
    return EvalReport(
        overall=_stats(pos, ori, succ),
        per_class=per_class,
        pos_histogram=_histogram(pos, POS_BIN_CM, POS_BIN_MAX_CM),
        ori_histogram=_histogram(ori, ORI_BIN_DEG, ORI_BIN_MAX_DEG),
        records=list(records),
    )


def evaluate_model(params, data, ids: list[str] | None = None) -> EvalReport:
    """Forward every sample of a TrainingData-like bundle and aggregate."""
    from .net import forward

    records = []
    for i in range(len(data)):
        pred = forward(params, data.images[i], int(data.class_ids[i]))
        pos_cm, ori_deg = pose_errors(pred, data.target(i))
        records.append(
            EvalRecord(
                sample_id=ids[i] if ids is not None else str(i),
                class_id=int(data.class_ids[i]),
                pos_err_cm=pos_cm,
                ori_err_deg=ori_deg,
            )
        )
    return aggregate(records)
