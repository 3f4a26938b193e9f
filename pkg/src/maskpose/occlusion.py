"""Circular boundary-centered occlusions and occlusion-sensitivity sweeps.

Occluders are discs centered on a point of the mask boundary; they only
ever clear pixels.  The occlusion amount is the fraction of the original
mask's area that was cleared.  Sweeps evaluate a trained model on
occluded test masks and bin errors by measured occlusion amount.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyMaskError

BIN_WIDTH = 0.05  # occlusion-amount bin width for sweep reports


@dataclass(frozen=True)
class OcclusionSpec:
    center: tuple[int, int]  # (row, col), must lie on the mask boundary
    radius: int
    boundary_index: int = -1  # provenance: index into boundary_points()
    seed: int = 0

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError(f"radius must be >= 1, got {self.radius}")


def boundary_points(mask: np.ndarray) -> np.ndarray:
    """Set pixels with at least one unset 4-neighbor, (n, 2) as (row, col).

    The image border counts as unset, so a mask flush against the edge
    still has a boundary there.  Points come back in row-major order.
    """
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise EmptyMaskError("mask has no set pixels")
    padded = np.pad(m, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return np.argwhere(m & ~interior)


def _disc_cleared(shape: tuple[int, int], center: tuple[int, int], radius: int) -> np.ndarray:
    rows = np.arange(shape[0])[:, None] - center[0]
    cols = np.arange(shape[1])[None, :] - center[1]
    return rows * rows + cols * cols <= radius * radius


def apply_occlusion(mask: np.ndarray, spec: OcclusionSpec) -> np.ndarray:
    """Clear every pixel within Euclidean distance <= radius of the center."""
    m = np.asarray(mask, dtype=bool)
    bpts = boundary_points(m)
    if not ((bpts[:, 0] == spec.center[0]) & (bpts[:, 1] == spec.center[1])).any():
        raise ValueError(f"occlusion center {spec.center} is not on the mask boundary")
    out = m.copy()
    out[_disc_cleared(m.shape, spec.center, spec.radius)] = False
    return out


def occlusion_amount(original: np.ndarray, occluded: np.ndarray) -> float:
    """Fraction of the original mask's pixels that were cleared."""
    orig = np.asarray(original, dtype=bool)
    occ = np.asarray(occluded, dtype=bool)
    if not orig.any():
        raise EmptyMaskError("original mask is empty")
    if (occ & ~orig).any():
        raise ValueError("occluded mask must be a subset of the original")
    n_orig = int(orig.sum())
    return (n_orig - int(occ.sum())) / n_orig


def random_occlusion(image: np.ndarray, max_radius: int, rng: np.random.Generator) -> np.ndarray:
    """Training-time augmentation: one disc of radius uniform in
    [1, max_radius] centered on a random boundary point of the image's
    nonzero support.  Works for masks and shaded images alike.

    Draws two RNG values (radius, center index) per call, always, so the
    seeded stream stays aligned across images.
    """
    img = np.asarray(image)
    radius = int(rng.integers(1, max_radius + 1))
    support = img > 0
    if not support.any():
        rng.integers(1)  # keep the draw count fixed
        return img
    bpts = boundary_points(support)
    center = bpts[int(rng.integers(len(bpts)))]
    out = img.copy()
    out[_disc_cleared(img.shape, (int(center[0]), int(center[1])), radius)] = 0
    return out


@dataclass(frozen=True)
class SweepRow:
    bin_lo: float
    bin_hi: float
    n: int
    mean_pos_err_cm: float
    mean_ori_err_deg: float


def sensitivity_sweep(
    params,
    images: np.ndarray,
    class_ids: np.ndarray,
    targets,
    radii,
    seed: int,
) -> list[SweepRow]:
    """Evaluate the model on occluded copies of every test mask.

    For each (mask, radius) pair one boundary-centered occlusion is
    drawn from a per-(sample, radius) seeded stream; errors are binned
    by the measured occlusion amount in 5% bins.  Radius 0 means "no
    occlusion" and lands in a dedicated [0, 0] bin, which therefore
    reproduces the plain test error exactly.
    """
    from .evaluation import pose_errors
    from .net import forward

    radii = [int(r) for r in radii]
    if any(r < 0 for r in radii):
        raise ValueError("radii must be >= 0")
    bins: dict[tuple[float, float], list[tuple[float, float]]] = {}
    for i in range(len(images)):
        mask = np.asarray(images[i]) > 0
        target = targets[i]
        bpts = boundary_points(mask)
        for ri, radius in enumerate(radii):
            if radius == 0:
                occluded = mask
                key = (0.0, 0.0)
            else:
                # the sweep probes exact severities, so the radius is fixed
                # and only the boundary center is drawn
                rng = np.random.default_rng(np.random.SeedSequence([seed, i, ri]))
                center = bpts[int(rng.integers(len(bpts)))]
                occluded = mask.copy()
                occluded[
                    _disc_cleared(mask.shape, (int(center[0]), int(center[1])), radius)
                ] = False
                amount = occlusion_amount(mask, occluded)
                b = min(int(amount / BIN_WIDTH), int(round(1.0 / BIN_WIDTH)) - 1)
                key = (b * BIN_WIDTH, (b + 1) * BIN_WIDTH)
            if not occluded.any():
                continue  # fully occluded: nothing to feed the network
            pred = forward(params, occluded, int(class_ids[i]))
            pc, od = pose_errors(pred, target)
            bins.setdefault(key, []).append((pc, od))
    rows = []
    for (lo, hi), errs in sorted(bins.items()):
        arr = np.asarray(errs)
        rows.append(
            SweepRow(
                bin_lo=lo,
                bin_hi=hi,
                n=len(errs),
                mean_pos_err_cm=float(arr[:, 0].mean()),
                mean_ori_err_deg=float(arr[:, 1].mean()),
            )
        )
    return rows


def write_sweep_csv(rows: list[SweepRow], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "n", "mean_pos_err_cm", "mean_ori_err_deg"])
        for r in rows:
            writer.writerow(
                [f"{r.bin_lo:.2f}", f"{r.bin_hi:.2f}", r.n, f"{r.mean_pos_err_cm:.6f}", f"{r.mean_ori_err_deg:.6f}"]
            )


def rows_to_dicts(rows: list[SweepRow]) -> list[dict]:
    return [
        {
            "bin_lo": r.bin_lo,
            "bin_hi": r.bin_hi,
            "n": r.n,
            "mean_pos_err_cm": r.mean_pos_err_cm,
            "mean_ori_err_deg": r.mean_ori_err_deg,
        }
        for r in rows
    ]
