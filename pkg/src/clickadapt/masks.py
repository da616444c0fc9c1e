"""Binary / ternary mask primitives.

Conventions used throughout the package:

* binary masks are ``uint8`` arrays of shape ``(H, W)`` holding {0, 1}
* ternary supervision masks are ``int8`` arrays holding {1, 0, -1} where
  ``-1`` means "no label here"
* the plane outside an image counts as background (zero) for every
  morphological and distance operation
"""

from __future__ import annotations

from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from .errors import ConflictingClicks, DimensionMismatch, OutOfBounds


class Click(NamedTuple):
    """A single annotator click: pixel position plus polarity."""

    row: int
    col: int
    positive: bool


# 4-connected cross: the structuring element for all erosion / dilation here
CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


# ------------------------------------------------------------------ checking


def check_binary_mask(mask: np.ndarray, name: str = "mask") -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-d, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        arr = arr.astype(np.uint8)
    if arr.size and int(arr.max(initial=0)) > 1:
        raise ValueError(f"{name} must contain only 0/1 values")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape mismatch: {a.shape} vs {b.shape}")


def check_ternary_mask(mask: np.ndarray, name: str = "label") -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-d, got shape {arr.shape}")
    if arr.dtype != np.int8:
        arr = arr.astype(np.int8)
    return arr


# --------------------------------------------------------------------- IoU


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks; two empty masks count as 1."""
    a = check_binary_mask(a, "a")
    b = check_binary_mask(b, "b")
    check_same_shape(a, b)
    inter = int(np.count_nonzero((a == 1) & (b == 1)))
    union = int(np.count_nonzero((a == 1) | (b == 1)))
    if union == 0:
        return 1.0
    return inter / union


# ------------------------------------------------------- distance transform


def edt_sq(mask: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distance to the nearest zero pixel.

    The plane outside the image is treated as zero, so distances near the
    border are capped by the border itself.  Returning squared integers keeps
    later argmax comparisons exact.
    """
    mask = check_binary_mask(mask)
    padded = np.pad(mask, 1, constant_values=0)
    idx = ndimage.distance_transform_edt(
        padded, return_distances=False, return_indices=True
    )
    ii, jj = np.indices(padded.shape)
    di = ii - idx[0]
    dj = jj - idx[1]
    dsq = (di * di + dj * dj).astype(np.int64)
    return dsq[1:-1, 1:-1]


def edt(mask: np.ndarray) -> np.ndarray:
    """Euclidean distance field (pixels) to the nearest zero, float64."""
    return np.sqrt(edt_sq(mask).astype(np.float64))


# ---------------------------------------------------------------- morphology


def erode_k(mask: np.ndarray, k: int) -> np.ndarray:
    """k-fold erosion with the 4-connected cross; outside the image is zero."""
    mask = check_binary_mask(mask)
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return mask.copy()
    out = ndimage.binary_erosion(mask, structure=CROSS, iterations=k, border_value=0)
    return out.astype(np.uint8)


def dilate_k(mask: np.ndarray, k: int) -> np.ndarray:
    """k-fold dilation with the 4-connected cross."""
    mask = check_binary_mask(mask)
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return mask.copy()
    out = ndimage.binary_dilation(mask, structure=CROSS, iterations=k, border_value=0)
    return out.astype(np.uint8)


# ------------------------------------------------------- supervision labels


def build_sparse_mask(
    clicks: Sequence[Click] | Iterable[Click], shape: tuple[int, int]
) -> np.ndarray:
    """Ternary mask from clicks: 1 at positive, 0 at negative, -1 elsewhere.

    Duplicate clicks at the same pixel with the same polarity collapse to one;
    opposite polarities at the same pixel are contradictory and rejected.
    """
    h, w = shape
    out = np.full((h, w), -1, dtype=np.int8)
    for c in clicks:
        if not (0 <= c.row < h and 0 <= c.col < w):
            raise OutOfBounds(f"click ({c.row}, {c.col}) outside {h}x{w}")
        label = 1 if c.positive else 0
        existing = out[c.row, c.col]
        if existing != -1 and existing != label:
            raise ConflictingClicks(
                f"clicks at ({c.row}, {c.col}) carry both polarities"
            )
        out[c.row, c.col] = label
    return out


def prune_result_mask(result_mask: np.ndarray, k: int) -> np.ndarray:
    """Erosion-pruned pseudo-label from an accepted result mask.

    Pixels that survive k-fold erosion of the foreground keep label 1, pixels
    that survive k-fold erosion of the background keep label 0, and the
    uncertain band in between is left unlabeled (-1).  With k=0 this is an
    exact ternary copy of the input.
    """
    result_mask = check_binary_mask(result_mask, "result_mask")
    fg = erode_k(result_mask, k)
    bg = erode_k((1 - result_mask).astype(np.uint8), k)
    out = np.full(result_mask.shape, -1, dtype=np.int8)
    out[fg == 1] = 1
    out[bg == 1] = 0
    return out


def merge_ternary(click_mask: np.ndarray, other: np.ndarray) -> np.ndarray:
    """Merge two ternary masks; where both carry a label the click mask wins."""
    click_mask = check_ternary_mask(click_mask, "click_mask")
    other = check_ternary_mask(other, "other")
    check_same_shape(click_mask, other)
    return np.where(click_mask != -1, click_mask, other).astype(np.int8)


def labeled_counts(label: np.ndarray) -> tuple[int, int, int]:
    """(positive, negative, unknown) pixel counts of a ternary mask."""
    pos = int(np.count_nonzero(label == 1))
    neg = int(np.count_nonzero(label == 0))
    unk = int(np.count_nonzero(label == -1))
    return pos, neg, unk
