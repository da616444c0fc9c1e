"""Simulated annotator: place the next click at the most interior error pixel.

Given the current prediction and the ground truth, the simulated user looks at
both error regions (false positives and false negatives), computes the
distance field of each, and clicks the pixel farthest from any region
boundary.  The click is positive when the pixel was missed (false negative)
and negative when it was hallucinated (false positive).
"""

from __future__ import annotations

import numpy as np

from .errors import NoMisclassifiedPixels
from .masks import Click, check_binary_mask, check_same_shape, edt_sq


def error_masks(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(false positives, false negatives) of a prediction, as binary masks."""
    pred = check_binary_mask(pred, "pred")
    gt = check_binary_mask(gt, "gt")
    check_same_shape(pred, gt)
    fp = ((pred == 1) & (gt == 0)).astype(np.uint8)
    fn = ((pred == 0) & (gt == 1)).astype(np.uint8)
    return fp, fn


def simulate_click(pred: np.ndarray, gt: np.ndarray) -> Click:
    """Choose the next corrective click.

    The chosen pixel maximizes the distance-to-boundary over both error
    fields jointly.  Comparisons run on exact squared distances; on an exact
    value tie the false-negative field wins, and within a field the smallest
    row-major index wins (numpy's argmax returns the first maximum).
    """
    fp, fn = error_masks(pred, gt)
    if not fp.any() and not fn.any():
        raise NoMisclassifiedPixels("prediction equals ground truth")
    dfn = edt_sq(fn)
    dfp = edt_sq(fp)
    best_fn = int(dfn.max())
    best_fp = int(dfp.max())
    w = pred.shape[1]
    if best_fn >= best_fp:
        idx = int(np.argmax(dfn.ravel()))
        return Click(idx // w, idx % w, True)
    idx = int(np.argmax(dfp.ravel()))
    return Click(idx // w, idx % w, False)
