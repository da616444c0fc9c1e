"""Interactive segmentation with online decoder adaptation from clicks."""

from .masks import (
    Click,
    build_sparse_mask,
    dilate_k,
    edt,
    edt_sq,
    erode_k,
    iou,
    merge_ternary,
    prune_result_mask,
)
from .rle import decode_mask, encode_mask

__version__ = "0.1.0"

__all__ = [
    "Click",
    "build_sparse_mask",
    "decode_mask",
    "dilate_k",
    "edt",
    "edt_sq",
    "encode_mask",
    "erode_k",
    "iou",
    "merge_ternary",
    "prune_result_mask",
    "__version__",
]
