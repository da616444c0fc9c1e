"""Run-length wire format for binary masks.

Layout, all little-endian uint32:

    [H] [W] [run_0] [run_1] ... [run_n]

Runs are row-major pixel counts that alternate between background and
foreground, always starting with the background run.  A mask whose first
pixel is foreground therefore begins with a zero-length background run; every
other run must be positive.  The runs must sum to exactly H*W.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import MalformedEncoding
from .masks import check_binary_mask

_HEADER = struct.Struct("<II")


def encode_mask(mask: np.ndarray) -> bytes:
    mask = check_binary_mask(mask)
    h, w = mask.shape
    flat = mask.ravel()
    # boundaries of value changes -> run lengths
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds)
    if flat[0] == 1:
        runs = np.concatenate(([0], runs))
    out = bytearray(_HEADER.pack(h, w))
    out += runs.astype("<u4").tobytes()
    return bytes(out)


def decode_mask(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise MalformedEncoding("payload shorter than header")
    h, w = _HEADER.unpack_from(data, 0)
    if h == 0 or w == 0:
        raise MalformedEncoding("zero-sized mask dimensions")
    body = data[_HEADER.size :]
    if len(body) % 4 != 0:
        raise MalformedEncoding("run section is not a whole number of uint32s")
    if len(body) == 0:
        raise MalformedEncoding("missing run section")
    runs = np.frombuffer(body, dtype="<u4").astype(np.int64)
    if (runs[1:] == 0).any():
        raise MalformedEncoding("zero-length run after the first")
    total = int(runs.sum())
    if total != h * w:
        raise MalformedEncoding(f"runs sum to {total}, expected {h * w}")
    flat = np.zeros(h * w, dtype=np.uint8)
    pos = 0
    value = 0
    for r in runs:
        if value == 1 and r:
            flat[pos : pos + r] = 1
        pos += int(r)
        value ^= 1
    return flat.reshape(h, w)
