"""Promptable surrogate segmentation model.

Three pieces, mirroring the usual promptable-segmenter split:

* a frozen feature extractor: cheap deterministic per-pixel channels
* a prompt encoder: Gaussian click bumps plus the previous probability mask
* a small trainable decoder: one 3x3 conv and a two-layer pointwise MLP with
  a sigmoid head, differentiated exactly by hand so that online adaptation
  steps are cheap and reproducible

Only the decoder holds trainable weights.  Its parameters live in one flat
float64 vector so snapshot / restore / Adam are trivial; ``layout_views``
exposes named views into that vector.

Flat weight layout, in order (``cin = feature_count + 3`` input channels):

    conv_w  (hidden, cin*9)   column index = channel*9 + di*3 + dj
    conv_b  (hidden,)
    w2      (hidden, hidden)
    b2      (hidden,)
    w3      (hidden,)
    b3      (1,)
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage
from scipy.special import expit

from .errors import (
    CheckpointError,
    DimensionMismatch,
    NameCollision,
    NoSnapshot,
    OutOfBounds,
    StaleCache,
    UnknownName,
)
from .masks import Click

# fixed, non-learned channels: R, G, B, row, col, and three 3x3 color means
N_BASE_FEATURES = 8
DEFAULT_KERNELS = 8
DEFAULT_HIDDEN = 16

# Click bumps cover a footprint proportional to the image: sigma 3 at a
# 64-pixel short side, scaled linearly with resolution.
BASE_SIGMA = 3.0
SIGMA_REFERENCE_SIDE = 64


def sigma_for(shape: tuple[int, int]) -> float:
    """Resolution-scaled default click radius for an (H, W) image."""
    return BASE_SIGMA * min(shape[0], shape[1]) / SIGMA_REFERENCE_SIDE


# ------------------------------------------------------------------ features


def extract_features(
    image: np.ndarray, feature_seed: int, n_kernels: int = DEFAULT_KERNELS
) -> np.ndarray:
    """Frozen per-pixel feature stack, shape (8 + n_kernels, H, W).

    Channels: raw RGB, normalized row / column coordinates, 3x3 local means
    of each color, and ``n_kernels`` responses of seeded random 3x3 color
    kernels.  Borders replicate the edge pixel so a flat image yields flat
    responses everywhere.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionMismatch(f"image must be (H, W, 3), got {img.shape}")
    h, w, _ = img.shape
    feats = np.empty((N_BASE_FEATURES + n_kernels, h, w), dtype=np.float64)
    for c in range(3):
        feats[c] = img[:, :, c]
    rows = np.arange(h, dtype=np.float64) / max(h - 1, 1)
    cols = np.arange(w, dtype=np.float64) / max(w - 1, 1)
    feats[3] = rows[:, None]
    feats[4] = cols[None, :]
    for c in range(3):
        feats[5 + c] = ndimage.uniform_filter(img[:, :, c], size=3, mode="nearest")
    if n_kernels:
        rng = np.random.default_rng(feature_seed)
        kernels = rng.standard_normal((n_kernels, 3, 3, 3)) / np.sqrt(27.0)
        padded = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge")
        for k in range(n_kernels):
            acc = np.zeros((h, w), dtype=np.float64)
            for di in range(3):
                for dj in range(3):
                    for c in range(3):
                        acc += kernels[k, di, dj, c] * padded[di : di + h, dj : dj + w, c]
            feats[N_BASE_FEATURES + k] = acc
    return feats


# ------------------------------------------------------------- prompt planes


def encode_prompt(
    clicks: Sequence[Click] | Iterable[Click],
    shape: tuple[int, int],
    prev_prob: np.ndarray | None = None,
    sigma: float | None = None,
) -> np.ndarray:
    """Three prompt planes: positive bumps, negative bumps, previous mask.

    Each click contributes a unit-height Gaussian; bumps of the same polarity
    sum and are clipped to [0, 1].  Coincident duplicate clicks collapse to
    one (a click is a set element, not an event count).  Before the first
    forward pass there is no previous mask, which enters as all zeros.
    ``sigma=None`` scales the click radius with the image (see sigma_for).
    """
    if sigma is None:
        sigma = sigma_for(shape)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    h, w = shape
    planes = np.zeros((3, h, w), dtype=np.float64)
    denom = 2.0 * sigma * sigma
    rows = np.arange(h, dtype=np.float64)
    cols = np.arange(w, dtype=np.float64)
    for click in dict.fromkeys(clicks):
        if not (0 <= click.row < h and 0 <= click.col < w):
            raise OutOfBounds(f"click ({click.row}, {click.col}) outside {h}x{w}")
        bump_r = np.exp(-((rows - click.row) ** 2) / denom)
        bump_c = np.exp(-((cols - click.col) ** 2) / denom)
        planes[0 if click.positive else 1] += np.outer(bump_r, bump_c)
    np.clip(planes[0], 0.0, 1.0, out=planes[0])
    np.clip(planes[1], 0.0, 1.0, out=planes[1])
    if prev_prob is not None:
        prev = np.asarray(prev_prob, dtype=np.float64)
        if prev.shape != (h, w):
            raise DimensionMismatch(f"prev mask {prev.shape} vs prompt {h}x{w}")
        planes[2] = prev
    return planes


# ---------------------------------------------------------------- decoder


def param_count(feature_count: int, hidden_width: int) -> int:
    """Total trainable weights for a given input width.

    With ``cin = feature_count + 3`` prompt-augmented channels:
    ``hidden*cin*9 + hidden`` (conv) + ``hidden^2 + hidden`` (pointwise) +
    ``hidden + 1`` (head).
    """
    cin = feature_count + 3
    h = hidden_width
    return h * cin * 9 + h + h * h + h + h + 1


@dataclass
class DecoderState:
    """Trainable decoder parameters plus optimizer state.

    ``snapshot`` stores a bit-exact copy of (weights, both Adam moments,
    step_count) so in-image adaptation can be rolled back after an image.
    ``version`` increments on every mutation and invalidates forward caches.
    """

    feature_count: int
    hidden_width: int
    weights: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    step_count: int = 0
    snapshot: tuple | None = None
    version: int = 0


def _slices(feature_count: int, hidden_width: int) -> dict[str, tuple[slice, tuple]]:
    cin = feature_count + 3
    h = hidden_width
    layout = [
        ("conv_w", (h, cin * 9)),
        ("conv_b", (h,)),
        ("w2", (h, h)),
        ("b2", (h,)),
        ("w3", (h,)),
        ("b3", (1,)),
    ]
    out = {}
    offset = 0
    for name, shape in layout:
        size = int(np.prod(shape))
        out[name] = (slice(offset, offset + size), shape)
        offset += size
    return out


def layout_views(state: DecoderState) -> SimpleNamespace:
    """Named, writable views into the flat weight vector."""
    views = {}
    for name, (sl, shape) in _slices(state.feature_count, state.hidden_width).items():
        views[name] = state.weights[sl].reshape(shape)
    return SimpleNamespace(**views)


def init_decoder(
    feature_count: int, hidden_width: int = DEFAULT_HIDDEN, seed: int = 0
) -> DecoderState:
    """Fresh decoder: fan-in-scaled uniform hidden layers, zero output head.

    The zero head makes an untrained decoder predict exactly 0.5 everywhere,
    a neutral starting mask.
    """
    n = param_count(feature_count, hidden_width)
    state = DecoderState(
        feature_count=feature_count,
        hidden_width=hidden_width,
        weights=np.zeros(n, dtype=np.float64),
        adam_m=np.zeros(n, dtype=np.float64),
        adam_v=np.zeros(n, dtype=np.float64),
    )
    rng = np.random.default_rng(seed)
    v = layout_views(state)
    cin9 = (feature_count + 3) * 9
    v.conv_w[:] = rng.uniform(-1.0, 1.0, v.conv_w.shape) / np.sqrt(cin9)
    v.w2[:] = rng.uniform(-1.0, 1.0, v.w2.shape) / np.sqrt(hidden_width)
    return state


@dataclass
class ForwardCache:
    """Everything the backward pass needs, pinned to one decoder version."""

    state: DecoderState
    version: int
    shape: tuple[int, int]
    x_col: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    prob_flat: np.ndarray
    w2: np.ndarray = field(repr=False, default=None)
    w3: np.ndarray = field(repr=False, default=None)


def _im2col(x: np.ndarray) -> np.ndarray:
    """(C, H, W) -> (C*9, H*W) patches of the zero-padded input."""
    c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(padded, (3, 3), axis=(1, 2))  # (C, H, W, 3, 3)
    return np.ascontiguousarray(windows.transpose(0, 3, 4, 1, 2)).reshape(c * 9, h * w)


def decoder_forward(
    state: DecoderState, feats: np.ndarray, prompt: np.ndarray
) -> tuple[np.ndarray, ForwardCache]:
    """Probability mask from features and prompt planes.

    logits = w3 . relu(w2 . relu(conv3x3(concat(feats, prompt)))) + biases,
    squashed through a sigmoid.  Returns the (H, W) probabilities and a cache
    for one matching backward pass.
    """
    feats = np.asarray(feats, dtype=np.float64)
    prompt = np.asarray(prompt, dtype=np.float64)
    if feats.ndim != 3 or feats.shape[0] != state.feature_count:
        raise DimensionMismatch(
            f"expected ({state.feature_count}, H, W) features, got {feats.shape}"
        )
    if prompt.shape != (3,) + feats.shape[1:]:
        raise DimensionMismatch(
            f"expected (3, {feats.shape[1]}, {feats.shape[2]}) prompt, got {prompt.shape}"
        )
    h, w = feats.shape[1:]
    v = layout_views(state)
    x_col = _im2col(np.concatenate([feats, prompt], axis=0))
    h1 = v.conv_w @ x_col
    h1 += v.conv_b[:, None]
    np.maximum(h1, 0.0, out=h1)
    h2 = v.w2 @ h1
    h2 += v.b2[:, None]
    np.maximum(h2, 0.0, out=h2)
    logits = v.w3 @ h2
    logits += v.b3[0]
    prob_flat = expit(logits)
    cache = ForwardCache(
        state=state,
        version=state.version,
        shape=(h, w),
        x_col=x_col,
        h1=h1,
        h2=h2,
        prob_flat=prob_flat,
        w2=v.w2,
        w3=v.w3,
    )
    return prob_flat.reshape(h, w), cache


def decoder_backward(cache: ForwardCache, grad_on_prob: np.ndarray) -> np.ndarray:
    """Exact gradient of a scalar loss w.r.t. the flat weight vector.

    ``grad_on_prob`` is dLoss/dProb at every pixel.  The cache must come from
    a forward pass on the decoder's current weights.
    """
    state = cache.state
    if cache.version != state.version:
        raise StaleCache("decoder changed since this forward pass")
    grad_on_prob = np.asarray(grad_on_prob, dtype=np.float64)
    if grad_on_prob.shape != cache.shape:
        raise DimensionMismatch(
            f"grad shape {grad_on_prob.shape} vs forward shape {cache.shape}"
        )
    p = cache.prob_flat
    dlogits = grad_on_prob.ravel() * p * (1.0 - p)
    grad = np.zeros_like(state.weights)
    g = layout_views_of(grad, state)
    g.w3[:] = cache.h2 @ dlogits
    g.b3[0] = dlogits.sum()
    dh2 = np.outer(cache.w3, dlogits)
    dh2 *= cache.h2 > 0.0
    g.w2[:] = dh2 @ cache.h1.T
    g.b2[:] = dh2.sum(axis=1)
    dh1 = cache.w2.T @ dh2
    dh1 *= cache.h1 > 0.0
    g.conv_w[:] = dh1 @ cache.x_col.T
    g.conv_b[:] = dh1.sum(axis=1)
    return grad


def layout_views_of(vec: np.ndarray, state: DecoderState) -> SimpleNamespace:
    """Views with the decoder layout into an arbitrary flat vector."""
    views = {}
    for name, (sl, shape) in _slices(state.feature_count, state.hidden_width).items():
        views[name] = vec[sl].reshape(shape)
    return SimpleNamespace(**views)


# -------------------------------------------------------------------- adam


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def adam_step(state: DecoderState, grad: np.ndarray, lr: float) -> None:
    """One bias-corrected Adam update, in place."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.weights.shape:
        raise ValueError(f"grad shape {grad.shape} vs weights {state.weights.shape}")
    if lr < 0:
        raise ValueError("lr must be >= 0")
    t = state.step_count + 1
    state.adam_m *= ADAM_BETA1
    state.adam_m += (1.0 - ADAM_BETA1) * grad
    state.adam_v *= ADAM_BETA2
    state.adam_v += (1.0 - ADAM_BETA2) * grad * grad
    m_hat = state.adam_m / (1.0 - ADAM_BETA1**t)
    v_hat = state.adam_v / (1.0 - ADAM_BETA2**t)
    state.weights -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    state.step_count = t
    state.version += 1


# ---------------------------------------------------------------- snapshots


def snapshot(state: DecoderState) -> None:
    """Record a bit-exact restore point: weights, moments, step count."""
    state.snapshot = (
        state.weights.copy(),
        state.adam_m.copy(),
        state.adam_v.copy(),
        state.step_count,
    )


def restore(state: DecoderState) -> None:
    """Roll the decoder back to its snapshot; the snapshot itself survives."""
    if state.snapshot is None:
        raise NoSnapshot("no snapshot recorded for this decoder")
    w, m, v, t = state.snapshot
    np.copyto(state.weights, w)
    np.copyto(state.adam_m, m)
    np.copyto(state.adam_v, v)
    state.step_count = t
    state.version += 1


def clone_state(state: DecoderState) -> DecoderState:
    snap = None
    if state.snapshot is not None:
        w, m, v, t = state.snapshot
        snap = (w.copy(), m.copy(), v.copy(), t)
    return DecoderState(
        feature_count=state.feature_count,
        hidden_width=state.hidden_width,
        weights=state.weights.copy(),
        adam_m=state.adam_m.copy(),
        adam_v=state.adam_v.copy(),
        step_count=state.step_count,
        snapshot=snap,
        version=0,
    )


class DecoderRegistry:
    """Named decoder states; clones give classes their own adapted weights."""

    def __init__(self) -> None:
        self._states: dict[str, DecoderState] = {}

    def add(self, name: str, state: DecoderState) -> None:
        if name in self._states:
            raise NameCollision(f"decoder {name!r} already exists")
        self._states[name] = state

    def get(self, name: str) -> DecoderState:
        try:
            return self._states[name]
        except KeyError:
            raise UnknownName(f"no decoder named {name!r}") from None

    def clone(self, src: str, dst: str) -> DecoderState:
        state = clone_state(self.get(src))
        self.add(dst, state)
        return state

    def names(self) -> list[str]:
        return sorted(self._states)

    def __contains__(self, name: str) -> bool:
        return name in self._states


# --------------------------------------------------------------- checkpoint


CHECKPOINT_MAGIC = b"CADK"
CHECKPOINT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIIII")


def save_checkpoint(state: DecoderState) -> bytes:
    """Serialize a decoder: header, float32 weights and moments, step count, CRC."""
    n = state.weights.size
    out = bytearray(
        _CKPT_HEADER.pack(
            CHECKPOINT_MAGIC,
            CHECKPOINT_VERSION,
            state.feature_count,
            state.hidden_width,
            n,
        )
    )
    out += state.weights.astype("<f4").tobytes()
    out += state.adam_m.astype("<f4").tobytes()
    out += state.adam_v.astype("<f4").tobytes()
    out += struct.pack("<Q", state.step_count)
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    return bytes(out)


def load_checkpoint(data: bytes) -> DecoderState:
    if len(data) < _CKPT_HEADER.size + 12:
        raise CheckpointError("checkpoint truncated")
    magic, version, feature_count, hidden_width, n = _CKPT_HEADER.unpack_from(data, 0)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError("not a decoder checkpoint (bad magic)")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if n != param_count(feature_count, hidden_width):
        raise CheckpointError("weight count does not match the declared shape")
    expected = _CKPT_HEADER.size + 3 * 4 * n + 8 + 4
    if len(data) != expected:
        raise CheckpointError(
            f"checkpoint is {len(data)} bytes, expected {expected}"
        )
    stored_crc = struct.unpack_from("<I", data, expected - 4)[0]
    actual_crc = zlib.crc32(data[: expected - 4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise CheckpointError("checksum mismatch: checkpoint is corrupted")
    offset = _CKPT_HEADER.size

    def take(count: int) -> np.ndarray:
        nonlocal offset
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        return arr.astype(np.float64)

    weights = take(n)
    adam_m = take(n)
    adam_v = take(n)
    step_count = struct.unpack_from("<Q", data, offset)[0]
    return DecoderState(
        feature_count=feature_count,
        hidden_width=hidden_width,
        weights=weights,
        adam_m=adam_m,
        adam_v=adam_v,
        step_count=int(step_count),
    )


def save_checkpoint_file(state: DecoderState, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save_checkpoint(state))


def load_checkpoint_file(path) -> DecoderState:
    with open(path, "rb") as fh:
        return load_checkpoint(fh.read())
