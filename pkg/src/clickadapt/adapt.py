"""Online adaptation: losses, configuration, and the per-session adapter.

The adapter implements three independent switches:

* ``ca`` (click adaptation): one optimization step on the sparse click mask
  after every click.  ``reset`` rolls the decoder back when the image ends;
  ``continual`` lets in-image steps accumulate across images.
* ``rm`` (result mask): after an accepted image, the final mask becomes a
  pseudo-label, either erosion-pruned (``eroded``) or taken as-is
  (``untreated``).
* ``cm`` (click mask): after an image, one extra step on all of its clicks.

When both post-image sources are active they merge into one label and a
single step runs; on conflicting pixels the click label wins, since clicks
are ground truth while the result mask is only a model output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionMismatch, EmptyLabel
from .masks import (
    Click,
    build_sparse_mask,
    check_ternary_mask,
    labeled_counts,
    merge_ternary,
    prune_result_mask,
)
from .model import (
    DecoderState,
    adam_step,
    decoder_backward,
    decoder_forward,
    encode_prompt,
    restore,
    snapshot,
)

_CLIP = 1e-12  # guards log/division against float saturation of the sigmoid


# -------------------------------------------------------------------- losses


def sparse_bce(label: np.ndarray, prob: np.ndarray) -> tuple[float, np.ndarray]:
    """Cross-entropy over labeled pixels only, each class normalized alone.

    ``label`` is ternary: the loss is the mean negative log-likelihood of the
    label-1 pixels plus the mean over the label-0 pixels; a class with no
    pixels contributes nothing.  Unlabeled (-1) pixels get an exactly-zero
    gradient.  Returns (loss, dLoss/dProb).
    """
    label = check_ternary_mask(label)
    prob = np.asarray(prob, dtype=np.float64)
    if label.shape != prob.shape:
        raise DimensionMismatch(f"label {label.shape} vs prob {prob.shape}")
    pos = label == 1
    neg = label == 0
    n_pos = int(pos.sum())
    n_neg = int(neg.sum())
    if n_pos == 0 and n_neg == 0:
        raise EmptyLabel("label mask has no labeled pixel")
    p = np.clip(prob, _CLIP, 1.0 - _CLIP)
    loss = 0.0
    grad = np.zeros_like(prob)
    if n_pos:
        loss -= float(np.log(p[pos]).sum()) / n_pos
        grad[pos] = -1.0 / (p[pos] * n_pos)
    if n_neg:
        loss -= float(np.log1p(-p[neg]).sum()) / n_neg
        grad[neg] = 1.0 / ((1.0 - p[neg]) * n_neg)
    return loss, grad


def dense_bce(target: np.ndarray, prob: np.ndarray) -> tuple[float, np.ndarray]:
    """Plain mean BCE over every pixel of a fully labeled binary target."""
    target = np.asarray(target, dtype=np.float64)
    prob = np.asarray(prob, dtype=np.float64)
    if target.shape != prob.shape:
        raise DimensionMismatch(f"target {target.shape} vs prob {prob.shape}")
    n = target.size
    p = np.clip(prob, _CLIP, 1.0 - _CLIP)
    loss = -float((target * np.log(p) + (1.0 - target) * np.log1p(-p)).sum()) / n
    grad = (-target / p + (1.0 - target) / (1.0 - p)) / n
    return loss, grad


# -------------------------------------------------------------------- config


_CA_VALUES = ("none", "reset", "continual")
_RM_VALUES = ("none", "eroded", "untreated")
_CM_VALUES = ("off", "on")


@dataclass(frozen=True)
class AdaptationConfig:
    """Which adaptation signals are active, plus their shared knobs.

    ``seed`` doubles as the feature-extractor seed so that a config file is
    enough to rebuild the exact model a checkpoint was trained with.
    """

    ca: str = "none"
    rm: str = "none"
    cm: str = "off"
    k: int = 5
    lr: float = 1e-2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.ca not in _CA_VALUES:
            raise ConfigError(f"ca must be one of {_CA_VALUES}, got {self.ca!r}")
        if self.rm not in _RM_VALUES:
            raise ConfigError(f"rm must be one of {_RM_VALUES}, got {self.rm!r}")
        if self.cm not in _CM_VALUES:
            raise ConfigError(f"cm must be one of {_CM_VALUES}, got {self.cm!r}")
        if not isinstance(self.k, int) or self.k < 0:
            raise ConfigError(f"k must be a non-negative integer, got {self.k!r}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr!r}")
        if not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")

    def label(self) -> str:
        if (self.ca, self.rm, self.cm) == ("none", "none", "off"):
            return "baseline"
        if (self.ca, self.rm, self.cm) == ("reset", "eroded", "on"):
            return "full-method"
        return f"ca={self.ca},rm={self.rm},cm={self.cm}"


def parse_config(text: str) -> AdaptationConfig:
    """Parse the flat ``key = value`` config format (comments with '#')."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in ("ca", "rm", "cm", "k", "lr", "seed"):
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    kwargs: dict = {}
    try:
        if "ca" in values:
            kwargs["ca"] = values["ca"]
        if "rm" in values:
            kwargs["rm"] = values["rm"]
        if "cm" in values:
            kwargs["cm"] = values["cm"]
        if "k" in values:
            kwargs["k"] = int(values["k"])
        if "lr" in values:
            kwargs["lr"] = float(values["lr"])
        if "seed" in values:
            kwargs["seed"] = int(values["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return AdaptationConfig(**kwargs)


def format_config(cfg: AdaptationConfig) -> str:
    return (
        f"ca = {cfg.ca}\nrm = {cfg.rm}\ncm = {cfg.cm}\n"
        f"k = {cfg.k}\nlr = {cfg.lr:g}\nseed = {cfg.seed}\n"
    )


def load_config_file(path) -> AdaptationConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


# ------------------------------------------------------------------ context


@dataclass
class AdaptationContext:
    """Mutable per-image state shared between the session loop and adapter."""

    decoder: DecoderState
    feats: np.ndarray
    clicks: list[Click] = field(default_factory=list)
    latest_prob: np.ndarray | None = None
    result_mask: np.ndarray | None = None


@dataclass
class AdaptationSummary:
    """What happened at image end: steps taken and label pixel counts."""

    steps: int = 0
    restored: bool = False
    label_positive: int = 0
    label_negative: int = 0
    label_unknown: int = 0
    loss: float | None = None


def adapt_step(
    ctx: AdaptationContext,
    label: np.ndarray,
    lr: float,
    sigma: float | None = None,
) -> float:
    """One optimization step on a ternary label; returns the pre-step loss.

    The forward pass re-encodes the current prompt (all clicks so far plus
    the latest probability mask), so the decoder is trained on exactly the
    kind of input it will see next.
    """
    shape = ctx.feats.shape[1:]
    prompt = encode_prompt(ctx.clicks, shape, prev_prob=ctx.latest_prob, sigma=sigma)
    prob, cache = decoder_forward(ctx.decoder, ctx.feats, prompt)
    loss, grad_prob = sparse_bce(label, prob)
    grad = decoder_backward(cache, grad_prob)
    adam_step(ctx.decoder, grad, lr)
    return loss


# ------------------------------------------------------------------- adapter


class Adapter:
    """Applies the configured adaptation signals around one session loop.

    ``steps_performed`` counts every optimization step this adapter ever ran;
    unlike the decoder's own ``step_count`` it is not rolled back by resets,
    so it supports end-of-run accounting.
    """

    def __init__(self, config: AdaptationConfig, sigma: float | None = None):
        self.config = config
        self.sigma = sigma
        self.steps_performed = 0

    # -- lifecycle hooks ----------------------------------------------------

    def start_session(self, decoder: DecoderState, feats: np.ndarray) -> AdaptationContext:
        if self.config.ca == "reset":
            snapshot(decoder)
        return AdaptationContext(decoder=decoder, feats=feats)

    def on_click(self, ctx: AdaptationContext) -> float | None:
        """After each click: one step on the sparse click mask, if enabled."""
        if self.config.ca == "none":
            return None
        shape = ctx.feats.shape[1:]
        label = build_sparse_mask(ctx.clicks, shape)
        return self._step(ctx, label)

    def on_image_done(self, ctx: AdaptationContext) -> AdaptationSummary:
        """Accepted-image epilogue.

        Order matters: a reset first rolls back the in-image overfitting,
        then at most one step runs on the post-image label, then a fresh
        snapshot marks the state the next image starts from.
        """
        restored = self._maybe_restore(ctx)
        label = self._post_image_label(ctx)
        summary = AdaptationSummary(restored=restored)
        if label is not None:
            pos, neg, unk = labeled_counts(label)
            summary.label_positive = pos
            summary.label_negative = neg
            summary.label_unknown = unk
            if pos or neg:
                summary.loss = self._step(ctx, label)
                summary.steps = 1
        if self.config.ca == "reset":
            snapshot(ctx.decoder)
        return summary

    def finish_rejected(self, ctx: AdaptationContext) -> AdaptationSummary:
        """Rejected-image epilogue: no result mask is trusted, only the reset runs."""
        restored = self._maybe_restore(ctx)
        if self.config.ca == "reset":
            snapshot(ctx.decoder)
        return AdaptationSummary(restored=restored)

    # -- internals ----------------------------------------------------------

    def _maybe_restore(self, ctx: AdaptationContext) -> bool:
        if self.config.ca == "reset":
            restore(ctx.decoder)
            return True
        return False

    def _post_image_label(self, ctx: AdaptationContext) -> np.ndarray | None:
        shape = ctx.feats.shape[1:]
        click_label = None
        if self.config.cm == "on":
            click_label = build_sparse_mask(ctx.clicks, shape)
        rm_label = None
        if self.config.rm != "none" and ctx.result_mask is not None:
            if self.config.rm == "eroded":
                rm_label = prune_result_mask(ctx.result_mask, self.config.k)
            else:
                rm_label = ctx.result_mask.astype(np.int8)
        if click_label is None and rm_label is None:
            return None
        if rm_label is None:
            return click_label
        if click_label is None:
            return rm_label
        return merge_ternary(click_label, rm_label)

    def _step(self, ctx: AdaptationContext, label: np.ndarray) -> float:
        loss = adapt_step(ctx, label, self.config.lr, sigma=self.sigma)
        self.steps_performed += 1
        return loss
