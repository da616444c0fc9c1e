"""Promptable segmentation model with a scikit-learn estimator interface.

``InteractiveSegmenter`` bundles the frozen feature extractor and the small
trainable decoder behind ``fit`` / ``predict``.  ``fit`` pretrains the decoder
on simulated annotation rollouts: for each optimisation step a training image
is drawn, a short sequence of corrective clicks is generated against the
current prediction, and one dense cross-entropy gradient step is applied from
the resulting prompted forward pass.  The fitted decoder lives in
``decoder_`` and can be swapped out (``load_decoder``) or adapted online.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import model
from .adapt import dense_bce
from .errors import EmptyGroundTruth, NoMisclassifiedPixels
from .masks import Click, check_binary_mask
from .simulate import simulate_click

MIN_ROLLOUT_CLICKS = 1
MAX_ROLLOUT_CLICKS = 8


class InteractiveSegmenter(BaseEstimator):
    """Click-promptable segmenter: frozen features plus a trainable decoder."""

    def __init__(
        self,
        n_feature_kernels: int = model.DEFAULT_KERNELS,
        hidden_width: int = model.DEFAULT_HIDDEN,
        click_sigma: float | None = None,
        feature_seed: int = 0,
        init_seed: int = 1,
        pretrain_steps: int = 500,
        pretrain_lr: float = 1e-2,
        pretrain_seed: int = 3,
    ):
        self.n_feature_kernels = n_feature_kernels
        self.hidden_width = hidden_width
        self.click_sigma = click_sigma
        self.feature_seed = feature_seed
        self.init_seed = init_seed
        self.pretrain_steps = pretrain_steps
        self.pretrain_lr = pretrain_lr
        self.pretrain_seed = pretrain_seed

    # ------------------------------------------------------------------
    # basic plumbing
    # ------------------------------------------------------------------

    @property
    def feature_count(self) -> int:
        return model.N_BASE_FEATURES + self.n_feature_kernels

    def embed(self, image: np.ndarray) -> np.ndarray:
        """Frozen per-pixel features for ``image`` (H, W, 3 floats in [0, 1])."""
        return model.extract_features(image, self.feature_seed, self.n_feature_kernels)

    def _check_fitted(self) -> model.DecoderState:
        state = getattr(self, "decoder_", None)
        if state is None:
            raise NotFittedError(
                "this InteractiveSegmenter has no decoder; call fit() or "
                "load_decoder() first"
            )
        return state

    def load_decoder(self, state: model.DecoderState) -> "InteractiveSegmenter":
        """Install an externally built decoder (e.g. from a checkpoint)."""
        if state.feature_count != self.feature_count:
            raise ValueError(
                f"decoder expects {state.feature_count} feature channels, "
                f"extractor produces {self.feature_count}"
            )
        self.decoder_ = state
        return self

    # ------------------------------------------------------------------
    # inference
    # ------------------------------------------------------------------

    def forward(
        self,
        feats: np.ndarray,
        clicks: Sequence[Click],
        prev_prob: np.ndarray | None,
        state: model.DecoderState | None = None,
    ) -> tuple[np.ndarray, model.ForwardCache]:
        """Prompted forward pass on precomputed features.

        ``state`` overrides the fitted decoder, which lets callers run many
        independently adapted decoders over one shared feature volume.
        """
        if state is None:
            state = self._check_fitted()
        shape = feats.shape[1:]
        prompt = model.encode_prompt(
            clicks, shape, prev_prob=prev_prob, sigma=self.click_sigma
        )
        return model.decoder_forward(state, feats, prompt)

    def predict_proba(
        self,
        image: np.ndarray,
        clicks: Sequence[Click] = (),
        prev_prob: np.ndarray | None = None,
    ) -> np.ndarray:
        prob, _ = self.forward(self.embed(image), clicks, prev_prob)
        return prob

    def predict(
        self,
        image: np.ndarray,
        clicks: Sequence[Click] = (),
        prev_prob: np.ndarray | None = None,
    ) -> np.ndarray:
        """Binary mask prediction; probability ties at 0.5 fall to background."""
        return (self.predict_proba(image, clicks, prev_prob) > 0.5).astype(np.uint8)

    # ------------------------------------------------------------------
    # pretraining
    # ------------------------------------------------------------------

    def fit(self, X, y) -> "InteractiveSegmenter":
        """Pretrain the decoder on images ``X`` with binary masks ``y``."""
        if len(X) == 0 or len(X) != len(y):
            raise ValueError("need matching, non-empty image and mask lists")
        masks = []
        for gt in y:
            gt = np.asarray(gt, dtype=np.uint8)
            check_binary_mask(gt, "mask")
            if not gt.any():
                raise EmptyGroundTruth("training mask has no foreground pixels")
            masks.append(gt)

        feats_all = [self.embed(img) for img in X]
        state = model.init_decoder(self.feature_count, self.hidden_width, self.init_seed)
        rng = np.random.default_rng(self.pretrain_seed)

        for _ in range(self.pretrain_steps):
            i = int(rng.integers(len(X)))
            feats, gt = feats_all[i], masks[i]
            clicks = self._rollout_clicks(state, feats, gt, rng)
            prompt = model.encode_prompt(
                clicks.clicks, gt.shape, prev_prob=clicks.prev, sigma=self.click_sigma
            )
            prob, cache = model.decoder_forward(state, feats, prompt)
            _, grad_prob = dense_bce(gt, prob)
            grad = model.decoder_backward(cache, grad_prob)
            model.adam_step(state, grad, self.pretrain_lr)

        self.decoder_ = state
        return self

    class _Rollout:
        __slots__ = ("clicks", "prev")

        def __init__(self, clicks, prev):
            self.clicks = clicks
            self.prev = prev

    def _rollout_clicks(self, state, feats, gt, rng) -> "_Rollout":
        """Simulate a short correction sequence against the current decoder."""
        n_clicks = int(rng.integers(MIN_ROLLOUT_CLICKS, MAX_ROLLOUT_CLICKS + 1))
        clicks: list[Click] = []
        prev: np.ndarray | None = None
        pred = np.zeros_like(gt)
        for _ in range(n_clicks):
            try:
                clicks.append(simulate_click(pred, gt))
            except NoMisclassifiedPixels:
                break
            prompt = model.encode_prompt(
                clicks, gt.shape, prev_prob=prev, sigma=self.click_sigma
            )
            prob, _ = model.decoder_forward(state, feats, prompt)
            prev = prob
            pred = (prob > 0.5).astype(np.uint8)
        return self._Rollout(clicks, prev)
