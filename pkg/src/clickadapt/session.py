"""Simulated annotation sessions, benchmark runner, and NoC/FR metrics.

A session drives one image: a simulated user clicks the most interior
misclassified pixel, the model re-predicts from the full click history plus
its previous probability map, and the loop stops once the prediction reaches
the target IoU or the click budget runs out.  The benchmark runner replays
this over a dataset in manifest order, maintaining one adapted decoder per
class tag (a single shared decoder when tags are absent), and aggregates the
mean number of clicks (failures count as the full budget) and the failure
rate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from . import model
from .adapt import AdaptationConfig, Adapter
from .errors import (
    DimensionMismatch,
    EmptyDataset,
    EmptyGroundTruth,
    MixedBudgets,
)
from .masks import Click, check_binary_mask, iou
from .simulate import simulate_click


class StepTrace(NamedTuple):
    """One click step, as seen by ``step_callback`` observers."""

    index: int
    click: Click
    pred_before: np.ndarray
    prob: np.ndarray
    iou: float
    loss: float | None
    gt: np.ndarray
    image_id: str


@dataclass(frozen=True)
class SessionRecord:
    """Outcome of one simulated annotation session."""

    image_id: str
    clicks_used: int
    succeeded: bool
    final_iou: float
    click_trace: tuple[Click, ...]
    result_mask: np.ndarray
    class_tag: str | None = None


def run_session(
    segmenter,
    adapter: Adapter,
    decoder: model.DecoderState,
    image: np.ndarray,
    gt: np.ndarray,
    *,
    budget: int,
    threshold: float,
    image_id: str = "",
    feats: np.ndarray | None = None,
    step_callback: Callable[[StepTrace], None] | None = None,
    result_mask_transform: Callable[[np.ndarray], np.ndarray] | None = None,
) -> SessionRecord:
    """Run one simulated session to convergence or budget exhaustion.

    The image is embedded once; every click triggers exactly one forward
    pass (prompted with all clicks so far and the previous probability map)
    plus whatever per-click adaptation the adapter is configured for.  The
    final accepted mask is handed to the adapter for its post-image update;
    ``result_mask_transform`` optionally perturbs that copy (and only that
    copy) to emulate imperfect accepted annotations.
    """
    if budget < 1:
        raise ValueError(f"click budget must be >= 1, got {budget}")
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    gt = np.asarray(gt, dtype=np.uint8)
    check_binary_mask(gt, "gt")
    if image.shape[:2] != gt.shape:
        raise DimensionMismatch(
            f"image is {image.shape[:2]}, ground truth is {gt.shape}"
        )
    if feats is None:
        feats = segmenter.embed(image)

    ctx = adapter.start_session(decoder, feats)
    pred = np.zeros_like(gt)
    succeeded = False
    final_iou = 0.0
    clicks_used = 0

    for t in range(budget):
        click = simulate_click(pred, gt)
        ctx.clicks.append(click)
        prob, _ = segmenter.forward(feats, ctx.clicks, ctx.latest_prob, state=ctx.decoder)
        pred_before = pred
        pred = (prob > 0.5).astype(np.uint8)
        ctx.latest_prob = prob
        loss = adapter.on_click(ctx)
        final_iou = iou(pred, gt)
        clicks_used = t + 1
        if step_callback is not None:
            step_callback(
                StepTrace(t, click, pred_before, prob, final_iou, loss, gt, image_id)
            )
        if final_iou >= threshold:
            succeeded = True
            break

    ctx.result_mask = pred if result_mask_transform is None else result_mask_transform(pred)
    adapter.on_image_done(ctx)

    return SessionRecord(
        image_id=image_id,
        clicks_used=clicks_used,
        succeeded=succeeded,
        final_iou=final_iou,
        click_trace=tuple(ctx.clicks),
        result_mask=pred,
    )


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def noc_fr(
    records: Sequence[SessionRecord], budget: int, threshold: float
) -> tuple[float, float]:
    """Mean number of clicks (failures count as ``budget``) and failure rate.

    Every record must come from a run with this same budget and threshold;
    inconsistencies raise :class:`MixedBudgets`.
    """
    if not records:
        raise ValueError("cannot aggregate zero session records")
    for r in records:
        if r.clicks_used > budget:
            raise MixedBudgets(
                f"record {r.image_id!r} used {r.clicks_used} clicks, budget is {budget}"
            )
        if not r.succeeded and r.clicks_used != budget:
            raise MixedBudgets(
                f"failed record {r.image_id!r} used {r.clicks_used} != budget {budget}"
            )
        if r.succeeded and r.final_iou < threshold:
            raise MixedBudgets(
                f"record {r.image_id!r} succeeded below threshold {threshold}"
            )
    noc = sum(r.clicks_used if r.succeeded else budget for r in records) / len(records)
    fr = 100.0 * sum(not r.succeeded for r in records) / len(records)
    return noc, fr


# ---------------------------------------------------------------------------
# benchmark runner
# ---------------------------------------------------------------------------


@dataclass
class BenchmarkReport:
    """Aggregated benchmark outcome, exportable as deterministic text."""

    config: AdaptationConfig
    budget: int
    threshold: float
    records: list[SessionRecord] = field(default_factory=list)
    noc: float = 0.0
    fr: float = 0.0
    adapt_steps: int = 0
    seeds: dict[str, int] = field(default_factory=dict)
    decoder_names: tuple[str, ...] = ()
    wallclock_s: float = 0.0

    def to_text(self) -> str:
        """Text export: one line per image plus an aggregate footer.

        Deterministic for a fixed (config, seeds, image order) except for
        the trailing wall-clock line.
        """
        c = self.config
        lines = [
            f"benchmark label={c.label()}",
            f"config ca={c.ca} rm={c.rm} cm={c.cm} k={c.k} lr={c.lr!r} seed={c.seed}",
            f"budget={self.budget} threshold={self.threshold!r}",
        ]
        for r in self.records:
            tag = r.class_tag if r.class_tag is not None else "-"
            lines.append(
                f"record {r.image_id} clicks={r.clicks_used} "
                f"succeeded={int(r.succeeded)} iou={r.final_iou:.6f} class={tag}"
            )
        lines.append(
            f"images={len(self.records)} noc={self.noc:.6f} fr={self.fr:.4f} "
            f"adapt_steps={self.adapt_steps}"
        )
        if self.seeds:
            lines.append(
                "seeds " + " ".join(f"{k}={v}" for k, v in sorted(self.seeds.items()))
            )
        lines.append("order " + " ".join(r.image_id for r in self.records))
        lines.append(f"wallclock_s={self.wallclock_s:.3f}")
        return "\n".join(lines) + "\n"


def run_benchmark(
    segmenter,
    items: Iterable,
    config: AdaptationConfig,
    *,
    budget: int,
    threshold: float,
    seeds: dict[str, int] | None = None,
    step_callback: Callable[[StepTrace], None] | None = None,
    result_mask_transform: Callable[[np.ndarray], np.ndarray] | None = None,
) -> BenchmarkReport:
    """Benchmark the segmenter over a dataset with the given adaptation config.

    Items are processed in the given order (the adaptation order for
    continual modes).  Each distinct class tag gets its own decoder, cloned
    on first use from the segmenter's pristine fitted weights; untagged items
    share a single ``default`` decoder.  The segmenter's own decoder is never
    mutated.
    """
    items = list(items)
    if not items:
        raise EmptyDataset("benchmark dataset is empty")
    for it in items:
        if not np.asarray(it.mask).any():
            raise EmptyGroundTruth(f"image {it.image_id!r} has an empty ground-truth mask")

    template = model.clone_state(segmenter.decoder_)
    registry = model.DecoderRegistry()
    adapter = Adapter(config, sigma=segmenter.click_sigma)
    started = time.perf_counter()

    records = []
    for it in items:
        tag = getattr(it, "class_tag", None)
        name = tag if tag is not None else "default"
        if name not in registry:
            registry.add(name, model.clone_state(template))
        rec = run_session(
            segmenter,
            adapter,
            registry.get(name),
            it.image,
            it.mask,
            budget=budget,
            threshold=threshold,
            image_id=it.image_id,
            step_callback=step_callback,
            result_mask_transform=result_mask_transform,
        )
        records.append(
            SessionRecord(
                image_id=rec.image_id,
                clicks_used=rec.clicks_used,
                succeeded=rec.succeeded,
                final_iou=rec.final_iou,
                click_trace=rec.click_trace,
                result_mask=rec.result_mask,
                class_tag=tag,
            )
        )

    noc, fr = noc_fr(records, budget, threshold)
    if seeds is None:
        seeds = {"config": config.seed}
        for attr, key in (("feature_seed", "feature"), ("init_seed", "init")):
            value = getattr(segmenter, attr, None)
            if value is not None:
                seeds[key] = value
    return BenchmarkReport(
        config=config,
        budget=budget,
        threshold=threshold,
        records=records,
        noc=noc,
        fr=fr,
        adapt_steps=adapter.steps_performed,
        seeds=seeds,
        decoder_names=tuple(registry.names()),
        wallclock_s=time.perf_counter() - started,
    )
