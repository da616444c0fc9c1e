"""HTTP annotation service: live interactive segmentation with online adaptation.

A human annotator replaces the simulated user: each posted click re-runs the
prompted forward pass and applies whatever per-click adaptation the session's
configuration enables; finishing a session runs the post-image pseudo-label
update (accept) or just the weight reset (reject).  Sessions are keyed by id,
mutate one at a time, and serialize decoder-weight access across sessions
bound to the same decoder name.

Caveats worth knowing:

* Undo removes clicks and recomputes the mask under the *current* weights —
  gradient steps are never reversed (reset-at-finish bounds the drift).
* Two concurrent reset-mode sessions bound to the same decoder share that
  decoder's single snapshot slot; the later session's snapshot wins.  Clone
  the decoder per annotator if that matters.
* Idle sessions expire lazily after ``idle_timeout_s`` via the reject path.
"""

from __future__ import annotations

import base64
import binascii
import io
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field
from PIL import Image

from . import model
from .adapt import AdaptationConfig, AdaptationSummary, Adapter
from .errors import (
    ClickAdaptError,
    ConfigError,
    ConflictingClicks,
    DecodeError,
    DimensionMismatch,
    NameCollision,
    NothingToUndo,
    OutOfBounds,
    SessionFinished,
    UnknownName,
    UnknownSession,
)
from .estimator import InteractiveSegmenter
from .masks import Click
from .rle import encode_mask

DEFAULT_IDLE_TIMEOUT_S = 1800.0

_CONFIG_KEYS = ("ca", "rm", "cm", "k", "lr", "seed")


def config_from_mapping(mapping: dict) -> AdaptationConfig:
    """Build a validated AdaptationConfig from a JSON-style mapping."""
    unknown = set(mapping) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(map(str, unknown)))}")
    kwargs = {}
    try:
        for key in ("ca", "rm", "cm"):
            if key in mapping:
                kwargs[key] = str(mapping[key])
        for key in ("k", "seed"):
            if key in mapping:
                kwargs[key] = int(mapping[key])
        if "lr" in mapping:
            kwargs["lr"] = float(mapping["lr"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config value: {exc}") from exc
    return AdaptationConfig(**kwargs)


@dataclass
class LiveSession:
    """One annotator's in-progress image."""

    session_id: str
    decoder_name: str
    config: AdaptationConfig
    adapter: Adapter
    ctx: object  # AdaptationContext
    prob_stack: list[np.ndarray] = field(default_factory=list)
    status: str = "active"
    last_active: float = field(default_factory=time.monotonic)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def touch(self) -> None:
        self.last_active = time.monotonic()


class AnnotationService:
    """All server state: model, decoder registry, sessions, metrics."""

    def __init__(
        self,
        segmenter: InteractiveSegmenter,
        default_config: AdaptationConfig,
        resolution: tuple[int, int],
        idle_timeout_s: float = DEFAULT_IDLE_TIMEOUT_S,
        checkpoint_blob: bytes | None = None,
        static_dir: str | None = None,
    ):
        self.segmenter = segmenter
        self.default_config = default_config
        self.resolution = tuple(resolution)
        self.idle_timeout_s = idle_timeout_s
        self.static_dir = static_dir

        # Startup weights, for POST /decoders/{name}/reset.  The live decoder
        # is seeded from this same blob so a reset is always bit-exact and the
        # server behaves identically to one restarted from its checkpoint.
        self.checkpoint_blob = (
            checkpoint_blob
            if checkpoint_blob is not None
            else model.save_checkpoint(segmenter.decoder_)
        )
        self.registry = model.DecoderRegistry()
        self.registry.add("default", model.load_checkpoint(self.checkpoint_blob))

        self.sessions: dict[str, LiveSession] = {}
        self._registry_lock = threading.Lock()
        self._decoder_locks: dict[str, threading.Lock] = {"default": threading.Lock()}
        self._metrics_lock = threading.Lock()
        self._metrics = {
            "sessions_created": 0,
            "sessions_finished": 0,
            "sessions_accepted": 0,
            "sessions_expired": 0,
            "clicks_total": 0,
            "undo_total": 0,
            "adapt_steps_total": 0,
        }
        self._finished_clicks = 0

    @classmethod
    def from_checkpoint(
        cls,
        path,
        config: AdaptationConfig,
        resolution: tuple[int, int],
        idle_timeout_s: float = DEFAULT_IDLE_TIMEOUT_S,
        static_dir: str | None = None,
    ) -> "AnnotationService":
        """Rebuild the exact serving model from a checkpoint plus a config.

        The config's seed doubles as the frozen-feature seed, so the pair
        (checkpoint, config) pins the model bit-for-bit.
        """
        blob = Path(path).read_bytes()
        state = model.load_checkpoint(blob)
        est = InteractiveSegmenter(
            n_feature_kernels=state.feature_count - model.N_BASE_FEATURES,
            hidden_width=state.hidden_width,
            feature_seed=config.seed,
        )
        est.load_decoder(state)
        return cls(
            segmenter=est,
            default_config=config,
            resolution=resolution,
            idle_timeout_s=idle_timeout_s,
            checkpoint_blob=blob,
            static_dir=static_dir,
        )

    # ------------------------------------------------------------- plumbing

    def _decoder_lock(self, name: str) -> threading.Lock:
        with self._registry_lock:
            if name not in self._decoder_locks:
                self._decoder_locks[name] = threading.Lock()
            return self._decoder_locks[name]

    def _count(self, key: str, by: int = 1) -> None:
        with self._metrics_lock:
            self._metrics[key] += by

    def _session(self, session_id: str) -> LiveSession:
        sess = self.sessions.get(session_id)
        if sess is None:
            raise UnknownSession(f"no session {session_id!r}")
        self._expire_if_idle(sess)
        return sess

    def _expire_if_idle(self, sess: LiveSession) -> None:
        if sess.status != "active":
            return
        if time.monotonic() - sess.last_active <= self.idle_timeout_s:
            return
        with sess.lock:
            if sess.status != "active":
                return
            with self._decoder_lock(sess.decoder_name):
                sess.adapter.finish_rejected(sess.ctx)
            sess.status = "finished"
        self._count("sessions_expired")
        self._count("sessions_finished")
        with self._metrics_lock:
            self._finished_clicks += len(sess.ctx.clicks)

    @staticmethod
    def _require_active(sess: LiveSession) -> None:
        if sess.status != "active":
            raise SessionFinished(f"session {sess.session_id!r} is finished")

    def _current_mask(self, sess: LiveSession) -> np.ndarray:
        if sess.prob_stack:
            return (sess.prob_stack[-1] > 0.5).astype(np.uint8)
        return np.zeros(self.resolution, dtype=np.uint8)

    @staticmethod
    def _mask_payload(mask: np.ndarray) -> str:
        return base64.b64encode(encode_mask(mask)).decode("ascii")

    def _decode_image(self, png_b64: str) -> np.ndarray:
        try:
            raw = base64.b64decode(png_b64, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise DecodeError(f"image payload is not valid base64: {exc}") from exc
        try:
            img = Image.open(io.BytesIO(raw))
            img.load()
        except Exception as exc:
            raise DecodeError(f"image payload is not a decodable raster: {exc}") from exc
        h, w = self.resolution
        img = img.convert("RGB")
        if img.size != (w, h):
            img = img.resize((w, h), Image.BILINEAR)
        return np.asarray(img, dtype=np.float64) / 255.0

    # ------------------------------------------------------------- sessions

    def create_session(
        self, png_b64: str, decoder: str = "default", config: dict | None = None
    ) -> dict:
        image = self._decode_image(png_b64)
        cfg = self.default_config if config is None else config_from_mapping(config)
        if decoder not in self.registry:
            raise UnknownName(f"no decoder named {decoder!r}")
        feats = self.segmenter.embed(image)
        adapter = Adapter(cfg, sigma=self.segmenter.click_sigma)
        with self._decoder_lock(decoder):
            ctx = adapter.start_session(self.registry.get(decoder), feats)
        sess = LiveSession(
            session_id=uuid.uuid4().hex[:12],
            decoder_name=decoder,
            config=cfg,
            adapter=adapter,
            ctx=ctx,
        )
        self.sessions[sess.session_id] = sess
        self._count("sessions_created")
        h, w = self.resolution
        return {
            "session_id": sess.session_id,
            "height": h,
            "width": w,
            "clicks": 0,
            "mask_rle": self._mask_payload(np.zeros(self.resolution, dtype=np.uint8)),
        }

    def click(self, session_id: str, row: int, col: int, positive: bool) -> dict:
        sess = self._session(session_id)
        with sess.lock:
            self._require_active(sess)
            h, w = self.resolution
            if not (0 <= row < h and 0 <= col < w):
                raise OutOfBounds(f"click ({row}, {col}) outside {h}x{w}")
            for existing in sess.ctx.clicks:
                if (existing.row, existing.col) == (row, col) and existing.positive != positive:
                    raise ConflictingClicks(
                        f"pixel ({row}, {col}) already carries the opposite label"
                    )
            click = Click(row, col, positive)
            with self._decoder_lock(sess.decoder_name):
                sess.ctx.clicks.append(click)
                prob, _ = self.segmenter.forward(
                    sess.ctx.feats, sess.ctx.clicks, sess.ctx.latest_prob,
                    state=sess.ctx.decoder,
                )
                sess.prob_stack.append(prob)
                sess.ctx.latest_prob = prob
                loss = sess.adapter.on_click(sess.ctx)
            sess.touch()
            mask = self._current_mask(sess)
            clicks = len(sess.ctx.clicks)
        self._count("clicks_total")
        if loss is not None:
            self._count("adapt_steps_total")
        return {
            "mask_rle": self._mask_payload(mask),
            "clicks": clicks,
            "loss": loss,
        }

    def undo(self, session_id: str) -> dict:
        sess = self._session(session_id)
        with sess.lock:
            self._require_active(sess)
            if not sess.ctx.clicks:
                raise NothingToUndo(f"session {session_id!r} has no clicks")
            sess.ctx.clicks.pop()
            sess.prob_stack.pop()
            with self._decoder_lock(sess.decoder_name):
                if sess.ctx.clicks:
                    prev = sess.prob_stack[-2] if len(sess.prob_stack) >= 2 else None
                    prob, _ = self.segmenter.forward(
                        sess.ctx.feats, sess.ctx.clicks, prev, state=sess.ctx.decoder
                    )
                    sess.prob_stack[-1] = prob
                    sess.ctx.latest_prob = prob
                    mask = (prob > 0.5).astype(np.uint8)
                else:
                    # Zero clicks again: the canonical state matches a fresh
                    # session (no previous mask), but the response shows what
                    # the decoder says to an empty prompt.
                    sess.ctx.latest_prob = None
                    prob, _ = self.segmenter.forward(
                        sess.ctx.feats, [], None, state=sess.ctx.decoder
                    )
                    mask = (prob > 0.5).astype(np.uint8)
            sess.touch()
            clicks = len(sess.ctx.clicks)
        self._count("undo_total")
        return {"mask_rle": self._mask_payload(mask), "clicks": clicks}

    def finish(self, session_id: str, accept: bool) -> dict:
        sess = self._session(session_id)
        with sess.lock:
            self._require_active(sess)
            with self._decoder_lock(sess.decoder_name):
                if accept:
                    sess.ctx.result_mask = self._current_mask(sess)
                    summary: AdaptationSummary = sess.adapter.on_image_done(sess.ctx)
                else:
                    summary = sess.adapter.finish_rejected(sess.ctx)
            sess.status = "finished"
            clicks = len(sess.ctx.clicks)
        self._count("sessions_finished")
        if accept:
            self._count("sessions_accepted")
        if summary.steps:
            self._count("adapt_steps_total", summary.steps)
        with self._metrics_lock:
            self._finished_clicks += clicks
        return {
            "steps": summary.steps,
            "restored": summary.restored,
            "label_positive": summary.label_positive,
            "label_negative": summary.label_negative,
            "label_unknown": summary.label_unknown,
            "loss": summary.loss,
            "accepted": accept,
            "clicks": clicks,
            "status": sess.status,
        }

    def mask(self, session_id: str) -> dict:
        sess = self._session(session_id)
        with sess.lock:
            h, w = self.resolution
            return {
                "mask_rle": self._mask_payload(self._current_mask(sess)),
                "clicks": len(sess.ctx.clicks),
                "height": h,
                "width": w,
                "status": sess.status,
            }

    # ------------------------------------------------------------- decoders

    def list_decoders(self) -> dict:
        return {
            "decoders": [
                {"name": name, "step_count": self.registry.get(name).step_count}
                for name in self.registry.names()
            ]
        }

    def clone_decoder(self, name: str, to: str) -> dict:
        with self._registry_lock:
            self.registry.clone(name, to)
            self._decoder_locks.setdefault(to, threading.Lock())
        return self.list_decoders()

    def reset_decoder(self, name: str) -> dict:
        if name not in self.registry:
            raise UnknownName(f"no decoder named {name!r}")
        fresh = model.load_checkpoint(self.checkpoint_blob)
        state = self.registry.get(name)
        with self._decoder_lock(name):
            if (state.feature_count, state.hidden_width) != (
                fresh.feature_count,
                fresh.hidden_width,
            ):
                raise DimensionMismatch(
                    "checkpoint shape does not match the live decoder"
                )
            state.weights[:] = fresh.weights
            state.adam_m[:] = fresh.adam_m
            state.adam_v[:] = fresh.adam_v
            state.step_count = fresh.step_count
            state.snapshot = None
            state.version += 1
        return {"name": name, "step_count": state.step_count}

    # -------------------------------------------------------------- metrics

    def metrics(self) -> dict:
        with self._metrics_lock:
            out = dict(self._metrics)
            finished = out["sessions_finished"]
            out["mean_clicks_per_finished"] = (
                self._finished_clicks / finished if finished else 0.0
            )
        return out


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


class CreateSessionRequest(BaseModel):
    image_png_base64: str
    decoder: str = "default"
    config: dict | None = None


class ClickRequest(BaseModel):
    row: int
    col: int
    label: Literal["positive", "negative"]


class FinishRequest(BaseModel):
    accept: bool


class CloneRequest(BaseModel):
    to: str = Field(min_length=1, max_length=64)


_ERROR_STATUS: list[tuple[type, int]] = [
    (UnknownSession, 404),
    (UnknownName, 404),
    (SessionFinished, 409),
    (NameCollision, 409),
    (NothingToUndo, 409),
    (OutOfBounds, 422),
    (ConflictingClicks, 422),
    (ConfigError, 422),
    (DimensionMismatch, 422),
    (DecodeError, 400),
]


def create_app(service: AnnotationService) -> FastAPI:
    app = FastAPI(title="clickadapt annotation service")
    app.state.service = service
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ClickAdaptError)
    def _handle_domain_error(request, exc: ClickAdaptError):
        status = next(
            (code for typ, code in _ERROR_STATUS if isinstance(exc, typ)), 500
        )
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.post("/sessions")
    def post_sessions(body: CreateSessionRequest):
        return service.create_session(body.image_png_base64, body.decoder, body.config)

    @app.post("/sessions/{session_id}/clicks")
    def post_click(session_id: str, body: ClickRequest):
        return service.click(session_id, body.row, body.col, body.label == "positive")

    @app.post("/sessions/{session_id}/undo")
    def post_undo(session_id: str):
        return service.undo(session_id)

    @app.post("/sessions/{session_id}/finish")
    def post_finish(session_id: str, body: FinishRequest):
        return service.finish(session_id, body.accept)

    @app.get("/sessions/{session_id}/mask")
    def get_mask(session_id: str):
        return service.mask(session_id)

    @app.get("/decoders")
    def get_decoders():
        return service.list_decoders()

    @app.post("/decoders/{name}/clone")
    def post_clone(name: str, body: CloneRequest):
        return service.clone_decoder(name, body.to)

    @app.post("/decoders/{name}/reset")
    def post_reset(name: str):
        return service.reset_decoder(name)

    @app.get("/metrics")
    def get_metrics():
        return service.metrics()

    if service.static_dir is not None and Path(service.static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=service.static_dir, html=True), name="ui")

    return app
