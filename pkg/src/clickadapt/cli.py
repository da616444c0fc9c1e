"""Command-line entry points: bench, pretrain, synth, serve, inspect.

All randomness flows from one ``--seed`` flag, fanned out to named sub-seeds
(feature = N, init = N+1, synthetic pool = N+2, pretraining rollouts = N+3)
so that ``synth --seed N`` materializes exactly the pool ``pretrain --seed N``
trains on.  Exit codes: 0 success, 2 usage/config/input error, 1 internal
error.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path
from typing import Sequence

from . import model
from .adapt import AdaptationConfig, load_config_file
from .datasets import (
    DEFAULT_RESOLUTION,
    load_manifest,
    synth_dataset,
    write_dataset,
)
from .errors import (
    CheckpointError,
    ClickAdaptError,
    ConfigError,
    DecodeError,
    ManifestError,
)
from .estimator import InteractiveSegmenter
from .session import run_benchmark

DEFAULT_BUDGET = 20
DEFAULT_THRESHOLD = 0.85
DEFAULT_LISTEN = "127.0.0.1:8000"


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_bench(args: argparse.Namespace) -> int:
    config = load_config_file(args.config)
    dataset = load_manifest(args.manifest)
    state = model.load_checkpoint_file(args.checkpoint)
    feature_seed = args.seed if args.seed is not None else config.seed
    segmenter = InteractiveSegmenter(
        n_feature_kernels=state.feature_count - model.N_BASE_FEATURES,
        hidden_width=state.hidden_width,
        feature_seed=feature_seed,
    )
    segmenter.load_decoder(state)
    report = run_benchmark(
        segmenter,
        dataset.items,
        config,
        budget=args.budget,
        threshold=args.threshold,
        seeds={"config": config.seed, "feature": feature_seed},
    )
    out = Path(args.out)
    out.write_text(report.to_text())
    pct = int(round(args.threshold * 100))
    print(f"report: {out}")
    print(
        f"NoC_{args.budget}@{pct} = {report.noc:.4f}  "
        f"FR_{args.budget}@{pct} = {report.fr:.2f}%"
    )
    return 0


def cmd_pretrain(args: argparse.Namespace) -> int:
    n = args.seed
    pool = synth_dataset(
        args.family, args.count, seed=n + 2, resolution=tuple(args.resolution)
    )
    segmenter = InteractiveSegmenter(
        feature_seed=n,
        init_seed=n + 1,
        pretrain_steps=args.steps,
        pretrain_lr=args.lr,
        pretrain_seed=n + 3,
    )
    segmenter.fit([it.image for it in pool], [it.mask for it in pool])
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True)
    model.save_checkpoint_file(segmenter.decoder_, out)
    digest = hashlib.sha256(out.read_bytes()).hexdigest()
    print(f"seeds feature={n} init={n + 1} synth={n + 2} rollout={n + 3}")
    print(f"checkpoint: {out} steps={segmenter.decoder_.step_count} sha256={digest}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    dataset = synth_dataset(
        args.family, args.count, seed=args.seed + 2, resolution=tuple(args.resolution)
    )
    manifest = write_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} image/mask pairs under {args.out}")
    print(f"manifest: {manifest}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    host, _, port_text = args.listen.rpartition(":")
    try:
        port = int(port_text)
    except ValueError:
        port = -1
    if not host or not 0 <= port <= 65535:
        print(
            f"error: --listen must be host:port, got {args.listen!r}",
            file=sys.stderr,
        )
        return 2
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        print(f"error: checkpoint not found: {ckpt}", file=sys.stderr)
        return 2
    if args.config is not None:
        config = load_config_file(args.config)
    else:
        config = AdaptationConfig()

    import uvicorn

    from .service import AnnotationService, create_app

    static = Path("frontend") / "dist"
    service = AnnotationService.from_checkpoint(
        ckpt,
        config,
        resolution=tuple(args.working_resolution),
        static_dir=str(static) if static.is_dir() else None,
    )
    app = create_app(service)
    print(f"serving on http://{host}:{port} (config label={config.label()})")
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    blob = Path(args.checkpoint).read_bytes()
    state = model.load_checkpoint(blob)
    print(f"feature_count {state.feature_count}")
    print(f"hidden_width {state.hidden_width}")
    print(f"parameters {state.weights.size}")
    print(f"step_count {state.step_count}")
    print(f"sha256 {hashlib.sha256(blob).hexdigest()}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_resolution(parser: argparse.ArgumentParser, flag: str) -> None:
    parser.add_argument(
        flag,
        nargs=2,
        type=int,
        default=list(DEFAULT_RESOLUTION),
        metavar=("H", "W"),
        help=f"working height and width (default {DEFAULT_RESOLUTION[0]} "
        f"{DEFAULT_RESOLUTION[1]})",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clickadapt",
        description="Interactive-segmentation benchmarking, pretraining and serving.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    bench = sub.add_parser("bench", help="run a simulated-click benchmark")
    bench.add_argument("--manifest", required=True, help="dataset manifest file")
    bench.add_argument("--config", required=True, help="adaptation config file")
    bench.add_argument("--checkpoint", required=True, help="decoder checkpoint")
    bench.add_argument("--out", default="benchmark_report.txt", help="report path")
    bench.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    bench.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    bench.add_argument(
        "--seed",
        type=int,
        default=None,
        help="feature-extractor seed (default: the config's seed)",
    )
    bench.set_defaults(func=cmd_bench)

    pretrain = sub.add_parser("pretrain", help="pretrain a decoder on synthetic data")
    pretrain.add_argument("--out", required=True, help="checkpoint path to write")
    pretrain.add_argument("--family", choices=("A", "B"), default="A")
    pretrain.add_argument("--count", type=int, default=24, help="pool size")
    pretrain.add_argument("--steps", type=int, default=500)
    _add_resolution(pretrain, "--resolution")
    pretrain.add_argument("--seed", type=int, default=0)
    pretrain.add_argument("--lr", type=float, default=1e-2)
    pretrain.set_defaults(func=cmd_pretrain)

    synth = sub.add_parser("synth", help="materialize a synthetic dataset")
    synth.add_argument("--family", choices=("A", "B"), required=True)
    synth.add_argument("--count", type=int, required=True)
    synth.add_argument("--out", required=True, help="output directory")
    _add_resolution(synth, "--resolution")
    synth.add_argument("--seed", type=int, default=0)
    synth.set_defaults(func=cmd_synth)

    serve = sub.add_parser("serve", help="run the live annotation service")
    serve.add_argument("--listen", default=DEFAULT_LISTEN, help="host:port to bind")
    serve.add_argument("--checkpoint", required=True, help="decoder checkpoint")
    serve.add_argument("--config", default=None, help="adaptation config file")
    _add_resolution(serve, "--working-resolution")
    serve.set_defaults(func=cmd_serve)

    inspect = sub.add_parser("inspect", help="print checkpoint metadata")
    inspect.add_argument("--checkpoint", required=True)
    inspect.set_defaults(func=cmd_inspect)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (
        ConfigError,
        ManifestError,
        CheckpointError,
        DecodeError,
        FileNotFoundError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ClickAdaptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
