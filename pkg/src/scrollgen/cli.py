"""Command-line front end: ``scrollgen run | metrics | layout``.

Exit codes: 0 ok, 2 configuration error, 3 backend error, 4 I/O error,
5 layout prediction failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from scrollgen.blend import BlendPolicy, build_layer_prompts
from scrollgen.denoise import ReferenceInit, ToyDenoiser, WindowSettings, generate
from scrollgen.errors import BackendError, ConfigError, GenerationError, PredictionError, ScrollError, TransportError
from scrollgen.external import ExternalDenoiser
from scrollgen.fusion import EDGE_KINDS, EdgeProfile, StrideSchedule, edge_matrix
from scrollgen.layout import HttpTransport, StoryRequest, dump_raw_responses, predict_layout
from scrollgen.metrics import ToyEmbedder, evaluate
from scrollgen.tensorio import canvas_to_image, load_image, save_png, write_tensor
from scrollgen.types import Layout

log = logging.getLogger("scrollgen")

EXIT_OK, EXIT_CONFIG, EXIT_BACKEND, EXIT_IO, EXIT_PREDICT = 0, 2, 3, 4, 5
EMBEDDERS = {"toy": ToyEmbedder}


class UsageError(ConfigError):
    pass


@dataclass
class RunConfig:
    layout: str | None = None
    out: str = "scroll"
    height: int = 64
    width: int = 256
    window: int = 64
    scale: int = 8
    steps: int = 50
    seed: int = 0
    edge: str = "cosine"
    edge_margin: float | None = None
    edge_sigma: float | None = None
    strides: str | None = None
    fg_fraction: float = 0.15
    bg_every: int | None = 2
    overlap_threshold: float = 0.5
    backend: str = "toy"
    endpoint: str | None = None
    ref: str | None = None
    ref_strength: float = 0.6
    threads: int = 1

    def validate(self) -> None:
        def need(ok: bool, flag: str, msg: str):
            if not ok:
                raise UsageError(f"{flag}: {msg}")

        need(self.steps >= 1, "--steps", f"must be >= 1, got {self.steps}")
        need(self.height >= 1 and self.width >= 1, "--height/--width", "latent dims must be positive")
        need(self.window >= 1, "--window", "must be positive")
        need(
            self.height >= self.window and self.width >= self.window,
            "--height/--width",
            f"canvas {self.height}x{self.width} smaller than the {self.window} window",
        )
        need(self.scale >= 1, "--scale", "must be >= 1")
        need(self.edge in EDGE_KINDS, "--edge", f"choose from {EDGE_KINDS}")
        need(0.0 <= self.fg_fraction <= 1.0, "--fg-fraction", "must lie in [0, 1]")
        need(self.bg_every is None or self.bg_every >= 1, "--bg-every", "must be >= 1 or 'none'")
        need(0.0 < self.overlap_threshold <= 1.0, "--overlap-threshold", "must lie in (0, 1]")
        need(self.backend in ("toy", "external"), "--backend", "choose toy or external")
        need(self.backend != "external" or bool(self.endpoint), "--endpoint", "required with --backend external")
        need(0.0 < self.ref_strength <= 1.0, "--ref-strength", "must lie in (0, 1]")
        need(self.threads >= 1, "--threads", "must be >= 1")
        need(self.layout is not None, "--layout", "a layout file is required")

    def window_settings(self) -> WindowSettings:
        w = (self.window, self.window)
        margin = self.window / 4 if self.edge_margin is None else self.edge_margin
        sigma = self.window / 4 if self.edge_sigma is None else self.edge_sigma
        try:
            edge = EdgeProfile(self.edge, margin=margin, sigma=sigma)
            edge_matrix(edge, w)
        except ScrollError as exc:
            raise UsageError(f"--edge-margin/--edge-sigma: {exc}") from None
        try:
            strides = StrideSchedule.parse(self.strides) if self.strides else StrideSchedule.default(w)
        except ScrollError as exc:
            raise UsageError(f"--strides: {exc}") from None
        if strides.max_stride > self.window:
            raise UsageError(f"--strides: stride {strides.max_stride} exceeds the window {self.window}")
        return WindowSettings(w, strides, edge)

    def policy(self) -> BlendPolicy:
        return BlendPolicy(self.fg_fraction, self.bg_every, self.overlap_threshold)


def _bg_every(text: str) -> int | str:
    if text.lower() in ("none", "off"):
        return "none"
    return int(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scrollgen", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="generate a scroll from a layout")
    run.add_argument("--config", help="a .meta.json from an earlier run; flags given here override it")
    run.add_argument("--layout")
    run.add_argument("--out", help="output prefix")
    run.add_argument("--steps", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--width", type=int, help="latent columns")
    run.add_argument("--height", type=int, help="latent rows")
    run.add_argument("--window", type=int, help="latent window side")
    run.add_argument("--scale", type=int, help="latent-to-pixel factor")
    run.add_argument("--edge", choices=EDGE_KINDS)
    run.add_argument("--edge-margin", type=float)
    run.add_argument("--edge-sigma", type=float)
    run.add_argument("--strides", help='e.g. "0:0.5:32,0.5:1:16"')
    run.add_argument("--fg-fraction", type=float)
    run.add_argument("--bg-every", type=_bg_every, help="background step period k, or 'none'")
    run.add_argument("--overlap-threshold", type=float)
    run.add_argument("--backend", choices=("toy", "external"))
    run.add_argument("--endpoint", help="denoiser URL for --backend external")
    run.add_argument("--ref", help="reference image")
    run.add_argument("--ref-strength", type=float)
    run.add_argument("--threads", type=int)

    met = sub.add_parser("metrics", help="score an image against its layout")
    met.add_argument("--image", required=True)
    met.add_argument("--layout", required=True)
    met.add_argument("--ground-truth")
    met.add_argument("--embedder", choices=sorted(EMBEDDERS), default="toy")
    met.add_argument("--strip-width", type=int, default=64)
    met.add_argument("--out", help="report path (default: <image>.metrics.json)")

    lay = sub.add_parser("layout", help="predict a layout from story text")
    lay.add_argument("--story", required=True)
    lay.add_argument("--mode", choices=("fixture", "llm"), default="llm")
    lay.add_argument("--fixture")
    lay.add_argument("--max-scenes", type=int, default=6)
    lay.add_argument("--aspect", type=float, default=4.0)
    lay.add_argument("--endpoint", help="overrides $SCROLL_LLM_ENDPOINT")
    lay.add_argument("--timeout", type=float, default=30.0)
    lay.add_argument("--out", required=True)
    return p


def resolve_run_config(args: argparse.Namespace) -> tuple[RunConfig, dict | None]:
    """Merge defaults, an optional saved config, and explicit flags (highest priority)."""
    values: dict = {"threads": os.cpu_count() or 1}
    saved_layout = None
    if args.config:
        meta = json.loads(Path(args.config).read_text(encoding="utf-8"))
        values.update(meta["config"])
        saved_layout = meta.get("layout")
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = None if v == "none" else v
    known = {f.name for f in fields(RunConfig)}
    cfg = RunConfig(**{k: v for k, v in values.items() if k in known})
    if args.layout is not None:
        saved_layout = None
    if saved_layout is not None and cfg.layout is None:
        cfg.layout = "<embedded>"
    return cfg, saved_layout


def cmd_run(args: argparse.Namespace) -> int:
    cfg, embedded = resolve_run_config(args)
    cfg.validate()
    settings = cfg.window_settings()
    policy = cfg.policy()
    layout = Layout.from_dict(embedded) if embedded is not None else Layout.load(cfg.layout)
    embedder = ToyEmbedder()
    layers = build_layer_prompts(layout, embedder)
    if cfg.backend == "toy":
        denoiser = ToyDenoiser(window=settings.window, channels=3)
    else:
        denoiser = ExternalDenoiser(cfg.endpoint, window=settings.window)
    reference = ReferenceInit.load(cfg.ref, cfg.ref_strength) if cfg.ref else None
    dims = (cfg.height, cfg.width)
    log.info("generating %dx%d latent, %d steps, seed %d", *dims, cfg.steps, cfg.seed)
    canvas = generate(
        layout, layers, policy, settings, denoiser, cfg.steps, cfg.seed, dims, reference, threads=cfg.threads
    )
    prefix = Path(cfg.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_tensor(f"{prefix}.tensor", canvas.data)
    save_png(f"{prefix}.png", canvas_to_image(canvas.data, cfg.scale))
    meta = {"config": asdict(cfg), "layout": layout.to_dict()}
    Path(f"{prefix}.meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {prefix}.png, {prefix}.tensor, {prefix}.meta.json")
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace) -> int:
    image = load_image(args.image)
    layout = Layout.load(args.layout)
    gt = load_image(args.ground_truth) if args.ground_truth else None
    if args.strip_width < 2:
        raise UsageError("--strip-width: must be >= 2")
    report = evaluate(image, layout, EMBEDDERS[args.embedder](), gt, strip_width=args.strip_width)
    text = report.to_json()
    out = Path(args.out) if args.out else Path(f"{args.image}.metrics.json")
    out.write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_layout(args: argparse.Namespace, transport=None) -> int:
    story = Path(args.story).read_text(encoding="utf-8")
    req = StoryRequest(story, args.aspect, args.max_scenes, args.mode, args.fixture)
    if req.mode == "llm" and transport is None:
        if args.endpoint:
            transport = HttpTransport(args.endpoint, os.environ.get("SCROLL_LLM_KEY"), args.timeout)
        else:
            transport = HttpTransport.from_env(args.timeout)
    history: list = []
    try:
        layout = predict_layout(req, transport, history=history)
    except (PredictionError, TransportError) as exc:
        raws = exc.raw_responses if isinstance(exc, PredictionError) else [r.text for r in history]
        for p in dump_raw_responses(raws, args.out):
            print(f"raw response saved to {p}", file=sys.stderr)
        print(f"error: layout prediction failed: {exc}", file=sys.stderr)
        return EXIT_PREDICT
    Path(args.out).write_text(layout.to_json(), encoding="utf-8")
    print(f"scenes: {len(layout.scenes)}")
    return EXIT_OK


def main(argv: list[str] | None = None, transport=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "metrics":
            return cmd_metrics(args)
        return cmd_layout(args, transport)
    except (GenerationError, BackendError) as exc:
        print(f"error: backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except ScrollError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
