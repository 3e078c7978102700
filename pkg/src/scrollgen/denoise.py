"""Pluggable one-step denoisers, the toy analytic backend, and the generation loop."""

from __future__ import annotations

import hashlib
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np
from PIL import Image

from scrollgen.blend import BlendPolicy, LayerPrompts, select_embedding
from scrollgen.errors import BackendError, ConfigError, GenerationError, ScrollError
from scrollgen.fusion import EdgeProfile, StrideSchedule, edge_matrix, fuse_step, plan_windows, stride_for_step
from scrollgen.tensorio import from_uint8
from scrollgen.types import DEFAULT_WINDOW, LatentCanvas, Layout, round_half_up

_INIT_STREAM = 0
_STEP_STREAM = 1


class Denoiser(Protocol):
    """One reverse step on a standard-size tile.

    ``t`` counts from the noisiest step (0) to ``total - 1``. Implementations
    must be safe to call concurrently and deterministic given ``rng``.
    """

    window: tuple[int, int]
    channels: int

    def step(self, tile: np.ndarray, t: int, total: int, embedding: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``; draw order elsewhere cannot perturb it."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def step_rng(seed: int, t: int, window_index: int) -> np.random.Generator:
    return substream(seed, _STEP_STREAM, t, window_index)


def embedding_seed(embedding: np.ndarray, decimals: int = 4) -> int:
    quantized = np.round(np.asarray(embedding, dtype=np.float64) * 10**decimals).astype("<i8")
    return int.from_bytes(hashlib.blake2b(quantized.tobytes(), digest_size=8).digest(), "little")


def resample_bilinear(image: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    rows, cols = dims
    channels = [
        np.asarray(Image.fromarray(image[:, :, c].astype(np.float32), mode="F").resize((cols, rows), Image.BILINEAR))
        for c in range(image.shape[2])
    ]
    return np.stack(channels, axis=2).astype(np.float64)


def toy_encode(image: np.ndarray, dims: tuple[int, int], channels: int = 3) -> np.ndarray:
    """Resample to the latent grid and stretch each channel onto [-1, 1]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    out = resample_bilinear(image, dims)
    if out.shape[2] < channels:
        out = np.concatenate([out] + [out[:, :, -1:]] * (channels - out.shape[2]), axis=2)
    out = out[:, :, :channels]
    lo = out.min(axis=(0, 1), keepdims=True)
    hi = out.max(axis=(0, 1), keepdims=True)
    span = np.where(hi > lo, hi - lo, 1.0)
    return np.where(hi > lo, 2.0 * (out - lo) / span - 1.0, 0.0)


@dataclass
class ToyDenoiser:
    """Analytic stand-in for a trained denoiser.

    Each step pulls the tile toward a procedural target chosen by the
    embedding and adds shrinking Gaussian noise::

        tile + eta(t) * (target - tile) + nu(t) * g
    """

    window: tuple[int, int] = DEFAULT_WINDOW
    channels: int = 3
    eta0: float = 0.08
    eta1: float = 0.35
    nu0: float = 0.05
    _targets: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False, compare=False)

    def gain(self, t: int, total: int) -> float:
        frac = t / total
        return self.eta0 * (1.0 - frac) + self.eta1 * frac

    def noise_scale(self, t: int, total: int) -> float:
        return self.nu0 * (1.0 - t / total)

    def target(self, embedding: np.ndarray) -> np.ndarray:
        key = embedding_seed(embedding)
        with self._lock:
            cached = self._targets.get(key)
        if cached is None:
            cached = toy_target(key, self.window, self.channels)
            cached.setflags(write=False)
            with self._lock:
                self._targets[key] = cached
        return cached

    def step(self, tile, t, total, embedding, rng):
        out = tile + self.gain(t, total) * (self.target(embedding) - tile)
        nu = self.noise_scale(t, total)
        if nu:
            out = out + nu * rng.standard_normal(tile.shape)
        return out

    def encode(self, image: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
        return toy_encode(image, dims, self.channels)


def toy_target(seed: int, window: tuple[int, int], channels: int) -> np.ndarray:
    """Hashed flat colour plus faint stripes and smooth noise, inside (-1, 1)."""
    h, w = window
    rng = np.random.default_rng(seed)
    # Saturated palette near the corners of the colour cube keeps distinct prompts far apart.
    corner = 2.0 * rng.integers(0, 2, channels) - 1.0
    colour = 0.75 * corner + rng.uniform(-0.1, 0.1, channels)
    freq = rng.integers(1, 4)
    angle = rng.uniform(0.0, math.pi)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    rr, cc = np.meshgrid(np.arange(h) / h, np.arange(w) / w, indexing="ij")
    stripes = 0.08 * np.sin(2.0 * math.pi * freq * (rr * math.cos(angle) + cc * math.sin(angle)) + phase)
    coarse = rng.standard_normal((4, 4, channels))
    smooth = resample_bilinear(coarse, (h, w))
    pattern = colour[None, None, :] + stripes[:, :, None] + 0.06 * smooth
    return np.clip(pattern, -0.95, 0.95)


@dataclass(frozen=True, eq=False)
class ReferenceInit:
    image: np.ndarray
    strength: float = 0.6

    def __post_init__(self):
        if not 0.0 < self.strength <= 1.0:
            raise ConfigError(f"reference strength must lie in (0, 1], got {self.strength}")

    @classmethod
    def load(cls, path: str | Path, strength: float = 0.6) -> ReferenceInit:
        with Image.open(path) as im:
            return cls(from_uint8(np.asarray(im.convert("RGB"))), strength)

    def start_step(self, total: int) -> int:
        return min(total, max(1, round_half_up(self.strength * total)))


def init_from_reference(
    ref: ReferenceInit, canvas_dims: tuple[int, int], total: int, rng: np.random.Generator, encoder=None, channels: int = 3
) -> tuple[LatentCanvas, int]:
    """Noise an encoded reference to the level ``t0 / T`` set by its strength.

    Returns the canvas and ``t0``; the loop then runs only the final ``t0`` steps.
    """
    t0 = ref.start_step(total)
    latent = encoder(ref.image, canvas_dims) if encoder is not None else toy_encode(ref.image, canvas_dims, channels)
    alpha = 1.0 - t0 / total
    beta = t0 / total
    noise = rng.standard_normal(latent.shape)
    return LatentCanvas(alpha * latent + beta * noise), t0


@dataclass(frozen=True)
class WindowSettings:
    window: tuple[int, int] = DEFAULT_WINDOW
    strides: StrideSchedule | None = None
    edge: EdgeProfile | None = None

    @property
    def stride_schedule(self) -> StrideSchedule:
        return self.strides or StrideSchedule.default(self.window)

    @property
    def edge_profile(self) -> EdgeProfile:
        return self.edge or EdgeProfile.default(self.window)


def generate(
    layout: Layout,
    layers: LayerPrompts,
    policy: BlendPolicy,
    settings: WindowSettings,
    denoiser: Denoiser,
    steps: int,
    seed: int,
    canvas_dims: tuple[int, int],
    reference: ReferenceInit | None = None,
    threads: int = 1,
    on_step: Callable[[int, LatentCanvas], None] | None = None,
) -> LatentCanvas:
    """Run the fused, layer-scheduled denoising loop over the whole canvas.

    ``on_step(t, canvas)`` is called after each fusion, if given.
    """
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    if tuple(denoiser.window) != tuple(settings.window):
        raise ConfigError(f"denoiser window {denoiser.window} differs from plan window {settings.window}")
    layers.check(layout)
    schedule = settings.stride_schedule
    edge = edge_matrix(settings.edge_profile, settings.window)
    plans = {}
    for entry in schedule.entries:
        plans[entry.stride] = plan_windows(canvas_dims, settings.window, entry.stride)

    init_rng = substream(seed, _INIT_STREAM)
    if reference is not None:
        canvas, t0 = init_from_reference(
            reference, canvas_dims, steps, init_rng, getattr(denoiser, "encode", None), denoiser.channels
        )
        start = steps - t0
    else:
        canvas = LatentCanvas(init_rng.standard_normal(canvas_dims + (denoiser.channels,)))
        start = 0

    def run_window(t: int, i: int, rect) -> np.ndarray:
        emb = select_embedding(rect, t, steps, layout, layers, policy, canvas_dims)
        try:
            out = denoiser.step(canvas.extract(rect), t, steps, emb, step_rng(seed, t, i))
        except GenerationError:
            raise
        except BackendError as exc:
            raise GenerationError(str(exc), step=t, window=i) from exc
        except ScrollError:
            raise
        except Exception as exc:
            raise GenerationError(f"denoiser failed: {exc}", step=t, window=i) from exc
        out = np.asarray(out, dtype=np.float64)
        if out.shape != (rect.height, rect.width, canvas.channels):
            raise GenerationError(f"denoiser returned shape {out.shape}", step=t, window=i)
        if not np.isfinite(out).all():
            raise GenerationError("denoiser returned non-finite values", step=t, window=i)
        return out

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for t in range(start, steps):
            plan = plans[stride_for_step(schedule, t, steps)]
            if pool is None:
                tiles = [run_window(t, i, rect) for i, rect in enumerate(plan.windows)]
            else:
                futures = [pool.submit(run_window, t, i, rect) for i, rect in enumerate(plan.windows)]
                tiles = [f.result() for f in futures]
            try:
                canvas = fuse_step(canvas, plan, edge, tiles)
            except ScrollError as exc:
                raise GenerationError(str(exc), step=t) from exc
            if on_step is not None:
                on_step(t, canvas)
    finally:
        if pool is not None:
            pool.shutdown()
    return canvas
