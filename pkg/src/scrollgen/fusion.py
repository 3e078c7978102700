"""Latent smoothing: sliding-window cover, edge weights, and weighted fusion.

Each step every window is denoised on its own; the canvas is then rebuilt as
the per-cell minimiser of the summed, edge-weighted squared error against the
denoised tiles. That minimiser is the weighted average

    J(p) = sum_i w_i(p) * tile_i(p) / sum_i w_i(p)

where ``w_i(p)`` is the edge weight at p's offset inside window i (0 outside).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from scrollgen.errors import ConfigError, DimensionError, ParameterError
from scrollgen.types import LatentCanvas, WindowRect

WEIGHT_FLOOR = 1e-4
EDGE_KINDS = ("linear", "cosine", "gaussian")


@dataclass(frozen=True)
class StrideEntry:
    start: float
    stop: float
    stride: int


@dataclass(frozen=True)
class StrideSchedule:
    """Coarse-to-fine strides keyed by the fraction ``t / T`` of the run."""

    entries: tuple[StrideEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise ConfigError("stride schedule needs at least one entry")
        if self.entries[0].start != 0.0:
            raise ConfigError("stride schedule must start at fraction 0")
        if not math.isclose(self.entries[-1].stop, 1.0):
            raise ConfigError("stride schedule must end at fraction 1")
        for a, b in zip(self.entries, self.entries[1:]):
            if not math.isclose(a.stop, b.start):
                raise ConfigError(f"stride schedule not contiguous at {a.stop} / {b.start}")
            if b.stride > a.stride:
                raise ConfigError("strides must not increase (coarse-to-fine)")
        for e in self.entries:
            if e.stride < 1:
                raise ConfigError(f"stride must be >= 1, got {e.stride}")
            if not e.start < e.stop:
                raise ConfigError(f"empty stride interval [{e.start}, {e.stop})")

    @classmethod
    def of(cls, *entries: tuple[float, float, int]) -> StrideSchedule:
        return cls(tuple(StrideEntry(float(a), float(b), int(s)) for a, b, s in entries))

    @classmethod
    def default(cls, window: tuple[int, int]) -> StrideSchedule:
        h = window[0]
        return cls.of((0.0, 0.5, max(1, h // 2)), (0.5, 1.0, max(1, h // 4)))

    @classmethod
    def parse(cls, text: str) -> StrideSchedule:
        """Parse ``"f0:f1:s,f0:f1:s"``."""
        entries = []
        for chunk in text.split(","):
            parts = chunk.strip().split(":")
            if len(parts) != 3:
                raise ConfigError(f"bad stride entry {chunk!r}, expected f0:f1:s")
            try:
                entries.append((float(parts[0]), float(parts[1]), int(parts[2])))
            except ValueError:
                raise ConfigError(f"bad stride entry {chunk!r}") from None
        return cls.of(*entries)

    def format(self) -> str:
        return ",".join(f"{e.start:g}:{e.stop:g}:{e.stride}" for e in self.entries)

    @property
    def max_stride(self) -> int:
        return max(e.stride for e in self.entries)


def stride_for_step(schedule: StrideSchedule, t: int, total: int) -> int:
    if not 0 <= t < total:
        raise ConfigError(f"step {t} outside [0, {total})")
    frac = t / total
    for entry in schedule.entries:
        if entry.start <= frac < entry.stop:
            return entry.stride
    return schedule.entries[-1].stride


@dataclass(frozen=True)
class EdgeProfile:
    kind: str = "cosine"
    margin: float = 16.0
    sigma: float = 16.0
    floor: float = WEIGHT_FLOOR

    def __post_init__(self):
        if self.kind not in EDGE_KINDS:
            raise ParameterError(f"unknown edge profile {self.kind!r}; choose from {EDGE_KINDS}")
        if self.margin < 0:
            raise ParameterError("edge margin must be >= 0")
        if self.kind == "gaussian" and self.sigma <= 0:
            raise ParameterError("gaussian sigma must be > 0")
        if not 0 < self.floor <= 1:
            raise ParameterError("weight floor must lie in (0, 1]")

    @classmethod
    def default(cls, window: tuple[int, int]) -> EdgeProfile:
        return cls("cosine", margin=window[0] / 4, sigma=window[0] / 4)


def _profile_1d(profile: EdgeProfile, n: int) -> np.ndarray:
    idx = np.arange(n, dtype=np.float64)
    if profile.kind == "gaussian":
        center = (n - 1) / 2.0
        p = np.exp(-((idx - center) ** 2) / (2.0 * profile.sigma**2))
        return p / p.max()
    m = profile.margin
    if m == 0:
        return np.ones(n)
    d = np.minimum(idx, n - 1 - idx)
    if profile.kind == "linear":
        return np.minimum(d / m, 1.0)
    return np.where(d <= m, 0.5 * (1.0 - np.cos(np.pi * np.minimum(d, m) / m)), 1.0)


def edge_matrix(profile: EdgeProfile, window: tuple[int, int]) -> np.ndarray:
    """Separable (H, W) weight grid in [floor, 1]."""
    h, w = window
    if profile.kind != "gaussian" and (profile.margin > h / 2 or profile.margin > w / 2):
        raise ParameterError(f"edge margin {profile.margin} exceeds half the window side {window}")
    grid = np.outer(_profile_1d(profile, h), _profile_1d(profile, w))
    return np.maximum(grid, profile.floor)


@dataclass(frozen=True)
class WindowPlan:
    windows: tuple[WindowRect, ...]
    stride: int
    canvas_dims: tuple[int, int]

    @property
    def count(self) -> int:
        return len(self.windows)


def _axis_origins(extent: int, size: int, stride: int) -> list[int]:
    slack = extent - size
    origins = list(range(0, slack + 1, stride))
    if origins[-1] != slack:
        origins.append(slack)
    return origins


def plan_windows(canvas_dims: tuple[int, int], window: tuple[int, int], stride: int) -> WindowPlan:
    """Windows at multiples of ``stride``, plus one edge-flush origin per axis when needed."""
    rows, cols = canvas_dims
    h, w = window
    if h < 1 or w < 1:
        raise DimensionError(f"window must be positive, got {window}")
    if h > rows or w > cols:
        raise DimensionError(f"window {window} larger than canvas {canvas_dims}")
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    # A stride past the window side would leave gaps between consecutive windows.
    if (rows > h and stride > h) or (cols > w and stride > w):
        raise ParameterError(f"stride {stride} exceeds window {window}; coverage would break")
    tops = _axis_origins(rows, h, stride)
    lefts = _axis_origins(cols, w, stride)
    windows = tuple(WindowRect(t, l, h, w) for t in tops for l in lefts)
    return WindowPlan(windows, stride, (rows, cols))


def accumulate(
    plan: WindowPlan, edge: np.ndarray, tiles: Sequence[np.ndarray], channels: int
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted sum of tiles and the per-cell weight total, in window order."""
    rows, cols = plan.canvas_dims
    num = np.zeros((rows, cols, channels))
    den = np.zeros((rows, cols))
    wgt = edge[:, :, None]
    for rect, tile in zip(plan.windows, tiles):
        sl = rect.slices()
        num[sl] += wgt * tile
        den[sl] += edge
    return num, den


def coverage_weights(plan: WindowPlan, edge: np.ndarray) -> np.ndarray:
    """The fusion denominator ``sum_i w_i(p)`` for every canvas cell."""
    den = np.zeros(plan.canvas_dims)
    for rect in plan.windows:
        den[rect.slices()] += edge
    return den


def fuse_step(
    canvas: LatentCanvas, plan: WindowPlan, edge: np.ndarray, denoised_tiles: Sequence[np.ndarray]
) -> LatentCanvas:
    if len(denoised_tiles) != plan.count:
        raise DimensionError(f"got {len(denoised_tiles)} tiles for {plan.count} windows")
    if canvas.dims != plan.canvas_dims:
        raise DimensionError(f"plan built for {plan.canvas_dims}, canvas is {canvas.dims}")
    for i, (rect, tile) in enumerate(zip(plan.windows, denoised_tiles)):
        if tile.shape != (rect.height, rect.width, canvas.channels):
            raise DimensionError(f"tile {i} has shape {tile.shape}, window needs {(rect.height, rect.width)}")
        if not np.isfinite(tile).all():
            raise DimensionError(f"tile {i} contains non-finite values")
    num, den = accumulate(plan, edge, denoised_tiles, canvas.channels)
    if den.min() < float(edge.min()):
        raise DimensionError("canvas cell left uncovered by the window plan")
    return LatentCanvas(num / den[:, :, None])
