"""Shared domain types: canvases, window rectangles, fractional boxes, layouts."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from scrollgen.errors import ConfigError, DimensionError

# Latent cells -> pixels on export.
DEFAULT_SCALE = 8
DEFAULT_WINDOW = (64, 64)

LAYOUT_SCHEMA = {
    "type": "object",
    "required": ["aspect", "background", "scenes", "objects"],
    "properties": {
        "aspect": {"type": "number", "exclusiveMinimum": 0},
        "background": {
            "type": "object",
            "required": ["prompt"],
            "properties": {"prompt": {"type": "string"}},
        },
        "scenes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["box", "prompt"],
                "properties": {
                    "box": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
                    "prompt": {"type": "string", "minLength": 1},
                },
            },
        },
        "objects": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["box", "prompt", "scene"],
                "properties": {
                    "box": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
                    "prompt": {"type": "string", "minLength": 1},
                    "scene": {"type": "integer"},
                },
            },
        },
    },
}


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class WindowRect:
    top: int
    left: int
    height: int
    width: int

    @property
    def bottom(self) -> int:
        return self.top + self.height

    @property
    def right(self) -> int:
        return self.left + self.width

    @property
    def area(self) -> int:
        return self.height * self.width

    def fits(self, dims: tuple[int, int]) -> bool:
        return self.top >= 0 and self.left >= 0 and self.bottom <= dims[0] and self.right <= dims[1]

    def intersection_area(self, other: WindowRect) -> int:
        h = min(self.bottom, other.bottom) - max(self.top, other.top)
        w = min(self.right, other.right) - max(self.left, other.left)
        return max(h, 0) * max(w, 0)

    def slices(self) -> tuple[slice, slice]:
        return slice(self.top, self.bottom), slice(self.left, self.right)

    def to_box(self, dims: tuple[int, int]) -> BoundingBox:
        h, w = dims
        return BoundingBox(self.left / w, self.top / h, self.right / w, self.bottom / h)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in fractional canvas coordinates, ``x`` horizontal."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        for v in (self.x0, self.y0, self.x1, self.y1):
            if not (0.0 <= v <= 1.0) or not math.isfinite(v):
                raise ConfigError(f"box coordinate {v} outside [0, 1]")
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ConfigError(f"box {self.as_list()} has zero or negative area")

    @classmethod
    def from_list(cls, coords) -> BoundingBox:
        x0, y0, x1, y1 = (float(c) for c in coords)
        return cls(x0, y0, x1, y1)

    def as_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]

    @property
    def center_x(self) -> float:
        return 0.5 * (self.x0 + self.x1)

    def intersects(self, other: BoundingBox) -> bool:
        return min(self.x1, other.x1) > max(self.x0, other.x0) and min(self.y1, other.y1) > max(self.y0, other.y0)

    def overlap_area(self, other: BoundingBox) -> float:
        w = min(self.x1, other.x1) - max(self.x0, other.x0)
        h = min(self.y1, other.y1) - max(self.y0, other.y0)
        return max(w, 0.0) * max(h, 0.0)


def region_of(box: BoundingBox, canvas_dims: tuple[int, int]) -> WindowRect:
    """Map a fractional box onto latent cells (round half up, at least 1x1, clipped)."""
    rows, cols = canvas_dims
    if rows <= 0 or cols <= 0:
        raise DimensionError(f"canvas dims must be positive, got {canvas_dims}")
    top = min(round_half_up(box.y0 * rows), rows - 1)
    left = min(round_half_up(box.x0 * cols), cols - 1)
    height = max(1, round_half_up((box.y1 - box.y0) * rows))
    width = max(1, round_half_up((box.x1 - box.x0) * cols))
    return WindowRect(top, left, min(height, rows - top), min(width, cols - left))


@dataclass
class LatentCanvas:
    """The wide latent being denoised, stored as an (H', W', C) float64 array."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or min(self.data.shape) <= 0:
            raise DimensionError(f"canvas must be a non-empty (H, W, C) array, got shape {self.data.shape}")

    @classmethod
    def zeros(cls, height: int, width: int, channels: int) -> LatentCanvas:
        return cls(np.zeros((height, width, channels)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def dims(self) -> tuple[int, int]:
        return self.data.shape[0], self.data.shape[1]

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def extract(self, rect: WindowRect) -> np.ndarray:
        return self.data[rect.slices()].copy()


@dataclass(frozen=True)
class TimestepSchedule:
    """Step ``t`` counts from the noisiest step (0) up to ``total - 1``."""

    total: int
    current: int = 0

    def __post_init__(self):
        if self.total < 1:
            raise ConfigError("total steps must be positive")
        if not 0 <= self.current < self.total:
            raise ConfigError(f"step {self.current} outside [0, {self.total})")

    @property
    def fraction(self) -> float:
        return self.current / self.total


@dataclass(frozen=True)
class Scene:
    box: BoundingBox
    prompt: str


@dataclass(frozen=True)
class SceneObject:
    box: BoundingBox
    prompt: str
    scene: int


@dataclass(frozen=True)
class Layout:
    aspect: float
    background: str
    scenes: tuple[Scene, ...]
    objects: tuple[SceneObject, ...] = field(default_factory=tuple)

    def objects_in(self, scene_index: int) -> list[SceneObject]:
        return [o for o in self.objects if o.scene == scene_index]

    def to_dict(self) -> dict:
        return {
            "aspect": self.aspect,
            "background": {"prompt": self.background},
            "scenes": [{"box": s.box.as_list(), "prompt": s.prompt} for s in self.scenes],
            "objects": [{"box": o.box.as_list(), "prompt": o.prompt, "scene": o.scene} for o in self.objects],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> Layout:
        """Build a layout from its JSON form. No repair is applied; see ``layout.repair_layout``."""
        validate_layout_schema(data)
        scenes = tuple(Scene(BoundingBox.from_list(s["box"]), s["prompt"]) for s in data["scenes"])
        objects = tuple(
            SceneObject(BoundingBox.from_list(o["box"]), o["prompt"], int(o["scene"])) for o in data["objects"]
        )
        return cls(float(data["aspect"]), data["background"]["prompt"], scenes, objects)

    @classmethod
    def load(cls, path: str | Path) -> Layout:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def validate_layout_schema(data) -> None:
    try:
        jsonschema.validate(data, LAYOUT_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"layout schema violation at {path}: {exc.message}") from None


def layout_problems(layout: Layout, tol: float = 1e-9) -> list[str]:
    """Every violated layout invariant, as readable strings. Empty means valid."""
    problems = []
    if not layout.scenes:
        return ["layout has no scenes"]
    centers = [s.box.center_x for s in layout.scenes]
    if any(b < a for a, b in zip(centers, centers[1:])):
        problems.append("scenes not ordered left-to-right by center")
    for i, obj in enumerate(layout.objects):
        if not 0 <= obj.scene < len(layout.scenes):
            problems.append(f"object {i} refers to missing scene {obj.scene}")
        elif not obj.box.intersects(layout.scenes[obj.scene].box):
            problems.append(f"object {i} does not intersect scene {obj.scene}")
    spans = sorted((s.box.x0, s.box.x1) for s in layout.scenes)
    reach = 0.0
    for x0, x1 in spans:
        if x0 > reach + tol:
            problems.append(f"horizontal gap in scene coverage at x={reach:.4f}")
            break
        reach = max(reach, x1)
    if reach < 1.0 - tol:
        problems.append(f"scenes stop at x={reach:.4f}, short of the right edge")
    return problems
