"""Story text -> Layout through an instruction-prompted LLM, with repair and an offline fixture mode."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import httpx

from scrollgen.errors import ConfigError, PredictionError, TransportError
from scrollgen.types import BoundingBox, Layout, Scene, SceneObject, layout_problems, validate_layout_schema

log = logging.getLogger(__name__)

ENDPOINT_ENV = "SCROLL_LLM_ENDPOINT"
KEY_ENV = "SCROLL_LLM_KEY"
DEFAULT_TIMEOUT = 30.0
MAX_ATTEMPTS = 3
MIN_SCENE_WIDTH = 1e-9


class Transport(Protocol):
    def send(self, prompt: str) -> str: ...


@dataclass
class HttpTransport:
    """POSTs ``{"prompt": ...}`` and returns the plain-text body."""

    endpoint: str
    key: str | None = None
    timeout: float = DEFAULT_TIMEOUT

    @classmethod
    def from_env(cls, timeout: float = DEFAULT_TIMEOUT) -> HttpTransport:
        endpoint = os.environ.get(ENDPOINT_ENV)
        if not endpoint:
            raise ConfigError(f"{ENDPOINT_ENV} is not set")
        return cls(endpoint, os.environ.get(KEY_ENV), timeout)

    def send(self, prompt: str) -> str:
        headers = {"Authorization": f"Bearer {self.key}"} if self.key else {}
        try:
            resp = httpx.post(self.endpoint, json={"prompt": prompt}, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
        except httpx.TimeoutException as exc:
            raise TransportError(f"LLM endpoint timed out after {self.timeout:g} s") from exc
        except httpx.HTTPError as exc:
            raise TransportError(f"LLM endpoint request failed: {exc}") from exc
        return resp.text


@dataclass(frozen=True)
class StoryRequest:
    story: str
    aspect: float = 4.0
    max_scenes: int = 6
    mode: str = "llm"
    fixture: str | None = None

    def __post_init__(self):
        if not self.story.strip():
            raise ConfigError("story text is empty")
        if not (math.isfinite(self.aspect) and self.aspect > 0):
            raise ConfigError(f"aspect must be positive, got {self.aspect}")
        if not 1 <= self.max_scenes <= 12:
            raise ConfigError(f"max scenes must lie in [1, 12], got {self.max_scenes}")
        if self.mode not in ("llm", "fixture"):
            raise ConfigError(f"mode must be 'llm' or 'fixture', got {self.mode!r}")
        if self.mode == "fixture" and not self.fixture:
            raise ConfigError("fixture mode needs a fixture file")


@dataclass
class RawLayoutResponse:
    text: str
    candidate: dict | None = None
    genre: str | None = None
    style: str | None = None
    error: str | None = None


_SCHEMA_TEXT = """{
  "aspect": number,
  "background": {"prompt": string},
  "scenes": [{"box": [x0, y0, x1, y1], "prompt": string}],
  "objects": [{"box": [x0, y0, x1, y1], "prompt": string, "scene": int}],
  "genre": string (optional),
  "style": string (optional)
}"""

_EXAMPLES = [
    (
        "A fisherman rows out at dawn. By noon he reaches the island temple. At dusk he sails home under a red sky.",
        {
            "aspect": 4,
            "background": {"prompt": "traditional ink wash landscape scroll"},
            "scenes": [
                {"box": [0.0, 0.0, 0.33, 1.0], "prompt": "a quiet river at dawn, mist over the water"},
                {"box": [0.33, 0.0, 0.67, 1.0], "prompt": "an island temple under the noon sun"},
                {"box": [0.67, 0.0, 1.0, 1.0], "prompt": "a boat sailing home under a red dusk sky"},
            ],
            "objects": [
                {"box": [0.1, 0.55, 0.22, 0.8], "prompt": "a small rowing boat with a fisherman", "scene": 0},
                {"box": [0.42, 0.2, 0.58, 0.7], "prompt": "a temple with curved roofs", "scene": 1},
            ],
            "genre": "pastoral journey",
            "style": "ink wash painting",
        },
    ),
    (
        "The knight leaves the castle and rides into the dark forest.",
        {
            "aspect": 3,
            "background": {"prompt": "comic strip, bold outlines"},
            "scenes": [
                {"box": [0.0, 0.0, 0.5, 1.0], "prompt": "a stone castle gate in daylight"},
                {"box": [0.5, 0.0, 1.0, 1.0], "prompt": "a dark forest path"},
            ],
            "objects": [{"box": [0.3, 0.4, 0.45, 0.9], "prompt": "a knight on horseback", "scene": 0}],
            "genre": "heroic story",
            "style": "comic strip",
        },
    ),
]


def build_prompt(req: StoryRequest) -> str:
    lines = [
        "You are a layout planner for a single wide illustrated scroll.",
        "Split the story into distinct scenes in story order, extract the key objects of each scene,",
        "and predict bounding boxes for every scene and object.",
        "Boxes are [x0, y0, x1, y1] fractions of the full canvas, with x0 < x1 and y0 < y1.",
        "Scenes are full-height strips that tile the canvas left-to-right in story order with no gaps.",
        "Each object names the index of the scene it belongs to and must overlap that scene.",
        "Also infer the text genre and an image style.",
        "",
        "Answer with one JSON object following this schema:",
        _SCHEMA_TEXT,
        "",
    ]
    for i, (story, answer) in enumerate(_EXAMPLES, 1):
        lines += [f"Example {i} story:", story, f"Example {i} answer:", json.dumps(answer), ""]
    lines += [
        f"Canvas aspect (width:height): {req.aspect:g}. Use at most {req.max_scenes} scenes.",
        "Story:",
        req.story.strip(),
        "Answer:",
    ]
    return "\n".join(lines)


def extract_json_object(text: str) -> dict:
    """Parse the first balanced ``{...}`` in ``text``."""
    start = text.find("{")
    if start < 0:
        raise ValueError("no JSON object in response")
    depth, in_str, escaped = 0, False, False
    for i in range(start, len(text)):
        ch = text[i]
        if in_str:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                obj = json.loads(text[start : i + 1])
                if not isinstance(obj, dict):
                    raise ValueError("top-level JSON is not an object")
                return obj
    raise ValueError("unbalanced JSON object in response")


def _clean_box(raw) -> tuple[float, float, float, float] | None:
    vals = [float(v) for v in raw]
    if not all(math.isfinite(v) for v in vals):
        return None
    x0, y0, x1, y1 = (min(max(v, 0.0), 1.0) for v in vals)
    x0, x1 = min(x0, x1), max(x0, x1)
    y0, y1 = min(y0, y1), max(y0, y1)
    return x0, y0, x1, y1


def _scene_bounds(kept: list[tuple]) -> list[float]:
    """Meeting points between neighbours, each pinned between the two centres."""
    edges = [0.0]
    for a, b in zip(kept, kept[1:]):
        ca, cb = 0.5 * (a[0] + a[2]), 0.5 * (b[0] + b[2])
        edges.append(min(max(0.5 * (a[2] + b[0]), ca), cb))
    edges.append(1.0)
    return edges


def repair_layout(data: dict | Layout, aspect: float | None = None) -> Layout:
    """Clamp, order and stretch scenes to tile [0, 1]; reattach or drop objects.

    Idempotent: repairing a repaired layout returns it unchanged.
    """
    if isinstance(data, Layout):
        data = data.to_dict()
    validate_layout_schema(data)

    scenes = []
    for i, s in enumerate(data["scenes"]):
        box = _clean_box(s["box"])
        if box is None or box[2] - box[0] <= 0:
            continue
        if box[3] <= box[1]:
            box = (box[0], 0.0, box[2], 1.0)
        scenes.append((box, s["prompt"], i))
    if not scenes:
        raise ConfigError("layout has no scene with positive width")
    scenes.sort(key=lambda s: (0.5 * (s[0][0] + s[0][2]), s[2]))
    originals = [BoundingBox(*s[0]) for s in scenes]

    while True:
        edges = _scene_bounds([s[0] for s in scenes])
        widths = [b - a for a, b in zip(edges, edges[1:])]
        narrow = [i for i, w in enumerate(widths) if w <= MIN_SCENE_WIDTH]
        if not narrow or len(scenes) == 1:
            break
        del scenes[narrow[0]]
    repaired = [BoundingBox(edges[i], 0.0, edges[i + 1], 1.0) for i in range(len(scenes))]
    index_of = {orig: new for new, (_, _, orig) in enumerate(scenes)}

    objects = []
    for o in data["objects"]:
        box = _clean_box(o["box"])
        if box is None or box[2] <= box[0] or box[3] <= box[1]:
            continue
        obox = BoundingBox(*box)
        if not any(obox.intersects(s) for s in originals):
            continue
        parent = index_of.get(int(o["scene"]))
        if parent is None or not obox.intersects(repaired[parent]):
            overlaps = [obox.overlap_area(s) for s in repaired]
            parent = overlaps.index(max(overlaps))
        objects.append(SceneObject(obox, o["prompt"], parent))

    layout = Layout(
        aspect=float(data["aspect"] if aspect is None else aspect),
        background=data["background"]["prompt"],
        scenes=tuple(Scene(box, s[1]) for box, s in zip(repaired, scenes)),
        objects=tuple(objects),
    )
    problems = layout_problems(layout)
    if problems:
        raise ConfigError("repair left an invalid layout: " + "; ".join(problems))
    return layout


def _correction(prompt: str, error: str) -> str:
    return (
        f"{prompt}\n\nYour previous answer could not be used ({error}). "
        "Reply with exactly one JSON object that follows the schema above, and nothing else."
    )


def predict_layout(
    req: StoryRequest,
    client: Transport | None = None,
    attempts: int = MAX_ATTEMPTS,
    history: list[RawLayoutResponse] | None = None,
) -> Layout:
    """Predict a repaired layout for ``req``.

    Fixture mode reads ``req.fixture`` and never touches ``client``. In llm mode
    every reply is appended to ``history`` when given.
    """
    if req.mode == "fixture":
        with open(req.fixture, encoding="utf-8") as fh:
            return repair_layout(json.load(fh))
    if client is None:
        client = HttpTransport.from_env()
    prompt = build_prompt(req)
    raws: list[str] = []
    for attempt in range(attempts):
        text = client.send(prompt)
        raws.append(text)
        record = RawLayoutResponse(text)
        if history is not None:
            history.append(record)
        try:
            candidate = extract_json_object(text)
            record.candidate = candidate
            record.genre = candidate.get("genre") if isinstance(candidate.get("genre"), str) else None
            record.style = candidate.get("style") if isinstance(candidate.get("style"), str) else None
            candidate.setdefault("aspect", req.aspect)
            candidate.setdefault("objects", [])
            return repair_layout(candidate, aspect=req.aspect)
        except (ValueError, TypeError, KeyError) as exc:
            record.error = str(exc)
            log.info("layout attempt %d rejected: %s", attempt + 1, exc)
            prompt = _correction(build_prompt(req), str(exc))
    raise PredictionError(f"no usable layout after {attempts} attempts", raws)


def dump_raw_responses(raws: list[str], out_path: str | Path) -> list[Path]:
    out_path = Path(out_path)
    written = []
    for i, text in enumerate(raws, 1):
        p = out_path.with_name(f"{out_path.name}.raw{i}.txt")
        p.write_text(text, encoding="utf-8")
        written.append(p)
    return written
