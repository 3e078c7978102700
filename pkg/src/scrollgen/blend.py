"""Latent blending: which prompt embedding conditions each window at each step.

Also holds the prompt-weighting algebra used to build those embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from scrollgen.errors import ConfigError, PromptParseError
from scrollgen.types import Layout, WindowRect, region_of

PLUS_FACTOR = 1.1
MINUS_FACTOR = 0.9
MAX_WEIGHT = 10.0
OBJECT_EMPHASIS = 1.2


class TextEmbedder(Protocol):
    def embed_text(self, text: str) -> np.ndarray: ...


def normalize(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if not np.isfinite(norm) or norm == 0.0:
        raise ValueError("cannot normalize a zero or non-finite vector")
    return vec / norm


@dataclass(frozen=True)
class WeightedPromptTerm:
    text: str
    weight: float = 1.0


@dataclass(frozen=True)
class BlendPolicy:
    """``bg_every=None`` disables background alternation entirely."""

    fg_fraction: float = 0.15
    bg_every: int | None = 2
    overlap_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.fg_fraction <= 1.0:
            raise ConfigError(f"fg_fraction must lie in [0, 1], got {self.fg_fraction}")
        if self.bg_every is not None and self.bg_every < 1:
            raise ConfigError(f"bg_every must be >= 1, got {self.bg_every}")
        if not 0.0 < self.overlap_threshold <= 1.0:
            raise ConfigError(f"overlap threshold must lie in (0, 1], got {self.overlap_threshold}")

    def is_bg_step(self, t: int) -> bool:
        k = self.bg_every
        return k is not None and t % k == k - 1

    def is_fg_phase(self, t: int, total: int) -> bool:
        return t / total < self.fg_fraction


@dataclass(frozen=True)
class LayerPrompts:
    bg: np.ndarray
    mg: tuple[np.ndarray, ...]
    fg: tuple[np.ndarray, ...]

    def check(self, layout: Layout) -> None:
        if len(self.mg) != len(layout.scenes) or len(self.fg) != len(layout.objects):
            raise ConfigError(
                f"layer prompts ({len(self.mg)} mg, {len(self.fg)} fg) do not match layout "
                f"({len(layout.scenes)} scenes, {len(layout.objects)} objects)"
            )


def resolve_layer(
    window: WindowRect,
    t: int,
    total: int,
    layout: Layout,
    canvas_dims: tuple[int, int],
    policy: BlendPolicy,
) -> tuple[str, int | None]:
    """``("bg", None)``, ``("fg", object_index)`` or ``("mg", scene_index)``."""
    if not layout.scenes:
        raise ConfigError("layout has no scenes")
    if policy.is_bg_step(t):
        return "bg", None
    if policy.is_fg_phase(t, total):
        best, best_area = None, 0
        for j, obj in enumerate(layout.objects):
            rect = region_of(obj.box, canvas_dims)
            inter = rect.intersection_area(window)
            if inter > 0 and inter / rect.area >= policy.overlap_threshold and inter > best_area:
                best, best_area = j, inter
        if best is not None:
            return "fg", best
    best, best_area = 0, -1
    for s, scene in enumerate(layout.scenes):
        inter = region_of(scene.box, canvas_dims).intersection_area(window)
        if inter > best_area:
            best, best_area = s, inter
    return "mg", best


def select_embedding(
    window: WindowRect,
    t: int,
    total: int,
    layout: Layout,
    layers: LayerPrompts,
    policy: BlendPolicy,
    canvas_dims: tuple[int, int],
) -> np.ndarray:
    kind, index = resolve_layer(window, t, total, layout, canvas_dims, policy)
    if kind == "bg":
        return layers.bg
    if kind == "fg":
        return layers.fg[index]
    return layers.mg[index]


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


def _parse(text: str) -> tuple[list[WeightedPromptTerm], bool]:
    terms: list[WeightedPromptTerm] = []
    explicit = False
    plain: list[str] = []

    def flush():
        chunk = "".join(plain).strip()
        plain.clear()
        if chunk:
            terms.append(WeightedPromptTerm(chunk, 1.0))

    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == ")":
            raise PromptParseError("unmatched ')'", _byte_offset(text, i))
        if ch != "(":
            plain.append(ch)
            i += 1
            continue
        flush()
        open_at = i
        j = i + 1
        while j < n and text[j] not in "()":
            j += 1
        if j >= n:
            raise PromptParseError("unclosed '('", _byte_offset(text, open_at))
        if text[j] == "(":
            raise PromptParseError("nested '(' is not supported", _byte_offset(text, j))
        body = text[open_at + 1 : j]
        weight = 1.0
        segment = body
        if ":" in body:
            colon = body.rindex(":")
            segment, raw = body[:colon], body[colon + 1 :]
            weight_at = _byte_offset(text, open_at + 2 + colon)
            try:
                weight = float(raw)
            except ValueError:
                raise PromptParseError(f"weight {raw.strip()!r} is not a number", weight_at) from None
            if not weight > 0:
                raise PromptParseError(f"weight must be positive, got {raw.strip()}", weight_at)
        segment = segment.strip()
        if not segment:
            raise PromptParseError("empty weighted segment", _byte_offset(text, open_at))
        j += 1
        while j < n and text[j] in "+-":
            weight *= PLUS_FACTOR if text[j] == "+" else MINUS_FACTOR
            j += 1
        if not 0.0 < weight <= MAX_WEIGHT:
            raise PromptParseError(f"weight {weight:g} outside (0, {MAX_WEIGHT:g}]", _byte_offset(text, open_at))
        terms.append(WeightedPromptTerm(segment, weight))
        explicit = True
        i = j
    flush()
    return terms, explicit


def parse_weighted_prompt(text: str) -> list[WeightedPromptTerm]:
    """Split a prompt into weighted segments.

    ``(seg:1.5)`` sets a weight, each trailing ``+`` after ``(seg)`` multiplies
    by 1.1 and each ``-`` by 0.9. Bare text gets weight 1. No nesting.
    """
    if not text or not text.strip():
        raise PromptParseError("empty prompt", 0)
    terms, _ = _parse(text)
    if not terms:
        raise PromptParseError("prompt has no content", 0)
    return terms


def has_explicit_weights(text: str) -> bool:
    return _parse(text)[1]


def combine_terms(terms: list[WeightedPromptTerm], embedder: TextEmbedder) -> np.ndarray:
    if not terms:
        raise ConfigError("need at least one prompt term")
    total = sum(t.weight * np.asarray(embedder.embed_text(t.text), dtype=np.float64) for t in terms)
    norm = float(np.linalg.norm(total))
    if norm < 1e-9:
        return normalize(embedder.embed_text(" ".join(t.text for t in terms)))
    return total / norm


def strengthen_object_in_scene(
    scene_prompt: str, object_prompts: list[str], emphasis: float = OBJECT_EMPHASIS
) -> list[WeightedPromptTerm]:
    """Append each object's text to its scene prompt at raised weight.

    Prompts that already carry user weights are returned as parsed.
    """
    terms, explicit = _parse(scene_prompt)
    if explicit:
        return terms
    return [WeightedPromptTerm(scene_prompt.strip(), 1.0)] + [
        WeightedPromptTerm(p.strip(), emphasis) for p in object_prompts if p.strip()
    ]


def build_layer_prompts(layout: Layout, embedder: TextEmbedder, emphasis: float = OBJECT_EMPHASIS) -> LayerPrompts:
    bg_text = layout.background.strip() or " ".join(s.prompt for s in layout.scenes)
    bg = combine_terms(parse_weighted_prompt(bg_text), embedder)
    mg = tuple(
        combine_terms(
            strengthen_object_in_scene(scene.prompt, [o.prompt for o in layout.objects_in(s)], emphasis),
            embedder,
        )
        for s, scene in enumerate(layout.scenes)
    )
    fg = tuple(combine_terms(parse_weighted_prompt(o.prompt), embedder) for o in layout.objects)
    return LayerPrompts(bg, mg, fg)
