"""Scroll-level evaluation metrics over pluggable embedders.

* LGIS: mean cosine between each scene crop and the whole image (lower is richer).
* GEV: mean per-dimension population variance of {whole} + {scene crops} (higher is more dispersed).
* EA: mean aesthetic score of strips straddling scene boundaries.
* CLIP-style global/local text-image scores and similarity to a ground-truth image.

The built-in aesthetic scorer is a seam-smoothness proxy, ``10 * exp(-d)`` with
``d`` the mean absolute horizontal step across the seam column. It is not the
LAION aesthetic predictor and its values are not comparable to that model's.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from scrollgen.blend import normalize
from scrollgen.errors import DimensionError
from scrollgen.types import Layout, WindowRect, region_of

TOY_DIM = 64
THUMB = 8


class Embedder(Protocol):
    dim: int

    def embed_text(self, text: str) -> np.ndarray: ...

    def embed_image(self, image: np.ndarray) -> np.ndarray: ...


def block_means(gray: np.ndarray, size: int = THUMB) -> np.ndarray:
    """Area-average a 2-D grid down to ``size x size``; every block holds at least one cell."""
    rows, cols = gray.shape
    out = np.empty((size, size))
    r_edges = [(i * rows) // size for i in range(size + 1)]
    c_edges = [(j * cols) // size for j in range(size + 1)]
    for i in range(size):
        r0, r1 = r_edges[i], max(r_edges[i + 1], r_edges[i] + 1)
        for j in range(size):
            c0, c1 = c_edges[j], max(c_edges[j + 1], c_edges[j] + 1)
            out[i, j] = gray[r0:r1, c0:c1].mean()
    return out


class ToyEmbedder:
    """Deterministic desk-scale embedder.

    Text: a unit Gaussian vector seeded by a BLAKE2b hash of the UTF-8 text.
    Image: 8x8 grayscale thumbnail, flattened and unit-normalised.
    """

    dim = TOY_DIM

    def embed_text(self, text: str) -> np.ndarray:
        seed = int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")
        return normalize(np.random.default_rng(seed).standard_normal(self.dim))

    def thumbnail(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        gray = image.mean(axis=2) if image.ndim == 3 else image
        if gray.size == 0:
            raise DimensionError("cannot embed an empty image")
        return block_means(gray)

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        vec = np.zeros(self.dim)
        flat = self.thumbnail(image).ravel()
        vec[: flat.size] = flat
        norm = np.linalg.norm(vec)
        if norm < 1e-12:
            # Featureless mid-grey: fall back to a fixed direction.
            vec = np.ones(self.dim)
            norm = np.linalg.norm(vec)
        return vec / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def crop(image: np.ndarray, rect: WindowRect) -> np.ndarray:
    out = image[rect.slices()]
    if out.size == 0:
        raise DimensionError(f"empty crop for {rect}")
    return out


def scene_rects(layout: Layout, image_dims: tuple[int, int]) -> list[WindowRect]:
    return [region_of(s.box, image_dims) for s in layout.scenes]


def lgis(image: np.ndarray, rects: Sequence[WindowRect], embedder: Embedder) -> float:
    if not rects:
        raise DimensionError("LGIS needs at least one scene")
    whole = embedder.embed_image(image)
    return float(np.mean([cosine(embedder.embed_image(crop(image, r)), whole) for r in rects]))


def embedding_variance(embeddings: Sequence[np.ndarray]) -> float:
    stack = np.stack([np.asarray(e, dtype=np.float64) for e in embeddings])
    # Shift by the first row: variance is unchanged and identical rows give exactly 0.
    return float((stack - stack[0]).var(axis=0).mean())


def gev(image: np.ndarray, rects: Sequence[WindowRect], embedder: Embedder) -> float:
    if not rects:
        raise DimensionError("GEV needs at least one scene")
    embs = [embedder.embed_image(image)] + [embedder.embed_image(crop(image, r)) for r in rects]
    return embedding_variance(embs)


def seam_smoothness(strip: np.ndarray, seam: int | None = None) -> float:
    c = strip.shape[1] // 2 if seam is None else seam
    if not 0 < c < strip.shape[1]:
        raise DimensionError(f"seam column {c} outside strip of width {strip.shape[1]}")
    step = np.abs(strip[:, c] - strip[:, c - 1]).mean()
    return 10.0 * math.exp(-float(step))


AestheticScorer = Callable[..., float]


def boundary_columns(rects: Sequence[WindowRect]) -> list[int]:
    ordered = sorted(rects, key=lambda r: (r.left, r.right))
    return [b.left for b in ordered[1:]]


def edge_aesthetics(
    image: np.ndarray,
    rects: Sequence[WindowRect],
    scorer: AestheticScorer = seam_smoothness,
    strip_width: int = 64,
) -> float | None:
    """Mean scorer output over strips centred on internal scene boundaries; None for one scene."""
    if len(rects) < 2:
        return None
    cols = image.shape[1]
    scores = []
    for b in boundary_columns(rects):
        lo = max(0, b - strip_width // 2)
        hi = min(cols, lo + strip_width)
        scores.append(float(scorer(image[:, lo:hi], b - lo)))
    return float(np.mean(scores))


def clip_scores(image: np.ndarray, layout: Layout, embedder: Embedder) -> tuple[float, list[float]]:
    rects = scene_rects(layout, image.shape[:2])
    joined = ", ".join(s.prompt for s in layout.scenes)
    global_score = 100.0 * cosine(embedder.embed_image(image), embedder.embed_text(joined))
    locals_ = [
        100.0 * cosine(embedder.embed_image(crop(image, r)), embedder.embed_text(s.prompt))
        for r, s in zip(rects, layout.scenes)
    ]
    return global_score, locals_


def csgt(image: np.ndarray, ground_truth: np.ndarray, embedder: Embedder) -> float:
    return cosine(embedder.embed_image(image), embedder.embed_image(ground_truth))


@dataclass
class MetricReport:
    lgis: float
    gev: float
    ea: float | None
    global_clip: float
    local_clip: list[float]
    csgt: float | None = None

    @property
    def mean_local_clip(self) -> float:
        return float(np.mean(self.local_clip))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def evaluate(
    image: np.ndarray,
    layout: Layout,
    embedder: Embedder,
    ground_truth: np.ndarray | None = None,
    scorer: AestheticScorer = seam_smoothness,
    strip_width: int = 64,
) -> MetricReport:
    rects = scene_rects(layout, image.shape[:2])
    global_clip, local_clip = clip_scores(image, layout, embedder)
    return MetricReport(
        lgis=lgis(image, rects, embedder),
        gev=gev(image, rects, embedder),
        ea=edge_aesthetics(image, rects, scorer, strip_width),
        global_clip=global_clip,
        local_clip=local_clip,
        csgt=None if ground_truth is None else csgt(image, ground_truth, embedder),
    )
