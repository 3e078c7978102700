import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import cos, crop_rows, population_variance_mean, thumbnail, toy_image_vec
from scrollgen.errors import DimensionError
from scrollgen.metrics import (
    MetricReport,
    ToyEmbedder,
    clip_scores,
    cosine,
    csgt,
    edge_aesthetics,
    embedding_variance,
    evaluate,
    gev,
    lgis,
    scene_rects,
    seam_smoothness,
)
from scrollgen.types import Layout, WindowRect


class WidthEmbedder:
    """Returns a preset vector per image width; handy for crafting cosines."""

    dim = 3

    def __init__(self, table, text=None):
        self.table = table
        self.text = text or {}

    def embed_image(self, image):
        return np.asarray(self.table[image.shape[1]], dtype=float)

    def embed_text(self, text):
        return np.asarray(self.text[text], dtype=float)


def strip_layout(*edges):
    return Layout.from_dict(
        {
            "aspect": 4,
            "background": {"prompt": "bg"},
            "scenes": [{"box": [a, 0, b, 1], "prompt": f"p{i}"} for i, (a, b) in enumerate(zip(edges, edges[1:]))],
            "objects": [],
        }
    )


def random_instance(seed):
    rng = np.random.default_rng(seed)
    h, w = int(rng.integers(8, 24)), int(rng.integers(16, 64))
    image = rng.uniform(-1, 1, (h, w, 3))
    n = int(rng.integers(1, 5))
    cuts = np.sort(rng.choice(np.arange(1, 16), size=n - 1, replace=False)) / 16 if n > 1 else []
    layout = strip_layout(0.0, *[float(c) for c in cuts], 1.0)
    return image, layout


def oracle_crops(image, layout):
    rows = image.tolist()
    return [crop_rows(rows, r.top, r.left, r.height, r.width) for r in scene_rects(layout, image.shape[:2])]


def test_lgis_single_whole_scene_is_one():
    image = np.random.default_rng(0).uniform(-1, 1, (16, 64, 3))
    assert lgis(image, [WindowRect(0, 0, 16, 64)], ToyEmbedder()) == pytest.approx(1.0)


def test_lgis_orthogonal_and_mean():
    image = np.zeros((4, 10, 3))
    rects = [WindowRect(0, 0, 4, 4), WindowRect(0, 4, 4, 6)]
    ortho = WidthEmbedder({10: [1, 0, 0], 4: [0, 1, 0], 6: [0, 0, 1]})
    assert lgis(image, rects, ortho) == 0.0
    mixed = WidthEmbedder({10: [1, 0, 0], 4: [0.8, 0.6, 0], 6: [0.4, math.sqrt(1 - 0.16), 0]})
    assert lgis(image, rects, mixed) == pytest.approx(0.6, abs=1e-12)


def test_lgis_empty_crop_is_dimension_error():
    with pytest.raises(DimensionError):
        lgis(np.zeros((4, 10, 3)), [WindowRect(0, 10, 4, 2)], ToyEmbedder())


def test_gev_examples():
    e = np.array([0.6, 0.8, 0.0, 0.0])
    assert embedding_variance([e, e, e]) == 0.0
    assert embedding_variance([e, -e]) == pytest.approx(1 / 4, abs=1e-15)
    assert embedding_variance([e]) == 0.0


def test_gev_permutation_invariant():
    rng = np.random.default_rng(1)
    vecs = [rng.standard_normal(8) for _ in range(5)]
    assert embedding_variance(vecs) == pytest.approx(embedding_variance(vecs[::-1]), abs=1e-15)


def test_seam_proxy_examples():
    assert seam_smoothness(np.full((8, 64, 3), 0.3)) == 10.0
    step = np.zeros((8, 64, 3))
    step[:, 32:] = 1.0
    assert seam_smoothness(step) == pytest.approx(10 * math.exp(-1), abs=1e-12)


def test_edge_aesthetics_examples():
    image = np.zeros((16, 256, 3))
    image[:, 128:] = 1.0
    rects = [WindowRect(0, 0, 16, 128), WindowRect(0, 128, 16, 128)]
    assert edge_aesthetics(image, rects) == pytest.approx(10 * math.exp(-1))
    assert edge_aesthetics(np.zeros((16, 256, 3)), rects) == 10.0
    assert edge_aesthetics(image, rects[:1]) is None
    three = [WindowRect(0, 0, 16, 64), WindowRect(0, 64, 16, 128), WindowRect(0, 192, 16, 64)]
    scores = iter([2.0, 5.0])
    assert edge_aesthetics(image, three, lambda strip, seam: next(scores)) == 3.5


def test_edge_aesthetics_strip_is_centred_on_boundary():
    seen = []
    rects = [WindowRect(0, 0, 4, 100), WindowRect(0, 100, 4, 156)]
    edge_aesthetics(np.zeros((4, 256, 3)), rects, lambda strip, seam: seen.append((strip.shape[1], seam)) or 1.0)
    assert seen == [(64, 32)]


def test_clip_score_extremes():
    image = np.zeros((4, 10, 3))
    layout = strip_layout(0.0, 1.0)
    same = WidthEmbedder({10: [0, 1, 0]}, {"p0": [0, 1, 0]})
    assert clip_scores(image, layout, same) == (pytest.approx(100.0), [pytest.approx(100.0)])
    ortho = WidthEmbedder({10: [0, 1, 0]}, {"p0": [1, 0, 0]})
    assert clip_scores(image, layout, ortho) == (0.0, [0.0])


def test_global_clip_uses_joined_prompts():
    image = np.random.default_rng(2).uniform(-1, 1, (8, 32, 3))
    emb = ToyEmbedder()
    g, _ = clip_scores(image, strip_layout(0, 0.5, 1), emb)
    assert g == pytest.approx(100 * cosine(emb.embed_image(image), emb.embed_text("p0, p1")), abs=1e-12)


def test_csgt_self_and_mirror():
    image = np.random.default_rng(3).uniform(-1, 1, (16, 48, 3))
    emb = ToyEmbedder()
    assert csgt(image, image, emb) == pytest.approx(1.0, abs=1e-12)
    mirror = image[:, ::-1]
    gray = image.mean(axis=2).tolist()
    gray_m = mirror.mean(axis=2).tolist()
    assert csgt(image, mirror, emb) == pytest.approx(cos(thumbnail(gray), thumbnail(gray_m)), abs=1e-9)


def test_csgt_orthogonal():
    emb = WidthEmbedder({3: [1, 0, 0], 5: [0, 0, 1]})
    assert csgt(np.zeros((2, 3, 3)), np.zeros((2, 5, 3)), emb) == 0.0


def test_toy_embedder_contract():
    emb = ToyEmbedder()
    a = emb.embed_text("a quiet harbor")
    assert a.shape == (64,) and np.linalg.norm(a) == pytest.approx(1.0)
    assert np.array_equal(a, emb.embed_text("a quiet harbor"))
    assert not np.allclose(a, emb.embed_text("a quiet harbour"))
    img = emb.embed_image(np.random.default_rng(0).uniform(-1, 1, (5, 300, 3)))
    assert img.shape == (64,) and np.linalg.norm(img) == pytest.approx(1.0)
    flat = emb.embed_image(np.zeros((8, 8, 3)))
    assert np.linalg.norm(flat) == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(25))
def test_metrics_match_bruteforce(seed):
    image, layout = random_instance(seed)
    emb = ToyEmbedder()
    whole = toy_image_vec(image.tolist())
    crops = [toy_image_vec(c) for c in oracle_crops(image, layout)]
    rects = scene_rects(layout, image.shape[:2])
    assert lgis(image, rects, emb) == pytest.approx(sum(cos(c, whole) for c in crops) / len(crops), abs=1e-9)
    assert gev(image, rects, emb) == pytest.approx(population_variance_mean([whole] + crops), abs=1e-9)
    g, locs = clip_scores(image, layout, emb)
    texts = [emb.embed_text(s.prompt).tolist() for s in layout.scenes]
    joined = emb.embed_text(", ".join(s.prompt for s in layout.scenes)).tolist()
    assert g == pytest.approx(100 * cos(whole, joined), abs=1e-9)
    assert locs == pytest.approx([100 * cos(c, t) for c, t in zip(crops, texts)], abs=1e-9)


class ScaledEmbedder(ToyEmbedder):
    def __init__(self, factor):
        self.factor = factor

    def embed_image(self, image):
        return super().embed_image(image) * self.factor

    def embed_text(self, text):
        return super().embed_text(text) * self.factor


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100))
def test_cosine_metrics_scale_invariant(seed, factor):
    image, layout = random_instance(seed)
    base, scaled = ToyEmbedder(), ScaledEmbedder(factor)
    rects = scene_rects(layout, image.shape[:2])
    assert lgis(image, rects, scaled) == pytest.approx(lgis(image, rects, base), abs=1e-9)
    assert clip_scores(image, layout, scaled)[1] == pytest.approx(clip_scores(image, layout, base)[1], abs=1e-7)
    assert csgt(image, image[::-1], scaled) == pytest.approx(csgt(image, image[::-1], base), abs=1e-9)


def test_gev_scene_order_invariant():
    image, layout = random_instance(7)
    rects = scene_rects(layout, image.shape[:2])
    emb = ToyEmbedder()
    assert gev(image, rects[::-1], emb) == pytest.approx(gev(image, rects, emb), abs=1e-15)


def test_report_json_keys():
    image, layout = random_instance(4)
    report = evaluate(image, layout, ToyEmbedder(), ground_truth=image)
    assert set(report.to_dict()) == {"lgis", "gev", "ea", "global_clip", "local_clip", "csgt"}
    assert report.csgt == pytest.approx(1.0)
    assert -1 <= report.lgis <= 1 and report.gev >= 0
    assert isinstance(MetricReport(**report.to_dict()).mean_local_clip, float)
    single = evaluate(image, strip_layout(0, 1), ToyEmbedder())
    assert single.ea is None and single.csgt is None and '"ea": null' in single.to_json()
