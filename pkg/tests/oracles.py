"""Slow, loop-based reference implementations used only as test oracles.

Nothing here imports the code under test beyond plain data types.
"""

from __future__ import annotations

import math


def profile_value(kind, idx, n, margin, sigma):
    if kind == "gaussian":
        center = (n - 1) / 2.0
        peak = max(math.exp(-((k - center) ** 2) / (2 * sigma * sigma)) for k in range(n))
        return math.exp(-((idx - center) ** 2) / (2 * sigma * sigma)) / peak
    if margin == 0:
        return 1.0
    d = min(idx, n - 1 - idx)
    if kind == "linear":
        return min(d / margin, 1.0)
    if d <= margin:
        return 0.5 * (1 - math.cos(math.pi * d / margin))
    return 1.0


def cell_weight(kind, r, c, h, w, margin, sigma, floor):
    return max(floor, profile_value(kind, r, h, margin, sigma) * profile_value(kind, c, w, margin, sigma))


def fuse_bruteforce(dims, windows, tiles, kind, margin, sigma, floor):
    """windows: list of (top, left, h, w); tiles: nested lists or arrays [r][c][ch]."""
    rows, cols = dims
    channels = len(tiles[0][0][0])
    out = [[[0.0] * channels for _ in range(cols)] for _ in range(rows)]
    for r in range(rows):
        for c in range(cols):
            total = 0.0
            acc = [0.0] * channels
            for (top, left, h, w), tile in zip(windows, tiles):
                if top <= r < top + h and left <= c < left + w:
                    wt = cell_weight(kind, r - top, c - left, h, w, margin, sigma, floor)
                    total += wt
                    for ch in range(channels):
                        acc[ch] += wt * float(tile[r - top][c - left][ch])
            assert total > 0
            out[r][c] = [a / total for a in acc]
    return out


def enumerate_origins(extent, size, stride):
    """Every origin a*stride inside the canvas, plus the flush origin if missing."""
    origins = []
    a = 0
    while a * stride + size <= extent:
        origins.append(a * stride)
        a += 1
    if extent - size not in origins:
        origins.append(extent - size)
    return origins


def reference_layer(t, total, fg_fraction, k, window, objects, scenes, theta):
    """Independent statement of the layer rules.

    window/objects/scenes are (top, left, h, w) tuples in latent cells.
    """
    def inter(a, b):
        h = min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0])
        w = min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1])
        return max(0, h) * max(0, w)

    if k is not None and (t + 1) % k == 0:
        return ("bg", None)
    if t * 1.0 / total < fg_fraction:
        cands = []
        for j, o in enumerate(objects):
            a = inter(o, window)
            if a > 0 and a / (o[2] * o[3]) >= theta:
                cands.append((-a, j))
        if cands:
            return ("fg", min(cands)[1])
    best = min((-inter(s, window), i) for i, s in enumerate(scenes))
    return ("mg", best[1])


def thumbnail(gray, size=8):
    rows, cols = len(gray), len(gray[0])
    out = []
    for i in range(size):
        r0 = (i * rows) // size
        r1 = max((i + 1) * rows // size, r0 + 1)
        for j in range(size):
            c0 = (j * cols) // size
            c1 = max((j + 1) * cols // size, c0 + 1)
            vals = [gray[r][c] for r in range(r0, r1) for c in range(c0, c1)]
            out.append(sum(vals) / len(vals))
    return out


def cos(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    return dot / (na * nb)


def population_variance_mean(vectors):
    n = len(vectors)
    dim = len(vectors[0])
    total = 0.0
    for d in range(dim):
        mean = sum(v[d] for v in vectors) / n
        total += sum((v[d] - mean) ** 2 for v in vectors) / n
    return total / dim


def random_malformed_layout(rng):
    """A schema-valid layout dict with gaps, overlaps, out-of-range and orphan boxes."""
    n = int(rng.integers(1, 7))
    scenes = []
    for i in range(n):
        x0 = float(rng.uniform(-0.2, 0.95))
        # Out of range is fine, but keep some width on the canvas.
        x1 = max(x0 + float(rng.uniform(0.01, 0.6)), 0.05)
        y0, y1 = float(rng.uniform(-0.1, 0.3)), float(rng.uniform(0.6, 1.2))
        box = [x0, y0, x1, y1]
        if rng.random() < 0.1:
            box = [x1, y0, x0, y1]
        scenes.append({"box": box, "prompt": f"scene {i}"})
    objects = []
    for j in range(int(rng.integers(0, 5))):
        x0, y0 = float(rng.uniform(-0.1, 1.0)), float(rng.uniform(0, 0.9))
        box = [x0, y0, x0 + float(rng.uniform(0.01, 0.3)), y0 + float(rng.uniform(0.01, 0.3))]
        if rng.random() < 0.2:
            box = [1.5, 0.2, 1.8, 0.4]
        objects.append({"box": box, "prompt": f"object {j}", "scene": int(rng.integers(-1, n + 1))})
    return {"aspect": 4, "background": {"prompt": "style"}, "scenes": scenes, "objects": objects}


def layout_invariants_hold(d, tol=1e-9):
    """Check a layout dict by hand: ordering, full tiling, object-parent overlap."""
    scenes = d["scenes"]
    if not scenes:
        return False
    for s in scenes:
        x0, y0, x1, y1 = s["box"]
        if not (0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1):
            return False
    centers = [(s["box"][0] + s["box"][2]) / 2 for s in scenes]
    if centers != sorted(centers):
        return False
    reach = 0.0
    for x0, x1 in sorted((s["box"][0], s["box"][2]) for s in scenes):
        if x0 > reach + tol:
            return False
        reach = max(reach, x1)
    if reach < 1 - tol:
        return False
    for o in d["objects"]:
        if not 0 <= o["scene"] < len(scenes):
            return False
        a, b = o["box"], scenes[o["scene"]]["box"]
        if min(a[2], b[2]) <= max(a[0], b[0]) or min(a[3], b[3]) <= max(a[1], b[1]):
            return False
    return True


def toy_image_vec(image, dim=64, size=8):
    """Grayscale 8x8 thumbnail of a nested-list or array image, padded and unit-normalised."""
    rows, cols = len(image), len(image[0])
    gray = [[sum(float(v) for v in image[r][c]) / len(image[r][c]) for c in range(cols)] for r in range(rows)]
    vec = thumbnail(gray, size) + [0.0] * (dim - size * size)
    norm = math.sqrt(sum(v * v for v in vec))
    if norm < 1e-12:
        return [1.0 / math.sqrt(dim)] * dim
    return [v / norm for v in vec]


def crop_rows(image, top, left, height, width):
    return [row[left : left + width] for row in image[top : top + height]]
