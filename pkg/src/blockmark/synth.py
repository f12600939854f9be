"""Procedural photo-like test images.

Generates colour images mixing smooth gradients, band-limited texture of
spatially varying strength, and a few geometric shapes, with intensities
kept away from 0/255 so embedding rarely clamps. Useful as a reproducible
stand-in for a personal photo directory when benchmarking.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter, zoom

from .images import save_png

DEFAULT_SIZES = (
    (480, 672),
    (672, 480),
    (576, 576),
    (576, 768),
    (768, 576),
    (672, 672),
)


def _smooth_values(rng, shape, values, sigma):
    cells = values.shape
    fy = shape[0] / cells[0]
    fx = shape[1] / cells[1]
    field = zoom(values, (fy, fx), order=1)[: shape[0], : shape[1]]
    if field.shape != tuple(shape):
        field = np.pad(
            field,
            ((0, shape[0] - field.shape[0]), (0, shape[1] - field.shape[1])),
            mode="edge",
        )
    return gaussian_filter(field, sigma)


def _smooth_field(rng, shape, cells, lo, hi, sigma):
    return _smooth_values(rng, shape, rng.uniform(lo, hi, size=(cells, cells)), sigma)


def synth_image(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """One (height, width, 3) uint8 image."""
    shape = (height, width)
    img = np.zeros((height, width, 3))

    # Base luminance built from bimodal cells (dark / bright regions) plus a
    # per-channel colour cast, giving block means that span many intensity
    # levels and differ between channels the way photographs do.
    base_cells = int(rng.integers(6, 13))
    dark = rng.uniform(32, 98, size=(base_cells, base_cells))
    bright = rng.uniform(155, 222, size=(base_cells, base_cells))
    luma_cells = np.where(rng.random((base_cells, base_cells)) < 0.5, dark, bright)
    cast = rng.permutation([-40.0, 0.0, 40.0]) + rng.uniform(-14, 14, size=3)
    for ch in range(3):
        jitter = rng.uniform(-22, 22, size=(base_cells, base_cells))
        img[:, :, ch] = _smooth_values(rng, shape, luma_cells + jitter, sigma=5) + cast[ch]

    # Multi-octave texture with spatially varying amplitude: photos carry
    # structure at every scale, which keeps patch means well spread; the
    # amplitude field leaves some regions nearly flat so block entropies
    # vary widely. Texture is damped near the intensity extremes so the
    # byte range rarely clips.
    amp = _smooth_field(rng, shape, int(rng.integers(2, 5)), -0.3, 1.3, sigma=15)
    amp = np.clip(amp, 0.04, 1.0)
    octaves = [
        (rng.uniform(0.7, 1.6), rng.uniform(8, 16)),
        (rng.uniform(3.0, 5.0), rng.uniform(16, 30)),
        (rng.uniform(8.0, 16.0), rng.uniform(36, 56)),
    ]
    luma = img @ np.array([0.299, 0.587, 0.114])
    headroom = np.clip(1.35 - np.abs(luma - 128.0) / 95.0, 0.15, 1.0)
    for ch in range(3):
        texture = np.zeros(shape)
        for smooth_sigma, strength in octaves:
            layer = gaussian_filter(rng.normal(0, 1, shape), smooth_sigma)
            texture += layer * (strength / max(layer.std(), 1e-9))
        img[:, :, ch] += amp * headroom * texture

    # Rectangles and discs, some blended, some opaque with hard edges; plus
    # a few thin high-contrast bars. Hard edges give the long flat runs of
    # intermediate patch means that real photos are full of.
    for _ in range(int(rng.integers(3, 8))):
        colour = rng.uniform(40, 215, size=3)
        a = 1.0 if rng.random() < 0.5 else 0.45
        if rng.random() < 0.5:
            y0 = int(rng.integers(0, height))
            x0 = int(rng.integers(0, width))
            y1 = min(height, y0 + int(rng.integers(20, height // 2 + 21)))
            x1 = min(width, x0 + int(rng.integers(20, width // 2 + 21)))
            img[y0:y1, x0:x1] = (1 - a) * img[y0:y1, x0:x1] + a * colour
        else:
            cy = rng.uniform(0, height)
            cx = rng.uniform(0, width)
            rad = rng.uniform(15, min(height, width) / 4)
            yy, xx = np.ogrid[:height, :width]
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= rad**2
            img[mask] = (1 - a) * img[mask] + a * colour
    for _ in range(int(rng.integers(2, 6))):
        colour = rng.uniform(25, 230, size=3)
        thick = int(rng.integers(6, 26))
        if rng.random() < 0.5:
            y0 = int(rng.integers(0, max(1, height - thick)))
            x0 = int(rng.integers(0, width // 2))
            x1 = min(width, x0 + int(rng.integers(60, width)))
            img[y0 : y0 + thick, x0:x1] = colour
        else:
            x0 = int(rng.integers(0, max(1, width - thick)))
            y0 = int(rng.integers(0, height // 2))
            y1 = min(height, y0 + int(rng.integers(60, height)))
            img[y0:y1, x0 : x0 + thick] = colour

    img += rng.normal(0, 2.0, img.shape)
    return np.clip(np.rint(img), 8, 247).astype(np.uint8)


def make_corpus(out_dir, count: int, rng_seed: int = 0, sizes=DEFAULT_SIZES) -> list[Path]:
    """Write ``count`` synthetic PNGs into ``out_dir``; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(rng_seed)
    paths = []
    for i in range(count):
        h, w = sizes[int(rng.integers(0, len(sizes)))]
        img = synth_image(rng, h, w)
        path = out_dir / f"synth_{i:04d}.png"
        save_png(img, path)
        paths.append(path)
    return paths
