"""8-bit image handling: decode/encode, channel planes, block grids, quantisation.

The canonical in-memory form is an (h, w, c) uint8 array with c in {1, 3}.
Alpha channels are stripped at decode time.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image


class EmptyGridError(ValueError):
    """No complete block fits the plane at the requested offset."""


def load_image(path) -> np.ndarray:
    """Decode a PNG/JPEG file into an (h, w, c) uint8 array, c in {1, 3}."""
    with Image.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.uint8)[:, :, None]
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return arr


def to_pil(img: np.ndarray) -> Image.Image:
    img = np.ascontiguousarray(img)
    if img.ndim == 3 and img.shape[2] == 1:
        return Image.fromarray(img[:, :, 0], mode="L")
    return Image.fromarray(img, mode="RGB")


def save_png(img: np.ndarray, path) -> None:
    to_pil(img).save(path, format="PNG")


def save_jpeg(img: np.ndarray, path, quality: int = 90) -> None:
    to_pil(img).save(path, format="JPEG", quality=quality)


def encode_jpeg_bytes(img: np.ndarray, quality: int) -> bytes:
    buf = io.BytesIO()
    to_pil(img).save(buf, format="JPEG", quality=quality)
    return buf.getvalue()


def decode_image_bytes(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        if im.mode == "L":
            return np.asarray(im, dtype=np.uint8)[:, :, None]
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def split_channels(img: np.ndarray) -> list[np.ndarray]:
    """Return one 2-D plane per channel (views, not copies)."""
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected (h, w, c) with c in {{1, 3}}, got shape {img.shape}")
    return [img[:, :, k] for k in range(img.shape[2])]


def merge_channels(planes) -> np.ndarray:
    return np.stack(planes, axis=-1)


@dataclass(frozen=True)
class BlockGrid:
    """Grid of complete non-overlapping m x m blocks over a channel plane.

    ``offset`` shifts the grid origin; it is (0, 0) except during the
    crop-resilient offset search. Partial edge blocks are excluded.
    """

    block_size: int
    rows: int
    cols: int
    offset: tuple[int, int] = (0, 0)

    @classmethod
    def for_shape(cls, shape, block_size: int, offset=(0, 0)) -> "BlockGrid":
        h, w = shape[0], shape[1]
        dy, dx = offset
        if not (0 <= dy < block_size and 0 <= dx < block_size):
            raise ValueError(f"offset {offset} outside [0, {block_size})")
        rows = (h - dy) // block_size
        cols = (w - dx) // block_size
        if rows < 1 or cols < 1:
            raise EmptyGridError(
                f"no complete {block_size}x{block_size} block in {h}x{w} plane at offset {offset}"
            )
        return cls(block_size, rows, cols, (dy, dx))


def block_iter(plane: np.ndarray, grid: BlockGrid):
    """Yield (row, col, block_view) over complete blocks in row-major order."""
    m = grid.block_size
    dy, dx = grid.offset
    for i in range(grid.rows):
        for j in range(grid.cols):
            y = dy + i * m
            x = dx + j * m
            yield i, j, plane[y : y + m, x : x + m]


def covered_region(plane: np.ndarray, grid: BlockGrid) -> np.ndarray:
    """View of the plane area covered by complete blocks."""
    m = grid.block_size
    dy, dx = grid.offset
    return plane[dy : dy + grid.rows * m, dx : dx + grid.cols * m]


def quantize_pixels(block: np.ndarray) -> tuple[np.ndarray, int]:
    """Round to nearest integer and clamp to [0, 255]; returns (uint8, clamp count)."""
    rounded = np.rint(block)
    clamped = int(np.count_nonzero((rounded < 0.0) | (rounded > 255.0)))
    return np.clip(rounded, 0.0, 255.0).astype(np.uint8), clamped


def block_mean(block: np.ndarray) -> float:
    return float(np.mean(block))
