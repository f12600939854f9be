"""Multi-level 2-D orthonormal Haar transform over square tiles.

Each level is a single 2x2 butterfly scaled by 1/2 (the combined
row+column orthonormal step), so the transform is exactly orthogonal and,
for integer inputs, all coefficients are dyadic rationals computed without
rounding error. A consequence used throughout the codebase: the level-d
approximation coefficient at position (i, j) equals 2**d times the mean of
the corresponding 2**d x 2**d input patch, exactly.

All entry points accept arbitrary leading batch axes: shape (..., n, n).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """A subband dimension is odd and cannot be split further."""


@dataclass
class CoeffPyramid:
    """Mallat pyramid: final approximation plus detail bands per level.

    ``details[i]`` holds the (lh, hl, hh) bands produced by level i+1, so
    details[0] is the finest scale and details[-1] matches ``ll``'s scale.
    """

    ll: np.ndarray
    details: list[tuple[np.ndarray, np.ndarray, np.ndarray]]

    @property
    def levels(self) -> int:
        return len(self.details)


def _split(x):
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    ll = (a + b + c + d) / 2.0
    lh = (a - b + c - d) / 2.0
    hl = (a + b - c - d) / 2.0
    hh = (a - b - c + d) / 2.0
    return ll, lh, hl, hh


def _merge(ll, lh, hl, hh):
    out = np.empty(ll.shape[:-2] + (ll.shape[-2] * 2, ll.shape[-1] * 2), dtype=np.float64)
    out[..., 0::2, 0::2] = (ll + lh + hl + hh) / 2.0
    out[..., 0::2, 1::2] = (ll - lh + hl - hh) / 2.0
    out[..., 1::2, 0::2] = (ll + lh - hl - hh) / 2.0
    out[..., 1::2, 1::2] = (ll - lh - hl + hh) / 2.0
    return out


def dwt2_multilevel(block: np.ndarray, levels: int) -> CoeffPyramid:
    """Decompose (..., n, n) into ``levels`` Mallat levels, recursing on LL only."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    x = np.asarray(block, dtype=np.float64)
    details = []
    for lvl in range(levels):
        if x.shape[-1] % 2 or x.shape[-2] % 2:
            raise DimensionError(
                f"subband of shape {x.shape[-2:]} at level {lvl + 1} has an odd dimension"
            )
        x, lh, hl, hh = _split(x)
        details.append((lh, hl, hh))
    return CoeffPyramid(ll=x, details=details)


def idwt2_multilevel(pyr: CoeffPyramid) -> np.ndarray:
    """Exact inverse of :func:`dwt2_multilevel`."""
    x = pyr.ll
    for lh, hl, hh in reversed(pyr.details):
        x = _merge(x, lh, hl, hh)
    return x


def set_ll_coefficients(pyr: CoeffPyramid, new_ll: np.ndarray) -> CoeffPyramid:
    """Pyramid with the final approximation replaced; detail bands are shared."""
    new_ll = np.asarray(new_ll, dtype=np.float64)
    if new_ll.shape != pyr.ll.shape:
        raise ValueError(f"LL shape mismatch: {new_ll.shape} != {pyr.ll.shape}")
    return CoeffPyramid(ll=new_ll, details=pyr.details)


def ll_from_patch_sums(patch_sums: np.ndarray, levels: int) -> np.ndarray:
    """Level-d approximation from per-patch pixel sums: sums / 2**levels."""
    return np.asarray(patch_sums, dtype=np.float64) / float(1 << levels)


def ll_multilevel(plane: np.ndarray, levels: int) -> np.ndarray:
    """Closed form of the level-d approximation over a full plane.

    Equivalent to tiling the plane into 2**levels patches and evaluating the
    butterfly cascade, but computed directly from patch sums. For integer
    input the result is bit-identical to :func:`dwt2_multilevel`'s ``ll``.
    """
    p = 1 << levels
    h, w = plane.shape[-2:]
    if h % p or w % p:
        raise DimensionError(f"plane {h}x{w} not divisible by 2**levels = {p}")
    x = np.asarray(plane, dtype=np.int64) if np.issubdtype(plane.dtype, np.integer) else plane
    sums = x.reshape(x.shape[:-2] + (h // p, p, w // p, p)).sum(axis=(-3, -1))
    return ll_from_patch_sums(sums, levels)
