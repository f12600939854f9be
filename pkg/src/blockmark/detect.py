"""Watermark detection: per-block counts, hypothesis tests, maps, crop search.

Detection never recomputes full pyramids: for the orthonormal Haar cascade
the level-d approximation coefficient equals (patch sum) / 2**d, which for
8-bit input is integer-exact and bit-identical to the per-sub-block
transform. The whole image therefore reduces to patch sums + table lookups,
which is what makes the brute-force offset search tractable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm

from .embed import entropy_gate
from .images import BlockGrid, EmptyGridError, covered_region, split_channels
from .keying import KeySet, Partition
from .params import WatermarkParams
from .wavelet import dwt2_multilevel

RED = 0
GREEN = 1
SKIPPED = -1

DEFAULT_TAU = 0.37


def hypothesis_threshold(n_coeffs: int, alpha: float) -> int:
    """Smallest green count rejecting the 50%-violation null at level alpha.

    Normal approximation of Binomial(N, 1/2) without continuity correction,
    ceiled to an integer; reject when count >= threshold.
    """
    if n_coeffs < 1:
        raise ValueError("n_coeffs must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    z = norm.ppf(1.0 - alpha)
    return int(math.ceil(z / 2.0 * math.sqrt(n_coeffs) + n_coeffs / 2.0))


@dataclass
class DetectionMap:
    """Block-resolution grid of GREEN / RED / SKIPPED cells."""

    cells: np.ndarray  # int8 (rows, cols)
    block_size: int
    offset: tuple[int, int] = (0, 0)

    @property
    def shape(self):
        return self.cells.shape


@dataclass
class ScoreGrid:
    """Per-block green counts: (num_keys, n_channels, rows, cols).

    ``valid`` is False where entropy gating excluded the (channel, block)
    pair; gated channels are left out of a block's channel-mean statistic.
    """

    counts: np.ndarray
    valid: np.ndarray  # (n_channels, rows, cols) bool
    coeffs_per_block: int
    block_size: int
    offset: tuple[int, int] = (0, 0)

    def mean_counts(self, key_index: int = 0) -> np.ndarray:
        """Channel-mean count per block (NaN where every channel is gated)."""
        counts = self.counts[key_index].astype(np.float64)
        n_valid = self.valid.sum(axis=0)
        total = np.where(self.valid, counts, 0.0).sum(axis=0)
        with np.errstate(invalid="ignore"):
            return np.where(n_valid > 0, total / np.maximum(n_valid, 1), np.nan)


@dataclass
class DetectionResult:
    score: float
    decision: bool
    tau: float
    map: DetectionMap
    raw_map: DetectionMap
    per_block_pvalues: np.ndarray
    score_grid: ScoreGrid
    crop_offset: tuple[int, int] | None = None
    offsets_tested: int = 1

    def to_dict(self) -> dict:
        out = {
            "score": self.score,
            "decision": bool(self.decision),
            "tau": self.tau,
            "offsets_tested": self.offsets_tested,
        }
        if self.crop_offset is not None:
            out["crop_offset"] = list(self.crop_offset)
        return out


@dataclass
class CropSearchConfig:
    """Brute-force grid-offset search configuration.

    strategy: "max-score" (full sweep, best offset wins), "fixed-threshold"
    (stop at the first offset whose score reaches ``stop_p``), or
    "proportion-test" (stop when a one-sided test that the green fraction
    exceeds 1/2 rejects at ``significance``).
    """

    strategy: str = "fixed-threshold"
    stop_p: float = 0.8
    significance: float = 0.05
    offset_stride: int = 1

    def __post_init__(self):
        if self.strategy not in ("max-score", "fixed-threshold", "proportion-test"):
            raise ValueError(f"unknown crop-search strategy {self.strategy!r}")
        if not 0.0 < self.stop_p <= 1.0:
            raise ValueError("stop_p must be in (0, 1]")
        if not 0.0 < self.significance < 1.0:
            raise ValueError("significance must be in (0, 1)")
        if self.offset_stride < 1:
            raise ValueError("offset_stride must be >= 1")


def _round_seeds(means: np.ndarray, round_val: int) -> np.ndarray:
    q = np.ceil(means / round_val - 0.5)
    q = np.minimum(q, 255 // round_val)
    return (q.astype(np.int64)) * round_val


class _PartitionBits:
    """Per-key stacks of colouring bits over the whole seed alphabet.

    Seeds are multiples of round_val in [0, 255], so the alphabet is tiny;
    precomputing one (n_seeds, n_intervals) stack per key turns per-block
    partition lookup into ``stack[seed // round_val]``.
    """

    def __init__(self, keyset: KeySet, params: WatermarkParams):
        self.keyset = keyset
        self.params = params
        self._stacks: dict[int, np.ndarray] = {}

    def stack(self, key_index: int) -> np.ndarray:
        item = self._stacks.get(key_index)
        if item is None:
            rv = self.params.round_val
            item = np.stack(
                [
                    self.keyset.partition(
                        key_index, seed, self.params.interval_len, self.params.range_bound
                    ).bits
                    for seed in range(0, (255 // rv) * rv + 1, rv)
                ]
            )
            self._stacks[key_index] = item
        return item


def _count_channel(idx, oob, seed_rows, stack, rows, cols, bpp) -> np.ndarray:
    patch_rows = np.repeat(np.repeat(seed_rows, bpp, axis=0), bpp, axis=1)
    green = oob | (stack[patch_rows, idx] == 1)
    return green.reshape(rows, bpp, cols, bpp).sum(axis=(1, 3), dtype=np.int32)


def detect_block(block: np.ndarray, seed: int, params: WatermarkParams, key: bytes) -> int:
    """Green-coefficient count of a single m x m channel block."""
    partition = Partition.build(key, seed, params.interval_len, params.range_bound)
    k = params.sub_block
    m = block.shape[0]
    nb = m // k
    subs = (
        np.asarray(block, dtype=np.float64)
        .reshape(nb, k, nb, k)
        .transpose(0, 2, 1, 3)
        .reshape(nb * nb, k, k)
    )
    ll = dwt2_multilevel(subs, params.dwt_levels).ll
    return int(partition.green_mask(ll.reshape(-1)).sum())


def detect_image(
    img: np.ndarray,
    params: WatermarkParams,
    keyset: KeySet,
    tau: float = DEFAULT_TAU,
    offset: tuple[int, int] = (0, 0),
    bits_cache: _PartitionBits | None = None,
) -> DetectionResult:
    """Run block-wise detection over the aligned grid at ``offset``.

    A block is marked GREEN when, for any key, the mean green count over
    its non-gated channels reaches the Bonferroni-corrected hypothesis
    threshold. The global score is the GREEN fraction of the raw
    (pre-post-processing) map over all grid cells; entropy-skipped cells
    count as non-green. The decision is score > tau.
    """
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected (h, w, c) image, got shape {img.shape}")
    m = params.block_size
    p = params.patch
    bpp = m // p
    grid = BlockGrid.for_shape(img.shape, m, offset)
    rows, cols = grid.rows, grid.cols
    n_ch = img.shape[2]
    n_keys = keyset.size
    n_coeffs = params.coeffs_per_block
    bits_cache = bits_cache or _PartitionBits(keyset, params)

    counts = np.zeros((n_keys, n_ch, rows, cols), dtype=np.int32)
    valid = np.ones((n_ch, rows, cols), dtype=bool)

    for ch, plane in enumerate(split_channels(img)):
        if params.entropy_adaptive:
            valid[ch] = entropy_gate(plane, grid, params.entropy_percentile)
        region = covered_region(plane, grid)
        patch_sums = region.reshape(rows * bpp, p, cols * bpp, p).sum(axis=(1, 3), dtype=np.int64)
        coeff = patch_sums / float(p)
        r = float(params.range_bound)
        oob = (coeff < -r) | (coeff >= r)
        idx = np.floor((coeff + r) / params.interval_len).astype(np.int64)
        np.clip(idx, 0, None, out=idx)
        block_sums = patch_sums.reshape(rows, bpp, cols, bpp).sum(axis=(1, 3))
        seeds = _round_seeds(block_sums / float(m * m), params.round_val)

        seed_rows = seeds // params.round_val
        for key_index in range(n_keys):
            stack = bits_cache.stack(key_index)
            safe_idx = np.minimum(idx, stack.shape[1] - 1)
            counts[key_index, ch] = _count_channel(
                safe_idx, oob, seed_rows, stack, rows, cols, bpp
            )

    sgrid = ScoreGrid(counts, valid, n_coeffs, m, tuple(offset))
    threshold = hypothesis_threshold(n_coeffs, params.alpha / n_keys)

    n_valid = valid.sum(axis=0)
    scored = n_valid > 0
    green_block = np.zeros((rows, cols), dtype=bool)
    pvals = np.full((rows, cols), np.nan)
    scale = math.sqrt(n_coeffs) / 2.0
    for key_index in range(n_keys):
        mean_counts = np.where(valid, counts[key_index], 0).sum(axis=0) / np.maximum(n_valid, 1)
        green_block |= scored & (mean_counts >= threshold)
        z = (mean_counts - n_coeffs / 2.0) / scale
        p_key = np.minimum(norm.sf(z) * n_keys, 1.0)
        pvals = np.where(scored, np.fmin(pvals, p_key), np.nan)

    cells = np.where(scored, np.where(green_block, GREEN, RED), SKIPPED).astype(np.int8)
    raw_map = DetectionMap(cells, m, tuple(offset))
    processed = post_process(raw_map)

    # The global score divides by every grid cell: a block the entropy
    # filter skipped contributes no green count, exactly as one whose test
    # failed. This keeps the threshold tau comparable between gated and
    # ungated runs and makes the scheme fragile where it should be.
    score = float(green_block.sum() / (rows * cols))
    return DetectionResult(
        score=score,
        decision=bool(score > tau),
        tau=tau,
        map=processed,
        raw_map=raw_map,
        per_block_pvalues=pvals,
        score_grid=sgrid,
    )


def post_process(dmap: DetectionMap) -> DetectionMap:
    """Single-pass low-pass filter for map readability.

    An interior GREEN cell whose non-skipped 8-neighbours are all RED (and
    at least one exists) flips to RED, and vice versa. Border cells and
    SKIPPED cells never flip; all decisions read the input map only, so
    flips do not cascade. The global score is always computed from the raw
    map, never from this one.
    """
    cells = dmap.cells
    rows, cols = cells.shape
    out = cells.copy()
    if rows < 3 or cols < 3:
        return DetectionMap(out, dmap.block_size, dmap.offset)

    padded = np.full((rows + 2, cols + 2), SKIPPED, dtype=np.int8)
    padded[1:-1, 1:-1] = cells
    n_green = np.zeros((rows, cols), dtype=np.int16)
    n_red = np.zeros((rows, cols), dtype=np.int16)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            nb = padded[1 + dy : 1 + dy + rows, 1 + dx : 1 + dx + cols]
            n_green += nb == GREEN
            n_red += nb == RED

    interior = np.zeros((rows, cols), dtype=bool)
    interior[1:-1, 1:-1] = True
    flip_to_red = interior & (cells == GREEN) & (n_green == 0) & (n_red >= 1)
    flip_to_green = interior & (cells == RED) & (n_red == 0) & (n_green >= 1)
    out[flip_to_red] = RED
    out[flip_to_green] = GREEN
    return DetectionMap(out, dmap.block_size, dmap.offset)


class _SweepChannel:
    """Per-channel per-residue lattices for the offset sweep."""

    __slots__ = ("idx", "oob", "prefix")

    def __init__(self, plane, params):
        p = params.patch
        h, w = plane.shape
        integral = np.zeros((h + 1, w + 1), dtype=np.int64)
        np.cumsum(plane, axis=0, dtype=np.int64, out=integral[1:, 1:])
        np.cumsum(integral[1:, 1:], axis=1, out=integral[1:, 1:])
        self.idx = {}
        self.oob = {}
        self.prefix = {}
        r = float(params.range_bound)
        for ry in range(p):
            ny = (h - ry) // p
            if ny < 1:
                continue
            ys = ry + p * np.arange(ny + 1)
            for rx in range(p):
                nx = (w - rx) // p
                if nx < 1:
                    continue
                xs = rx + p * np.arange(nx + 1)
                corners = integral[np.ix_(ys, xs)]
                sums = corners[1:, 1:] - corners[:-1, 1:] - corners[1:, :-1] + corners[:-1, :-1]
                coeff = sums / float(p)
                idx = np.floor((coeff + r) / params.interval_len).astype(np.int64)
                np.clip(idx, 0, None, out=idx)
                self.idx[(ry, rx)] = idx
                self.oob[(ry, rx)] = (coeff < -r) | (coeff >= r)
                pre = np.zeros((ny + 1, nx + 1), dtype=np.int64)
                np.cumsum(sums, axis=0, out=pre[1:, 1:])
                np.cumsum(pre[1:, 1:], axis=1, out=pre[1:, 1:])
                self.prefix[(ry, rx)] = pre


def _sweep_score(channels, img_shape, params, keyset, bits_cache, threshold, dy, dx):
    """Green-block fraction at a single grid offset (no entropy gating)."""
    m = params.block_size
    p = params.patch
    bpp = m // p
    h, w = img_shape[:2]
    rows = (h - dy) // m
    cols = (w - dx) // m
    if rows < 1 or cols < 1:
        return None
    ry, qy = dy % p, dy // p
    rx, qx = dx % p, dx // p
    n_keys = keyset.size

    per_key = [None] * n_keys
    for sweep in channels:
        key = (ry, rx)
        idx = sweep.idx[key][qy : qy + rows * bpp, qx : qx + cols * bpp]
        oob = sweep.oob[key][qy : qy + rows * bpp, qx : qx + cols * bpp]
        pre = sweep.prefix[key]
        ys = qy + bpp * np.arange(rows + 1)
        xs = qx + bpp * np.arange(cols + 1)
        corners = pre[np.ix_(ys, xs)]
        block_sums = corners[1:, 1:] - corners[:-1, 1:] - corners[1:, :-1] + corners[:-1, :-1]
        seeds = _round_seeds(block_sums / float(m * m), params.round_val)
        seed_rows = seeds // params.round_val
        for key_index in range(n_keys):
            stack = bits_cache.stack(key_index)
            safe_idx = np.minimum(idx, stack.shape[1] - 1)
            counts = _count_channel(safe_idx, oob, seed_rows, stack, rows, cols, bpp)
            if per_key[key_index] is None:
                per_key[key_index] = counts.astype(np.float64)
            else:
                per_key[key_index] += counts

    n_ch = len(channels)
    green = np.zeros((rows, cols), dtype=bool)
    for key_index in range(n_keys):
        green |= (per_key[key_index] / n_ch) >= threshold
    n_blocks = rows * cols
    return int(green.sum()), n_blocks


def crop_search(
    img: np.ndarray,
    params: WatermarkParams,
    keyset: KeySet,
    cfg: CropSearchConfig | None = None,
    tau: float = DEFAULT_TAU,
) -> DetectionResult:
    """Brute-force sweep over grid offsets (dy, dx) in [0, m)^2, row-major.

    Early-stopping strategies return the stopping offset's detection result
    with the decision reflecting whether the stop criterion was met; the
    max-score strategy sweeps every offset and applies the tau threshold at
    the best one. Ties go to the first offset in sweep order.
    """
    cfg = cfg or CropSearchConfig()
    m = params.block_size
    stride = cfg.offset_stride
    bits_cache = _PartitionBits(keyset, params)

    offsets = [(dy, dx) for dy in range(0, m, stride) for dx in range(0, m, stride)]
    sig_z = norm.ppf(1.0 - cfg.significance)
    threshold = hypothesis_threshold(params.coeffs_per_block, params.alpha / keyset.size)

    channels = None
    if not params.entropy_adaptive:
        channels = [_SweepChannel(plane, params) for plane in split_channels(img)]

    best = None  # (score, dy, dx)
    tested = 0
    stopped_at = None
    any_grid = False
    for dy, dx in offsets:
        if channels is not None:
            got = _sweep_score(
                channels, img.shape, params, keyset, bits_cache, threshold, dy, dx
            )
            if got is None:
                continue
            n_green, n_blocks = got
            score = n_green / n_blocks
        else:
            try:
                res = detect_image(img, params, keyset, tau, (dy, dx), bits_cache=bits_cache)
            except EmptyGridError:
                continue
            raw = res.raw_map.cells
            n_green = int((raw == GREEN).sum())
            n_blocks = int(raw.size)
            score = res.score
        any_grid = True
        tested += 1
        if best is None or score > best[0]:
            best = (score, dy, dx)
        if cfg.strategy == "fixed-threshold" and score >= cfg.stop_p:
            stopped_at = (dy, dx)
            break
        if cfg.strategy == "proportion-test" and n_blocks > 0:
            z = (n_green - n_blocks / 2.0) / math.sqrt(n_blocks / 4.0)
            if z >= sig_z:
                stopped_at = (dy, dx)
                break

    if not any_grid:
        raise EmptyGridError("no complete block fits at any grid offset")

    chosen = stopped_at if stopped_at is not None else (best[1], best[2])
    result = detect_image(img, params, keyset, tau, chosen, bits_cache=bits_cache)
    if cfg.strategy == "max-score":
        decision = result.score > tau
    else:
        decision = stopped_at is not None
    return replace(
        result,
        decision=bool(decision),
        crop_offset=chosen,
        offsets_tested=tested,
    )


def render_map_overlay(
    img: np.ndarray,
    dmap: DetectionMap,
    tint_alpha: float = 0.35,
    grid_lines: bool = False,
) -> np.ndarray:
    """Blend the detection map over the image: GREEN/RED tints, SKIPPED clear."""
    out = np.array(img, dtype=np.float64, copy=True)
    if out.shape[2] == 1:
        out = np.repeat(out, 3, axis=2)
    m = dmap.block_size
    dy, dx = dmap.offset
    tints = {GREEN: np.array([0.0, 255.0, 0.0]), RED: np.array([255.0, 0.0, 0.0])}
    rows, cols = dmap.cells.shape
    for i in range(rows):
        for j in range(cols):
            cell = int(dmap.cells[i, j])
            if cell == SKIPPED:
                continue
            y, x = dy + i * m, dx + j * m
            patch = out[y : y + m, x : x + m]
            patch *= 1.0 - tint_alpha
            patch += tint_alpha * tints[cell]
    if grid_lines:
        for i in range(rows + 1):
            y = min(dy + i * m, out.shape[0] - 1)
            out[y, dx : dx + cols * m] = 0.0
        for j in range(cols + 1):
            x = min(dx + j * m, out.shape[1] - 1)
            out[dy : dy + rows * m, x] = 0.0
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
