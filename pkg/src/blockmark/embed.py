"""Watermark embedding: force low-frequency coefficients into green intervals.

Per channel block: derive the seed from the block mean, build the keyed
red/green partition, then for every sub-block move each red level-d
approximation coefficient to the centre of the nearest green interval
(within the configured search radius) and invert the transform. Blocks and
sub-blocks that need no perturbation are copied through byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .images import BlockGrid, block_iter, covered_region, quantize_pixels, split_channels
from .keying import KeySet, Partition, get_seed
from .params import WatermarkParams
from .wavelet import CoeffPyramid, dwt2_multilevel, idwt2_multilevel


def block_entropy(block: np.ndarray) -> float:
    """Shannon entropy (bits) of the 8-bit intensity histogram."""
    hist = np.bincount(np.asarray(block, dtype=np.uint8).ravel(), minlength=256)
    p = hist[hist > 0] / block.size
    return float(-(p * np.log2(p)).sum())


def block_entropies(plane: np.ndarray, grid: BlockGrid) -> np.ndarray:
    """Per-block Shannon entropies over the grid, vectorised."""
    m = grid.block_size
    rows, cols = grid.rows, grid.cols
    region = covered_region(plane, grid)
    blocks = region.reshape(rows, m, cols, m).transpose(0, 2, 1, 3).reshape(rows * cols, m * m)
    ids = np.repeat(np.arange(rows * cols, dtype=np.int64), m * m)
    hist = np.bincount(ids * 256 + blocks.ravel().astype(np.int64), minlength=rows * cols * 256)
    p = hist.reshape(rows * cols, 256) / (m * m)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log2(p), 0.0)
    return -terms.sum(axis=1).reshape(rows, cols)


def entropy_gate(plane: np.ndarray, grid: BlockGrid, percentile: float = 0.5) -> np.ndarray:
    """Per-block mask: True where entropy strictly exceeds the percentile
    threshold computed over this plane's blocks."""
    ent = block_entropies(plane, grid)
    tau_h = entropy_threshold(ent.ravel(), percentile)
    return ent > tau_h


def entropy_threshold(entropies, percentile: float = 0.5) -> float:
    """Order statistic used as the gating threshold (lower middle for even n)."""
    vals = sorted(float(v) for v in entropies)
    if not vals:
        raise ValueError("empty entropy sequence")
    idx = max(0, math.ceil(percentile * len(vals)) - 1)
    return vals[idx]


@dataclass
class EmbedReport:
    """Counters describing one embedding run."""

    blocks_embedded: int = 0
    blocks_skipped_entropy: int = 0
    coefficients_perturbed: int = 0
    coefficients_capped: int = 0
    coefficients_total: int = 0
    pixels_clamped: int = 0
    abs_coeff_shift_sum: float = 0.0

    @property
    def mean_abs_coeff_shift(self) -> float:
        if self.coefficients_perturbed == 0:
            return 0.0
        return self.abs_coeff_shift_sum / self.coefficients_perturbed

    def add(self, other: "EmbedReport") -> None:
        self.blocks_embedded += other.blocks_embedded
        self.blocks_skipped_entropy += other.blocks_skipped_entropy
        self.coefficients_perturbed += other.coefficients_perturbed
        self.coefficients_capped += other.coefficients_capped
        self.coefficients_total += other.coefficients_total
        self.pixels_clamped += other.pixels_clamped
        self.abs_coeff_shift_sum += other.abs_coeff_shift_sum

    def to_dict(self) -> dict:
        return {
            "blocks_embedded": self.blocks_embedded,
            "blocks_skipped_entropy": self.blocks_skipped_entropy,
            "coefficients_perturbed": self.coefficients_perturbed,
            "coefficients_capped": self.coefficients_capped,
            "coefficients_total": self.coefficients_total,
            "pixels_clamped": self.pixels_clamped,
            "mean_abs_coeff_shift": self.mean_abs_coeff_shift,
        }


def perturb_coefficients(ll_flat: np.ndarray, partition: Partition, max_intervals: int):
    """Project coefficients onto green intervals.

    Returns (new_values, perturbed_mask, capped_mask): red coefficients move
    to the centre of the nearest green interval; red coefficients with no
    green interval within ``max_intervals`` per side are capped (unchanged).
    """
    ll_flat = np.asarray(ll_flat, dtype=np.float64)
    green = partition.green_mask(ll_flat)
    red_idx = np.nonzero(~green)[0]
    new_vals = ll_flat.copy()
    perturbed = np.zeros(ll_flat.shape, dtype=bool)
    capped = np.zeros(ll_flat.shape, dtype=bool)
    if red_idx.size:
        targets, has = partition.green_targets(ll_flat[red_idx], max_intervals)
        moved = red_idx[has]
        new_vals[moved] = targets[has]
        perturbed[moved] = True
        capped[red_idx[~has]] = True
    return new_vals, perturbed, capped


def _to_subblocks(block: np.ndarray, k: int) -> np.ndarray:
    m = block.shape[0]
    nb = m // k
    return block.reshape(nb, k, nb, k).transpose(0, 2, 1, 3).reshape(nb * nb, k, k)


def _from_subblocks(subs: np.ndarray, m: int) -> np.ndarray:
    k = subs.shape[-1]
    nb = m // k
    return subs.reshape(nb, nb, k, k).transpose(0, 2, 1, 3).reshape(m, m)


def embed_block_float(block: np.ndarray, partition: Partition, params: WatermarkParams):
    """Embedding core without the final re-quantisation.

    Returns (sub_blocks_float, changed_sub_mask, report). ``sub_blocks_float``
    holds the real-valued watermarked sub-blocks (row-major over the
    sub-block grid); entries of unchanged sub-blocks are the originals.
    """
    k = params.sub_block
    subs = _to_subblocks(np.asarray(block, dtype=np.float64), k)
    pyr = dwt2_multilevel(subs, params.dwt_levels)
    ll_shape = pyr.ll.shape
    ll_flat = pyr.ll.reshape(-1)

    new_vals, perturbed, capped = perturb_coefficients(
        ll_flat, partition, params.max_perturb_intervals
    )

    report = EmbedReport(
        blocks_embedded=1,
        coefficients_perturbed=int(perturbed.sum()),
        coefficients_capped=int(capped.sum()),
        coefficients_total=int(ll_flat.size),
        abs_coeff_shift_sum=float(np.abs(new_vals - ll_flat)[perturbed].sum()),
    )

    n_sub = subs.shape[0]
    changed_sub = perturbed.reshape(n_sub, -1).any(axis=1)
    if not changed_sub.any():
        return subs, changed_sub, report

    # Reuse the forward pyramid's detail bands so they stay bit-identical.
    changed_pyr = CoeffPyramid(
        ll=new_vals.reshape(ll_shape)[changed_sub],
        details=[tuple(band[changed_sub] for band in lvl) for lvl in pyr.details],
    )
    out = subs.copy()
    out[changed_sub] = idwt2_multilevel(changed_pyr)
    return out, changed_sub, report


def embed_block_partitioned(block: np.ndarray, partition: Partition, params: WatermarkParams):
    """Embed one m x m channel block; returns (uint8 block, EmbedReport).

    Unchanged sub-blocks (and fully green blocks) are returned byte-identical;
    quantisation to [0, 255] happens once, on the reconstructed sub-blocks.
    """
    subs_float, changed_sub, report = embed_block_float(block, partition, params)
    if not changed_sub.any():
        return np.array(block, dtype=np.uint8, copy=True), report

    m = block.shape[0]
    k = params.sub_block
    out_subs = _to_subblocks(np.array(block, dtype=np.uint8, copy=True), k).copy()
    quantized, clamped = quantize_pixels(subs_float[changed_sub])
    out_subs[changed_sub] = quantized
    report.pixels_clamped += clamped
    return _from_subblocks(out_subs, m), report


def embed_block(block: np.ndarray, seed: int, params: WatermarkParams, key: bytes):
    """Single-block entry point: builds the (key, seed) partition and embeds."""
    partition = Partition.build(key, seed, params.interval_len, params.range_bound)
    return embed_block_partitioned(block, partition, params)


def embed_image(img: np.ndarray, params: WatermarkParams, keyset: KeySet):
    """Watermark every complete block of every channel; returns (image, report).

    With entropy gating enabled, only blocks whose entropy strictly exceeds
    the per-channel percentile threshold are embedded; everything else
    (including partial edge regions) passes through byte-identical.
    """
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected (h, w, c) uint8 image, got shape {img.shape}")
    grid = BlockGrid.for_shape(img.shape, params.block_size)

    out = np.array(img, dtype=np.uint8, copy=True)
    report = EmbedReport()
    partitions: dict[tuple[int, int], Partition] = {}
    m = params.block_size

    for plane_out, plane_in in zip(split_channels(out), split_channels(img)):
        gate = None
        if params.entropy_adaptive:
            gate = entropy_gate(plane_in, grid, params.entropy_percentile)
        for i, j, block in block_iter(plane_in, grid):
            if gate is not None and not gate[i, j]:
                report.blocks_skipped_entropy += 1
                continue
            key_index = keyset.select_key(i, j)
            seed = get_seed(block, params.round_val)
            cache_key = (key_index, seed)
            partition = partitions.get(cache_key)
            if partition is None:
                partition = keyset.partition(
                    key_index, seed, params.interval_len, params.range_bound
                )
                partitions[cache_key] = partition
            new_block, block_report = embed_block_partitioned(block, partition, params)
            plane_out[i * m : (i + 1) * m, j * m : (j + 1) * m] = new_block
            report.add(block_report)
    return out, report
