"""Blind block-wise image watermarking with localised detection maps.

The scheme perturbs low-frequency wavelet coefficients of image blocks into
keyed pseudorandom "green" intervals; detection runs a per-block hypothesis
test on the fraction of green coefficients and renders the outcome as a
block-resolution map usable for tamper forensics.
"""

from .params import WatermarkParams
from .images import load_image, save_png, save_jpeg, split_channels, merge_channels
from .keying import KeySet, Partition, build_keyset, generate_key, get_seed, key_from_hex, prf_bits
from .embed import EmbedReport, block_entropy, embed_block, embed_image, entropy_threshold
from .detect import (
    CropSearchConfig,
    DetectionMap,
    DetectionResult,
    ScoreGrid,
    crop_search,
    detect_block,
    detect_image,
    hypothesis_threshold,
    post_process,
    render_map_overlay,
)
from .metrics import DetectionStats, combined_quality, psnr, roc_auc, ssim

__all__ = [
    "WatermarkParams",
    "load_image",
    "save_png",
    "save_jpeg",
    "split_channels",
    "merge_channels",
    "KeySet",
    "Partition",
    "build_keyset",
    "generate_key",
    "get_seed",
    "key_from_hex",
    "prf_bits",
    "EmbedReport",
    "block_entropy",
    "embed_block",
    "embed_image",
    "entropy_threshold",
    "CropSearchConfig",
    "DetectionMap",
    "DetectionResult",
    "ScoreGrid",
    "crop_search",
    "detect_block",
    "detect_image",
    "hypothesis_threshold",
    "post_process",
    "render_map_overlay",
    "DetectionStats",
    "combined_quality",
    "psnr",
    "roc_auc",
    "ssim",
]

__version__ = "0.1.0"
