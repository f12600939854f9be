"""Image-quality and detection-performance metrics.

PSNR/SSIM operate on 8-bit images (SSIM on the grayscale conversion, with
the reference 11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03, dynamic
range 255). ROC AUC uses the rank (Mann-Whitney) formulation with ties
counted half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.stats import rankdata

_LUMA = np.array([0.299, 0.587, 0.114])


def _as_gray(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        if arr.shape[2] == 1:
            return arr[:, :, 0]
        return arr @ _LUMA
    return arr


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB; inf for identical inputs."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity on the grayscale conversion.

    Matches the standard Gaussian-weighted configuration: 11x11 window via
    a sigma-1.5 Gaussian (truncated at 3.5 sigma), population covariances,
    and a (window-1)/2 border crop before averaging.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    x = _as_gray(a)
    y = _as_gray(b)
    sigma, truncate = 1.5, 3.5
    pad = int(truncate * sigma + 0.5)

    def f(arr):
        return gaussian_filter(arr, sigma, truncate=truncate)

    mx = f(x)
    my = f(y)
    vx = f(x * x) - mx * mx
    vy = f(y * y) - my * my
    cxy = f(x * y) - mx * my

    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    smap = num / den
    if smap.shape[0] <= 2 * pad or smap.shape[1] <= 2 * pad:
        return float(smap.mean())
    return float(smap[pad:-pad, pad:-pad].mean())


@dataclass
class QualityScore:
    psnr: float
    ssim: float


def quality(original: np.ndarray, processed: np.ndarray) -> QualityScore:
    return QualityScore(psnr(original, processed), ssim(original, processed))


def roc_auc(scores_pos, scores_neg) -> float:
    """Probability a positive outranks a negative; ties contribute 1/2."""
    pos = np.asarray(list(scores_pos), dtype=np.float64)
    neg = np.asarray(list(scores_neg), dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("both score sets must be non-empty")
    ranks = rankdata(np.concatenate([pos, neg]))
    rank_sum = ranks[: pos.size].sum()
    u = rank_sum - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def roc_points(scores_pos, scores_neg):
    """(threshold, fpr, tpr) rows sweeping thresholds over both score sets."""
    pos = np.sort(np.asarray(list(scores_pos), dtype=np.float64))
    neg = np.sort(np.asarray(list(scores_neg), dtype=np.float64))
    thresholds = np.unique(np.concatenate([pos, neg, [0.0, 1.0]]))
    rows = []
    for t in thresholds[::-1]:
        tpr = float((pos > t).mean()) if pos.size else 0.0
        fpr = float((neg > t).mean()) if neg.size else 0.0
        rows.append((float(t), fpr, tpr))
    return rows


@dataclass
class DetectionStats:
    wdr: float
    fpr: float
    auc: float
    n_pos: int
    n_neg: int


def detection_stats(scores_pos, scores_neg, tau: float) -> DetectionStats:
    pos = np.asarray(list(scores_pos), dtype=np.float64)
    neg = np.asarray(list(scores_neg), dtype=np.float64)
    wdr = float((pos > tau).mean()) if pos.size else 0.0
    fpr = float((neg > tau).mean()) if neg.size else 0.0
    auc = roc_auc(pos, neg) if pos.size and neg.size else float("nan")
    return DetectionStats(wdr, fpr, auc, int(pos.size), int(neg.size))


def combined_quality(metric_table: dict, higher_better: dict) -> dict:
    """Min-max normalise each metric across attacks and average per attack.

    ``metric_table`` maps metric name -> {attack: value}; lower-is-better
    metrics are inverted after normalisation. Attacks scoring below 0.5 are
    conventionally treated as outside the evaluation scope.
    """
    attacks = None
    for values in metric_table.values():
        keys = set(values)
        attacks = keys if attacks is None else attacks & keys
    if not attacks:
        raise ValueError("no attack appears under every metric")
    attacks = sorted(attacks)

    totals = {a: 0.0 for a in attacks}
    for metric, values in metric_table.items():
        vals = np.array([float(values[a]) for a in attacks])
        span = vals.max() - vals.min()
        if span == 0:
            # No discrimination on this metric; do not penalise anyone.
            oriented = np.ones_like(vals)
        else:
            normed = (vals - vals.min()) / span
            oriented = normed if higher_better[metric] else 1.0 - normed
        for a, v in zip(attacks, oriented):
            totals[a] += float(v)
    n = len(metric_table)
    return {a: totals[a] / n for a in attacks}
