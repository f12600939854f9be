"""Deterministic, seeded image manipulations for robustness evaluation.

Every attack is a pure function of (image, parameters, rng_seed): identical
inputs give byte-identical outputs. Attack specs parse from compact strings
such as ``jpeg:50``, ``blur:5,1.0``, ``noise:0.05``, ``brightness:0.5``,
``contrast:0.5``, ``rotate90``, ``crop:0.7``, ``seed:nearest``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .images import decode_image_bytes, encode_jpeg_bytes
from .keying import get_seed
from .params import WatermarkParams


class UnsupportedAttackError(NotImplementedError):
    """Attack kind recognised but not runnable in this build."""


# Recognised for report-schema parity; they need pretrained neural codecs.
VAE_STUB_KINDS = ("bmshj18", "cheng20")


def jpeg(img: np.ndarray, quality: int) -> np.ndarray:
    if not 1 <= quality <= 100:
        raise ValueError("jpeg quality must be in 1..100")
    return decode_image_bytes(encode_jpeg_bytes(img, quality))


def _gaussian_kernel(ksize: int, sigma: float) -> np.ndarray:
    radius = (ksize - 1) // 2
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    if sigma <= 0:
        kernel = (x == 0).astype(np.float64)
    else:
        kernel = np.exp(-0.5 * (x / sigma) ** 2)
    return kernel / kernel.sum()


def gaussian_blur(img: np.ndarray, ksize: int, sigma: float) -> np.ndarray:
    """Separable Gaussian convolution, kernel normalised, edge replication."""
    if ksize < 1 or ksize % 2 == 0:
        raise ValueError("kernel size must be odd and >= 1")
    if ksize == 1:
        return np.array(img, copy=True)
    kernel = _gaussian_kernel(ksize, sigma)
    out = np.empty_like(img, dtype=np.float64)
    for ch in range(img.shape[2]):
        tmp = correlate1d(img[:, :, ch].astype(np.float64), kernel, axis=0, mode="nearest")
        out[:, :, ch] = correlate1d(tmp, kernel, axis=1, mode="nearest")
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def gaussian_noise(img: np.ndarray, sigma: float, rng_seed: int = 0) -> np.ndarray:
    """Additive iid N(0, (255*sigma)^2) noise; sigma is on the [0, 1] scale."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return np.array(img, copy=True)
    rng = np.random.default_rng(rng_seed)
    noisy = img.astype(np.float64) + rng.normal(0.0, 255.0 * sigma, size=img.shape)
    return np.clip(np.rint(noisy), 0, 255).astype(np.uint8)


def brightness(img: np.ndarray, factor: float) -> np.ndarray:
    if factor < 0:
        raise ValueError("factor must be >= 0")
    return np.clip(np.rint(img.astype(np.float64) * factor), 0, 255).astype(np.uint8)


def _gray_mean(img: np.ndarray) -> float:
    if img.shape[2] == 1:
        return float(img.mean())
    weights = np.array([0.299, 0.587, 0.114])
    return float((img.astype(np.float64) * weights).sum(axis=2).mean())


def contrast(img: np.ndarray, factor: float) -> np.ndarray:
    """Scale the spread around the image's grayscale mean."""
    if factor < 0:
        raise ValueError("factor must be >= 0")
    mean = _gray_mean(img)
    out = mean + factor * (img.astype(np.float64) - mean)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def rotate90(img: np.ndarray, turns: int = 1) -> np.ndarray:
    return np.ascontiguousarray(np.rot90(img, k=turns % 4, axes=(0, 1)))


def crop_window(shape, keep_fraction: float, rng_seed: int = 0):
    """Random axis-aligned window of area ~keep_fraction: (top, left, height, width)."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must be in (0, 1]")
    h, w = shape[0], shape[1]
    scale = math.sqrt(keep_fraction)
    ch = max(1, round(h * scale))
    cw = max(1, round(w * scale))
    rng = np.random.default_rng(rng_seed)
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    return top, left, ch, cw


def crop_random(img: np.ndarray, keep_fraction: float, rng_seed: int = 0) -> np.ndarray:
    top, left, ch, cw = crop_window(img.shape, keep_fraction, rng_seed)
    return np.array(img[top : top + ch, left : left + cw], copy=True)


def splice_insert(dst: np.ndarray, src_patch: np.ndarray, position) -> np.ndarray:
    """Overwrite the rectangle at (top, left) with the given patch."""
    top, left = position
    ph, pw = src_patch.shape[:2]
    if top < 0 or left < 0 or top + ph > dst.shape[0] or left + pw > dst.shape[1]:
        raise ValueError("patch does not fit inside the destination image")
    out = np.array(dst, copy=True)
    out[top : top + ph, left : left + pw] = src_patch
    return out


def seed_attack(img: np.ndarray, params: WatermarkParams, mode: str = "nearest") -> np.ndarray:
    """Shift each block's mean across a seed-rounding boundary.

    Per m x m block per channel, adds the smallest integer per-pixel offset
    that changes the block's rounded-mean seed in the requested direction
    ("nearest" picks the cheaper of "higher"/"lower"). Clamping at 0/255 can
    eat part of the shift, so the offset is bumped until the seed actually
    changes; blocks where no direction can change the seed are left as is.
    """
    if mode not in ("nearest", "higher", "lower"):
        raise ValueError(f"unknown seed-attack mode {mode!r}")
    m = params.block_size
    rv = params.round_val
    out = np.array(img, copy=True)
    rows = img.shape[0] // m
    cols = img.shape[1] // m
    half = rv / 2.0
    for ch in range(img.shape[2]):
        for i in range(rows):
            for j in range(cols):
                block = out[i * m : (i + 1) * m, j * m : (j + 1) * m, ch]
                mu = float(block.mean())
                seed = get_seed(block, rv)
                # Crossing points under the ties-round-down rule: means
                # strictly above seed + rv/2 round up; means at or below
                # seed - rv/2 round down.
                delta_up = math.floor(seed + half - mu) + 1
                delta_down = math.floor(seed - half - mu)
                if mode == "higher":
                    order = [delta_up]
                elif mode == "lower":
                    order = [delta_down]
                else:
                    # Nearest direction first, the other as a clamping fallback.
                    order = sorted([delta_up, delta_down], key=abs)
                for delta in order:
                    shifted = _shift_until_seed_changes(block, delta, seed, rv)
                    if shifted is not None:
                        block[:, :] = shifted
                        break
    return out


def _shift_until_seed_changes(block, delta, seed, round_val, max_extra=255):
    step = 1 if delta > 0 else -1
    for extra in range(max_extra):
        candidate = np.clip(block.astype(np.int32) + delta + step * extra, 0, 255).astype(np.uint8)
        if get_seed(candidate, round_val) != seed:
            return candidate
        if (candidate == (0 if step < 0 else 255)).all():
            return None
    return None


@dataclass(frozen=True)
class AttackSpec:
    """Parsed attack: kind plus positional arguments and an RNG seed."""

    kind: str
    args: tuple = field(default_factory=tuple)
    rng_seed: int = 0

    def with_seed(self, rng_seed: int) -> "AttackSpec":
        return AttackSpec(self.kind, self.args, rng_seed)

    def label(self) -> str:
        if not self.args:
            return self.kind
        return self.kind + ":" + ",".join(_fmt(a) for a in self.args)


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, "g")
    return str(value)


def parse_attack(text: str) -> AttackSpec:
    """Parse a compact attack string, e.g. ``blur:5,1.0`` or ``rotate90``."""
    name, _, argtext = text.strip().partition(":")
    name = name.lower()
    args = [a for a in argtext.split(",") if a] if argtext else []
    try:
        if name == "jpeg":
            return AttackSpec("jpeg", (int(args[0]),))
        if name == "blur":
            return AttackSpec("blur", (int(args[0]), float(args[1])))
        if name == "noise":
            return AttackSpec("noise", (float(args[0]),))
        if name == "brightness":
            return AttackSpec("brightness", (float(args[0]),))
        if name == "contrast":
            return AttackSpec("contrast", (float(args[0]),))
        if name == "rotate90":
            return AttackSpec("rotate90", (int(args[0]) if args else 1,))
        if name == "crop":
            return AttackSpec("crop", (float(args[0]),))
        if name == "seed":
            mode = args[0] if args else "nearest"
            if mode not in ("nearest", "higher", "lower"):
                raise ValueError(f"unknown seed-attack mode {mode!r}")
            return AttackSpec("seed", (mode,))
        if name in VAE_STUB_KINDS:
            return AttackSpec(name, tuple(int(a) for a in args))
    except (IndexError, ValueError) as exc:
        raise ValueError(f"bad attack spec {text!r}: {exc}") from None
    raise ValueError(f"unknown attack {name!r}")


def apply_attack(img: np.ndarray, spec: AttackSpec, params: WatermarkParams | None = None) -> np.ndarray:
    if spec.kind == "jpeg":
        return jpeg(img, *spec.args)
    if spec.kind == "blur":
        return gaussian_blur(img, *spec.args)
    if spec.kind == "noise":
        return gaussian_noise(img, spec.args[0], spec.rng_seed)
    if spec.kind == "brightness":
        return brightness(img, *spec.args)
    if spec.kind == "contrast":
        return contrast(img, *spec.args)
    if spec.kind == "rotate90":
        return rotate90(img, *spec.args)
    if spec.kind == "crop":
        return crop_random(img, spec.args[0], spec.rng_seed)
    if spec.kind == "seed":
        return seed_attack(img, params or WatermarkParams(), spec.args[0])
    if spec.kind in VAE_STUB_KINDS:
        raise UnsupportedAttackError(
            f"{spec.kind} requires a pretrained neural codec and is not bundled"
        )
    raise ValueError(f"unknown attack {spec.kind!r}")


def apply_chain(img: np.ndarray, specs, params: WatermarkParams | None = None) -> np.ndarray:
    out = img
    for spec in specs:
        out = apply_attack(out, spec, params)
    return out
