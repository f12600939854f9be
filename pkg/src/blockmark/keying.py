"""Seed derivation, keyed pseudorandom bits, and red/green interval colouring.

The colouring of coefficient intervals is a deterministic function of
(secret key, block seed): bit 1 marks an interval green (allowed), 0 red
(disallowed). Bits come from HMAC-SHA256 run in counter mode over
(seed, counter), a standard stateless keyed PRF that is seekable and
reproducible across platforms.
"""

from __future__ import annotations

import hashlib
import hmac
import math
import secrets
from dataclasses import dataclass

import numpy as np

MIN_KEY_BYTES = 16
_PRF_BLOCK_BITS = 256  # one HMAC-SHA256 output per counter value


class InvalidKeyError(ValueError):
    """Key material too short to be used as a secret key."""


class InvalidKeyCountError(ValueError):
    """Key-set sizes above 1 must be even to keep colourings complementary."""


def generate_key(nbytes: int = 32) -> bytes:
    return secrets.token_bytes(max(nbytes, MIN_KEY_BYTES))


def key_from_hex(text: str) -> bytes:
    key = bytes.fromhex(text.strip())
    _check_key(key)
    return key


def _check_key(key: bytes):
    if not isinstance(key, (bytes, bytearray)) or len(key) < MIN_KEY_BYTES:
        raise InvalidKeyError(f"secret keys must be >= {MIN_KEY_BYTES} bytes")


def get_seed(block: np.ndarray, round_val: int = 30) -> int:
    """Block mean rounded to the nearest multiple of ``round_val``.

    Ties round downward, and the result is clamped to the largest multiple
    that is <= 255 so the seed alphabet stays bounded.
    """
    mu = float(np.mean(block))
    q = math.ceil(mu / round_val - 0.5)
    q = min(q, 255 // round_val)
    return int(q) * round_val


def prf_bits(key: bytes, seed: int, n: int) -> np.ndarray:
    """First ``n`` bits of the keyed counter-mode stream for ``seed`` (uint8 0/1)."""
    _check_key(key)
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return np.zeros(0, dtype=np.uint8)
    base = int(seed).to_bytes(8, "big")
    blocks = []
    for ctr in range((n + _PRF_BLOCK_BITS - 1) // _PRF_BLOCK_BITS):
        blocks.append(hmac.new(key, base + ctr.to_bytes(8, "big"), hashlib.sha256).digest())
    raw = np.frombuffer(b"".join(blocks), dtype=np.uint8)
    return np.unpackbits(raw)[:n]


def num_intervals(interval_len: int, range_bound: int) -> int:
    return -(-2 * range_bound // interval_len)  # ceil(2r / l)


@dataclass(frozen=True)
class Partition:
    """Red/green colouring of [-r, r) split into half-open intervals of length l.

    Interval i covers [-r + i*l, -r + (i+1)*l); values outside [-r, r)
    always classify green.
    """

    interval_len: int
    range_bound: int
    bits: np.ndarray  # uint8, length ceil(2r / l)

    @classmethod
    def build(cls, key: bytes, seed: int, interval_len: int, range_bound: int) -> "Partition":
        n = num_intervals(interval_len, range_bound)
        bits = prf_bits(key, seed, n)
        bits.setflags(write=False)
        return cls(interval_len, range_bound, bits)

    @property
    def n_intervals(self) -> int:
        return self.bits.shape[0]

    def complement(self) -> "Partition":
        inv = (1 - self.bits).astype(np.uint8)
        inv.setflags(write=False)
        return Partition(self.interval_len, self.range_bound, inv)

    def interval_index(self, coeff: float) -> int:
        return int(math.floor((coeff + self.range_bound) / self.interval_len))

    def interval_center(self, index: int) -> float:
        return -self.range_bound + (index + 0.5) * self.interval_len

    def classify(self, coeff: float) -> bool:
        """True when ``coeff`` is green (allowed)."""
        if coeff < -self.range_bound or coeff >= self.range_bound:
            return True
        return bool(self.bits[self.interval_index(coeff)])

    def green_mask(self, coeffs: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`classify` over an array of coefficients."""
        c = np.asarray(coeffs, dtype=np.float64)
        r = float(self.range_bound)
        outside = (c < -r) | (c >= r)
        idx = np.floor((c + r) / self.interval_len).astype(np.int64)
        np.clip(idx, 0, self.n_intervals - 1, out=idx)
        return outside | (self.bits[idx] == 1)

    def nearest_green_target(self, coeff: float, max_intervals: int = 3):
        """Centre of the closest green interval within ``max_intervals`` per side.

        Returns None when every candidate interval is red (the coefficient
        is left unchanged in that case). Distance is measured from the
        coefficient to the interval's nearest edge; ties prefer the
        lower-centre interval.
        """
        targets, has = self.green_targets(np.asarray([coeff]), max_intervals)
        return float(targets[0]) if has[0] else None

    def green_targets(self, coeffs: np.ndarray, max_intervals: int = 3):
        """Vectorised nearest-green lookup: (targets, has_target) arrays.

        Caller is expected to pass coefficients that classify red and lie
        inside [-r, r); behaviour for green inputs still returns the nearest
        green neighbour but is unused.
        """
        c = np.asarray(coeffs, dtype=np.float64)
        l = float(self.interval_len)
        r = float(self.range_bound)
        i0 = np.floor((c + r) / l).astype(np.int64)
        n = self.n_intervals

        # Candidate columns ordered so that np.argmin's first-match rule
        # implements the lower-centre tie break: left candidates first.
        offsets = [-k for k in range(1, max_intervals + 1)] + list(range(1, max_intervals + 1))
        cand = i0[:, None] + np.asarray(offsets)[None, :]
        valid = (cand >= 0) & (cand < n)
        green = np.zeros_like(valid)
        green[valid] = self.bits[cand[valid]] == 1

        lower_edge = -r + cand * l
        upper_edge = lower_edge + l
        dist = np.where(np.asarray(offsets)[None, :] < 0, c[:, None] - upper_edge, lower_edge - c[:, None])
        dist = np.where(valid & green, dist, np.inf)

        pick = np.argmin(dist, axis=1)
        has = np.isfinite(dist[np.arange(len(c)), pick])
        chosen = cand[np.arange(len(c)), pick]
        targets = -r + (chosen + 0.5) * l
        return targets, has

    def pack(self) -> bytes:
        return np.packbits(self.bits).tobytes()

    @classmethod
    def unpack(cls, data: bytes, interval_len: int, range_bound: int) -> "Partition":
        n = num_intervals(interval_len, range_bound)
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))[:n]
        bits.setflags(write=False)
        return cls(interval_len, range_bound, bits)


class KeySet:
    """One or more block keys derived from a master secret.

    For ``size`` > 1 (must be even) sub-keys are arranged in complementary
    pairs: the colouring under key 2t+1 is the bitwise complement of the
    colouring under key 2t, so every interval is green under exactly half
    of the keys. Embedding picks one key per block via a deterministic
    keyed selector; detection tries all keys.
    """

    def __init__(self, master: bytes, size: int = 1):
        _check_key(master)
        if size < 1:
            raise InvalidKeyCountError("key count must be >= 1")
        if size > 1 and size % 2:
            raise InvalidKeyCountError("key counts above 1 must be even")
        self.master = master
        self.size = size
        if size == 1:
            self.keys = [master]
        else:
            self.keys = [
                hmac.new(master, b"subkey:%d" % j, hashlib.sha256).digest() for j in range(size)
            ]

    def partition(self, key_index: int, seed: int, interval_len: int, range_bound: int) -> Partition:
        if not 0 <= key_index < self.size:
            raise IndexError(f"key index {key_index} out of range for {self.size} keys")
        base_index = key_index - (key_index % 2) if self.size > 1 else key_index
        base = Partition.build(self.keys[base_index], seed, interval_len, range_bound)
        if self.size > 1 and key_index % 2:
            return base.complement()
        return base

    def select_key(self, row: int, col: int) -> int:
        """Deterministic per-block key choice used at embed time."""
        if self.size == 1:
            return 0
        msg = b"block-key:%d:%d" % (row, col)
        digest = hmac.new(self.master, msg, hashlib.sha256).digest()
        return int.from_bytes(digest[:8], "big") % self.size


def build_keyset(master: bytes, size: int = 1) -> KeySet:
    return KeySet(master, size)
