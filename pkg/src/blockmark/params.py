"""Scheme parameters shared by the embedder and the detector."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class WatermarkParams:
    """All knobs of the watermarking scheme.

    interval_len        width of a red/green coefficient interval (l)
    sub_block           side of the transformed sub-block in pixels (k)
    block_size          side of the seeding/scoring block in pixels (m)
    dwt_levels          wavelet decomposition depth (d)
    range_bound         coefficients are partitioned over [-r, r)
    round_val           block-mean rounding step for seed derivation
    max_perturb_intervals   green-interval search radius when perturbing
    alpha               per-block hypothesis-test significance level
    entropy_adaptive    embed/detect only blocks above the entropy percentile
    entropy_percentile  gating percentile (0.5 = median)
    num_keys            key-set size (K); detection tries all keys
    """

    interval_len: int = 8
    sub_block: int = 8
    block_size: int = 96
    dwt_levels: int = 3
    range_bound: int = 3000
    round_val: int = 30
    max_perturb_intervals: int = 3
    alpha: float = 0.05
    entropy_adaptive: bool = False
    entropy_percentile: float = 0.5
    num_keys: int = 1

    def __post_init__(self):
        if self.interval_len < 1:
            raise ValueError("interval_len must be >= 1")
        if self.range_bound < self.interval_len:
            raise ValueError("range_bound must cover at least one interval")
        if self.dwt_levels < 1:
            raise ValueError("dwt_levels must be >= 1")
        p = 1 << self.dwt_levels
        if self.sub_block < p or self.sub_block % p:
            # k must be a multiple of 2**d so every intermediate subband is even.
            raise ValueError(f"sub_block must be a positive multiple of 2**dwt_levels = {p}")
        if self.block_size % self.sub_block:
            raise ValueError("block_size must be a multiple of sub_block")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.round_val < 1:
            raise ValueError("round_val must be >= 1")
        if not 0.0 < self.entropy_percentile <= 1.0:
            raise ValueError("entropy_percentile must be in (0, 1]")
        if self.max_perturb_intervals < 1:
            raise ValueError("max_perturb_intervals must be >= 1")
        if self.num_keys < 1 or (self.num_keys > 1 and self.num_keys % 2):
            raise ValueError("num_keys must be 1 or an even count")

    @property
    def patch(self) -> int:
        """Pixel span of one level-d approximation coefficient (2**d)."""
        return 1 << self.dwt_levels

    @property
    def coeffs_per_block(self) -> int:
        """Scored coefficients per block per channel: (m / 2**d)**2."""
        return (self.block_size // self.patch) ** 2

    def with_updates(self, **kwargs) -> "WatermarkParams":
        return replace(self, **kwargs)


# Wire names used in the params JSON accepted by the CLI.
_JSON_FIELDS = {
    "l": "interval_len",
    "k": "sub_block",
    "m": "block_size",
    "d": "dwt_levels",
    "r": "range_bound",
    "round_val": "round_val",
    "alpha": "alpha",
    "entropy_adaptive": "entropy_adaptive",
    "entropy_percentile": "entropy_percentile",
    "max_perturb_intervals": "max_perturb_intervals",
    "K": "num_keys",
}


def params_from_json_dict(data: dict) -> tuple[WatermarkParams, float | None]:
    """Parse the CLI params schema; returns (params, tau or None).

    Accepted keys: l, k, m, d, r, round_val, alpha, entropy_adaptive,
    entropy_percentile, max_perturb_intervals, K, tau.
    """
    kwargs = {}
    tau = None
    for key, value in data.items():
        if key == "tau":
            tau = float(value)
        elif key in _JSON_FIELDS:
            kwargs[_JSON_FIELDS[key]] = value
        else:
            raise ValueError(f"unknown params key: {key!r}")
    return WatermarkParams(**kwargs), tau


def params_to_json_dict(params: WatermarkParams, tau: float | None = None) -> dict:
    data = {json_key: getattr(params, attr) for json_key, attr in _JSON_FIELDS.items()}
    if tau is not None:
        data["tau"] = tau
    return data
