"""Command-line interface: embed, detect, attack, bench, calibrate-tau, map.

Exit codes for ``detect``: 0 = watermarked, 1 = not watermarked, 2 = error.
Other subcommands exit 0 on success, 2 on error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .attacks import UnsupportedAttackError, apply_attack, parse_attack
from .bench import BenchConfig, calibrate_tau, image_rng_seed, list_corpus, run_bench
from .detect import DEFAULT_TAU, CropSearchConfig, crop_search, detect_image, render_map_overlay
from .embed import embed_image
from .images import EmptyGridError, load_image, save_jpeg, save_png
from .keying import InvalidKeyError, build_keyset, key_from_hex
from .params import WatermarkParams, params_from_json_dict


def _add_common(parser):
    parser.add_argument("--key-hex", help="secret key as a hex string (>= 32 hex chars)")
    parser.add_argument("--key-file", help="file containing the hex key")
    parser.add_argument("--params", help="params JSON (inline or @file)")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--rng-seed", type=int, default=0)


def _load_key(args) -> bytes:
    if args.key_hex:
        return key_from_hex(args.key_hex)
    if args.key_file:
        return key_from_hex(Path(args.key_file).read_text())
    raise ValueError("a secret key is required (--key-hex or --key-file)")


def _load_params(args):
    if not args.params:
        return WatermarkParams(), None
    text = args.params
    if text.startswith("@"):
        text = Path(text[1:]).read_text()
    return params_from_json_dict(json.loads(text))


def _crop_cfg(args) -> CropSearchConfig:
    return CropSearchConfig(
        strategy=args.strategy,
        stop_p=args.stop_p,
        significance=args.significance,
        offset_stride=args.stride,
    )


def cmd_embed(args) -> int:
    key = _load_key(args)
    params, _ = _load_params(args)
    if args.entropy_adaptive:
        params = params.with_updates(entropy_adaptive=True)
    keyset = build_keyset(key, params.num_keys)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    inputs = [Path(args.input)] if Path(args.input).is_file() else list_corpus(args.input)
    if not inputs:
        raise ValueError(f"no images found under {args.input}")
    for path in inputs:
        img = load_image(path)
        watermarked, report = embed_image(img, params, keyset)
        out_path = out_dir / (path.stem + ".png")
        save_png(watermarked, out_path)
        with open(out_dir / (path.stem + ".embed.json"), "w") as fh:
            json.dump(report.to_dict(), fh, indent=2)
        print(f"{path.name} -> {out_path}")
    return 0


def _detect_result(args, img):
    key = _load_key(args)
    params, tau_from_params = _load_params(args)
    tau = args.tau if args.tau is not None else (tau_from_params or DEFAULT_TAU)
    keyset = build_keyset(key, params.num_keys)
    if args.crop_search:
        res = crop_search(img, params, keyset, _crop_cfg(args), tau)
    else:
        res = detect_image(img, params, keyset, tau)
    return res, params


def cmd_detect(args) -> int:
    img = load_image(args.input)
    res, params = _detect_result(args, img)
    payload = res.to_dict()
    payload["alpha"] = params.alpha
    print(json.dumps(payload, indent=2))
    if args.map_out:
        overlay = render_map_overlay(img, res.map, grid_lines=args.grid_lines)
        save_png(overlay, args.map_out)
    return 0 if res.decision else 1


def cmd_map(args) -> int:
    img = load_image(args.input)
    res, _ = _detect_result(args, img)
    overlay = render_map_overlay(img, res.map if args.post_process else res.raw_map,
                                 grid_lines=args.grid_lines)
    save_png(overlay, args.out)
    print(json.dumps(res.to_dict(), indent=2))
    return 0


def cmd_attack(args) -> int:
    img = load_image(args.input)
    params, _ = _load_params(args)
    specs = [parse_attack(op) for op in args.op]
    out = img
    used = []
    seed = args.rng_seed or image_rng_seed(args.rng_seed, Path(args.input).stem)
    for i, spec in enumerate(specs):
        seeded = spec.with_seed(seed + i)
        out = apply_attack(out, seeded, params)
        used.append({"op": seeded.label(), "rng_seed": seeded.rng_seed})
    out_path = Path(args.out)
    if out_path.suffix.lower() in (".jpg", ".jpeg"):
        if not args.allow_lossy:
            raise ValueError("refusing lossy output without --allow-lossy")
        save_jpeg(out, out_path, quality=95)
    else:
        save_png(out, out_path)
    print(json.dumps({"output": str(out_path), "ops": used}, indent=2))
    return 0


def cmd_bench(args) -> int:
    key = _load_key(args)
    params, tau_from_params = _load_params(args)
    tau = args.tau if args.tau is not None else (tau_from_params or DEFAULT_TAU)
    cfg = BenchConfig(
        input_dir=args.input,
        out_dir=args.out_dir,
        key_hex=key.hex(),
        params=params,
        tau=tau,
        attacks=tuple(args.attack),
        crop_search=args.crop_search,
        crop_cfg=_crop_cfg(args),
        workers=args.workers,
        rng_seed=args.rng_seed,
        limit=args.limit,
    )
    report = run_bench(cfg)
    print(json.dumps({"config_hash": report["config_hash"],
                      "aggregates": report["aggregates"]}, indent=2))
    return 0


def cmd_calibrate_tau(args) -> int:
    key = _load_key(args)
    params, _ = _load_params(args)
    cfg = BenchConfig(
        input_dir=args.input,
        out_dir=".",
        key_hex=key.hex(),
        params=params,
        rng_seed=args.rng_seed,
        limit=args.limit,
    )
    tau, table = calibrate_tau(cfg, args.target_fpr)
    print(f"{'tau':>8} {'fpr':>8} {'wdr':>8}")
    for row in table:
        print(f"{row['tau']:8.3f} {row['fpr']:8.3f} {row['wdr']:8.3f}")
    print(json.dumps({"tau": tau, "target_fpr": args.target_fpr}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockmark",
        description="Blind block-wise image watermarking with localised detection maps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="watermark an image or a directory of images")
    p.add_argument("input")
    p.add_argument("-o", "--out-dir", required=True)
    p.add_argument("--entropy-adaptive", action="store_true",
                   help="embed only in blocks above the entropy percentile")
    _add_common(p)
    p.set_defaults(func=cmd_embed)

    def add_detect_opts(q):
        q.add_argument("--tau", type=float, default=None, help="global decision threshold")
        q.add_argument("--crop-search", action="store_true")
        q.add_argument("--strategy", default="fixed-threshold",
                       choices=["max-score", "fixed-threshold", "proportion-test"])
        q.add_argument("--stop-p", type=float, default=0.8)
        q.add_argument("--significance", type=float, default=0.05)
        q.add_argument("--stride", type=int, default=1)
        q.add_argument("--grid-lines", action="store_true")

    p = sub.add_parser("detect", help="detect the watermark in one image")
    p.add_argument("input")
    p.add_argument("--map-out", help="write the detection map overlay PNG here")
    add_detect_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("map", help="write the detection-map overlay for an image")
    p.add_argument("input")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--raw", dest="post_process", action="store_false",
                   help="render the raw map without the low-pass cleanup")
    add_detect_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("attack", help="apply an attack chain to an image")
    p.add_argument("input")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--op", action="append", required=True,
                   help="attack spec, e.g. jpeg:50 blur:5,1.0 noise:0.05 rotate90 crop:0.7")
    p.add_argument("--allow-lossy", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("bench", help="run the robustness benchmark over a corpus")
    p.add_argument("input", help="directory of original images")
    p.add_argument("-o", "--out-dir", required=True)
    p.add_argument("--attack", action="append", default=[],
                   help="attack spec (repeatable)")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--crop-search", default="off", choices=["off", "fallback", "always"])
    p.add_argument("--strategy", default="fixed-threshold",
                   choices=["max-score", "fixed-threshold", "proportion-test"])
    p.add_argument("--stop-p", type=float, default=0.8)
    p.add_argument("--significance", type=float, default=0.05)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--limit", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("calibrate-tau", help="choose tau for a target false-positive rate")
    p.add_argument("input", help="directory of original images")
    p.add_argument("--target-fpr", type=float, default=0.05)
    p.add_argument("--limit", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_calibrate_tau)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, EmptyGridError, InvalidKeyError, UnsupportedAttackError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
