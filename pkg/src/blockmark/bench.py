"""Benchmark orchestration: embed a corpus, attack it, detect, report.

Reports are deterministic for a fixed configuration: per-image RNG streams
derive from (master seed, image id), rows are sorted before writing, and
the worker count never influences results (only wall-clock).
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attacks import UnsupportedAttackError, apply_attack, parse_attack
from .detect import DEFAULT_TAU, CropSearchConfig, crop_search, detect_image
from .embed import embed_image
from .images import EmptyGridError, load_image
from .keying import build_keyset
from .metrics import detection_stats, psnr, roc_points, ssim
from .params import WatermarkParams, params_from_json_dict, params_to_json_dict

CSV_HEADER = "image_id,attack,score,decision,crop_dy,crop_dx,offsets_tested,psnr_db,ssim,runtime_ms"

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass
class BenchConfig:
    input_dir: str
    out_dir: str
    key_hex: str
    params: WatermarkParams = field(default_factory=WatermarkParams)
    tau: float = DEFAULT_TAU
    attacks: tuple = ()
    crop_search: str = "off"  # off | fallback | always
    crop_cfg: CropSearchConfig = field(default_factory=CropSearchConfig)
    workers: int = 1
    rng_seed: int = 0
    limit: int | None = None

    def config_hash(self) -> str:
        """Provenance hash over result-determining fields.

        Key material never enters the hash; workers and paths cannot change
        results and are excluded so equal runs hash equal.
        """
        payload = {
            "params": params_to_json_dict(self.params, self.tau),
            "attacks": list(self.attacks),
            "crop_search": self.crop_search,
            "crop_cfg": [
                self.crop_cfg.strategy,
                self.crop_cfg.stop_p,
                self.crop_cfg.significance,
                self.crop_cfg.offset_stride,
            ],
            "rng_seed": self.rng_seed,
            "limit": self.limit,
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def list_corpus(input_dir, limit=None) -> list[Path]:
    paths = sorted(
        p for p in Path(input_dir).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if limit:
        paths = paths[:limit]
    return paths


def image_rng_seed(master_seed: int, image_id: str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{image_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _detect_with_policy(img, params, keyset, tau, mode, crop_cfg):
    if mode == "always":
        res = crop_search(img, params, keyset, crop_cfg, tau)
    elif mode == "fallback":
        res = detect_image(img, params, keyset, tau)
        if not res.decision:
            res = crop_search(img, params, keyset, crop_cfg, tau)
    else:
        res = detect_image(img, params, keyset, tau)
    return res


def _bench_one(args):
    (path, cfg_dict,) = args
    cfg = _config_from_dict(cfg_dict)
    keyset = build_keyset(bytes.fromhex(cfg.key_hex), cfg.params.num_keys)
    image_id = Path(path).stem
    original = load_image(path)
    rng_seed = image_rng_seed(cfg.rng_seed, image_id)

    t0 = time.perf_counter()
    watermarked, embed_report = embed_image(original, cfg.params, keyset)
    embed_ms = (time.perf_counter() - t0) * 1000.0

    rows = []
    neg_scores = {}
    specs = [("clean", None)] + [(a, parse_attack(a)) for a in cfg.attacks]
    for label, spec in specs:
        t0 = time.perf_counter()
        try:
            if spec is None:
                attacked_wm = watermarked
                attacked_orig = original
            else:
                seeded = spec.with_seed(rng_seed)
                attacked_wm = apply_attack(watermarked, seeded, cfg.params)
                attacked_orig = apply_attack(original, seeded, cfg.params)
            res = _detect_with_policy(
                attacked_wm, cfg.params, keyset, cfg.tau, cfg.crop_search, cfg.crop_cfg
            )
            res_orig = _detect_with_policy(
                attacked_orig, cfg.params, keyset, cfg.tau, cfg.crop_search, cfg.crop_cfg
            )
            runtime_ms = (time.perf_counter() - t0) * 1000.0
            q_psnr = psnr(original, watermarked) if spec is None else float("nan")
            q_ssim = ssim(original, watermarked) if spec is None else float("nan")
            rows.append(
                {
                    "image_id": image_id,
                    "attack": label,
                    "score": res.score,
                    "decision": res.decision,
                    "crop_dy": "" if res.crop_offset is None else res.crop_offset[0],
                    "crop_dx": "" if res.crop_offset is None else res.crop_offset[1],
                    "offsets_tested": res.offsets_tested,
                    "psnr_db": q_psnr,
                    "ssim": q_ssim,
                    "runtime_ms": runtime_ms,
                    "error": "",
                }
            )
            neg_scores[label] = res_orig.score
        except (UnsupportedAttackError, EmptyGridError) as exc:
            rows.append(
                {
                    "image_id": image_id,
                    "attack": label,
                    "score": float("nan"),
                    "decision": False,
                    "crop_dy": "",
                    "crop_dx": "",
                    "offsets_tested": 0,
                    "psnr_db": float("nan"),
                    "ssim": float("nan"),
                    "runtime_ms": 0.0,
                    "error": str(exc),
                }
            )
    return image_id, rows, neg_scores, embed_report.to_dict(), embed_ms


def _config_to_dict(cfg: BenchConfig) -> dict:
    return {
        "input_dir": cfg.input_dir,
        "out_dir": cfg.out_dir,
        "key_hex": cfg.key_hex,
        "params": params_to_json_dict(cfg.params),
        "tau": cfg.tau,
        "attacks": list(cfg.attacks),
        "crop_search": cfg.crop_search,
        "crop_cfg": {
            "strategy": cfg.crop_cfg.strategy,
            "stop_p": cfg.crop_cfg.stop_p,
            "significance": cfg.crop_cfg.significance,
            "offset_stride": cfg.crop_cfg.offset_stride,
        },
        "workers": cfg.workers,
        "rng_seed": cfg.rng_seed,
        "limit": cfg.limit,
    }


def _config_from_dict(data: dict) -> BenchConfig:
    params, tau = params_from_json_dict(data.get("params", {}))
    crop = data.get("crop_cfg", {})
    return BenchConfig(
        input_dir=data["input_dir"],
        out_dir=data["out_dir"],
        key_hex=data["key_hex"],
        params=params,
        tau=data.get("tau", tau if tau is not None else DEFAULT_TAU),
        attacks=tuple(data.get("attacks", ())),
        crop_search=data.get("crop_search", "off"),
        crop_cfg=CropSearchConfig(
            strategy=crop.get("strategy", "fixed-threshold"),
            stop_p=crop.get("stop_p", 0.8),
            significance=crop.get("significance", 0.05),
            offset_stride=crop.get("offset_stride", 1),
        ),
        workers=data.get("workers", 1),
        rng_seed=data.get("rng_seed", 0),
        limit=data.get("limit"),
    )


def _fmt_float(x) -> str:
    if isinstance(x, float):
        if np.isnan(x):
            return "nan"
        if np.isinf(x):
            return "inf"
        return format(x, ".6g")
    return str(x)


def run_bench(cfg: BenchConfig) -> dict:
    """Embed + attack + detect over the corpus; writes CSV/JSON/ROC files.

    Returns the aggregate report dict. Rows cover the watermarked images
    (clean baseline plus each attack); originals run through the same
    detection to supply FPR and ROC AUC per attack.
    """
    paths = list_corpus(cfg.input_dir, cfg.limit)
    if len(paths) < 2:
        raise ValueError("bench needs a corpus of at least 2 images")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    cfg_dict = _config_to_dict(cfg)
    jobs = [(str(p), cfg_dict) for p in paths]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_bench_one, jobs))
    else:
        results = [_bench_one(job) for job in jobs]
    results.sort(key=lambda item: item[0])

    all_rows = []
    neg_by_attack: dict[str, list] = {}
    pos_by_attack: dict[str, list] = {}
    embed_reports = {}
    for image_id, rows, neg_scores, embed_report, embed_ms in results:
        all_rows.extend(rows)
        embed_reports[image_id] = {"embed_ms": embed_ms, **embed_report}
        for row in rows:
            if row["error"]:
                continue
            pos_by_attack.setdefault(row["attack"], []).append(row["score"])
        for label, score in neg_scores.items():
            neg_by_attack.setdefault(label, []).append(score)

    all_rows.sort(key=lambda r: (r["image_id"], r["attack"]))
    csv_path = out_dir / "bench_rows.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        writer = csv.writer(fh)
        for row in all_rows:
            writer.writerow(
                [
                    row["image_id"],
                    row["attack"],
                    _fmt_float(row["score"]),
                    "true" if row["decision"] else "false",
                    row["crop_dy"],
                    row["crop_dx"],
                    row["offsets_tested"],
                    _fmt_float(row["psnr_db"]),
                    _fmt_float(row["ssim"]),
                    _fmt_float(row["runtime_ms"]),
                ]
            )

    attack_labels = ["clean"] + list(cfg.attacks)
    aggregates = {}
    roc_dir = out_dir / "roc"
    roc_dir.mkdir(exist_ok=True)
    for label in attack_labels:
        pos = pos_by_attack.get(label, [])
        neg = neg_by_attack.get(label, [])
        pos_ok = [s for s in pos if not np.isnan(s)]
        if not pos_ok or not neg:
            aggregates[label] = {"n": 0, "wdr": None, "fpr": None, "auc": None, "lpips": "n/a"}
            continue
        stats = detection_stats(pos_ok, neg, cfg.tau)
        aggregates[label] = {
            "n": stats.n_pos,
            "wdr": stats.wdr,
            "fpr": stats.fpr,
            "auc": stats.auc,
            "lpips": "n/a",
        }
        with open(roc_dir / f"{label.replace(':', '_').replace(',', '_')}.csv", "w") as fh:
            fh.write("threshold,fpr,tpr\n")
            for t, fpr, tpr in roc_points(pos_ok, neg):
                fh.write(f"{_fmt_float(t)},{_fmt_float(fpr)},{_fmt_float(tpr)}\n")

    clean_rows = [r for r in all_rows if r["attack"] == "clean" and not r["error"]]
    report = {
        "config_hash": cfg.config_hash(),
        "params": params_to_json_dict(cfg.params, cfg.tau),
        "n_images": len(paths),
        "normalisation_scope": "per-report attack set",
        "aggregates": aggregates,
        "quality": {
            "mean_psnr_db": float(np.mean([r["psnr_db"] for r in clean_rows]))
            if clean_rows
            else None,
            "mean_ssim": float(np.mean([r["ssim"] for r in clean_rows])) if clean_rows else None,
        },
        "embed_reports": embed_reports,
    }
    agg_csv = out_dir / "bench_aggregates.csv"
    with open(agg_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["attack", "n", "wdr", "fpr", "auc", "lpips"])
        for label in attack_labels:
            a = aggregates[label]
            writer.writerow(
                [
                    label,
                    a["n"],
                    _fmt_float(a["wdr"]) if a["wdr"] is not None else "",
                    _fmt_float(a["fpr"]) if a["fpr"] is not None else "",
                    _fmt_float(a["auc"]) if a["auc"] is not None else "",
                    a["lpips"],
                ]
            )
    with open(out_dir / "bench_report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return report


def calibrate_tau(cfg: BenchConfig, target_fpr: float = 0.05):
    """Smallest tau with empirical FPR <= target on the corpus originals.

    Also reports the WDR of clean watermarked images at each candidate so
    the trade-off table can be printed alongside.
    """
    paths = list_corpus(cfg.input_dir, cfg.limit)
    if not paths:
        raise ValueError("empty corpus")
    keyset = build_keyset(bytes.fromhex(cfg.key_hex), cfg.params.num_keys)
    neg_scores = []
    pos_scores = []
    for path in paths:
        original = load_image(path)
        watermarked, _ = embed_image(original, cfg.params, keyset)
        neg_scores.append(detect_image(original, cfg.params, keyset, cfg.tau).score)
        pos_scores.append(detect_image(watermarked, cfg.params, keyset, cfg.tau).score)
    neg = np.asarray(neg_scores)
    pos = np.asarray(pos_scores)

    candidates = sorted(set(np.round(np.concatenate([neg, [0.0, 1.0]]), 6)))
    table = []
    chosen = None
    for tau in candidates:
        fpr = float((neg > tau).mean())
        wdr = float((pos > tau).mean())
        table.append({"tau": float(tau), "fpr": fpr, "wdr": wdr})
        if chosen is None and fpr <= target_fpr:
            chosen = float(tau)
    if chosen is None:
        chosen = 1.0
    return chosen, table
