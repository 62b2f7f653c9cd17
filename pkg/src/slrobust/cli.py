"""Command-line entry point: ``slrobust <subcommand> ...``.

Exit codes: 0 success, 1 usage, 2 I/O, 3 validation, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import benchgen, gradcheck, media, metrics
from .benchgen import BenchmarkConfig, derive_seed

log = logging.getLogger("slrobust")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2, 3, 4
DEFAULT_SEED = 0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; our contract reserves 2 for I/O
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def default_seed() -> int:
    raw = os.environ.get("SLROBUST_SEED")
    if raw is None or raw == "":
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"SLROBUST_SEED must be an integer, got {raw!r}") from None


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _require_file(path: Path, what: str) -> None:
    if not path.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")


def _require_exists(path: Path, what: str) -> None:
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")


# -- subcommands ------------------------------------------------------------


def cmd_gen_benchmark(args) -> int:
    manifest = Path(args.cslr_manifest)
    scenes = Path(args.scene_dir)
    _require_file(manifest, "CSLR manifest")
    _require_exists(scenes, "scene catalog")
    config = BenchmarkConfig(master_seed=args.seed, n_splits=args.splits, first_split=args.first_split, jobs=args.jobs)
    entries = benchgen.load_cslr_manifest(manifest)
    catalog = benchgen.load_scene_catalog(scenes)
    out = Path(args.out)
    summary = {"splits": [], "videos": 0, "frames": 0}
    for sid in config.split_ids:
        records, written = benchgen.generate_split(entries, catalog, config, sid, out)
        summary["splits"].append({"split_id": sid, "manifest": f"split_{sid}/manifest.jsonl", "videos": len(records)})
        summary["videos"] += len(records)
        summary["frames"] += len(written)
    print(dump_json(summary))
    return EXIT_OK


def cmd_gen_train_pool(args) -> int:
    scenes = Path(args.scene_dir)
    _require_exists(scenes, "scene catalog")
    catalog = benchgen.load_scene_catalog(scenes)
    rng = np.random.default_rng(derive_seed(args.seed, "train-pool"))
    pool = benchgen.select_training_pool(catalog, args.k_per_class, rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [json.dumps({"id": s.id, "class_label": s.class_label, "path": str(s.path) if s.path else None}, sort_keys=True) for s in pool]
    benchgen.write_jsonl(out / "train_pool.jsonl", rows)
    print(dump_json({"pool": "train_pool.jsonl", "size": len(pool), "classes": len(catalog), "k_per_class": args.k_per_class}))
    return EXIT_OK


def cmd_br_preview(args) -> int:
    frames_dir = Path(args.frames)
    scenes = Path(args.scene_dir)
    _require_exists(frames_dir, "frames directory")
    _require_exists(scenes, "scene catalog")
    if args.n < 1:
        raise ValueError("-n must be >= 1")
    aug = media.AugmentConfig(lambda_min=args.lambda_min, lambda_max=args.lambda_max, jitter_strength=args.jitter)
    frame_paths = media.list_frames(frames_dir)
    if not frame_paths:
        raise FileNotFoundError(f"no frames in {frames_dir}")
    catalog = benchgen.load_scene_catalog(scenes)
    pool = benchgen.select_training_pool(catalog, args.k_per_class, np.random.default_rng(derive_seed(args.seed, "train-pool")))
    rng = np.random.default_rng(derive_seed(args.seed, "br-preview"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(args.n):
        src = frame_paths[i % len(frame_paths)]
        frame = media.load_frame(src)
        scene = pool[int(rng.integers(len(pool)))]
        backdrop = media.color_jitter(scene.pixels(), rng, aug.jitter_strength)
        backdrop = media.random_rotate(backdrop, rng, aug.rotation_max_deg)
        backdrop = media.resize(backdrop, frame.shape[0], frame.shape[1])
        lam = media.sample_lambda(rng, aug)
        name = media.frame_name(i)
        media.save_frame(out / name, media.mixup_background(frame, backdrop, lam))
        rows.append(json.dumps({"frame": name, "source": src.name, "scene_image_id": scene.id, "lambda": lam}, sort_keys=True))
    benchgen.write_jsonl(out / "preview.jsonl", rows)
    print(dump_json({"frames": args.n, "index": "preview.jsonl"}))
    return EXIT_OK


def _read_lines(path: Path) -> list[str]:
    _require_file(path, "transcript")
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def cmd_score_wer(args) -> int:
    refs = _read_lines(Path(args.ref))
    hyps = _read_lines(Path(args.hyp))
    if len(refs) != len(hyps):
        raise ValueError(f"line count mismatch: {len(refs)} reference vs {len(hyps)} hypothesis lines")
    pairs = []
    for i, (r, h) in enumerate(zip(refs, hyps), 1):
        ref = metrics.parse_glosses(r)
        if not ref:
            raise ValueError(f"{args.ref}:{i}: empty reference line")
        pairs.append((ref, metrics.parse_glosses(h)))
    if not pairs:
        raise ValueError("no reference lines")
    w, br = metrics.corpus_wer(pairs)
    print(
        dump_json(
            {
                "wer": w,
                "substitutions": br.substitutions,
                "deletions": br.deletions,
                "insertions": br.insertions,
                "ref_words": br.ref_len,
            }
        )
    )
    return EXIT_OK


def cmd_grad_check(args) -> int:
    if args.threshold < 0:
        raise ValueError("threshold must be >= 0")
    results = gradcheck.run_suite(args.seed, args.instances, args.threshold)
    report = {r.name: {"max_rel_err": r.max_rel_err, "threshold": r.threshold, "passed": r.passed} for r in results}
    print(dump_json(report))
    failed = [r.name for r in results if not r.passed]
    if failed:
        log.error("gradient check failed for %s", ", ".join(failed))
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_demo(args) -> int:
    from .toytrain import ExperimentConfig, format_report, run_experiment, write_report

    if args.config:
        path = Path(args.config)
        _require_file(path, "demo config")
        exp = ExperimentConfig.from_json(path)
    else:
        exp = ExperimentConfig()
    exp = exp.with_seed(args.seed)
    report = run_experiment(exp)
    js, txt = write_report(report, args.out)
    sys.stdout.write(format_report(report))
    log.info("wrote %s and %s", js, txt)
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    seed = default_seed()
    p = _Parser(prog="slrobust", description="Background-robust sign recognition toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_seed(sp):
        sp.add_argument("--seed", type=int, default=seed, help=f"master seed (default {seed}; env SLROBUST_SEED)")

    g = sub.add_parser("gen-benchmark", help="composite CSLR videos onto scene images")
    g.add_argument("--cslr-manifest", required=True, help="JSON Lines rows {video_id, frames_dir, mask_dir, glosses}")
    g.add_argument("--scene-dir", required=True, help="<class>/<image>.png tree or JSON Lines index")
    g.add_argument("--out", required=True)
    g.add_argument("--splits", type=int, default=3)
    g.add_argument("--first-split", type=int, default=0, help="id of the first split (use distinct ranges for dev/test)")
    g.add_argument("--jobs", type=int, default=1)
    add_seed(g)
    g.set_defaults(func=cmd_gen_benchmark)

    t = sub.add_parser("gen-train-pool", help="sample K scene images per class for training")
    t.add_argument("--scene-dir", required=True)
    t.add_argument("--k-per-class", type=int, default=1)
    t.add_argument("--out", required=True)
    add_seed(t)
    t.set_defaults(func=cmd_gen_train_pool)

    b = sub.add_parser("br-preview", help="render mixup-augmented frames for inspection")
    b.add_argument("--frames", required=True, help="directory of 000001.png ... frames")
    b.add_argument("--scene-dir", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("-n", type=int, default=8, help="number of frames to render")
    b.add_argument("--k-per-class", type=int, default=1)
    b.add_argument("--lambda-min", type=float, default=0.1)
    b.add_argument("--lambda-max", type=float, default=0.6)
    b.add_argument("--jitter", type=float, default=0.4, help="color jitter strength")
    add_seed(b)
    b.set_defaults(func=cmd_br_preview)

    s = sub.add_parser("score-wer", help="corpus WER of a hypothesis file against a reference file")
    s.add_argument("--ref", required=True, help="one space-separated gloss sequence per line")
    s.add_argument("--hyp", required=True)
    s.set_defaults(func=cmd_score_wer)

    c = sub.add_parser("grad-check", help="finite-difference checks of all analytic gradients")
    c.add_argument("--threshold", type=float, default=gradcheck.DEFAULT_THRESHOLD)
    c.add_argument("--instances", type=int, default=100)
    add_seed(c)
    c.set_defaults(func=cmd_grad_check)

    d = sub.add_parser("demo", help="baseline / BR / BR+DAE toy experiment")
    d.add_argument("--out", required=True)
    d.add_argument("--config", help="JSON ExperimentConfig overrides")
    add_seed(d)
    d.set_defaults(func=cmd_demo)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        parser = build_parser()
    except UsageError as exc:
        print(f"slrobust: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    except (FloatingPointError, OverflowError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except (ValueError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
