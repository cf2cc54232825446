"""Command-line entry point: generate, track, evaluate, score, split, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .annotations import (
    AnnotationFormatError,
    gt_path,
    parse_gt_file,
    read_seqinfo,
    seqinfo_path,
    write_results_file,
)
from .complexity import read_scores_csv, score_sequence, split_sequences, write_scores_csv, write_split
from .core import ConfigError, EnvironmentVariant, load_config
from .metrics import FrameData, MetricError, evaluate_sequences, format_reports
from .tracker import CorruptionParams, TrackerParams, corrupt_detections, to_detections, track_sequence

log = logging.getLogger("synthmot")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(ValueError):
    pass


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def discover_sequences(gt_root: str | Path) -> list[Path]:
    root = Path(gt_root)
    if not root.is_dir():
        raise FileNotFoundError(f"no such directory: {root}")
    return sorted(p for p in root.iterdir() if gt_path(p).is_file())


def load_gt(seq_dir: Path) -> tuple[FrameData, int, int]:
    """Ground truth of one sequence plus its image size."""
    records = parse_gt_file(gt_path(seq_dir))
    info = seqinfo_path(seq_dir)
    if info.is_file():
        meta = read_seqinfo(info)
        length, size = meta.frame_count, (meta.image_width, meta.image_height)
    else:
        length, size = max((r.frame for r in records), default=0), (1920, 1080)
    return FrameData.from_records(records, length), size[0], size[1]


def _check_outputs(paths: list[Path], overwrite: bool) -> None:
    if overwrite:
        return
    for p in paths:
        if p.exists():
            raise FileExistsError(f"{p} exists (use --overwrite)")


def cmd_generate(args) -> int:
    from .pipeline import generate_dataset

    config = load_config(args.config, master_seed=args.seed)
    if args.variant is None:
        variants = [config.variant]
    elif args.variant.strip().lower() == "all":
        variants = EnvironmentVariant.all()
    else:
        variants = [EnvironmentVariant.parse(args.variant)]
    for v in variants:
        names = generate_dataset(config, args.count, args.out, render=args.render, overwrite=args.overwrite,
                                 jobs=args.jobs, variant=v)
        for n in names:
            print(n)
    return EXIT_OK


def _track_one(job) -> str:
    seq_dir, out_file, corruption, tracker = job
    gt, width, height = load_gt(seq_dir)
    dets = corrupt_detections(gt, corruption, width, height)
    pred = track_sequence(dets, tracker)
    write_results_file(to_detections(pred), out_file)
    return seq_dir.name


def cmd_track(args) -> int:
    seqs = discover_sequences(args.gt)
    if not seqs:
        raise UsageError(f"no sequences under {args.gt}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = [out / f"{s.name}.txt" for s in seqs]
    _check_outputs(outputs, args.overwrite)
    corruption = CorruptionParams(args.drop, args.jitter, args.fp_rate, args.seed)
    tracker = TrackerParams(args.iou_gate, args.max_missed, args.predict, args.hungarian)
    # each sequence gets its own corruption stream
    jobs = [(s, o, CorruptionParams(corruption.drop_probability, corruption.jitter_sigma,
                                    corruption.false_positive_rate, (corruption.seed + i) % 2**64), tracker)
            for i, (s, o) in enumerate(zip(seqs, outputs))]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            names = list(pool.map(_track_one, jobs))
    else:
        names = [_track_one(j) for j in jobs]
    for n in names:
        log.info("tracked %s", n)
        print(n)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    seqs = discover_sequences(args.gt)
    if not seqs:
        raise UsageError(f"no sequences under {args.gt}")
    results = Path(args.results)
    pairs = []
    for s in seqs:
        res = results / f"{s.name}.txt"
        if not res.is_file():
            raise UsageError(f"{s.name}: missing results file {res}")
        pairs.append((gt_path(s), res, s.name))
    metrics = [m.strip().lower() for m in args.metrics.split(",") if m.strip()]
    bad = [m for m in metrics if m not in ("hota", "mota", "idf1")]
    if bad:
        raise UsageError(f"unknown metrics: {', '.join(bad)}")
    try:
        reports, combined = evaluate_sequences(pairs, args.iou_threshold)
    except AnnotationFormatError as exc:
        raise AnnotationFormatError(f"results: {exc}") from None
    sys.stdout.write(format_reports(reports, combined, fmt=args.format, metrics=metrics))
    return EXIT_OK


def cmd_score(args) -> int:
    seqs = discover_sequences(args.gt)
    out = Path(args.out)
    _check_outputs([out], args.overwrite)
    scores = [score_sequence(s.name, load_gt(s)[0]) for s in seqs]
    write_scores_csv(scores, out)
    for s in scores:
        print(f"{s.name},{s.ocom:.4f},{s.mcom:.4f},{s.motcom:.4f}")
    return EXIT_OK


def cmd_split(args) -> int:
    if (args.scores is None) == (args.gt is None):
        raise UsageError("give exactly one of --scores or --gt")
    if args.scores is not None:
        scored = read_scores_csv(args.scores)
    else:
        scored = [(s.name, score_sequence(s.name, load_gt(s)[0]).motcom) for s in discover_sequences(args.gt)]
    split = split_sequences(scored)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _check_outputs([out / "train.txt", out / "test.txt"], args.overwrite)
    write_split(split, out)
    print(f"train {len(split.train)}")
    print(f"test {len(split.test)}")
    return EXIT_OK


def cmd_report(args) -> int:
    """Per-sequence dataset summary: frames, boxes, identities, complexity."""
    rows = [("Sequence", "Frames", "GT dets", "GT IDs", "Variant", "OCOM", "MCOM")]
    for s in discover_sequences(args.gt):
        gt, _, _ = load_gt(s)
        meta = s / "synth.json"
        variant = json.loads(meta.read_text())["variant"] if meta.is_file() else "-"
        sc = score_sequence(s.name, gt) if gt.num_dets else None
        rows.append((s.name, str(gt.num_frames), str(gt.num_dets), str(len(gt.unique_ids())), variant,
                     f"{sc.ocom:.3f}" if sc else "-", f"{sc.mcom:.3f}" if sc else "-"))
    if args.format == "csv":
        for r in rows:
            print(",".join(r))
    else:
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        for r in rows:
            print("  ".join(v.ljust(widths[0]) if i == 0 else v.rjust(widths[i]) for i, v in enumerate(r)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="synthmot", description=__doc__)
    p.add_argument("--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic sequences in MOTChallenge layout")
    g.add_argument("--config", help="JSON generation config")
    g.add_argument("--variant", help="letters from B,T,D, 'none', or 'all' for the eight variants")
    g.add_argument("--count", type=int, default=50, help="sequences per variant (default 50)")
    g.add_argument("--out", required=True)
    g.add_argument("--render", action="store_true", help="also render img1/ PNG frames")
    g.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--overwrite", action="store_true")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("track", help="run the baseline IoU tracker on (corrupted) ground truth")
    t.add_argument("--gt", required=True, help="dataset root holding <seq>/gt/gt.txt")
    t.add_argument("--out", required=True, help="results directory (<seq>.txt)")
    t.add_argument("--drop", type=float, default=0.0, help="detection drop probability")
    t.add_argument("--jitter", type=float, default=0.0, help="box jitter sigma in pixels")
    t.add_argument("--fp-rate", type=float, default=0.0, help="expected false positives per frame")
    t.add_argument("--seed", type=_u64, default=0)
    t.add_argument("--iou-gate", type=float, default=0.3)
    t.add_argument("--max-missed", type=int, default=0)
    t.add_argument("--predict", action="store_true", help="constant-velocity box prediction")
    t.add_argument("--hungarian", action="store_true", help="optimal instead of greedy association")
    t.add_argument("--jobs", type=int, default=1)
    t.add_argument("--overwrite", action="store_true")
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("evaluate", help="HOTA / MOTA / IDF1 per sequence and combined")
    e.add_argument("--gt", required=True)
    e.add_argument("--results", required=True)
    e.add_argument("--metrics", default="hota,mota,idf1")
    e.add_argument("--format", choices=("table", "csv"), default="table")
    e.add_argument("--iou-threshold", type=float, default=0.5)
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("score", help="occlusion / motion complexity proxies per sequence")
    s.add_argument("--gt", required=True)
    s.add_argument("--out", required=True, help="scores CSV (name,ocom,mcom,motcom)")
    s.add_argument("--overwrite", action="store_true")
    s.set_defaults(func=cmd_score)

    sp = sub.add_parser("split", help="sorted every-fifth train/test split")
    sp.add_argument("--scores", help="scores CSV with name and motcom (or ocom, mcom) columns")
    sp.add_argument("--gt", help="dataset root; proxy scores are computed")
    sp.add_argument("--out", required=True)
    sp.add_argument("--overwrite", action="store_true")
    sp.set_defaults(func=cmd_split)

    r = sub.add_parser("report", help="dataset summary table")
    r.add_argument("--gt", required=True)
    r.add_argument("--format", choices=("table", "csv"), default="table")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, AnnotationFormatError, MetricError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
