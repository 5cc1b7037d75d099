"""Command-line interface: ``semsum <command> [flags]``.

Every command writes one JSON (or CSV) report to stdout or ``--out`` and
embeds the fully resolved configuration in it. On failure a JSON error
object is written to stderr and the exit code is nonzero (2 for usage
errors, 1 for everything else).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import baselines, decoders, metrics, trainer
from .embedding_store import compatibility_matrix, load_embeddings, save_embeddings
from .errors import SemsumError
from .synthetic import PairedConfig, PairedData, PlantedConfig, paired_data, planted_instance

log = logging.getLogger("semsum")

DECODER_NAMES = ("fb", "viterbi", "dtw")
MMR_DEFINITION = (
    "first = argmax_f mean cos(f, others); next = argmax_f "
    "lambda*mean cos(f, unselected - {f}) - (1-lambda)*max cos(f, selected)"
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument errors become UsageError so they are reported as JSON too."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- file helpers


def _load(path, kind):
    p = Path(path)
    if not p.exists():
        raise UsageError(f"file not found: {path}")
    return load_embeddings(p, kind=kind)


def read_gt(path) -> dict:
    """Ground-truth segment file: grid length, sample interval, reference cell lists."""
    p = Path(path)
    if not p.exists():
        raise UsageError(f"ground-truth file not found: {path}")
    doc = json.loads(p.read_text())
    for key in ("grid_length", "references"):
        if key not in doc:
            raise UsageError(f"ground-truth file {path} lacks {key!r}")
    doc.setdefault("sample_interval", 5.0)
    doc.setdefault("frames_per_segment", 1)
    return doc


def write_gt(path, grid_length, references, sample_interval=5.0, frames_per_segment=1):
    Path(path).write_text(json.dumps({
        "grid_length": int(grid_length),
        "sample_interval": float(sample_interval),
        "frames_per_segment": int(frames_per_segment),
        "references": [[int(c) for c in r] for r in references],
    }, indent=1))


def _segments(path_frames, frames_per_segment):
    return [int(q) // frames_per_segment for q in path_frames]


def score_summary(cells, gt: dict) -> dict:
    grid = gt["grid_length"]
    pred = metrics.SegmentList(grid, cells)
    refs = [metrics.SegmentList(grid, r) for r in gt["references"]]
    return {"mAP": metrics.mean_average_precision(pred, refs), "mAD": metrics.mean_average_distance(pred, refs)}


def _emit(report, args, rows=None):
    """Write a report as JSON, or as CSV when ``--format csv`` and ``rows`` are given."""
    if getattr(args, "format", "json") == "csv" and rows is not None:
        buf = io.StringIO()
        writer = csv.writer(buf)
        for row in rows:
            writer.writerow(row)
        text = buf.getvalue()
    else:
        text = json.dumps(report, indent=2) + "\n"
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


# ---------------------------------------------------------------- commands


def cmd_summarize(args):
    frames = _load(args.frames, "frame")
    sentences = _load(args.sentences, "sentence")
    if args.single_sentence is not None:
        if sentences.rows != 1:
            raise UsageError(f"--single-sentence expects a 1-row sentence file, got {sentences.rows} rows")
        sentences = baselines.duplicate_sentence(sentences, args.single_sentence)
    t0 = time.perf_counter()
    S = compatibility_matrix(frames, sentences)
    result = decoders.decode(S, args.decoder, k=args.k, pi=args.pi)
    wall = time.perf_counter() - t0
    timestamps = [q * args.sample_interval for q in result.path]
    report = {
        "decoder": args.decoder,
        "k_used": result.k_used,
        "path": result.path,
        "timestamps": timestamps,
        "scores": result.scores,
        "probability": result.probability,
        "wall_time_s": wall,
        "config": {
            "frames": str(args.frames),
            "sentences": str(args.sentences),
            "F": frames.rows,
            "N": sentences.rows,
            "decoder": args.decoder,
            "k": args.k,
            "pi": args.pi,
            "single_sentence": args.single_sentence,
            "sample_interval": args.sample_interval,
            "tie_rtol": decoders.TIE_RTOL,
        },
    }
    rows = [("sentence", "frame", "timestamp_s")] + [(t, q, ts) for t, (q, ts) in enumerate(zip(result.path, timestamps))]
    _emit(report, args, rows)


def _compare_on(S, gt, names, k, pi):
    out = {}
    for name in names:
        res = decoders.decode(S, name, k=k, pi=pi)
        cells = _segments(res.path, gt["frames_per_segment"])
        out[name] = {**score_summary(cells, gt), "k_used": res.k_used, "path": res.path}
    return out


def cmd_compare_decoders(args):
    names = [n.strip() for n in args.decoders.split(",")]
    for n in names:
        if n not in DECODER_NAMES:
            raise UsageError(f"unknown decoder {n!r}")
    if args.synthetic:
        per_seed = {n: [] for n in names}
        for seed in range(args.seed, args.seed + args.seeds):
            cfg = PlantedConfig(frames=args.synthetic_frames, sentences=args.synthetic_sentences,
                                dim=args.dim, sigma=args.sigma, seed=seed)
            inst = planted_instance(cfg)
            gt = {"grid_length": inst.grid, "frames_per_segment": inst.segment_length,
                  "references": [inst.planted_cells]}
            S = compatibility_matrix(inst.frames, inst.sentences)
            for n, r in _compare_on(S, gt, names, args.k, args.pi).items():
                per_seed[n].append((r["mAP"], r["mAD"]))
        table = {n: {"mAP": float(np.mean([v[0] for v in per_seed[n]])),
                     "mAD": float(np.mean([v[1] for v in per_seed[n]]))} for n in names}
        source = {"synthetic": asdict(PlantedConfig(frames=args.synthetic_frames, sentences=args.synthetic_sentences,
                                                    dim=args.dim, sigma=args.sigma, seed=args.seed)),
                  "seeds": args.seeds}
    else:
        if not (args.frames and args.sentences and args.gt):
            raise UsageError("compare-decoders needs --frames, --sentences and --gt (or --synthetic)")
        gt = read_gt(args.gt)
        S = compatibility_matrix(_load(args.frames, "frame"), _load(args.sentences, "sentence"))
        table = _compare_on(S, gt, names, args.k, args.pi)
        source = {"frames": args.frames, "sentences": args.sentences, "gt": args.gt}
    report = {"decoders": table, "config": {**source, "k": args.k, "pi": args.pi, "decoders": names}}
    rows = [("decoder", "mAP", "mAD")] + [(n, table[n]["mAP"], table[n]["mAD"]) for n in names]
    _emit(report, args, rows)


def cmd_evaluate(args):
    gt = read_gt(args.gt)
    p = Path(args.pred)
    if not p.exists():
        raise UsageError(f"prediction file not found: {args.pred}")
    pred = json.loads(p.read_text())
    if "segments" in pred:
        cells = [int(c) for c in pred["segments"]]
    elif "path" in pred:
        cells = _segments(pred["path"], gt["frames_per_segment"])
    else:
        raise UsageError("prediction file needs a 'segments' or 'path' list")
    wanted = [m.strip().lower() for m in args.metrics.split(",")]
    scores = score_summary(cells, gt)
    out = {}
    for m in wanted:
        if m == "map":
            out["mAP"] = scores["mAP"]
        elif m == "mad":
            out["mAD"] = scores["mAD"]
        else:
            raise UsageError(f"unknown metric {m!r} (choose map, mad)")
    report = {"metrics": out, "segments": cells, "config": {"pred": args.pred, "gt": args.gt, "metrics": wanted,
                                                             "grid_length": gt["grid_length"]}}
    _emit(report, args, [("metric", "value")] + list(out.items()))


def _retrieval_block(ranks: metrics.RankList, ks):
    return {**{f"R@{k}": 100.0 * metrics.recall_at_k(ranks, k) for k in ks},
            "median_rank_percent": metrics.median_rank_percent(ranks)}


def cmd_retrieval_eval(args):
    frames = _load(args.frames, "frame")
    sentences = _load(args.sentences, "sentence")
    if frames.rows != sentences.rows:
        raise UsageError(f"paired evaluation needs equal row counts ({frames.rows} frames, {sentences.rows} sentences)")
    ks = _ints(args.ks)
    report = {
        "frame_to_text": _retrieval_block(metrics.retrieval_ranks(frames, sentences), ks),
        "text_to_frame": _retrieval_block(metrics.retrieval_ranks(sentences, frames), ks),
        "config": {"frames": args.frames, "sentences": args.sentences, "ks": ks, "pairs": frames.rows},
    }
    rows = [("direction", "metric", "value")]
    for d in ("frame_to_text", "text_to_frame"):
        rows += [(d, k, v) for k, v in report[d].items()]
    _emit(report, args, rows)


def cmd_baselines(args):
    ref = _load(args.ref_sentences, "sentence")
    gt_sents = _load(args.gt_sentences, "sentence")
    fn = {"greedy": baselines.greedy_select, "ordered": baselines.ordered_subshot_dp}[args.method]
    assign = fn(ref, gt_sents)
    report = {"method": args.method, "assignment": assign.indices, "score": assign.score,
              "config": {"ref_sentences": args.ref_sentences, "gt_sentences": args.gt_sentences,
                         "method": args.method, "annotation_cells": args.annotation_cells, "gt": args.gt}}
    if args.gt:
        if not args.annotation_cells:
            raise UsageError("--gt needs --annotation-cells (JSON list: grid cell of each ground-truth sentence)")
        cells_of = json.loads(Path(args.annotation_cells).read_text())
        cells = [int(cells_of[i]) for i in assign.indices]
        report["segments"] = cells
        report["metrics"] = score_summary(cells, read_gt(args.gt))
    _emit(report, args, [("reference", "annotation")] + list(enumerate(assign.indices)))


def cmd_mmr(args):
    frames = _load(args.frames, "frame")
    if args.method == "mmr":
        sel = baselines.video_mmr(frames, args.count, args.lam)
    else:
        sel = baselines.uniform_sample(frames.rows, args.count)
    # summary order is temporal
    indices = sorted(sel.indices) if args.temporal_order else sel.indices
    report = {"method": args.method, "keyframes": indices, "selection_order": sel.indices,
              "timestamps": [q * args.sample_interval for q in indices],
              "config": {"frames": args.frames, "count": args.count, "lambda": args.lam, "method": args.method,
                         "sample_interval": args.sample_interval, "temporal_order": args.temporal_order,
                         "mmr_definition": MMR_DEFINITION if args.method == "mmr" else None}}
    if args.gt:
        gt = read_gt(args.gt)
        report["metrics"] = score_summary(_segments(indices, gt["frames_per_segment"]), gt)
    _emit(report, args, [("rank", "frame")] + list(enumerate(indices)))


TRAIN_FILES = ("frame_feat", "frame_src", "sent_feat", "sent_src")


def read_training_dir(path):
    """Training directory: four EMB1 files (row i of frames pairs with row i of sentences) and split.json."""
    d = Path(path)
    if not d.is_dir():
        raise UsageError(f"training data directory not found: {path}")
    arrays = [load_embeddings(d / f"{name}.emb").data for name in TRAIN_FILES]
    data = PairedData(*arrays)
    split = json.loads((d / "split.json").read_text())
    return data.subset(np.asarray(split["train"])), data.subset(np.asarray(split["dev"]))


def write_training_dir(path, train: PairedData, dev: PairedData):
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    for name, a, b in zip(TRAIN_FILES, (train.frame_h, train.frame_vs, train.sent_h, train.sent_vs),
                          (dev.frame_h, dev.frame_vs, dev.sent_h, dev.sent_vs)):
        save_embeddings(np.vstack([a, b]), d / f"{name}.emb")
    n, m = len(train), len(dev)
    (d / "split.json").write_text(json.dumps({"train": list(range(n)), "dev": list(range(n, n + m))}))


def cmd_train(args):
    if args.data:
        train_set, dev_set = read_training_dir(args.data)
        source = {"data": args.data}
    else:
        pc = PairedConfig(seed=args.seed)
        train_set, dev_set = paired_data(pc)
        source = {"synthetic": asdict(pc)}
    cfg = trainer.TrainConfig(margin=args.margin, negatives=args.negatives, epochs=args.epochs,
                              batch_size=args.batch_size, lr=args.lr, hidden_dim=args.hidden, seed=args.seed)
    head, history = trainer.train(train_set, dev_set, cfg)
    report = {"history": history, "config": {**asdict(cfg), **source}}
    if args.checkpoint:
        trainer.save_checkpoint(head, args.checkpoint, cfg, extra={"history": history})
        report["checkpoint"] = args.checkpoint
    rows = [("epoch", "train_loss", "dev_median_rank_percent", "dev_r_at_1", "improved")]
    rows += [(h["epoch"], h["train_loss"], h["median_rank_percent"], h["r_at_1"], h["improved"]) for h in history]
    _emit(report, args, rows)


def cmd_make_synthetic(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "summary":
        cfg = PlantedConfig(frames=args.synthetic_frames, sentences=args.synthetic_sentences, dim=args.dim,
                            sigma=args.sigma, seed=args.seed)
        inst = planted_instance(cfg)
        save_embeddings(inst.frames, out / "frames.emb")
        save_embeddings(inst.sentences, out / "sentences.emb")
        write_gt(out / "gt.json", inst.grid, [inst.planted_cells], args.sample_interval, inst.segment_length)
        written = ["frames.emb", "sentences.emb", "gt.json"]
        config = asdict(cfg)
    else:
        pc = PairedConfig(seed=args.seed)
        write_training_dir(out, *paired_data(pc))
        written = [f"{n}.emb" for n in TRAIN_FILES] + ["split.json"]
        config = asdict(pc)
    sys.stdout.write(json.dumps({"written": [str(out / w) for w in written], "config": config}, indent=2) + "\n")


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="semsum", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    def hmm_flags(p):
        p.add_argument("--k", type=int, default=None, help="top-k candidates per sentence (default: minimal feasible)")
        p.add_argument("--pi", choices=("uniform", "emission-weighted"), default="uniform")

    p = sub.add_parser("summarize", help="decode one summary")
    p.add_argument("--frames", required=True)
    p.add_argument("--sentences", required=True)
    p.add_argument("--decoder", choices=DECODER_NAMES, default="fb")
    hmm_flags(p)
    p.add_argument("--single-sentence", type=int, default=None, metavar="N",
                   help="duplicate a one-row sentence file N times")
    p.add_argument("--sample-interval", type=float, default=5.0, metavar="S")
    common(p)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("compare-decoders", help="mAP/mAD of fb, viterbi and dtw on the same input")
    p.add_argument("--frames")
    p.add_argument("--sentences")
    p.add_argument("--gt")
    p.add_argument("--decoders", default="fb,viterbi,dtw")
    hmm_flags(p)
    p.add_argument("--synthetic", action="store_true", help="use seeded planted-segment data instead of files")
    _synthetic_flags(p)
    p.add_argument("--seeds", type=int, default=100)
    common(p)
    p.set_defaults(func=cmd_compare_decoders)

    p = sub.add_parser("evaluate", help="score a predicted summary against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--metrics", default="map,mad")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("retrieval-eval", help="R@K and median rank for paired frame/sentence embeddings")
    p.add_argument("--frames", required=True)
    p.add_argument("--sentences", required=True)
    p.add_argument("--ks", default="1,10,100")
    common(p)
    p.set_defaults(func=cmd_retrieval_eval)

    p = sub.add_parser("baselines", help="greedy or ordered text-matching baselines")
    p.add_argument("--ref-sentences", required=True)
    p.add_argument("--gt-sentences", required=True)
    p.add_argument("--method", choices=("greedy", "ordered"), default="ordered")
    p.add_argument("--annotation-cells", help="JSON list mapping ground-truth sentence -> grid cell")
    p.add_argument("--gt")
    common(p)
    p.set_defaults(func=cmd_baselines)

    p = sub.add_parser("mmr", help="text-free keyframe summary (Video-MMR or uniform)")
    p.add_argument("--frames", required=True)
    p.add_argument("--count", type=int, default=24)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--method", choices=("mmr", "uniform"), default="mmr")
    p.add_argument("--temporal-order", action="store_true", help="report keyframes sorted by time")
    p.add_argument("--sample-interval", type=float, default=5.0)
    p.add_argument("--gt")
    common(p)
    p.set_defaults(func=cmd_mmr)

    p = sub.add_parser("train", help="train the residual embedding head")
    p.add_argument("--data", help="training directory (default: seeded synthetic pairs)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--margin", type=float, default=0.2)
    p.add_argument("--negatives", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--checkpoint", help="write the best checkpoint (JSON) here")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("make-synthetic", help="write seeded synthetic input files")
    p.add_argument("out_dir")
    p.add_argument("--kind", choices=("summary", "train"), default="summary")
    _synthetic_flags(p)
    p.add_argument("--sample-interval", type=float, default=5.0)
    p.set_defaults(func=cmd_make_synthetic)
    return ap


def _synthetic_flags(p):
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--synthetic-frames", type=int, default=500)
    p.add_argument("--synthetic-sentences", type=int, default=12)
    p.add_argument("--dim", type=int, default=64)


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SEMSUM_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as exc:
        sys.stderr.write(json.dumps({"error": "usage", "message": str(exc)}) + "\n")
        return 2
    except (SemsumError, ValueError, IndexError, KeyError, OSError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
