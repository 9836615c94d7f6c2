"""``thumbforge`` command line: exit 0 on success, 1 on usage errors, 2 on data errors."""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import logging
import os
import sys

import numpy as np

from . import __version__
from . import aesthetics, baselines, clustering, descriptors as desc, quality_filter as qf
from .config import RunConfig, load_config_file, resolve
from .errors import ThumbforgeError
from .evaluation import ALL_METHODS, DEFAULT_KS, load_manifest, mean_precision_at_k, rank_frames, write_results_csv
from .frame_io import SourceKind, load_video
from .scoring import load_model, load_training_csv, save_model, train_forest
from .selection import (SelectionResult, ThumbnailCandidate, dump_json, emit_frames, manifest,
                        select_thumbnails)

log = logging.getLogger("thumbforge")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------- argument groups


def _common(p):
    g = p.add_argument_group("run settings")
    g.add_argument("--config", help="JSON file with RunConfig keys (flags override it)")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int, help="worker threads (fallback: $THUMBFORGE_THREADS)")
    g.add_argument("--deterministic", action="store_true", default=None,
                   help="omit wall times, timestamps and thread counts from outputs")
    g.add_argument("-v", "--verbose", action="store_true")


def _input(p, required=True):
    g = p.add_argument_group("input")
    g.add_argument("--input", required=required, help="Y4M file, raw RGB24 file ('-' = stdin) or image directory")
    g.add_argument("--kind", choices=[k.value for k in SourceKind])
    g.add_argument("--width", type=int, help="raw input width")
    g.add_argument("--height", type=int, help="raw input height")
    g.add_argument("--fps", help="raw/image-dir frame rate, e.g. 30 or 30000:1001")


def _thresholds(p):
    g = p.add_argument_group("filtering")
    g.add_argument("--lum-min", "--luminance-min", dest="luminance_min", type=float)
    g.add_argument("--sharp-min", "--sharpness-min", dest="sharpness_min", type=float)
    g.add_argument("--unif-max", "--uniformity-max", dest="uniformity_max", type=float)
    g.add_argument("--ecr-thresh", "--ecr-threshold", dest="ecr_threshold", type=float)
    g.add_argument("--boundary-margin", "--margin", dest="boundary_margin", type=int,
                   help="frames dropped on each side of a cut")


def _clustering(p):
    g = p.add_argument_group("clustering")
    g.add_argument("--kmin", dest="k_min", type=int)
    g.add_argument("--kmax", dest="k_max", type=int)
    g.add_argument("--gap-refs", dest="gap_refs", type=int)
    g.add_argument("--gap-ref-samples", dest="gap_ref_samples", type=int)


def _matching(p):
    g = p.add_argument_group("matching")
    g.add_argument("--matcher", choices=["exact_index", "descriptor_l2", "pixel_ssd"])
    g.add_argument("--theta", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="thumbforge", description="Video thumbnail selection")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("extract", help="run the thumbnail pipeline on one video")
    _input(p)
    _thresholds(p)
    _clustering(p)
    _common(p)
    p.add_argument("--mode", choices=["unsupervised", "supervised"])
    p.add_argument("--model", help="THFOR01 model for supervised mode")
    p.add_argument("--k", type=int, help="number of candidates to output (default 5)")
    p.add_argument("--theta", type=float, help="candidate dedup distance")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--emit-frames", metavar="DIR", help="directory for candidate images (default: --out)")
    p.add_argument("--no-frames", action="store_true", help="do not write candidate images")
    p.add_argument("--image-format", choices=["ppm", "png"], default="ppm")
    p.add_argument("--dump-quality", action="store_true", help="write quality.csv")
    p.add_argument("--dump-descriptors", action="store_true", help="write descriptors.bin")
    p.add_argument("--dump-aesthetics", action="store_true", help="write aesthetics.csv for keyframes")

    p = sub.add_parser("keyframes", help="shots, subshots and keyframes of one video")
    _input(p)
    _thresholds(p)
    _common(p)
    p.add_argument("--out", required=True, help="output JSON path")

    p = sub.add_parser("baseline", help="run a comparison method on one video")
    _input(p)
    _clustering(p)
    _common(p)
    p.add_argument("--method", required=True, choices=list(baselines.METHODS))
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--model")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train the aesthetic forest")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--csv", help="training CSV: 52 feature columns + 'score'")
    src.add_argument("--synthetic", type=int, metavar="N", help="use N rows of the synthetic harness")
    p.add_argument("--n-trees", dest="n_trees", type=int)
    p.add_argument("--model-out", required=True)
    _common(p)

    p = sub.add_parser("evaluate", help="mean P@k over a corpus manifest")
    p.add_argument("--manifest", required=True, help="JSON lines corpus manifest")
    p.add_argument("--method", required=True, choices=list(ALL_METHODS))
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--ks", default=",".join(map(str, DEFAULT_KS)), help="comma-separated k values")
    p.add_argument("--model")
    p.add_argument("--out", default="results.csv", help="results CSV path (default results.csv)")
    _matching(p)
    _thresholds(p)
    _clustering(p)
    _common(p)

    p = sub.add_parser("analyze", help="rank-quantile study of designated thumbnails")
    p.add_argument("--manifest", required=True, help="JSON lines manifest; gt_frame_index is the thumbnail")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--bins", type=int, default=10)
    _matching(p)
    _common(p)

    p = sub.add_parser("inspect", help="dump per-frame scores of one video")
    _input(p)
    _common(p)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--aesthetics", action="store_true", help="include the 52 aesthetic features")
    return parser


# ---------------------------------------------------------------- helpers


def _run_config(args) -> RunConfig:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else None
    return resolve(file_values, vars(args))


def _load(args):
    fps = getattr(args, "fps", None)
    return load_video(args.input, args.kind, args.width, args.height, fps)


def _envelope(cfg: RunConfig, command: str, payload: dict) -> dict:
    doc = {"command": command, "version": __version__, "seed": cfg.seed, **payload}
    doc["config"] = cfg.to_json()
    if not cfg.deterministic:
        doc["created"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return doc


def _sha256(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _ranked_candidates(indices, frames, k) -> list[dict]:
    return [ThumbnailCandidate(i, frames[i].timestamp, -1, 0, 0.0, r).to_json()
            for r, i in enumerate(indices[:k], start=1)]


# ---------------------------------------------------------------- commands


def cmd_extract(args, cfg: RunConfig) -> int:
    info, frames = _load(args)
    model = load_model(cfg.model) if cfg.model else None
    result: SelectionResult = select_thumbnails(frames, cfg.selection_config(), model, cfg.threads, info.fps)
    os.makedirs(args.out, exist_ok=True)
    doc = manifest(result, len(frames), len(frames) / info.fps, cfg.to_json(), cfg.deterministic)
    doc = _envelope(cfg, "extract", {"input": args.input, **doc})
    if not args.no_frames:
        paths = emit_frames(result.candidates, frames, args.emit_frames or args.out, args.image_format)
        doc["frames"] = [os.path.basename(p) for p in paths]
    if args.dump_quality or args.dump_descriptors or args.dump_aesthetics:
        mask = qf.unfiltered_mask(frames, cfg.filter_config(), cfg.threads)
        if args.dump_quality:
            qf.write_quality_csv(os.path.join(args.out, "quality.csv"), mask)
        if args.dump_descriptors:
            desc.write_descriptors(os.path.join(args.out, "descriptors.bin"),
                                   desc.compute_descriptors(frames, cfg.threads))
        if args.dump_aesthetics:
            still = aesthetics.stillness_sequence(frames)
            vecs = aesthetics.compute_aesthetic_vectors([frames[i] for i in result.keyframes], threads=cfg.threads)
            aesthetics.write_aesthetics_csv(os.path.join(args.out, "aesthetics.csv"), vecs,
                                            {i: still[i] for i in result.keyframes})
    dump_json(doc, os.path.join(args.out, "manifest.json"))
    for c in result.candidates:
        print(f"{c.rank}\t{c.frame_index}\t{c.timestamp:.3f}s\tcluster={c.cluster_id}\tsize={c.cluster_size}")
    return EXIT_OK


def cmd_keyframes(args, cfg: RunConfig) -> int:
    info, frames = _load(args)
    try:
        mask = qf.filter_frames(frames, cfg.filter_config(), cfg.threads)
        fallback = False
    except ThumbforgeError:
        mask = qf.unfiltered_mask(frames, cfg.filter_config(), cfg.threads)
        fallback = True
    kept = [int(i) for i in mask.kept_indices]
    vectors = {d.index: d.vector for d in desc.compute_descriptors([frames[i] for i in kept], cfg.threads)}
    still = aesthetics.stillness_sequence(frames)
    subshots = clustering.segment_subshots(mask, vectors, cfg.seed)
    keyframes = clustering.extract_keyframes(subshots, still)
    doc = _envelope(cfg, "keyframes", {
        "input": args.input,
        "video": {"frames": len(frames), "duration_s": len(frames) / info.fps},
        "boundaries": [int(b) for b in mask.boundaries],
        "shots": [[int(s), int(e)] for s, e in mask.shots],
        "filter_fallback": fallback,
        "subshots": [{"shot_id": s.shot_id, "start": s.start, "end": s.end, "cluster_id": s.cluster_id}
                     for s in subshots],
        "keyframes": [{"frame_index": k, "timestamp_s": frames[k].timestamp, "stillness": float(still[k])}
                      for k in keyframes],
    })
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    dump_json(doc, args.out)
    print(f"{len(mask.shots)} shots, {len(subshots)} subshots, {len(keyframes)} keyframes")
    return EXIT_OK


def cmd_baseline(args, cfg: RunConfig) -> int:
    info, frames = _load(args)
    model = load_model(cfg.model) if cfg.model else None
    ranked = rank_frames(args.method, frames, cfg.k, cfg.seed, cfg.lam, model, cfg.selection_config(), cfg.threads)
    os.makedirs(args.out, exist_ok=True)
    doc = _envelope(cfg, "baseline", {
        "input": args.input, "method": args.method,
        "video": {"frames": len(frames), "duration_s": len(frames) / info.fps},
        "candidates": _ranked_candidates(ranked, frames, cfg.k),
    })
    dump_json(doc, os.path.join(args.out, "manifest.json"))
    for c in doc["candidates"]:
        print(f"{c['rank']}\t{c['frame_index']}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    if args.csv:
        X, y = load_training_csv(args.csv)
        source = {"csv": args.csv}
    else:
        from .synth import synthetic_regression
        X, y = synthetic_regression(args.synthetic, seed=cfg.seed)
        source = {"synthetic_rows": args.synthetic}
    model = train_forest(X, y, cfg.n_trees, cfg.seed, threads=cfg.threads)
    os.makedirs(os.path.dirname(os.path.abspath(args.model_out)), exist_ok=True)
    save_model(model, args.model_out)
    doc = _envelope(cfg, "train", {"source": source, "rows": int(len(y)), "n_trees": model.n_trees,
                                   "model": os.path.basename(args.model_out),
                                   "model_sha256": _sha256(args.model_out)})
    dump_json(doc, args.model_out + ".json")
    print(f"trained {model.n_trees} trees on {len(y)} rows -> {args.model_out}")
    return EXIT_OK


def _parse_ks(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(sorted({int(k) for k in text.split(",") if k.strip()}))
    except ValueError:
        raise UsageError(f"--ks must be comma-separated integers, got {text!r}") from None
    if not ks or ks[0] < 1:
        raise UsageError("--ks needs positive integers")
    return ks


def cmd_evaluate(args, cfg: RunConfig) -> int:
    ks = _parse_ks(args.ks)
    model = load_model(cfg.model) if cfg.model else None
    rows, results = mean_precision_at_k(args.manifest, args.method, ks, cfg.match_config(), cfg.seed, cfg.threads,
                                        lam=cfg.lam, model=model, selection=cfg.selection_config())
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    write_results_csv(args.out, rows)
    doc = _envelope(cfg, "evaluate", {
        "manifest": args.manifest, "method": args.method, "ks": list(ks), "results": rows,
        "videos": [{"id": r.video_id, "ranked": list(r.ranked[:max(ks)]),
                    "hits": {str(k): v for k, v in r.hits.items()}} for r in results],
    })
    dump_json(doc, args.out + ".json")
    for r in rows:
        if "category" not in r:
            print(f"P@{r['k']} = {r['mean_p_at_k']:.4f} over {r['n_videos']} videos")
    return EXIT_OK


def cmd_analyze(args, cfg: RunConfig) -> int:
    from .analysis import feature_quantile_report, write_quantile_csv, write_significance_csv

    corpus = []
    for rec in load_manifest(args.manifest):
        if rec.truth.gt_frame_index is None:
            raise ThumbforgeError(f"{rec.id}: analysis needs gt_frame_index as the designated thumbnail")
        _, frames = load_video(rec.source, rec.source_kind)
        corpus.append((rec.id, frames, rec.truth.gt_frame_index))
    report = feature_quantile_report(corpus, args.bins, cfg.match_config(), cfg.threads)
    os.makedirs(args.out, exist_ok=True)
    write_quantile_csv(os.path.join(args.out, "quantiles.csv"), report.matrix)
    write_significance_csv(os.path.join(args.out, "significance.csv"), report.results)
    doc = _envelope(cfg, "analyze", {
        "manifest": args.manifest, "videos": len(report.matrix.video_ids), "skipped": report.skipped,
        "flagged": report.flagged,
    })
    dump_json(doc, os.path.join(args.out, "manifest.json"))
    for r in report.results[:10]:
        print(f"{r.feature}\tmean_q={r.mean_quantile:.3f}\tp={r.p_value:.3g}{'  *' if r.significant else ''}")
    return EXIT_OK


def cmd_inspect(args, cfg: RunConfig) -> int:
    _, frames = _load(args)
    mask = qf.unfiltered_mask(frames, cfg.filter_config(), cfg.threads)
    still = aesthetics.stillness_sequence(frames)
    names = ["index", "timestamp", "luminance", "sharpness", "uniformity", "ecr", "stillness"]
    vecs = None
    if args.aesthetics:
        vecs = aesthetics.compute_aesthetic_vectors(frames, threads=cfg.threads)
        names += aesthetics.AESTHETIC_NAMES
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i, q in enumerate(mask.qualities):
            row = [q.index, repr(frames[i].timestamp), repr(q.luminance), repr(q.sharpness), repr(q.uniformity),
                   repr(float(mask.ecr[i])), repr(float(still[i]))]
            if vecs is not None:
                row += [repr(float(x)) for x in vecs[i].vector]
            w.writerow(row)
    doc = _envelope(cfg, "inspect", {"input": args.input, "frames": len(frames), "columns": names,
                                     "csv": os.path.basename(args.out), "csv_sha256": _sha256(args.out)})
    dump_json(doc, args.out + ".json")
    print(f"{len(frames)} frames -> {args.out}")
    return EXIT_OK


COMMANDS = {"extract": cmd_extract, "keyframes": cmd_keyframes, "baseline": cmd_baseline, "train": cmd_train,
            "evaluate": cmd_evaluate, "analyze": cmd_analyze, "inspect": cmd_inspect}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _run_config(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as e:
        print(f"thumbforge: configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        return COMMANDS[args.command](args, cfg)
    except UsageError as e:
        print(f"thumbforge: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ThumbforgeError, OSError, ValueError) as e:
        print(f"thumbforge: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
