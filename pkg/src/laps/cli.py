"""Command-line entry point.

Subcommands: synth, encode, calibrate, segment, embed, cluster, icss, eval,
and pipeline (which chains encode -> calibrate -> segment -> embed ->
cluster over a corpus). Exit codes: 0 success, 1 usage error, 2 data error,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, calibration, clustering, detector, embedder, evaluation, icss
from . import pipeline as pipeline_mod
from . import synth as synth_mod
from .encoder import SurrogateEncoder
from .errors import DataError, InternalError, LapsError, UsageError
from .stream_io import (read_embedding_matrix, read_frame_embeddings, read_ground_truth,
                        read_keypoint_clip, read_latent_stream, read_segment_manifest,
                        write_embedding_matrix, write_latent_stream, write_segment_manifest)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):   # argparse defaults to exit code 2
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="laps", description=__doc__)
    parser.add_argument("--version", action="version", version=f"laps {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", required=True, help="TOML spec file")
    p.add_argument("--n", type=int, default=1, help="number of streams")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")

    p = sub.add_parser("encode", help="encode a keypoint clip into a latent stream")
    p.add_argument("--input", required=True, help="clip (.kpc)")
    p.add_argument("--config", required=True, help="TOML config file")
    p.add_argument("--output", required=True, help="latent stream (.lats)")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("calibrate", help="unsupervised theta_on calibration")
    p.add_argument("--clips", required=True, help="directory of .kpc clips")
    p.add_argument("--config", required=True)
    p.add_argument("--output", required=True, help="calibration result JSON")
    p.add_argument("--seed", type=int, default=None)

    det_defaults = detector.DetectorConfig()
    p = sub.add_parser("segment", help="detect primitives in a latent stream")
    p.add_argument("--input", help="latent stream (.lats)")
    p.add_argument("--signal-file", help="plain text energy signal, one value per line")
    p.add_argument("--theta-on", type=float, default=None)
    p.add_argument("--calibration", help="calibration JSON providing theta_on")
    p.add_argument("--ratio", type=float, default=det_defaults.hysteresis_ratio)
    p.add_argument("--alpha", type=float, default=det_defaults.alpha)
    p.add_argument("--up", type=int, default=det_defaults.up_count)
    p.add_argument("--down", type=int, default=det_defaults.down_count)
    p.add_argument("--min-len", type=int, default=det_defaults.min_len)
    p.add_argument("--fps", type=float, default=1.0,
                   help="frame rate for --signal-file inputs")
    p.add_argument("--output", required=True, help="segment manifest JSON")

    p = sub.add_parser("embed", help="embed segmented primitives")
    p.add_argument("--segments", required=True, help="segment manifest JSON")
    p.add_argument("--vectors", help="vector sidecar .lats (defaults to the "
                                     "manifest's vectors_path)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="f32 embedding matrix")

    p = sub.add_parser("cluster", help="cosine k-means over embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--output", required=True)

    p = sub.add_parser("icss", help="intra-cluster semantic similarity")
    p.add_argument("--clusters", required=True, help="cluster report JSON")
    p.add_argument("--frame-embeddings", required=True, help="frame embedding index JSON")
    p.add_argument("--budget", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.add_argument("--audit", help="optional CSV of every sampled pair")

    p = sub.add_parser("eval", help="boundary F1 against ground truth")
    p.add_argument("--pred", required=True, help="segment manifest JSON")
    p.add_argument("--gt", required=True, help="ground truth JSON")
    p.add_argument("--tolerances", default="2,5", help="comma-separated seconds")
    p.add_argument("--include-endpoints", action="store_true",
                   help="add t=0 and the stream end to the predicted boundaries")
    p.add_argument("--stream-end-s", type=float, default=None,
                   help="stream end time for --include-endpoints")
    p.add_argument("--output", required=True)

    p = sub.add_parser("pipeline", help="full corpus run with a combined report")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=None, help="override cluster count")
    p.add_argument("--jobs", type=int, default=1, help="worker pool bound")
    p.add_argument("--seed", type=int, default=None, help="override the global seed")
    p.add_argument("--frame-embeddings", default=None)
    return parser


def _cmd_synth(args) -> int:
    spec = pipeline_mod.load_synth_spec(args.spec, seed_override=args.seed)
    manifest = synth_mod.generate_corpus(spec, args.n, args.out)
    print(f"wrote {manifest['n_streams']} streams to {args.out}")
    return 0


def _cmd_encode(args) -> int:
    cfg = pipeline_mod.load_config(args.config, seed_override=args.seed)
    clip = read_keypoint_clip(args.input)
    stream = SurrogateEncoder(cfg.encoder).encode_stream(clip)
    write_latent_stream(stream, args.output)
    print(f"encoded {clip.frames} frames into {stream.steps} latent steps")
    return 0


def _cmd_calibrate(args) -> int:
    cfg = pipeline_mod.load_config(args.config, seed_override=args.seed)
    clip_dir = Path(args.clips)
    if not clip_dir.is_dir():
        raise DataError(f"no such clip directory: {clip_dir}")
    clips = [read_keypoint_clip(p) for p in sorted(clip_dir.glob("*.kpc"))]
    result = calibration.calibrate(clips, cfg.encoder, alpha=cfg.detector.alpha,
                                   r=cfg.detector.hysteresis_ratio,
                                   bins=cfg.calibration.bins,
                                   sweep_size=cfg.calibration.sweep_size)
    result.to_json(args.output)
    print(f"theta_on={result.theta_on:.6g} theta_off={result.theta_off:.6g} "
          f"pseudo-label F1={result.f1_at_best:.4f}")
    return 0


def _detector_config(args) -> detector.DetectorConfig:
    theta_on = args.theta_on
    ratio = args.ratio
    if args.calibration is not None:
        calib = calibration.CalibrationResult.from_json(args.calibration)
        theta_on = calib.theta_on if theta_on is None else theta_on
        if calib.theta_on > 0:
            ratio = calib.theta_off / calib.theta_on
    if theta_on is None:
        raise UsageError("segment needs --theta-on or --calibration")
    return detector.DetectorConfig(alpha=args.alpha, theta_on=theta_on,
                                   hysteresis_ratio=ratio, up_count=args.up,
                                   down_count=args.down, min_len=args.min_len)


def _cmd_segment(args) -> int:
    cfg = _detector_config(args)
    if (args.input is None) == (args.signal_file is None):
        raise UsageError("segment needs exactly one of --input or --signal-file")
    if args.input is not None:
        stream = read_latent_stream(args.input)
        primitives = detector.detect(stream, cfg)
        write_segment_manifest(primitives, args.output, fps=stream.fps,
                               source_id=stream.source_id,
                               codebook_size=stream.codebook_size)
    else:
        try:
            values = [float(line) for line in
                      Path(args.signal_file).read_text().split()]
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read signal file {args.signal_file}: {exc}") from exc
        segments = detector.detect_signal(np.asarray(values), cfg)
        doc = {"source_id": Path(args.signal_file).stem, "fps": args.fps,
               "segments": [{"start": s.start, "end": s.end,
                             "start_s": s.start / args.fps, "end_s": s.end / args.fps,
                             "truncated": s.truncated} for s in segments]}
        Path(args.output).write_text(json.dumps(doc, indent=1), encoding="utf-8")
        primitives = segments
    print(f"emitted {len(primitives)} segments")
    return 0


def _cmd_embed(args) -> int:
    primitives, _fps, source_id = read_segment_manifest(args.segments,
                                                        vectors_path=args.vectors)
    if not primitives:
        write_embedding_matrix([], np.empty((0, embedder.EmbedderConfig().model_dim)),
                               args.output)
        print("no segments to embed")
        return 0
    cfg = embedder.EmbedderConfig(seed=args.seed)
    ids = [f"{source_id}:{i:04d}" for i in range(len(primitives))]
    embeddings = embedder.embed_all(primitives, cfg, ids=ids)
    write_embedding_matrix(ids, np.stack([e.raw for e in embeddings]), args.output)
    print(f"embedded {len(embeddings)} primitives at dim {cfg.model_dim}")
    return 0


def _cmd_cluster(args) -> int:
    ids, matrix = read_embedding_matrix(args.embeddings)
    x_std, _, _ = clustering.standardize(matrix.astype(np.float64))
    x_hat = clustering.l2_normalize_rows(x_std, ids=ids)
    report = clustering.kmeans(x_hat, k=args.k, seed=args.seed, n_init=args.n_init,
                               ids=ids)
    report.to_json(args.output)
    sil = "n/a" if report.silhouette is None else f"{report.silhouette:.4f}"
    print(f"k={args.k} inertia={report.inertia:.6g} silhouette={sil}")
    return 0


def _cmd_icss(args) -> int:
    cluster_report = clustering.ClusterReport.from_json(args.clusters)
    fes = read_frame_embeddings(args.frame_embeddings)
    descriptors = icss.descriptors_from_frames(fes.frames_by_primitive)
    members = {pid: c for pid, c in cluster_report.assignments.items() if pid in descriptors}
    missing = set(cluster_report.assignments) - set(members)
    if missing:
        raise DataError(f"no frame embeddings for {len(missing)} primitives, "
                        f"e.g. {sorted(missing)[0]!r}")
    report = icss.icss(descriptors, members, budget=args.budget, seed=args.seed)
    report.to_json(args.output)
    if args.audit:
        report.write_audit(args.audit)
    base = "n/a" if report.baseline.mean is None else f"{report.baseline.mean:.4f}"
    over = "n/a" if report.overall.mean is None else f"{report.overall.mean:.4f}"
    print(f"overall ICSS={over} baseline={base}")
    return 0


def _cmd_eval(args) -> int:
    primitives, _fps, _sid = read_segment_manifest(args.pred)
    gt = read_ground_truth(args.gt)
    pred = evaluation.extract_boundaries(primitives)
    if args.include_endpoints:
        end = args.stream_end_s
        if end is None:
            candidates = pred + list(gt.boundaries_s)
            end = max(candidates) if candidates else 0.0
        pred = sorted(set(pred) | {0.0, float(end)})
    try:
        tolerances = [float(t) for t in args.tolerances.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --tolerances value: {args.tolerances}") from exc
    results = evaluation.evaluate_tolerances(pred, list(gt.boundaries_s), tolerances)
    evaluation.write_f1_report(results, args.output)
    for tol, res in results.items():
        print(f"F1@{tol}s = {res['f1']:.4f} (tp={res['tp']} fp={res['fp']} fn={res['fn']})")
    return 0


def _cmd_pipeline(args) -> int:
    cfg = pipeline_mod.load_config(args.config, seed_override=args.seed)
    report = pipeline_mod.run_pipeline(cfg, args.corpus, args.out, jobs=args.jobs,
                                       frame_embeddings=args.frame_embeddings,
                                       k_override=args.k)
    n_err = sum(1 for s in report["streams"] if "error" in s)
    print(f"processed {report['n_streams']} streams ({n_err} failed); "
          f"report at {Path(args.out) / 'report.json'}")
    if report.get("overall_f1"):
        for tol, res in report["overall_f1"].items():
            print(f"  F1@{tol}s = {res['f1']:.4f}")
    if report.get("purity") is not None:
        print(f"  cluster purity = {report['purity']:.4f}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "encode": _cmd_encode,
    "calibrate": _cmd_calibrate,
    "segment": _cmd_segment,
    "embed": _cmd_embed,
    "cluster": _cmd_cluster,
    "icss": _cmd_icss,
    "eval": _cmd_eval,
    "pipeline": _cmd_pipeline,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except LapsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
