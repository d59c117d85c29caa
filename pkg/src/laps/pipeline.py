"""Declarative pipeline configuration and the corpus-level driver.

One TOML file carries every stage's parameters plus a global seed; section
seeds default to deterministic offsets of the global seed so a single
``seed = N`` line reproduces the whole run. The driver chains
encode -> calibrate -> segment -> embed -> cluster over a corpus directory,
evaluating boundary F1 and cluster purity when ground truth and labels are
present, and writes one combined JSON report whose only non-reproducible
field is ``generated_at``.
"""

from __future__ import annotations

import dataclasses
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import calibration, clustering, detector, embedder, encoder, evaluation, icss
from .errors import DataError, LapsError
from .stream_io import (GroundTruth, KeypointClip, LatentStream, Primitive,
                        read_frame_embeddings, read_ground_truth, read_keypoint_clip,
                        write_embedding_matrix, write_latent_stream,
                        write_segment_manifest)
from .synth import SynthSpec, action_intervals


@dataclass
class ClusteringParams:
    k: int = 3
    n_init: int = 10
    max_iter: int = 300
    seed: int = 0


@dataclass
class IcssParams:
    pair_budget: int = 2000
    seed: int = 0


@dataclass
class CalibrationParams:
    bins: int = 256
    sweep_size: int = calibration.DEFAULT_SWEEP_SIZE


@dataclass
class PipelineConfig:
    seed: int = 0
    encoder: encoder.EncoderConfig = field(default_factory=encoder.EncoderConfig)
    detector: detector.DetectorConfig = field(default_factory=detector.DetectorConfig)
    embedder: embedder.EmbedderConfig = field(default_factory=embedder.EmbedderConfig)
    clustering: ClusteringParams = field(default_factory=ClusteringParams)
    icss: IcssParams = field(default_factory=IcssParams)
    calibration: CalibrationParams = field(default_factory=CalibrationParams)
    tolerances_s: tuple[float, ...] = (2.0, 5.0)

    def validate(self) -> "PipelineConfig":
        if self.encoder.fsq.latent_dim != self.embedder.input_dim:
            raise DataError(
                f"config inconsistency: encoder latent_dim {self.encoder.fsq.latent_dim} "
                f"!= embedder input_dim {self.embedder.input_dim}")
        if any(t <= 0 for t in self.tolerances_s):
            raise DataError("tolerances must be positive")
        return self

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["encoder"]["fsq"]["levels"] = list(self.encoder.fsq.levels)
        doc["tolerances_s"] = list(self.tolerances_s)
        return doc


def _kwargs(section: dict, cls) -> dict:
    """Filter a TOML section to the dataclass's fields; unknown keys error."""
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise DataError(f"unknown config key {sorted(unknown)[0]!r} for "
                        f"{cls.__name__}")
    return dict(section)


def config_from_dict(doc: dict, seed_override: int | None = None) -> PipelineConfig:
    """Build a config, letting each dataclass supply its own defaults.

    Section seeds default to deterministic offsets of the global seed.
    """
    seed = int(doc.get("seed", 0)) if seed_override is None else int(seed_override)
    enc = dict(doc.get("encoder", {}))
    fsq_doc = _kwargs(enc.pop("fsq", {}), encoder.FsqConfig)
    if "levels" in fsq_doc:
        fsq_doc["levels"] = tuple(fsq_doc["levels"])
    fsq = encoder.FsqConfig(**fsq_doc)
    enc = _kwargs(enc, encoder.EncoderConfig)
    enc.setdefault("seed", seed)
    enc_cfg = encoder.EncoderConfig(fsq=fsq, **enc)
    det_cfg = detector.DetectorConfig(**_kwargs(doc.get("detector", {}),
                                                detector.DetectorConfig))
    emb = _kwargs(doc.get("embedder", {}), embedder.EmbedderConfig)
    emb.setdefault("seed", seed + 1)
    emb.setdefault("input_dim", fsq.latent_dim)
    emb_cfg = embedder.EmbedderConfig(**emb)
    clus = _kwargs(doc.get("clustering", {}), ClusteringParams)
    clus.setdefault("seed", seed + 2)
    clus_cfg = ClusteringParams(**clus)
    ic = _kwargs(doc.get("icss", {}), IcssParams)
    ic.setdefault("seed", seed + 3)
    icss_cfg = IcssParams(**ic)
    cal_cfg = CalibrationParams(**_kwargs(doc.get("calibration", {}),
                                          CalibrationParams))
    ev = doc.get("evaluation", {})
    tolerances = tuple(float(t) for t in ev.get("tolerances_s", (2.0, 5.0)))
    return PipelineConfig(seed=seed, encoder=enc_cfg, detector=det_cfg, embedder=emb_cfg,
                          clustering=clus_cfg, icss=icss_cfg, calibration=cal_cfg,
                          tolerances_s=tolerances).validate()


def load_config(path: str | Path, seed_override: int | None = None) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such config file: {path}")
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise DataError(f"{path}: invalid TOML: {exc}") from exc
    return config_from_dict(doc, seed_override)


def load_synth_spec(path: str | Path, seed_override: int | None = None) -> SynthSpec:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such spec file: {path}")
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise DataError(f"{path}: invalid TOML: {exc}") from exc
    sec = _kwargs(dict(doc.get("synth", doc)), SynthSpec)
    for key in ("idle_range_s", "action_range_s"):
        if key in sec:
            sec[key] = tuple(float(v) for v in sec[key])
    if seed_override is not None:
        sec["seed"] = int(seed_override)
    return SynthSpec(**sec)


# ---------------------------------------------------------------------------
# corpus driver


@dataclass
class _StreamEntry:
    stream_id: str
    clip_path: Path
    gt_path: Path | None = None
    labels_path: Path | None = None


def _discover_corpus(corpus_dir: Path) -> list[_StreamEntry]:
    manifest_path = corpus_dir / "manifest.json"
    entries: list[_StreamEntry] = []
    if manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        for item in manifest["streams"]:
            entries.append(_StreamEntry(
                stream_id=item["id"], clip_path=corpus_dir / item["clip"],
                gt_path=corpus_dir / item["ground_truth"] if item.get("ground_truth") else None,
                labels_path=corpus_dir / item["labels"] if item.get("labels") else None))
    else:
        for clip_path in sorted(corpus_dir.glob("*.kpc")):
            gt = clip_path.with_suffix("").with_suffix(".gt.json")
            gt = gt if gt.is_file() else None
            entries.append(_StreamEntry(stream_id=clip_path.stem, clip_path=clip_path,
                                        gt_path=gt))
    return sorted(entries, key=lambda e: e.stream_id)


def _label_primitives(primitives: list[Primitive], ids: list[str], gt: GroundTruth,
                      templates: list[int]) -> dict[str, int]:
    """Map each primitive to the template of its max-overlap planted action."""
    intervals = action_intervals(gt)
    out: dict[str, int] = {}
    for pid, p in zip(ids, primitives):
        best, best_overlap = None, 0.0
        for (a, b), template in zip(intervals, templates):
            overlap = min(p.end_s, b) - max(p.start_s, a)
            if overlap > best_overlap:
                best, best_overlap = template, overlap
        if best is not None:
            out[pid] = best
    return out


def run_pipeline(cfg: PipelineConfig, corpus_dir: str | Path, out_dir: str | Path,
                 jobs: int = 1, frame_embeddings: str | Path | None = None,
                 k_override: int | None = None) -> dict:
    """Run encode -> calibrate -> segment -> embed -> cluster over a corpus."""
    cfg.validate()
    corpus_dir, out_dir = Path(corpus_dir), Path(out_dir)
    if not corpus_dir.is_dir():
        raise DataError(f"no such corpus directory: {corpus_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = _discover_corpus(corpus_dir)
    report: dict = {
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "config": cfg.to_dict(),
        "n_streams": len(entries),
        "streams": [],
        "calibration": None,
        "clustering": None,
        "purity": None,
        "icss": None,
        "overall_f1": None,
    }
    if not entries:
        (out_dir / "report.json").write_text(json.dumps(report, indent=1), encoding="utf-8")
        return report

    enc = encoder.SurrogateEncoder(cfg.encoder)

    def encode_one(entry: _StreamEntry) -> tuple[str, KeypointClip | None,
                                                 LatentStream | None, str | None]:
        try:
            clip = read_keypoint_clip(entry.clip_path)
            clip.source_id = entry.stream_id
            stream = enc.encode_stream(clip)
            write_latent_stream(stream, out_dir / f"{entry.stream_id}.lats")
            return entry.stream_id, clip, stream, None
        except LapsError as exc:
            return entry.stream_id, None, None, str(exc)

    max_workers = max(1, int(jobs))
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        encoded = list(pool.map(encode_one, entries))
    encoded.sort(key=lambda item: item[0])
    failures = {sid: err for sid, _, _, err in encoded if err is not None}
    ok = [(sid, clip, stream) for sid, clip, stream, err in encoded if err is None]

    det_cfg = cfg.detector
    if ok:
        calib = calibration.calibrate_streams(
            [c for _, c, _ in ok], [s for _, _, s in ok],
            alpha=cfg.detector.alpha, r=cfg.detector.hysteresis_ratio,
            bins=cfg.calibration.bins, sweep_size=cfg.calibration.sweep_size)
        calib.to_json(out_dir / "calibration.json")
        det_cfg = dataclasses.replace(cfg.detector, theta_on=calib.theta_on)
        report["calibration"] = {"theta_on": calib.theta_on, "theta_off": calib.theta_off,
                                 "f1_at_best": calib.f1_at_best,
                                 "otsu_threshold": calib.otsu_threshold}

    all_primitives: list[Primitive] = []
    all_ids: list[str] = []
    label_map: dict[str, int] = {}
    per_tol_results: dict[float, list[evaluation.F1Result]] = {t: [] for t in cfg.tolerances_s}
    entry_by_id = {e.stream_id: e for e in entries}

    def segment_one(item: tuple[str, KeypointClip, LatentStream]):
        sid, _clip, stream = item
        try:
            primitives = detector.detect(stream, det_cfg)
            write_segment_manifest(primitives, out_dir / f"{sid}.segments.json",
                                   fps=stream.fps, source_id=sid,
                                   codebook_size=stream.codebook_size)
            return sid, primitives, None
        except LapsError as exc:
            return sid, [], str(exc)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        segmented = list(pool.map(segment_one, ok))
    segmented.sort(key=lambda item: item[0])

    for sid, primitives, err in segmented:
        if err is not None:
            failures[sid] = err
            continue
        ids = [f"{sid}:{i:04d}" for i in range(len(primitives))]
        all_primitives.extend(primitives)
        all_ids.extend(ids)
        entry = entry_by_id[sid]
        stream_report: dict = {"id": sid, "n_primitives": len(primitives), "f1": None}
        if entry.gt_path is not None and entry.gt_path.is_file():
            gt = read_ground_truth(entry.gt_path)
            pred = evaluation.extract_boundaries(primitives)
            stream_report["f1"] = {}
            for tol in cfg.tolerances_s:
                res = evaluation.boundary_f1(pred, list(gt.boundaries_s), tol)
                per_tol_results[tol].append(res)
                stream_report["f1"][repr(float(tol))] = res.to_dict()
            if entry.labels_path is not None and entry.labels_path.is_file():
                templates = json.loads(entry.labels_path.read_text(encoding="utf-8"))["templates"]
                label_map.update(_label_primitives(primitives, ids, gt, templates))
        report["streams"].append(stream_report)

    for sid in sorted(failures):
        report["streams"].append({"id": sid, "error": failures[sid]})
    report["streams"].sort(key=lambda s: s["id"])

    if any(per_tol_results.values()):
        report["overall_f1"] = {
            repr(float(tol)): evaluation.pooled_f1(results, tol).to_dict()
            for tol, results in per_tol_results.items() if results}

    if all_primitives:
        embeddings = embedder.embed_all(all_primitives, cfg.embedder, ids=all_ids)
        raw = np.stack([e.raw for e in embeddings])
        write_embedding_matrix(all_ids, raw, out_dir / "embeddings.bin")
        # cluster from the f32 file payload so standalone stages reproduce this
        raw32 = raw.astype(np.float32)
        k = k_override if k_override is not None else cfg.clustering.k
        try:
            x_std, _, _ = clustering.standardize(raw32.astype(np.float64))
            x_hat = clustering.l2_normalize_rows(x_std, ids=all_ids)
            cluster_report = clustering.kmeans(
                x_hat, k=k, seed=cfg.clustering.seed, n_init=cfg.clustering.n_init,
                max_iter=cfg.clustering.max_iter, ids=all_ids)
            cluster_report.to_json(out_dir / "clusters.json")
            ch = cluster_report.calinski_harabasz
            report["clustering"] = {
                "k": k, "inertia": cluster_report.inertia,
                "silhouette": cluster_report.silhouette,
                "calinski_harabasz": "inf" if ch is not None and np.isinf(ch) else ch,
                "cluster_sizes": cluster_report.cluster_sizes,
            }
            if label_map:
                report["purity"] = clustering.cluster_purity(cluster_report.assignments,
                                                             label_map)
            if frame_embeddings is not None:
                fes = read_frame_embeddings(frame_embeddings)
                descriptors = icss.descriptors_from_frames(fes.frames_by_primitive)
                known = {pid: c for pid, c in cluster_report.assignments.items()
                         if pid in descriptors}
                icss_report = icss.icss(descriptors, known,
                                        budget=cfg.icss.pair_budget, seed=cfg.icss.seed)
                icss_report.to_json(out_dir / "icss.json")
                report["icss"] = json.loads((out_dir / "icss.json").read_text(encoding="utf-8"))
        except LapsError as exc:
            report["clustering"] = {"error": str(exc)}

    (out_dir / "report.json").write_text(json.dumps(report, indent=1), encoding="utf-8")
    return report
