"""Domain types and their on-disk formats.

Binary formats (little-endian throughout):

  .kpc   keypoint clip: magic ``LAPSKPC1``, u32 T, u32 N, f32 fps,
         then T*N*2 f32 coordinates ordered frame-major, point-major, (x, y).
  .lats  latent stream: magic ``LAPSLAT1``, u32 T_z, u32 d_m, u32 C, f32 fps,
         then T_z u32 codes, T_z u32 frame indices, T_z*d_m f32 vectors.

JSON formats: segment manifests (with a sibling .lats vector file), ground
truth boundary lists, and frame-embedding indexes pointing at raw f32
matrix files.

Readers validate every type invariant and raise DataError instead of
clamping. Floats in JSON use Python's repr serialization, which round-trips
exactly; array payloads are stored as f32 and kept as f32 in memory so a
write/read cycle is the identity.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

KPC_MAGIC = b"LAPSKPC1"
LATS_MAGIC = b"LAPSLAT1"

# boundary timestamps closer than this (seconds) are treated as one boundary
BOUNDARY_DEDUP_S = 1e-6


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise DataError(msg)


# ---------------------------------------------------------------------------
# keypoint clips


@dataclass
class KeypointClip:
    """A stack of keypoint tracks: shape (T, N, 2) pixel coordinates."""

    tracks: np.ndarray
    fps: float
    source_id: str = ""

    def __post_init__(self) -> None:
        self.tracks = np.asarray(self.tracks, dtype=np.float32)
        self.fps = float(self.fps)

    @property
    def frames(self) -> int:
        return int(self.tracks.shape[0])

    @property
    def points(self) -> int:
        return int(self.tracks.shape[1])

    def validate(self) -> "KeypointClip":
        _require(self.tracks.ndim == 3 and self.tracks.shape[2] == 2,
                 f"tracks must have shape (T, N, 2), got {self.tracks.shape}")
        _require(self.frames >= 2, f"clip needs at least 2 frames, got {self.frames}")
        _require(self.points >= 1, f"clip needs at least 1 point, got {self.points}")
        _require(self.fps > 0, f"fps must be positive, got {self.fps}")
        _require(bool(np.isfinite(self.tracks).all()), "clip contains non-finite coordinates")
        return self


def write_keypoint_clip(clip: KeypointClip, path: str | Path) -> None:
    clip.validate()
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(KPC_MAGIC)
        fh.write(struct.pack("<IIf", clip.frames, clip.points, np.float32(clip.fps)))
        fh.write(np.ascontiguousarray(clip.tracks, dtype="<f4").tobytes())


def read_keypoint_clip(path: str | Path) -> KeypointClip:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such clip file: {path}")
    raw = path.read_bytes()
    if raw[:8] != KPC_MAGIC:
        raise DataError(f"{path}: bad magic, not a keypoint clip file")
    if len(raw) < 8 + 12:
        raise DataError(f"{path}: header truncated")
    t, n, fps = struct.unpack("<IIf", raw[8:20])
    payload = raw[20:]
    expected = t * n * 2 * 4
    if len(payload) < expected:
        raise DataError(f"{path}: payload truncated (header declares {t}x{n} frames/points)")
    if len(payload) > expected:
        raise DataError(f"{path}: trailing bytes after payload")
    tracks = np.frombuffer(payload, dtype="<f4").reshape(t, n, 2).copy()
    return KeypointClip(tracks=tracks, fps=float(fps), source_id=path.stem).validate()


# ---------------------------------------------------------------------------
# latent streams


@dataclass
class LatentStream:
    """Paired continuous quantized vectors and discrete code indices.

    ``vectors[t]`` is always an exact codebook prototype for ``codes[t]``;
    ``frame_of_step[t]`` is the source frame of latent step ``t`` and is
    strictly increasing.
    """

    vectors: np.ndarray            # (T_z, d_m) float32
    codes: np.ndarray              # (T_z,) int64
    codebook_size: int
    frame_of_step: np.ndarray      # (T_z,) int64
    fps: float
    source_id: str = ""

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        self.codes = np.asarray(self.codes, dtype=np.int64)
        self.frame_of_step = np.asarray(self.frame_of_step, dtype=np.int64)
        self.codebook_size = int(self.codebook_size)
        self.fps = float(self.fps)

    @property
    def steps(self) -> int:
        return int(self.codes.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def validate(self) -> "LatentStream":
        _require(self.vectors.ndim == 2, "vectors must be a 2-d array")
        _require(self.codes.ndim == 1 and self.frame_of_step.ndim == 1,
                 "codes and frame_of_step must be 1-d")
        _require(len(self.codes) == len(self.vectors) == len(self.frame_of_step),
                 "codes, vectors and frame_of_step must have equal length")
        _require(self.codebook_size >= 1, "codebook_size must be >= 1")
        if self.steps:
            _require(int(self.codes.min()) >= 0 and int(self.codes.max()) < self.codebook_size,
                     "code index out of range [0, C)")
            _require(bool(np.isfinite(self.vectors).all()), "stream contains non-finite vectors")
            _require(bool(np.all(np.diff(self.frame_of_step) > 0)),
                     "frame_of_step must be strictly increasing")
            _require(int(self.frame_of_step[0]) >= 0, "frame indices must be non-negative")
        _require(self.fps > 0, f"fps must be positive, got {self.fps}")
        return self


def write_latent_stream(stream: LatentStream, path: str | Path) -> None:
    stream.validate()
    with open(path, "wb") as fh:
        fh.write(LATS_MAGIC)
        fh.write(struct.pack("<IIIf", stream.steps, stream.dim, stream.codebook_size,
                             np.float32(stream.fps)))
        fh.write(stream.codes.astype("<u4").tobytes())
        fh.write(stream.frame_of_step.astype("<u4").tobytes())
        fh.write(np.ascontiguousarray(stream.vectors, dtype="<f4").tobytes())


def read_latent_stream(path: str | Path) -> LatentStream:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such latent stream file: {path}")
    raw = path.read_bytes()
    if raw[:8] != LATS_MAGIC:
        raise DataError(f"{path}: bad magic, not a latent stream file")
    if len(raw) < 8 + 16:
        raise DataError(f"{path}: header truncated")
    t_z, d_m, c, fps = struct.unpack("<IIIf", raw[8:24])
    body = raw[24:]
    expected = t_z * 4 + t_z * 4 + t_z * d_m * 4
    if len(body) < expected:
        raise DataError(f"{path}: payload truncated")
    if len(body) > expected:
        raise DataError(f"{path}: trailing bytes after payload")
    codes = np.frombuffer(body, dtype="<u4", count=t_z).astype(np.int64)
    frames = np.frombuffer(body, dtype="<u4", count=t_z, offset=t_z * 4).astype(np.int64)
    vectors = np.frombuffer(body, dtype="<f4", offset=t_z * 8).reshape(t_z, d_m).copy()
    return LatentStream(vectors=vectors, codes=codes, codebook_size=int(c),
                        frame_of_step=frames, fps=float(fps),
                        source_id=path.stem).validate()


# ---------------------------------------------------------------------------
# primitives and segment manifests


@dataclass(eq=False)
class Primitive:
    """One segmented action: a half-open frame interval with its code and
    vector subsequences."""

    start_frame: int
    end_frame: int
    start_s: float
    end_s: float
    codes: np.ndarray              # (T_i,) int64
    vectors: np.ndarray            # (T_i, d_m) float32
    source_id: str = ""
    truncated: bool = False

    def __post_init__(self) -> None:
        self.codes = np.asarray(self.codes, dtype=np.int64)
        self.vectors = np.asarray(self.vectors, dtype=np.float32)

    @property
    def n_steps(self) -> int:
        return int(len(self.codes))

    def validate(self, fps: float | None = None) -> "Primitive":
        _require(self.start_frame < self.end_frame,
                 f"primitive interval empty: [{self.start_frame}, {self.end_frame})")
        _require(self.n_steps >= 1, "primitive must carry at least one latent step")
        _require(len(self.codes) == len(self.vectors),
                 "codes and vectors must have equal length")
        _require(bool(np.isfinite(self.vectors).all()), "primitive has non-finite vectors")
        if fps is not None:
            _require(self.start_s == self.start_frame / fps and self.end_s == self.end_frame / fps,
                     "seconds fields must equal frame fields divided by fps")
        return self

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Primitive):
            return NotImplemented
        return (self.start_frame == other.start_frame
                and self.end_frame == other.end_frame
                and self.start_s == other.start_s
                and self.end_s == other.end_s
                and self.source_id == other.source_id
                and self.truncated == other.truncated
                and np.array_equal(self.codes, other.codes)
                and np.array_equal(self.vectors, other.vectors))


def _sidecar_path(manifest_path: Path) -> Path:
    return manifest_path.with_suffix(".lats")


def write_segment_manifest(primitives: list[Primitive], path: str | Path, *,
                           fps: float, source_id: str = "",
                           codebook_size: int | None = None) -> None:
    """Write the JSON manifest plus a sibling .lats file holding the
    concatenated vector sequences (referenced by ``vectors_path``)."""
    path = Path(path)
    for p in primitives:
        p.validate(fps=fps)
    segments = []
    for p in primitives:
        segments.append({
            "start_frame": int(p.start_frame),
            "end_frame": int(p.end_frame),
            "start_s": float(p.start_s),
            "end_s": float(p.end_s),
            "truncated": bool(p.truncated),
            "codes": [int(c) for c in p.codes],
        })
    manifest = {"source_id": source_id, "fps": float(fps), "segments": segments,
                "vectors_path": None}
    if primitives:
        sidecar = _sidecar_path(path)
        all_codes = np.concatenate([p.codes for p in primitives])
        all_vectors = np.concatenate([p.vectors for p in primitives], axis=0)
        if codebook_size is None:
            codebook_size = int(all_codes.max()) + 1
        # frame indices in the sidecar are a synthetic running counter; the
        # true frame intervals live in the manifest
        stream = LatentStream(vectors=all_vectors, codes=all_codes,
                              codebook_size=codebook_size,
                              frame_of_step=np.arange(len(all_codes)),
                              fps=fps, source_id=source_id)
        write_latent_stream(stream, sidecar)
        manifest["vectors_path"] = sidecar.name
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1)
    except OSError as exc:
        raise DataError(f"cannot write manifest {path}: {exc}") from exc


def read_segment_manifest(path: str | Path,
                          vectors_path: str | Path | None = None,
                          ) -> tuple[list[Primitive], float, str]:
    """Read a manifest and its vector sidecar back into Primitives.

    ``vectors_path`` overrides the sidecar referenced by the manifest.
    Returns (primitives, fps, source_id).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such manifest: {path}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    fps = float(manifest["fps"])
    source_id = manifest.get("source_id", "")
    segments = manifest["segments"]
    vectors_by_segment: list[np.ndarray] = []
    if segments:
        if vectors_path is None:
            vec_name = manifest.get("vectors_path")
            _require(vec_name is not None,
                     f"{path}: manifest has segments but no vectors_path")
            vectors_path = path.parent / vec_name
        sidecar = read_latent_stream(vectors_path)
        offset = 0
        for seg in segments:
            n = len(seg["codes"])
            _require(offset + n <= sidecar.steps, f"{path}: vector sidecar shorter than manifest")
            vectors_by_segment.append(sidecar.vectors[offset:offset + n])
            _require(np.array_equal(sidecar.codes[offset:offset + n],
                                    np.asarray(seg["codes"], dtype=np.int64)),
                     f"{path}: sidecar codes disagree with manifest codes")
            offset += n
        _require(offset == sidecar.steps, f"{path}: vector sidecar longer than manifest")
    primitives = []
    for seg, vecs in zip(segments, vectors_by_segment):
        primitives.append(Primitive(
            start_frame=int(seg["start_frame"]), end_frame=int(seg["end_frame"]),
            start_s=float(seg["start_s"]), end_s=float(seg["end_s"]),
            codes=np.asarray(seg["codes"], dtype=np.int64), vectors=vecs,
            source_id=source_id, truncated=bool(seg.get("truncated", False)),
        ).validate(fps=fps))
    return primitives, fps, source_id


# ---------------------------------------------------------------------------
# ground truth


@dataclass
class GroundTruth:
    """Sorted boundary timestamps in seconds, optionally with one label per
    inter-boundary segment."""

    boundaries_s: np.ndarray
    labels: list | None = None

    def __post_init__(self) -> None:
        self.boundaries_s = np.asarray(self.boundaries_s, dtype=np.float64)

    def validate(self) -> "GroundTruth":
        _require(self.boundaries_s.ndim == 1, "boundaries must be a flat list")
        if len(self.boundaries_s):
            _require(bool(np.all(self.boundaries_s >= 0)), "boundaries must be non-negative")
            _require(bool(np.all(np.diff(self.boundaries_s) > 0)),
                     "boundaries must be strictly increasing")
        if self.labels is not None:
            _require(len(self.labels) == max(len(self.boundaries_s) - 1, 0),
                     "labels must have one entry per inter-boundary segment")
        return self


def write_ground_truth(gt: GroundTruth, path: str | Path) -> None:
    gt.validate()
    doc: dict = {"boundaries_s": [float(b) for b in gt.boundaries_s]}
    if gt.labels is not None:
        doc["labels"] = gt.labels
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def read_ground_truth(path: str | Path) -> GroundTruth:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such ground truth file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    return GroundTruth(boundaries_s=np.asarray(doc["boundaries_s"], dtype=np.float64),
                       labels=doc.get("labels")).validate()


# ---------------------------------------------------------------------------
# frame embeddings (per-primitive raw visual feature matrices)


@dataclass
class FrameEmbeddingSet:
    """Raw per-frame feature vectors for each primitive, keyed by primitive id."""

    dim: int
    frames_by_primitive: dict[str, np.ndarray] = field(default_factory=dict)

    def validate(self) -> "FrameEmbeddingSet":
        _require(self.dim >= 1, "feature dimension must be >= 1")
        for pid, mat in self.frames_by_primitive.items():
            _require(mat.ndim == 2 and mat.shape[1] == self.dim,
                     f"frame matrix for {pid} must be (m, {self.dim})")
            _require(mat.shape[0] >= 1, f"primitive {pid} needs at least one frame vector")
            _require(bool(np.isfinite(mat).all()), f"non-finite frame features for {pid}")
        return self


def write_frame_embeddings(fes: FrameEmbeddingSet, index_path: str | Path) -> None:
    """Write one raw f32 matrix file per primitive plus a JSON index."""
    fes.validate()
    index_path = Path(index_path)
    directory = index_path.parent
    entries = {}
    for i, (pid, mat) in enumerate(sorted(fes.frames_by_primitive.items())):
        name = f"frames_{i:05d}.bin"
        with open(directory / name, "wb") as fh:
            fh.write(np.ascontiguousarray(mat, dtype="<f4").tobytes())
        entries[pid] = {"file": name, "frames": int(mat.shape[0])}
    index_path.write_text(
        json.dumps({"dim": fes.dim, "primitives": entries}, indent=1), encoding="utf-8")


def read_frame_embeddings(index_path: str | Path) -> FrameEmbeddingSet:
    index_path = Path(index_path)
    if not index_path.is_file():
        raise DataError(f"no such frame-embedding index: {index_path}")
    doc = json.loads(index_path.read_text(encoding="utf-8"))
    dim = int(doc["dim"])
    out: dict[str, np.ndarray] = {}
    for pid, entry in doc["primitives"].items():
        fpath = index_path.parent / entry["file"]
        if not fpath.is_file():
            raise DataError(f"frame-embedding matrix missing: {fpath}")
        raw = np.frombuffer(fpath.read_bytes(), dtype="<f4")
        m = int(entry["frames"])
        if raw.size != m * dim:
            raise DataError(f"{fpath}: expected {m}x{dim} f32 matrix, got {raw.size} values")
        out[pid] = raw.reshape(m, dim).copy()
    return FrameEmbeddingSet(dim=dim, frames_by_primitive=out).validate()


# ---------------------------------------------------------------------------
# embedding matrices (pooled segment embeddings, f32 rows)


def write_embedding_matrix(ids: list[str], matrix: np.ndarray, path: str | Path) -> None:
    """Raw f32 matrix (rows = primitives) plus a ``<path>.index.json`` sidecar."""
    path = Path(path)
    matrix = np.asarray(matrix, dtype=np.float32)
    _require(matrix.ndim == 2 and matrix.shape[0] == len(ids),
             "embedding matrix must have one row per id")
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())
    index = {"dim": int(matrix.shape[1]), "ids": list(ids)}
    Path(str(path) + ".index.json").write_text(json.dumps(index, indent=1), encoding="utf-8")


def read_embedding_matrix(path: str | Path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    index_path = Path(str(path) + ".index.json")
    if not path.is_file() or not index_path.is_file():
        raise DataError(f"embedding matrix or its index missing: {path}")
    index = json.loads(index_path.read_text(encoding="utf-8"))
    ids = [str(i) for i in index["ids"]]
    dim = int(index["dim"])
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    if raw.size != len(ids) * dim:
        raise DataError(f"{path}: expected {len(ids)}x{dim} f32 matrix")
    return ids, raw.reshape(len(ids), dim).copy()
