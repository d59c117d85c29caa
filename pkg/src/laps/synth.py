"""Synthetic keypoint streams with planted, labeled action primitives.

Streams alternate idle phases (stationary keypoints plus Gaussian jitter)
with action phases, each action drawn from a fixed set of motion templates.
A template displaces the whole point group along a template-specific
direction pair with template-specific frequencies, enveloped so the
displacement starts and ends at zero. Ground-truth boundaries sit at every
phase transition and each action segment records its template id, which
downstream tests use for cluster purity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .stream_io import GroundTruth, KeypointClip, write_ground_truth, write_keypoint_clip

ENVELOPE_RAMP_S = 0.25


@dataclass(frozen=True)
class SynthSpec:
    n_points: int = 24
    fps: float = 30.0
    n_actions: int = 3
    n_action_phases: int = 8
    idle_range_s: tuple[float, float] = (1.5, 3.0)
    action_range_s: tuple[float, float] = (1.5, 3.0)
    idle_jitter_sigma: float = 0.15
    action_amplitude: float = 12.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_points < 4:
            raise DataError(f"need at least 4 keypoints, got {self.n_points}")
        if self.fps <= 0:
            raise DataError("fps must be positive")
        if self.n_actions < 0 or self.n_action_phases < 0:
            raise DataError("action counts must be non-negative")
        if self.n_action_phases > 0 and self.n_actions < 1:
            raise DataError("action phases require at least one template")
        for lo, hi in (self.idle_range_s, self.action_range_s):
            if lo <= 0 or hi < lo:
                raise DataError("phase duration ranges must be positive and ordered")
        if self.idle_jitter_sigma < 0:
            raise DataError("jitter sigma must be non-negative")
        if self.n_action_phases > 0 and \
                self.action_amplitude <= 5 * self.idle_jitter_sigma:
            raise DataError("action amplitude must exceed 5x the idle jitter "
                            "(separability floor)")


def _template_displacement(template: int, n_actions: int, length: int, fps: float,
                           phases: np.ndarray, amplitude: float) -> np.ndarray:
    """Displacement stack (length, N, 2) for one action phase."""
    angle = 2.0 * math.pi * template / max(n_actions, 1) + 0.35
    dir1 = np.asarray([math.cos(angle), math.sin(angle)])
    dir2 = np.asarray([-dir1[1], dir1[0]])
    f1 = 1.2 + 0.5 * template
    f2 = 2.1 + 0.7 * template
    t = np.arange(length) / fps
    ramp = max(1, round(ENVELOPE_RAMP_S * fps))
    steps = np.arange(length)
    envelope = np.minimum(1.0, np.minimum((steps + 1) / ramp, (length - steps) / ramp))
    osc1 = np.sin(2 * math.pi * f1 * t[:, None] + phases[None, :])
    osc2 = np.sin(2 * math.pi * f2 * t[:, None] + 1.7 * phases[None, :])
    disp = osc1[:, :, None] * dir1[None, None, :] + 0.4 * osc2[:, :, None] * dir2[None, None, :]
    return amplitude * envelope[:, None, None] * disp


def generate(spec: SynthSpec) -> tuple[KeypointClip, GroundTruth, list[int]]:
    """One stream: returns the clip, its boundaries and per-action template ids."""
    rng = np.random.default_rng(spec.seed)
    base = rng.uniform([80.0, 60.0], [560.0, 420.0], size=(spec.n_points, 2))
    point_phases = 2.0 * math.pi * np.arange(spec.n_points) / spec.n_points

    def draw_frames(lo_hi: tuple[float, float]) -> int:
        return max(1, round(rng.uniform(*lo_hi) * spec.fps))

    parts: list[np.ndarray] = []
    boundaries_f: list[int] = []
    labels: list[int] = []
    cursor = draw_frames(spec.idle_range_s)
    parts.append(np.zeros((cursor, spec.n_points, 2)))
    for _ in range(spec.n_action_phases):
        template = int(rng.integers(spec.n_actions))
        action_len = draw_frames(spec.action_range_s)
        boundaries_f.append(cursor)
        parts.append(_template_displacement(template, spec.n_actions, action_len,
                                            spec.fps, point_phases, spec.action_amplitude))
        labels.append(template)
        cursor += action_len
        boundaries_f.append(cursor)
        idle_len = draw_frames(spec.idle_range_s)
        parts.append(np.zeros((idle_len, spec.n_points, 2)))
        cursor += idle_len
    displacement = np.concatenate(parts, axis=0)
    total = len(displacement)
    tracks = base[None, :, :] + displacement
    if spec.idle_jitter_sigma > 0:
        tracks = tracks + rng.normal(0.0, spec.idle_jitter_sigma, size=(total, spec.n_points, 2))
    clip = KeypointClip(tracks=tracks, fps=spec.fps).validate()
    gt = GroundTruth(boundaries_s=np.asarray(boundaries_f, dtype=np.float64) / spec.fps).validate()
    return clip, gt, labels


def generate_corpus(spec: SynthSpec, n_streams: int, out_dir: str | Path) -> dict:
    """Write n_streams independent draws plus a corpus manifest; returns it."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create corpus directory {out_dir}: {exc}") from exc
    children = np.random.SeedSequence(spec.seed).spawn(n_streams)
    streams = []
    for i, child in enumerate(children):
        stream_spec = SynthSpec(
            n_points=spec.n_points, fps=spec.fps, n_actions=spec.n_actions,
            n_action_phases=spec.n_action_phases, idle_range_s=spec.idle_range_s,
            action_range_s=spec.action_range_s, idle_jitter_sigma=spec.idle_jitter_sigma,
            action_amplitude=spec.action_amplitude,
            seed=int(child.generate_state(1)[0]))
        clip, gt, labels = generate(stream_spec)
        stream_id = f"stream_{i:03d}"
        clip.source_id = stream_id
        write_keypoint_clip(clip, out_dir / f"{stream_id}.kpc")
        write_ground_truth(gt, out_dir / f"{stream_id}.gt.json")
        (out_dir / f"{stream_id}.labels.json").write_text(
            json.dumps({"templates": labels}), encoding="utf-8")
        streams.append({"id": stream_id, "clip": f"{stream_id}.kpc",
                        "ground_truth": f"{stream_id}.gt.json",
                        "labels": f"{stream_id}.labels.json"})
    manifest = {"n_streams": n_streams, "seed": spec.seed, "streams": streams}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    return manifest


def action_intervals(gt: GroundTruth) -> list[tuple[float, float]]:
    """Planted action intervals [start_s, end_s) from an idle-bracketed
    boundary list (consecutive pairs)."""
    b = gt.boundaries_s
    if len(b) % 2 != 0:
        raise DataError("idle-bracketed ground truth needs an even boundary count")
    return [(float(b[i]), float(b[i + 1])) for i in range(0, len(b), 2)]
