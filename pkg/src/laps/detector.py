"""Latent action energy and the online two-state hysteresis detector.

The energy at index t is the L2 norm of the step t -> t+1 difference of the
quantized vector stream, so a stream of T_z steps yields T_z - 1 energy
samples. Sample t is treated as describing latent step t (the energy of its
outgoing transition); segment indices returned by the state machine slice
the latent step arrays directly.

The controller is strictly causal and single-pass: OFF -> ON after
``up_count`` consecutive smoothed samples strictly above theta_on (segment
start = first sample of that run), ON -> OFF after ``down_count``
consecutive samples strictly below theta_off (segment end = first sample of
that run, exclusive). Samples inside the hysteresis band [theta_off,
theta_on] reset the opposing counter without triggering a transition.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import DataError
from .stream_io import LatentStream, Primitive

OFF = "off"
ON = "on"


@dataclass(frozen=True)
class DetectorConfig:
    alpha: float = 0.25
    theta_on: float = 1.0
    hysteresis_ratio: float = 0.5
    up_count: int = 3
    down_count: int = 5
    min_len: int = 2

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 1:
            raise DataError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0 < self.hysteresis_ratio <= 1:
            raise DataError(f"hysteresis ratio must be in (0, 1], got {self.hysteresis_ratio}")
        if self.up_count < 1 or self.down_count < 1:
            raise DataError("debounce counts must be >= 1")
        if self.min_len < 1:
            raise DataError("min_len must be >= 1")

    @property
    def theta_off(self) -> float:
        return self.hysteresis_ratio * self.theta_on


class RawSegment(NamedTuple):
    start: int
    end: int
    truncated: bool = False


@dataclass(frozen=True)
class DetectorState:
    mode: str = OFF
    y_prev: float | None = None
    run_above: int = 0
    run_below: int = 0
    pending_start: int | None = None


def latent_action_energy(stream: LatentStream) -> np.ndarray:
    """Stepwise L2 norm of the quantized-vector temporal difference."""
    stream.validate()
    if stream.steps < 2:
        raise DataError(f"need at least 2 latent steps for energy, got {stream.steps}")
    diffs = np.diff(stream.vectors.astype(np.float64), axis=0)
    return np.sqrt((diffs * diffs).sum(axis=1))


def _ema_step(y_prev: float, e: float, alpha: float) -> float:
    # shared by batch and streaming paths so both are bit-identical
    return alpha * e + (1.0 - alpha) * y_prev


def ema_smooth(energy: np.ndarray, alpha: float, y0: float) -> np.ndarray:
    """Causal exponential moving average: y_t = alpha*E_t + (1-alpha)*y_{t-1}."""
    if not 0 < alpha <= 1:
        raise DataError(f"alpha must be in (0, 1], got {alpha}")
    energy = np.asarray(energy, dtype=np.float64)
    out = np.empty_like(energy)
    y = float(y0)
    for t in range(len(energy)):
        y = _ema_step(y, float(energy[t]), alpha)
        out[t] = y
    return out


def step(state: DetectorState, y_t: float, t: int,
         cfg: DetectorConfig) -> tuple[DetectorState, RawSegment | None]:
    """Advance the hysteresis controller by one smoothed sample.

    Returns the new state and, on an ON -> OFF transition that survives the
    min_len filter, the emitted segment.
    """
    if state.mode == OFF:
        if y_t > cfg.theta_on:
            run = state.run_above + 1
            start = state.pending_start if state.pending_start is not None else t
            if run >= cfg.up_count:
                return replace(state, mode=ON, y_prev=y_t, run_above=0, run_below=0,
                               pending_start=start), None
            return replace(state, y_prev=y_t, run_above=run, pending_start=start), None
        return replace(state, y_prev=y_t, run_above=0, pending_start=None), None

    # ON
    if y_t < cfg.theta_off:
        run = state.run_below + 1
        if run >= cfg.down_count:
            end = t - cfg.down_count + 1
            segment = None
            if state.pending_start is not None and end - state.pending_start >= cfg.min_len:
                segment = RawSegment(state.pending_start, end, truncated=False)
            return replace(state, mode=OFF, y_prev=y_t, run_above=0, run_below=0,
                           pending_start=None), segment
        return replace(state, y_prev=y_t, run_below=run), None
    return replace(state, y_prev=y_t, run_below=0), None


def flush(state: DetectorState, n_samples: int, cfg: DetectorConfig) -> RawSegment | None:
    """Close an ON detector at end of stream; the segment is flagged truncated."""
    if state.mode == ON and state.pending_start is not None:
        if n_samples - state.pending_start >= cfg.min_len:
            return RawSegment(state.pending_start, n_samples, truncated=True)
    return None


class StreamingDetector:
    """Push-style wrapper around ema_smooth + step with O(1) state."""

    def __init__(self, cfg: DetectorConfig):
        self.cfg = cfg
        self.state = DetectorState()
        self._t = 0

    def push(self, energy: float) -> RawSegment | None:
        y_prev = self.state.y_prev if self.state.y_prev is not None else float(energy)
        y = _ema_step(y_prev, float(energy), self.cfg.alpha)
        self.state, segment = step(self.state, y, self._t, self.cfg)
        self._t += 1
        return segment

    def finish(self) -> RawSegment | None:
        return flush(self.state, self._t, self.cfg)


def detect_signal(energy: np.ndarray, cfg: DetectorConfig) -> list[RawSegment]:
    """Smooth a raw energy signal and run the controller over it."""
    energy = np.asarray(energy, dtype=np.float64)
    if energy.ndim != 1 or len(energy) == 0:
        raise DataError("energy signal must be a non-empty 1-d array")
    smoothed = ema_smooth(energy, cfg.alpha, y0=float(energy[0]))
    state = DetectorState()
    segments: list[RawSegment] = []
    for t, y in enumerate(smoothed):
        state, seg = step(state, float(y), t, cfg)
        if seg is not None:
            segments.append(seg)
    tail = flush(state, len(smoothed), cfg)
    if tail is not None:
        segments.append(tail)
    return segments


def detect(stream: LatentStream, cfg: DetectorConfig) -> list[Primitive]:
    """Segment a latent stream into primitives in a single causal pass."""
    energy = latent_action_energy(stream)
    primitives = []
    for seg in detect_signal(energy, cfg):
        start_frame = int(stream.frame_of_step[seg.start])
        end_frame = int(stream.frame_of_step[seg.end - 1]) + 1
        primitives.append(Primitive(
            start_frame=start_frame,
            end_frame=end_frame,
            start_s=start_frame / stream.fps,
            end_s=end_frame / stream.fps,
            codes=stream.codes[seg.start:seg.end].copy(),
            vectors=stream.vectors[seg.start:seg.end].copy(),
            source_id=stream.source_id,
            truncated=seg.truncated,
        ).validate(fps=stream.fps))
    return primitives
