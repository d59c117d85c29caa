"""Surrogate motion tokenizer: seeded random projection + finite scalar
quantization.

Keypoint velocities are flattened per frame step, projected by a frozen
seeded linear map into one value per quantizer dimension, snapped onto the
FSQ level grid, and lifted to a high-dimensional prototype through a frozen
orthonormal matrix. Every emitted vector is therefore an exact codebook
prototype, and identical (clip, config) inputs produce identical streams.

FSQ grid layout: dimension i with L_i levels uses the integer grid
[-L_i//2, ..., L_i//2 - 1] for even L_i (the conventional half-step-offset
grid) and [-(L_i-1)/2, ..., (L_i-1)/2] for odd L_i. Bounding is a
saturating clip onto the grid range, which makes quantization a projection:
grid vectors are exact fixed points. The code is the mixed-radix index of
the per-dimension level indices, dimension 0 most significant.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .stream_io import KeypointClip, LatentStream


def seeded_rng(seed: int, *tags: object) -> np.random.Generator:
    """Deterministic generator keyed by (seed, tags); stable across runs."""
    digest = hashlib.sha256(repr(tags).encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, *words])


@dataclass(frozen=True)
class FsqConfig:
    levels: tuple[int, ...] = (8, 8, 8, 4)
    latent_dim: int = 768

    def __post_init__(self) -> None:
        object.__setattr__(self, "levels", tuple(int(v) for v in self.levels))
        if any(v < 2 for v in self.levels):
            raise DataError(f"every FSQ level count must be >= 2, got {self.levels}")
        if self.latent_dim < len(self.levels):
            raise DataError("latent_dim must be at least the number of FSQ dimensions")

    @property
    def codebook_size(self) -> int:
        return int(math.prod(self.levels))


@dataclass(frozen=True)
class EncoderConfig:
    window: int = 16
    hop: int = 16
    seed: int = 0
    n_points: int = 24
    fsq: FsqConfig = field(default_factory=FsqConfig)

    def __post_init__(self) -> None:
        if self.window < 2:
            raise DataError(f"window must be >= 2 frames, got {self.window}")
        if not 1 <= self.hop <= self.window:
            raise DataError(f"hop must satisfy 1 <= hop <= window, got {self.hop}")
        if self.n_points < 1:
            raise DataError("n_points must be >= 1")


class Fsq:
    """Level grid, codebook enumeration and nearest-gridpoint quantizer."""

    def __init__(self, cfg: FsqConfig):
        self.cfg = cfg
        levels = np.asarray(cfg.levels, dtype=np.int64)
        self.levels = levels
        self.low = np.where(levels % 2 == 0, -(levels // 2), -(levels - 1) // 2)
        self.high = self.low + levels - 1
        # place value of each dimension in the mixed-radix code
        self.place = np.concatenate([
            np.cumprod(levels[::-1])[::-1][1:], np.asarray([1], dtype=np.int64)])

    @property
    def codebook_size(self) -> int:
        return self.cfg.codebook_size

    def quantize(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Snap rows of x onto the level grid.

        Returns (bounded, codes): the grid-valued vectors and their
        mixed-radix codes. Accepts a single vector or a matrix of rows.
        """
        x = np.asarray(x, dtype=np.float64)
        if not np.isfinite(x).all():
            raise DataError("quantizer input must be finite")
        if x.shape[-1] != len(self.levels):
            raise DataError(f"quantizer expects {len(self.levels)} dims, got {x.shape[-1]}")
        bounded = np.rint(np.clip(x, self.low, self.high))
        indices = (bounded - self.low).astype(np.int64)
        codes = indices @ self.place
        return bounded, codes

    def grid_vectors(self, codes: np.ndarray) -> np.ndarray:
        """Decode mixed-radix codes back to grid-valued vectors."""
        codes = np.asarray(codes, dtype=np.int64)
        idx = (codes[..., None] // self.place) % self.levels
        return idx.astype(np.float64) + self.low

    def all_grid_vectors(self) -> np.ndarray:
        return self.grid_vectors(np.arange(self.codebook_size))


def fsq_quantize(x: np.ndarray, cfg: FsqConfig | None = None) -> tuple[np.ndarray, int]:
    """Quantize one vector; returns (grid-valued vector, code)."""
    fsq = Fsq(cfg or FsqConfig())
    bounded, code = fsq.quantize(np.asarray(x, dtype=np.float64).reshape(-1))
    return bounded, int(code)


def velocities(clip: KeypointClip) -> np.ndarray:
    """Per-frame-step keypoint displacements, shape (T-1, N, 2)."""
    clip.validate()
    return np.diff(clip.tracks.astype(np.float64), axis=0)


class SurrogateEncoder:
    """Frozen velocity-to-latent encoder; stateless given its config."""

    def __init__(self, cfg: EncoderConfig):
        self.cfg = cfg
        self.fsq = Fsq(cfg.fsq)
        in_dim = cfg.n_points * 2
        n_q = len(cfg.fsq.levels)
        # projection scaled so coherent unit-speed motion lands at unit scale
        self.projection = seeded_rng(cfg.seed, "velocity-projection").normal(
            0.0, 1.0 / math.sqrt(in_dim), size=(n_q, in_dim))
        lift = seeded_rng(cfg.seed, "prototype-lift").normal(
            0.0, 1.0, size=(cfg.fsq.latent_dim, n_q))
        q, r = np.linalg.qr(lift)
        q = q * np.sign(np.diag(r))          # fix QR sign ambiguity
        self.lift = q
        grid = self.fsq.all_grid_vectors()
        self.prototypes = (grid @ self.lift.T).astype(np.float32)   # (C, d_m)

    def prototype(self, code: int | np.ndarray) -> np.ndarray:
        return self.prototypes[code]

    def encode_steps(self, vels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Encode per-step velocities (n, N, 2) to (codes, prototype vectors)."""
        vels = np.asarray(vels, dtype=np.float64)
        if vels.ndim != 3 or vels.shape[1] != self.cfg.n_points or vels.shape[2] != 2:
            raise DataError(
                f"velocity window must be (steps, {self.cfg.n_points}, 2), got {vels.shape}")
        flat = vels.reshape(vels.shape[0], -1)
        pre_quant = flat @ self.projection.T
        _, codes = self.fsq.quantize(pre_quant)
        return codes, self.prototypes[codes]

    def encode_window(self, vel_window: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Encode one window's velocities, emitting only the final hop region."""
        vel_window = np.asarray(vel_window, dtype=np.float64)
        if len(vel_window) != self.cfg.window - 1:
            raise DataError(
                f"velocity window must hold {self.cfg.window - 1} steps, got {len(vel_window)}")
        emit = min(self.cfg.hop, self.cfg.window - 1)
        return self.encode_steps(vel_window[len(vel_window) - emit:])

    def encode_stream(self, clip: KeypointClip) -> LatentStream:
        cfg = self.cfg
        if clip.points != cfg.n_points:
            raise DataError(f"clip has {clip.points} points, encoder expects {cfg.n_points}")
        if clip.frames < cfg.window:
            raise DataError(
                f"clip of {clip.frames} frames is shorter than one window ({cfg.window})")
        vels = velocities(clip)
        emit = min(cfg.hop, cfg.window - 1)
        codes_parts, frame_parts = [], []
        for start in range(0, clip.frames - cfg.window + 1, cfg.hop):
            first_step = start + (cfg.window - 1) - emit
            codes, _ = self.encode_window(vels[start:start + cfg.window - 1])
            codes_parts.append(codes)
            frame_parts.append(np.arange(first_step, start + cfg.window - 1))
        codes = np.concatenate(codes_parts)
        return LatentStream(
            vectors=self.prototypes[codes],
            codes=codes,
            codebook_size=self.fsq.codebook_size,
            frame_of_step=np.concatenate(frame_parts),
            fps=clip.fps,
            source_id=clip.source_id,
        ).validate()


def encode_window(vel_window: np.ndarray, cfg: EncoderConfig) -> list[tuple[np.ndarray, int]]:
    """Encode one velocity window; returns (prototype vector, code) pairs."""
    codes, vectors = SurrogateEncoder(cfg).encode_window(vel_window)
    return [(vectors[i], int(codes[i])) for i in range(len(codes))]


def encode_stream(clip: KeypointClip, cfg: EncoderConfig) -> LatentStream:
    """Encode a whole clip with the sliding-window hop-region rule."""
    return SurrogateEncoder(cfg).encode_stream(clip)
