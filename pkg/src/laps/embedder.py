"""Frozen random-weight transformer encoder for variable-length latent
sequences.

No parameter is ever trained: every tensor is drawn once from a
deterministic generator keyed by (seed, tensor name) with a symmetric
uniform distribution of variance 1/fan_in, so two embedders built from the
same config are bit-identical. Layers are pre-norm (LN -> attention ->
residual, LN -> feed-forward -> residual) with full unmasked self-attention
and a final layer norm; the pooled embedding is the mean over time of the
last hidden states.

With the default architecture (input 768 -> model 256, 4 layers, 4 heads,
feed-forward 512) the module holds about 2.31 M parameters; construction
asserts that the default stays within 20% of the 2.3 M reference so silent
config drift is caught early.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoder import seeded_rng
from .errors import DataError, InternalError
from .stream_io import Primitive

REFERENCE_PARAM_COUNT = 2_300_000
REFERENCE_PARAM_TOLERANCE = 0.20


@dataclass(frozen=True)
class EmbedderConfig:
    model_dim: int = 256
    layers: int = 4
    heads: int = 4
    ff_dim: int = 512
    seed: int = 0
    input_dim: int = 768

    def __post_init__(self) -> None:
        if min(self.model_dim, self.layers, self.heads, self.ff_dim, self.input_dim) < 1:
            raise DataError("all embedder dimensions must be >= 1")
        if self.model_dim % self.heads != 0:
            raise DataError(
                f"model_dim {self.model_dim} must be divisible by heads {self.heads}")

    def is_reference_architecture(self) -> bool:
        d = EmbedderConfig()
        return (self.model_dim, self.layers, self.heads, self.ff_dim, self.input_dim) == \
               (d.model_dim, d.layers, d.heads, d.ff_dim, d.input_dim)


@dataclass
class SegmentEmbedding:
    raw: np.ndarray
    normalized: np.ndarray
    primitive_id: str = ""


def sinusoidal_pe(t: int, d: int) -> np.ndarray:
    """Interleaved sin/cos positional encoding for one position."""
    if t < 0:
        raise DataError("position must be non-negative")
    pe = np.empty(d, dtype=np.float64)
    i = np.arange(0, d, 2)
    angle = t / np.power(10000.0, i / d)
    pe[0::2] = np.sin(angle)
    pe[1::2] = np.cos(angle[: len(pe[1::2])])
    return pe


def _pe_matrix(length: int, d: int) -> np.ndarray:
    return np.stack([sinusoidal_pe(t, d) for t in range(length)])


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
                eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x ** 3)))


class FrozenEmbedder:
    """Immutable after construction; embed calls are independent."""

    def __init__(self, cfg: EmbedderConfig):
        self.cfg = cfg
        self._tensors: dict[str, np.ndarray] = {}
        d, f, din = cfg.model_dim, cfg.ff_dim, cfg.input_dim
        self._weight("in.w", (din, d), fan_in=din)
        self._zeros("in.b", (d,))
        for layer in range(cfg.layers):
            p = f"layer{layer}."
            self._ones(p + "ln1.g", (d,))
            self._zeros(p + "ln1.b", (d,))
            for name in ("q", "k", "v", "o"):
                self._weight(p + f"attn.{name}.w", (d, d), fan_in=d)
                self._zeros(p + f"attn.{name}.b", (d,))
            self._ones(p + "ln2.g", (d,))
            self._zeros(p + "ln2.b", (d,))
            self._weight(p + "ff.w1", (d, f), fan_in=d)
            self._zeros(p + "ff.b1", (f,))
            self._weight(p + "ff.w2", (f, d), fan_in=f)
            self._zeros(p + "ff.b2", (d,))
        self._ones("final_ln.g", (d,))
        self._zeros("final_ln.b", (d,))
        if cfg.is_reference_architecture():
            drift = abs(self.parameter_count() - REFERENCE_PARAM_COUNT) / REFERENCE_PARAM_COUNT
            if drift > REFERENCE_PARAM_TOLERANCE:
                raise InternalError(
                    f"default embedder holds {self.parameter_count()} parameters, "
                    f"outside 20% of the {REFERENCE_PARAM_COUNT} reference")

    def _weight(self, name: str, shape: tuple[int, ...], fan_in: int) -> None:
        bound = math.sqrt(3.0 / fan_in)
        rng = seeded_rng(self.cfg.seed, "embedder", name)
        self._tensors[name] = rng.uniform(-bound, bound, size=shape)

    def _zeros(self, name: str, shape: tuple[int, ...]) -> None:
        self._tensors[name] = np.zeros(shape)

    def _ones(self, name: str, shape: tuple[int, ...]) -> None:
        self._tensors[name] = np.ones(shape)

    def parameter_count(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def _attention(self, h: np.ndarray, prefix: str) -> np.ndarray:
        w = self._tensors
        cfg = self.cfg
        d_h = cfg.model_dim // cfg.heads
        t = h.shape[0]
        q = h @ w[prefix + "attn.q.w"] + w[prefix + "attn.q.b"]
        k = h @ w[prefix + "attn.k.w"] + w[prefix + "attn.k.b"]
        v = h @ w[prefix + "attn.v.w"] + w[prefix + "attn.v.b"]
        # (heads, T, d_h)
        q = q.reshape(t, cfg.heads, d_h).transpose(1, 0, 2)
        k = k.reshape(t, cfg.heads, d_h).transpose(1, 0, 2)
        v = v.reshape(t, cfg.heads, d_h).transpose(1, 0, 2)
        scores = _softmax(q @ k.transpose(0, 2, 1) / math.sqrt(d_h))
        mixed = (scores @ v).transpose(1, 0, 2).reshape(t, cfg.model_dim)
        return mixed @ w[prefix + "attn.o.w"] + w[prefix + "attn.o.b"]

    def forward(self, seq: np.ndarray) -> np.ndarray:
        """Hidden states (T_i, model_dim) for one sequence."""
        seq = np.asarray(seq, dtype=np.float64)
        if seq.ndim != 2:
            raise DataError(f"sequence must be 2-d, got shape {seq.shape}")
        if seq.shape[0] < 1:
            raise DataError("cannot embed an empty sequence")
        if seq.shape[1] != self.cfg.input_dim:
            raise DataError(
                f"sequence dim {seq.shape[1]} does not match input_dim {self.cfg.input_dim}")
        w = self._tensors
        # conventional sqrt(d) input scaling keeps the content signal from
        # being drowned by the O(1) positional encodings
        h = (seq @ w["in.w"] + w["in.b"]) * math.sqrt(self.cfg.model_dim) \
            + _pe_matrix(seq.shape[0], self.cfg.model_dim)
        for layer in range(self.cfg.layers):
            p = f"layer{layer}."
            h = h + self._attention(_layer_norm(h, w[p + "ln1.g"], w[p + "ln1.b"]), p)
            ff_in = _layer_norm(h, w[p + "ln2.g"], w[p + "ln2.b"])
            h = h + _gelu(ff_in @ w[p + "ff.w1"] + w[p + "ff.b1"]) @ w[p + "ff.w2"] + w[p + "ff.b2"]
        return _layer_norm(h, w["final_ln.g"], w["final_ln.b"])

    def embed(self, seq: np.ndarray, primitive_id: str = "") -> SegmentEmbedding:
        raw = self.forward(seq).mean(axis=0)
        norm = float(np.linalg.norm(raw))
        if norm == 0.0 or not np.isfinite(norm):
            raise DataError(f"degenerate embedding for primitive {primitive_id!r}")
        return SegmentEmbedding(raw=raw, normalized=raw / norm, primitive_id=primitive_id)


def embed(seq: np.ndarray, cfg: EmbedderConfig, primitive_id: str = "") -> SegmentEmbedding:
    """Embed one continuous vector sequence."""
    return FrozenEmbedder(cfg).embed(seq, primitive_id)


def embed_all(primitives: list[Primitive], cfg: EmbedderConfig,
              ids: list[str] | None = None) -> list[SegmentEmbedding]:
    """Embed each primitive's vector sequence, order-preserving."""
    if ids is not None and len(ids) != len(primitives):
        raise DataError("ids must pair up with primitives")
    model = FrozenEmbedder(cfg)
    out = []
    for i, p in enumerate(primitives):
        pid = ids[i] if ids is not None else f"{p.source_id}:{i:04d}"
        out.append(model.embed(p.vectors, primitive_id=pid))
    return out
