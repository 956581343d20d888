"""Attention fusion of the three feature streams.

Each stream is linearly projected into a shared width, the three resulting
tokens pass through a small transformer encoder, the tokens are pooled,
and the result is l2-normalized.  All weights come from a seeded generator
and are frozen at build time -- no training anywhere -- so every score the
package produces is reproducible from the config alone.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import ConfigurationError, NumericError, ShapeMismatchError
from .features import EmbedderBackend, FeatureTriple, ImageBuffer, cosine

_LN_EPS = 1e-5
_STREAMS = 3
POOLINGS = ("mean", "first_token")


@dataclass(frozen=True)
class FusionConfig:
    d_model: int = 512
    num_layers: int = 1
    num_heads: int = 4
    seed: int = 0
    pooling: str = "mean"

    def __post_init__(self):
        if self.d_model < 1:
            raise ConfigurationError(f"d_model must be positive, got {self.d_model}")
        if self.num_layers < 1:
            raise ConfigurationError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.num_heads < 1:
            raise ConfigurationError(f"num_heads must be positive, got {self.num_heads}")
        if self.d_model % self.num_heads != 0:
            raise ConfigurationError(
                f"d_model {self.d_model} is not divisible by num_heads {self.num_heads}")
        if self.pooling not in POOLINGS:
            raise ConfigurationError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")

    def to_json(self) -> str:
        return json.dumps(
            {"d_model": self.d_model, "num_layers": self.num_layers,
             "num_heads": self.num_heads, "seed": self.seed, "pooling": self.pooling},
            sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FusionConfig":
        data = json.loads(text)
        known = {"d_model", "num_layers", "num_heads", "seed", "pooling"}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown fusion config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class FusedEmbedding:
    """l2-normalized fused vector of length d_model."""

    vec: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vec, dtype=np.float64).reshape(-1)
        if not np.isfinite(v).all():
            raise NumericError("fused embedding contains non-finite entries")
        norm = np.linalg.norm(v)
        if abs(norm - 1.0) > 1e-6:
            raise NumericError(f"fused embedding norm {norm} deviates from 1 by more than 1e-6")
        v.setflags(write=False)
        object.__setattr__(self, "vec", v)


def _sinusoidal_offsets(positions: int, d_model: int) -> np.ndarray:
    pe = np.zeros((positions, d_model))
    pos = np.arange(positions, dtype=np.float64)[:, None]
    idx = np.arange(0, d_model, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, idx / d_model)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : pe[:, 1::2].shape[1]])
    return pe


def _layer_norm(x: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + _LN_EPS)


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


class Fuser:
    """Frozen fusion function; build with :func:`build_fuser`.

    Attention and feed-forward weights are drawn eagerly from the config
    seed.  The per-stream input projections depend on the incoming feature
    dimension, which the config does not carry, so they are derived (as a
    pure function of seed, stream slot, and dimension) when the input
    dimension is first seen; from then on the fuser expects that dimension.
    Instances are immutable apart from that one binding and are safe for
    concurrent use.
    """

    def __init__(self, config: FusionConfig, input_dim: int | None = None):
        self.config = config
        d = config.d_model
        rng = np.random.default_rng(config.seed)
        self._layers = []
        for _ in range(config.num_layers):
            scale = 1.0 / np.sqrt(d)
            layer = {
                "wq": rng.standard_normal((d, d)) * scale,
                "wk": rng.standard_normal((d, d)) * scale,
                "wv": rng.standard_normal((d, d)) * scale,
                "wo": rng.standard_normal((d, d)) * scale,
                "w1": rng.standard_normal((d, 2 * d)) / np.sqrt(d),
                "b1": np.zeros(2 * d),
                "w2": rng.standard_normal((2 * d, d)) / np.sqrt(2 * d),
                "b2": np.zeros(d),
            }
            self._layers.append(layer)
        self._pos = _sinusoidal_offsets(_STREAMS, d)
        self._proj_lock = threading.Lock()
        self._projections: dict[int, np.ndarray] = {}
        self._bound_dim: int | None = None
        if input_dim is not None:
            self._bind(int(input_dim))

    @property
    def input_dim(self) -> int | None:
        return self._bound_dim

    def _stream_projections(self, d_in: int) -> np.ndarray:
        with self._proj_lock:
            mats = self._projections.get(d_in)
            if mats is None:
                mats = np.stack([
                    np.random.default_rng([self.config.seed & 0xFFFFFFFF, slot, d_in]
                                          ).standard_normal((self.config.d_model, d_in))
                    / np.sqrt(d_in)
                    for slot in range(_STREAMS)
                ])
                self._projections[d_in] = mats
            return mats

    def _bind(self, d_in: int) -> np.ndarray:
        with self._proj_lock:
            if self._bound_dim is None:
                self._bound_dim = d_in
        if d_in != self._bound_dim:
            raise ShapeMismatchError(
                f"fuser expects input dimension {self._bound_dim}, got {d_in}")
        return self._stream_projections(d_in)

    def fuse(self, triple: FeatureTriple) -> FusedEmbedding:
        stack = triple.stack().astype(np.float64)
        if not np.isfinite(stack).all():
            raise NumericError("cannot fuse a triple with non-finite entries")
        proj = self._bind(triple.dim)

        tokens = np.einsum("sij,sj->si", proj, stack) + self._pos
        heads = self.config.num_heads
        d_head = self.config.d_model // heads
        for layer in self._layers:
            x = _layer_norm(tokens)
            q = (x @ layer["wq"]).reshape(_STREAMS, heads, d_head).transpose(1, 0, 2)
            k = (x @ layer["wk"]).reshape(_STREAMS, heads, d_head).transpose(1, 0, 2)
            v = (x @ layer["wv"]).reshape(_STREAMS, heads, d_head).transpose(1, 0, 2)
            attn = _softmax(q @ k.transpose(0, 2, 1) / np.sqrt(d_head))
            mixed = (attn @ v).transpose(1, 0, 2).reshape(_STREAMS, self.config.d_model)
            tokens = tokens + mixed @ layer["wo"]
            x = _layer_norm(tokens)
            tokens = tokens + _gelu(x @ layer["w1"] + layer["b1"]) @ layer["w2"] + layer["b2"]

        if self.config.pooling == "mean":
            pooled = tokens.mean(axis=0)
        else:
            pooled = tokens[0]
        norm = np.linalg.norm(pooled)
        if norm == 0.0 or not np.isfinite(norm):
            raise NumericError("fused vector has no direction to normalize")
        return FusedEmbedding(vec=pooled / norm)


def build_fuser(config: FusionConfig, input_dim: int | None = None) -> Fuser:
    """Deterministic fuser from a config; same config, same function."""
    return Fuser(config, input_dim=input_dim)


def fuse(fuser: Fuser, triple: FeatureTriple) -> FusedEmbedding:
    return fuser.fuse(triple)


def _as_triple(x, backend: EmbedderBackend | None) -> FeatureTriple:
    if isinstance(x, FeatureTriple):
        return x
    if isinstance(x, ImageBuffer):
        if backend is None:
            raise ConfigurationError("fused_similarity over images needs an embedder backend")
        return backend.embed_image(x)
    raise ShapeMismatchError(f"expected ImageBuffer or FeatureTriple, got {type(x).__name__}")


def fused_similarity(fuser: Fuser, a, b, backend: EmbedderBackend | None = None) -> float:
    """Cosine between the fused embeddings of two images or triples."""
    fa = fuser.fuse(_as_triple(a, backend))
    fb = fuser.fuse(_as_triple(b, backend))
    return cosine(fa.vec, fb.vec)


def fuser_digest(config: FusionConfig, input_dim: int | None) -> str:
    """Stable identifier for (fusion config, bound input dimension)."""
    payload = config.to_json() + f"|input_dim={input_dim}"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
