"""Feature streams and the embedder contract.

Every image is described by three complementary vectors of a common length
``d``: a patch-layout descriptor (``vis``), a global color descriptor
(``clip``), and a local-gradient texture descriptor (``tex``).  Real
backbones attach through :class:`EmbedderBackend`; the built-in
:class:`SyntheticEmbedder` derives all three streams from plain image
statistics so the whole pipeline runs deterministically without any
pretrained weights.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError, ShapeMismatchError, UndefinedSimilarityError

MIN_IMAGE_SIDE = 8
MIN_FEATURE_DIM = 4

# Raw statistic sizes feeding the seeded projections of synthetic_embed.
_GRID_CELLS = 4          # vis: 4x4 spatial grid of per-cell channel means
_HIST_BINS = 16          # clip/tex: 16-bin histograms per channel


@dataclass(frozen=True)
class ImageBuffer:
    """An RGB image with float intensities in [0, 1].

    ``pixels`` is an H x W x 3 array; both sides must be at least
    ``MIN_IMAGE_SIDE`` pixels.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise DataError(f"image must be HxWx3, got shape {px.shape}")
        h, w = px.shape[:2]
        if h < MIN_IMAGE_SIDE or w < MIN_IMAGE_SIDE:
            raise DataError(f"image must be at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, got {h}x{w}")
        if not np.isfinite(px).all():
            raise DataError("image contains non-finite intensities")
        if px.min() < 0.0 or px.max() > 1.0:
            raise DataError("image intensities must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def content_bytes(self) -> bytes:
        """Canonical byte representation used for content digests."""
        return self.pixels.astype("<f8").tobytes(order="C")


@dataclass(frozen=True)
class FeatureTriple:
    """The three per-image descriptors, all of length ``d``."""

    vis: np.ndarray
    clip: np.ndarray
    tex: np.ndarray

    def __post_init__(self):
        streams = {}
        for name in ("vis", "clip", "tex"):
            v = np.asarray(getattr(self, name), dtype=np.float32).reshape(-1)
            if not np.isfinite(v).all():
                raise DataError(f"{name} stream contains non-finite entries")
            v.setflags(write=False)
            streams[name] = v
        dims = {name: v.shape[0] for name, v in streams.items()}
        if len(set(dims.values())) != 1:
            raise ShapeMismatchError(f"stream lengths disagree: {dims}")
        for name, v in streams.items():
            object.__setattr__(self, name, v)

    @property
    def dim(self) -> int:
        return int(self.vis.shape[0])

    def stack(self) -> np.ndarray:
        """3 x d array in (vis, clip, tex) order."""
        return np.stack([self.vis, self.clip, self.tex])


@dataclass(frozen=True)
class TextEmbedding:
    """A text (or text-compatible image) embedding plus its source string."""

    vec: np.ndarray
    source_text: str

    def __post_init__(self):
        v = np.asarray(self.vec, dtype=np.float64).reshape(-1)
        if not np.isfinite(v).all():
            raise DataError("text embedding contains non-finite entries")
        if not self.source_text:
            raise DataError("text embedding requires a non-empty source text")
        v.setflags(write=False)
        object.__setattr__(self, "vec", v)


class EmbedderBackend:
    """Contract for feature extractors.

    Implementations must be deterministic: identical input yields
    bitwise-identical output for a fixed instance.  ``backend_id`` feeds
    cache keys, so distinct configurations must report distinct ids.
    ``parallel_safe`` declares whether the instance may be called from
    multiple workers concurrently.
    """

    backend_id: str = "abstract"
    parallel_safe: bool = False

    def embed_image(self, image: ImageBuffer) -> FeatureTriple:
        raise NotImplementedError

    def embed_text(self, text: str) -> TextEmbedding:
        raise NotImplementedError

    def embed_image_global(self, image: ImageBuffer) -> np.ndarray:
        """Global image vector comparable with embed_text outputs."""
        raise NotImplementedError


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity a.b / (|a||b|), clipped to [-1, 1].

    A zero vector has no direction, so it raises rather than silently
    scoring 0 (a 0 would flow into threshold decisions undetected).
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape[0] != b.shape[0]:
        raise ShapeMismatchError(f"cosine requires equal lengths, got {a.shape[0]} and {b.shape[0]}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise UndefinedSimilarityError("cosine is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _projection(seed: int, tag: str, d_out: int, d_in: int) -> np.ndarray:
    """Fixed seeded Gaussian projection matrix, stable per (seed, tag, dims)."""
    tag_code = int.from_bytes(hashlib.sha256(tag.encode("utf-8")).digest()[:4], "little")
    rng = np.random.default_rng([seed & 0xFFFFFFFF, tag_code, d_out, d_in])
    return rng.standard_normal((d_out, d_in)) / np.sqrt(d_in)


def _grid_means(px: np.ndarray) -> np.ndarray:
    """Per-cell channel means over a fixed _GRID_CELLS x _GRID_CELLS grid."""
    rows = np.array_split(np.arange(px.shape[0]), _GRID_CELLS)
    cols = np.array_split(np.arange(px.shape[1]), _GRID_CELLS)
    out = np.empty((_GRID_CELLS, _GRID_CELLS, 3), dtype=np.float64)
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            out[i, j] = px[r[0] : r[-1] + 1, c[0] : c[-1] + 1].mean(axis=(0, 1))
    return out.reshape(-1)


def _channel_histograms(px: np.ndarray) -> np.ndarray:
    n = float(px.shape[0] * px.shape[1])
    hists = [np.histogram(px[:, :, c], bins=_HIST_BINS, range=(0.0, 1.0))[0] / n for c in range(3)]
    return np.concatenate(hists)


def _gradient_histograms(px: np.ndarray) -> np.ndarray:
    hists = []
    for c in range(3):
        gy, gx = np.gradient(px[:, :, c])
        mag = np.hypot(gx, gy)
        h = np.histogram(mag, bins=_HIST_BINS, range=(0.0, np.sqrt(2.0)))[0]
        hists.append(h / mag.size)
    return np.concatenate(hists)


def synthetic_embed(image: ImageBuffer, d: int, seed: int) -> FeatureTriple:
    """Deterministic feature triple from plain image statistics.

    vis comes from per-cell means on a fixed spatial grid, clip from global
    channel histograms, tex from local-gradient-magnitude histograms; each
    raw statistic vector is mapped to length ``d`` by a seeded fixed
    Gaussian projection.  Identical images give identical triples.
    """
    if d < MIN_FEATURE_DIM:
        raise ConfigurationError(f"feature dimension must be >= {MIN_FEATURE_DIM}, got {d}")
    px = image.pixels
    raw = {
        "vis": _grid_means(px),
        "clip": _channel_histograms(px),
        "tex": _gradient_histograms(px),
    }
    streams = {
        name: (_projection(seed, name, d, vec.shape[0]) @ vec).astype(np.float32)
        for name, vec in raw.items()
    }
    return FeatureTriple(vis=streams["vis"], clip=streams["clip"], tex=streams["tex"])


def _text_counts(text: str) -> np.ndarray:
    """Hashed character-trigram counts; a cheap stand-in for a text encoder."""
    buckets = np.zeros(256, dtype=np.float64)
    padded = f"\x00{text}\x00"
    for i in range(len(padded) - 2):
        tri = padded[i : i + 3].encode("utf-8")
        h = int.from_bytes(hashlib.sha256(tri).digest()[:4], "little")
        buckets[h % 256] += 1.0
    return buckets


@dataclass(frozen=True)
class SyntheticEmbedder(EmbedderBackend):
    """Built-in deterministic backend over image/text statistics.

    Not a semantic model; it exists so the downstream decision, calibration,
    retrieval, and augmentation machinery is fully testable offline.
    """

    d: int = 512
    seed: int = 0
    text_dim: int | None = None
    parallel_safe: bool = field(default=True, init=False)

    def __post_init__(self):
        if self.d < MIN_FEATURE_DIM:
            raise ConfigurationError(f"feature dimension must be >= {MIN_FEATURE_DIM}, got {self.d}")
        if self.text_dim is None:
            object.__setattr__(self, "text_dim", self.d)

    @property
    def backend_id(self) -> str:
        return f"synthetic-d{self.d}-s{self.seed}"

    def embed_image(self, image: ImageBuffer) -> FeatureTriple:
        return synthetic_embed(image, self.d, self.seed)

    def embed_text(self, text: str) -> TextEmbedding:
        if not text:
            raise DataError("cannot embed an empty text")
        counts = _text_counts(text)
        vec = _projection(self.seed, "text", self.text_dim, counts.shape[0]) @ counts
        return TextEmbedding(vec=vec, source_text=text)

    def embed_image_global(self, image: ImageBuffer) -> np.ndarray:
        # Projected through the same seeded family as text vectors so the
        # two sides share a space of the same width.
        raw = np.concatenate([_channel_histograms(image.pixels), _grid_means(image.pixels)])
        return _projection(self.seed, "global", self.text_dim, raw.shape[0]) @ raw
