"""On-disk embedding cache, keyed by content digest.

Layout: one subdirectory per backend id, one binary record per entry.
Record format (little-endian): a 16-byte header -- magic ``ADMC``,
version u16, d u16, stream count u8, 7 reserved zero bytes -- followed by
``stream_count`` float32 vectors of length d.  Keys digest the image
content rather than its path, so manifests may reference moved files.
"""

from __future__ import annotations

import hashlib
import os
import re
import struct
import threading

import numpy as np

from .errors import ConfigurationError, IntegrityError
from .features import EmbedderBackend, FeatureTriple, ImageBuffer

_MAGIC = b"ADMC"
_VERSION = 1
_HEADER = struct.Struct("<4sHHB7x")  # 16 bytes
_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")


def content_digest(image: ImageBuffer, backend_id: str, d: int) -> str:
    """SHA-256 over raw image bytes || backend id || d."""
    h = hashlib.sha256()
    h.update(image.content_bytes())
    h.update(backend_id.encode("utf-8"))
    h.update(struct.pack("<I", d))
    return h.hexdigest()


def encode_record(vectors: np.ndarray) -> bytes:
    """Serialize an S x d float32 stack into one cache record."""
    arr = np.ascontiguousarray(vectors, dtype="<f4")
    if arr.ndim == 1:
        arr = arr[None, :]
    streams, d = arr.shape
    if d > 0xFFFF or streams > 0xFF:
        raise ConfigurationError(f"record too wide for the header: {streams}x{d}")
    return _HEADER.pack(_MAGIC, _VERSION, d, streams) + arr.tobytes(order="C")


def decode_record(blob: bytes, key: str = "<memory>") -> np.ndarray:
    """Parse one record back into an S x d float32 array."""
    if len(blob) < _HEADER.size:
        raise IntegrityError(f"cache entry {key}: truncated header")
    magic, version, d, streams = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise IntegrityError(f"cache entry {key}: bad magic {magic!r}")
    if version != _VERSION:
        raise IntegrityError(f"cache entry {key}: unsupported version {version}")
    body = blob[_HEADER.size:]
    expected = streams * d * 4
    if len(body) != expected:
        raise IntegrityError(f"cache entry {key}: payload is {len(body)} bytes, expected {expected}")
    return np.frombuffer(body, dtype="<f4").reshape(streams, d).copy()


class EmbeddingCache:
    """Append-only feature-triple store under a root directory.

    Writes are serialized behind a lock; reads need no coordination.
    """

    def __init__(self, root: str | os.PathLike):
        self.root = os.fspath(root)
        self._write_lock = threading.Lock()

    def _entry_path(self, backend_id: str, key: str) -> str:
        if not _ID_RE.match(backend_id):
            raise ConfigurationError(f"backend id {backend_id!r} is not filesystem-safe")
        return os.path.join(self.root, backend_id, f"{key}.bin")

    def put(self, backend_id: str, key: str, triple: FeatureTriple) -> None:
        path = self._entry_path(backend_id, key)
        blob = encode_record(triple.stack())
        with self._write_lock:
            os.makedirs(os.path.dirname(path), exist_ok=True)
            if os.path.exists(path):  # append-only: first write wins
                return
            tmp = f"{path}.tmp"
            with open(tmp, "wb") as fh:
                fh.write(blob)
            os.replace(tmp, path)

    def get(self, backend_id: str, key: str) -> FeatureTriple | None:
        path = self._entry_path(backend_id, key)
        try:
            with open(path, "rb") as fh:
                blob = fh.read()
        except FileNotFoundError:
            return None
        arr = decode_record(blob, key=key)
        if arr.shape[0] != 3:
            raise IntegrityError(f"cache entry {key}: expected 3 streams, found {arr.shape[0]}")
        return FeatureTriple(vis=arr[0], clip=arr[1], tex=arr[2])


class CachingBackend(EmbedderBackend):
    """Wraps a backend with a read-through EmbeddingCache for embed_image."""

    def __init__(self, inner: EmbedderBackend, cache: EmbeddingCache):
        self.inner = inner
        self.cache = cache

    @property
    def backend_id(self) -> str:
        return self.inner.backend_id

    @property
    def parallel_safe(self) -> bool:
        return self.inner.parallel_safe

    def embed_image(self, image: ImageBuffer) -> FeatureTriple:
        key = content_digest(image, self.inner.backend_id, self._dim())
        cached = self.cache.get(self.inner.backend_id, key)
        if cached is not None:
            return cached
        triple = self.inner.embed_image(image)
        self.cache.put(self.inner.backend_id, key, triple)
        return triple

    def _dim(self) -> int:
        return int(getattr(self.inner, "d", 0))

    def embed_text(self, text: str):
        return self.inner.embed_text(text)

    def embed_image_global(self, image: ImageBuffer) -> np.ndarray:
        return self.inner.embed_image_global(image)
