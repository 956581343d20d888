"""Reference-gallery indexing, retrieval, copy-rate, and pair evaluation.

An index holds one fused embedding (plus the raw feature triple) per
reference image, stamped with the fuser's configuration digest so a
mismatched fuser is caught at load instead of producing silently wrong
scores. Retrieval is exact cosine ranking; galleries at this scale do not
justify approximate search. The SSIM baseline lives here too, next to the
named adapter slots for external perceptual metrics.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .cache import decode_record, encode_record
from .decision import DecisionConfig, decide
from .errors import (ConfigurationError, DataError, DegenerateDataError,
                     IntegrityError, ShapeMismatchError, StaleIndexError)
from .features import EmbedderBackend, FeatureTriple, ImageBuffer, cosine
from .fusion import FusedEmbedding, Fuser, fuser_digest
from .images import load_image

_HEADER_NAME = "header.json"
_FUSED_NAME = "fused.bin"
_TRIPLES_NAME = "triples.bin"
_INDEX_FORMAT = 1

MANIFEST_LABELS = ("retrieve", "style", "noncopy")
POSITIVE_LABELS = ("retrieve", "style")


@dataclass(frozen=True)
class GalleryEntry:
    entry_id: str
    source: str
    fused: FusedEmbedding
    triple: FeatureTriple


@dataclass(frozen=True)
class GalleryIndex:
    entries: tuple[GalleryEntry, ...]
    fuser_digest: str

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.entries:
            raise DegenerateDataError("gallery index has no entries")
        ids = [e.entry_id for e in self.entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate gallery ids: {dupes}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def d_model(self) -> int:
        return int(self.entries[0].fused.vec.shape[0])

    @property
    def input_dim(self) -> int:
        return self.entries[0].triple.dim


def build_index(items: list[tuple[str, str | ImageBuffer]],
                backend: EmbedderBackend, fuser: Fuser,
                ) -> tuple[GalleryIndex, list[str]]:
    """Embed and fuse every item; unreadable ones are reported, not fatal.

    Items are (id, image) where image is a buffer or a path. Returns the
    index plus a list of per-item error strings; an index with zero
    survivors is an error.
    """
    if not items:
        raise DataError("cannot build an index from zero items")
    ids = [entry_id for entry_id, _ in items]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise DataError(f"duplicate gallery ids: {dupes}")
    entries: list[GalleryEntry] = []
    errors: list[str] = []
    for entry_id, item in items:
        try:
            if isinstance(item, ImageBuffer):
                image, source = item, ""
            else:
                image, source = load_image(item), os.fspath(item)
            triple = backend.embed_image(image)
            fused = fuser.fuse(triple)
            entries.append(GalleryEntry(entry_id=entry_id, source=source,
                                        fused=fused, triple=triple))
        except Exception as exc:
            errors.append(f"{entry_id}: {exc}")
    if not entries:
        raise DataError(f"no gallery entries could be built: {errors}")
    digest = fuser_digest(fuser.config, entries[0].triple.dim)
    return GalleryIndex(entries=tuple(entries), fuser_digest=digest), errors


def save_index(index: GalleryIndex, directory: str | os.PathLike) -> None:
    """Directory layout: header.json + fixed-width binary records per entry."""
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    header = {
        "format": _INDEX_FORMAT,
        "fuser_digest": index.fuser_digest,
        "d_model": index.d_model,
        "input_dim": index.input_dim,
        "count": len(index),
        "ids": [e.entry_id for e in index.entries],
        "sources": [e.source for e in index.entries],
    }
    with open(os.path.join(directory, _HEADER_NAME), "w", encoding="utf-8") as fh:
        json.dump(header, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(os.path.join(directory, _FUSED_NAME), "wb") as fh:
        for e in index.entries:
            fh.write(encode_record(e.fused.vec))
    with open(os.path.join(directory, _TRIPLES_NAME), "wb") as fh:
        for e in index.entries:
            fh.write(encode_record(e.triple.stack()))


def _read_records(path: str, count: int, streams: int, d: int) -> list[np.ndarray]:
    record_size = 16 + streams * d * 4
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) != count * record_size:
        raise IntegrityError(
            f"{path}: {len(blob)} bytes, expected {count} records of {record_size}")
    out = []
    for i in range(count):
        arr = decode_record(blob[i * record_size:(i + 1) * record_size],
                            key=f"{path}[{i}]")
        if arr.shape != (streams, d):
            raise IntegrityError(f"{path}[{i}]: shape {arr.shape} != ({streams}, {d})")
        out.append(arr)
    return out


def load_index(directory: str | os.PathLike,
               expected_digest: str | None = None) -> GalleryIndex:
    """Rebuild the in-memory index; a digest mismatch is a stale-index error.

    Fused vectors round-trip through the float32 record format, so reloaded
    scores can differ from freshly built ones at float32 precision.
    """
    directory = os.fspath(directory)
    header_path = os.path.join(directory, _HEADER_NAME)
    if not os.path.exists(header_path):
        raise DataError(f"no index at {directory}: missing {_HEADER_NAME}")
    with open(header_path, encoding="utf-8") as fh:
        header = json.load(fh)
    if header.get("format") != _INDEX_FORMAT:
        raise IntegrityError(f"{header_path}: unsupported index format {header.get('format')}")
    digest = header["fuser_digest"]
    if expected_digest is not None and digest != expected_digest:
        raise StaleIndexError(
            f"index at {directory} was built with a different fuser "
            f"(digest {digest[:12]}… != expected {expected_digest[:12]}…); "
            "rebuild it with the current configuration")
    count, d_model, input_dim = header["count"], header["d_model"], header["input_dim"]
    ids, sources = header["ids"], header["sources"]
    if not (len(ids) == len(sources) == count):
        raise IntegrityError(f"{header_path}: id/source lists disagree with count")
    fused_rows = _read_records(os.path.join(directory, _FUSED_NAME), count, 1, d_model)
    triple_rows = _read_records(os.path.join(directory, _TRIPLES_NAME), count, 3, input_dim)
    entries = []
    for entry_id, source, fused_arr, triple_arr in zip(ids, sources, fused_rows, triple_rows):
        fused = FusedEmbedding(vec=fused_arr[0].astype(np.float64))
        triple = FeatureTriple(vis=triple_arr[0], clip=triple_arr[1], tex=triple_arr[2])
        entries.append(GalleryEntry(entry_id=entry_id, source=source,
                                    fused=fused, triple=triple))
    return GalleryIndex(entries=tuple(entries), fuser_digest=digest)


def rank_entries(fused_query: np.ndarray, index: GalleryIndex,
                 k: int) -> list[tuple[str, float]]:
    """Exact descending-cosine ranking; ties order by id; k caps at the size."""
    if k < 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    scored = [(e.entry_id, cosine(fused_query, e.fused.vec)) for e in index.entries]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:min(k, len(scored))]


def top_k(query: ImageBuffer, index: GalleryIndex, backend: EmbedderBackend,
          fuser: Fuser, k: int = 5) -> list[tuple[str, float]]:
    fused = fuser.fuse(backend.embed_image(query))
    return rank_entries(fused.vec, index, k)


@dataclass(frozen=True)
class CopyRateResult:
    rate: float
    verdicts: tuple[dict, ...]  # per query: id, best match, score, flag


def copy_rate(queries: list[tuple[str, ImageBuffer]], index: GalleryIndex,
              backend: EmbedderBackend, fuser: Fuser,
              config: DecisionConfig) -> CopyRateResult:
    """Fraction of queries whose best gallery match clears the copy gate."""
    if not queries:
        raise DataError("no queries given")
    verdicts = []
    flagged = 0
    for query_id, image in queries:
        (match_id, score), = top_k(image, index, backend, fuser, k=1)
        is_copy = score > config.tau1
        flagged += is_copy
        verdicts.append({"query": query_id, "match": match_id,
                         "s_fus": score, "is_copy": bool(is_copy)})
    return CopyRateResult(rate=flagged / len(queries), verdicts=tuple(verdicts))


@dataclass(frozen=True)
class ManifestPair:
    query: str
    reference: str
    label: str


@dataclass(frozen=True)
class PairManifest:
    pairs: tuple[ManifestPair, ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if not self.pairs:
            raise DataError("manifest has no pairs")


def load_manifest(path: str | os.PathLike) -> PairManifest:
    """JSONL rows {query, reference, label}; paths resolve against the file."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DataError(f"manifest not found: {path}")
    base = os.path.dirname(os.path.abspath(path))
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                query, reference = str(row["query"]), str(row["reference"])
                label = str(row["label"])
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad manifest row ({exc})") from exc
            if label not in MANIFEST_LABELS:
                raise DataError(
                    f"{path}:{lineno}: label {label!r} not in {MANIFEST_LABELS}")
            query = query if os.path.isabs(query) else os.path.join(base, query)
            reference = reference if os.path.isabs(reference) else os.path.join(base, reference)
            for p in (query, reference):
                if not os.path.exists(p):
                    raise DataError(f"{path}:{lineno}: missing image {p}")
            pairs.append(ManifestPair(query=query, reference=reference, label=label))
    if not pairs:
        raise DataError(f"{path}: no manifest rows")
    return PairManifest(pairs=tuple(pairs))


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    copy_rate: float
    confusion: dict  # true label -> {predicted type -> count}, flagged pairs only

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy, "precision": self.precision,
            "recall": self.recall, "f1": self.f1,
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "copy_rate": self.copy_rate, "confusion": self.confusion,
        }


def evaluate_manifest(manifest: PairManifest, backend: EmbedderBackend,
                      fuser: Fuser, config: DecisionConfig) -> EvalReport:
    """Gate metrics treat retrieve/style as positive; types only where flagged."""
    tp = fp = tn = fn = 0
    confusion = {label: {"retrieve": 0, "style": 0} for label in MANIFEST_LABELS}
    for pair in manifest.pairs:
        verdict = decide(load_image(pair.query), load_image(pair.reference),
                         backend, fuser, config)
        truth_positive = pair.label in POSITIVE_LABELS
        if verdict.is_copy:
            confusion[pair.label][verdict.copy_type] += 1
            tp += truth_positive
            fp += not truth_positive
        else:
            fn += truth_positive
            tn += not truth_positive
    total = len(manifest.pairs)
    flagged = tp + fp
    precision = tp / flagged if flagged else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall > 0 else 0.0)
    return EvalReport(
        accuracy=(tp + tn) / total, precision=precision, recall=recall, f1=f1,
        tp=int(tp), fp=int(fp), tn=int(tn), fn=int(fn),
        copy_rate=flagged / total, confusion=confusion)


def _window_sums(channel: np.ndarray, win: int) -> np.ndarray:
    """Sum of every win x win window via a zero-padded integral image."""
    integral = np.zeros((channel.shape[0] + 1, channel.shape[1] + 1))
    np.cumsum(np.cumsum(channel, axis=0), axis=1, out=integral[1:, 1:])
    return (integral[win:, win:] - integral[:-win, win:]
            - integral[win:, :-win] + integral[:-win, :-win])


def ssim(a: ImageBuffer, b: ImageBuffer, window: int = 8) -> float:
    """Mean structural similarity over valid sliding windows, all channels.

    Uniform window, population moments, C1 = 0.01^2 and C2 = 0.03^2 for a
    [0, 1] intensity range. Integral images keep it linear in pixels; the
    naive per-window summation serves as the test oracle.
    """
    if a.pixels.shape != b.pixels.shape:
        raise ShapeMismatchError(
            f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}")
    if window < 2 or window > min(a.height, a.width):
        raise ConfigurationError(
            f"window {window} does not fit a {a.height}x{a.width} image")
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    n = window * window
    per_channel = []
    for ch in range(a.pixels.shape[2]):
        x = a.pixels[:, :, ch]
        y = b.pixels[:, :, ch]
        mu_x = _window_sums(x, window) / n
        mu_y = _window_sums(y, window) / n
        var_x = _window_sums(x * x, window) / n - mu_x ** 2
        var_y = _window_sums(y * y, window) / n - mu_y ** 2
        cov = _window_sums(x * y, window) / n - mu_x * mu_y
        score = (((2 * mu_x * mu_y + c1) * (2 * cov + c2))
                 / ((mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)))
        per_channel.append(float(np.mean(score)))
    return float(np.mean(per_channel))


# Named baseline slots: SSIM is built in; the rest take external adapters
# because they need pretrained weights.
BASELINES: dict[str, object] = {
    "ssim": ssim, "lpips": None, "orb": None, "sscd": None, "dreamsim": None,
}


def get_baseline(name: str):
    if name not in BASELINES:
        raise ConfigurationError(f"unknown baseline {name!r}; have {sorted(BASELINES)}")
    fn = BASELINES[name]
    if fn is None:
        raise ConfigurationError(
            f"baseline {name!r} has no built-in implementation; register an adapter")
    return fn


def register_baseline(name: str, fn) -> None:
    """Plug an external perceptual-similarity adapter into a named slot."""
    if name not in BASELINES:
        raise ConfigurationError(f"unknown baseline slot {name!r}")
    BASELINES[name] = fn
