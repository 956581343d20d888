"""Region-aware prompt augmentation for diffusion training.

Detector proposals are merged (greedy NMS), confidence-filtered, and mapped
to coarse grid position tokens. A small template set instantiates prompt
variants from the base prompt plus each region's class and position; the
variants are weighted by image-text consistency under a temperature and one
is sampled per call. The base prompt always stays in the pool, so
augmentation can only add grounded diversity, never lose the original.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, DataError, ShapeMismatchError, TemplateError
from .features import EmbedderBackend, ImageBuffer, cosine

DEFAULT_TEMPLATES = (
    "⟨p⟩, with a ⟨c⟩ in the ⟨pos⟩",
    "⟨p⟩, featuring ⟨c⟩ and ⟨c'⟩",
)

# Row-major 3x3 position vocabulary.
_POSITION_NAMES_3X3 = (
    "top-left", "top-center", "top-right",
    "middle-left", "center", "middle-right",
    "bottom-left", "bottom-center", "bottom-right",
)

_PLACEHOLDER_RE = re.compile(r"[⟨<]([^⟨⟩<>]*)[⟩>]")
_SINGLE_REGION_NAMES = frozenset({"p", "c", "pos"})
_TWO_OBJECT_NAMES = frozenset({"p", "c", "c'"})


@dataclass(frozen=True)
class RegionProposal:
    """One detector box: pixel corners, class label, confidence."""

    box: tuple[float, float, float, float]  # (x1, y1, x2, y2)
    class_label: str
    confidence: float

    def __post_init__(self):
        object.__setattr__(self, "box", tuple(float(v) for v in self.box))
        if len(self.box) != 4:
            raise DataError(f"box needs 4 coordinates, got {len(self.box)}")
        x1, y1, x2, y2 = self.box
        if not (x1 < x2 and y1 < y2):
            raise DataError(f"degenerate box {self.box}: need x1 < x2 and y1 < y2")
        if not 0.0 <= self.confidence <= 1.0:
            raise DataError(f"confidence {self.confidence} outside [0, 1]")
        if not self.class_label:
            raise DataError("class_label must be non-empty")


@dataclass(frozen=True)
class GridPosition:
    token: str
    row: int
    col: int


@dataclass(frozen=True)
class AugmentConfig:
    tau_nms: float = 0.5
    tau_b: float = 0.7
    top_m: int = 3
    templates: tuple[str, ...] = DEFAULT_TEMPLATES
    gamma: float = 2.0
    grid_rows: int = 3
    grid_cols: int = 3

    def __post_init__(self):
        object.__setattr__(self, "templates", tuple(self.templates))
        if not 0.0 < self.tau_nms <= 1.0:
            raise ConfigurationError(f"tau_nms must be in (0, 1], got {self.tau_nms}")
        if not 0.0 <= self.tau_b < 1.0:
            raise ConfigurationError(f"tau_b must be in [0, 1), got {self.tau_b}")
        if self.top_m < 1:
            raise ConfigurationError(f"top_m must be positive, got {self.top_m}")
        if not self.templates:
            raise ConfigurationError("need at least one template")
        if self.gamma <= 0:
            raise ConfigurationError(f"gamma must be positive, got {self.gamma}")
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ConfigurationError("grid dimensions must be positive")
        for j, text in enumerate(self.templates):
            parse_template(text, index=j)


@dataclass(frozen=True)
class PromptVariant:
    """One pool entry; consistency/weight/probability appear after scoring."""

    text: str
    kind: str  # "base" or "template"
    template_index: int | None = None
    region_indices: tuple[int, ...] = ()
    consistency: float | None = None
    weight: float | None = None
    probability: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "region_indices", tuple(self.region_indices))
        if self.kind not in ("base", "template"):
            raise DataError(f"unknown variant kind {self.kind!r}")
        if self.weight is not None and self.weight < 0:
            raise DataError(f"variant weight {self.weight} is negative")
        if self.probability is not None and not 0.0 <= self.probability <= 1.0:
            raise DataError(f"variant probability {self.probability} outside [0, 1]")


class DetectorBackend:
    """Adapter contract for a region detector; instances must be deterministic."""

    def detect(self, image: ImageBuffer) -> list[RegionProposal]:
        raise NotImplementedError


@dataclass(frozen=True)
class StaticDetector(DetectorBackend):
    """Returns a fixed proposal list regardless of input; test and CLI stub."""

    proposals: tuple[RegionProposal, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "proposals", tuple(self.proposals))

    def detect(self, image: ImageBuffer) -> list[RegionProposal]:
        return list(self.proposals)


def load_proposals(path: str | os.PathLike) -> list[RegionProposal]:
    """Read detector output from JSON: a list of {box, class_label, confidence}."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DataError(f"proposal file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, list):
        raise DataError(f"{path}: expected a JSON list of proposals")
    out = []
    for i, row in enumerate(raw):
        try:
            out.append(RegionProposal(
                box=tuple(row["box"]), class_label=str(row["class_label"]),
                confidence=float(row["confidence"])))
        except (KeyError, TypeError, ValueError, DataError) as exc:
            raise DataError(f"{path}: proposal {i}: {exc}") from exc
    return out


def iou(box_a: tuple[float, float, float, float],
        box_b: tuple[float, float, float, float]) -> float:
    ax1, ay1, ax2, ay2 = box_a
    bx1, by1, bx2, by2 = box_b
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


def nms(proposals: list[RegionProposal], tau_nms: float) -> list[RegionProposal]:
    """Greedy suppression: keep the most confident box, drop overlaps above tau.

    Overlap must be strictly greater than tau_nms to suppress. Ties in
    confidence resolve by input order, and the output stays sorted by
    descending confidence.
    """
    order = sorted(range(len(proposals)), key=lambda i: (-proposals[i].confidence, i))
    kept: list[RegionProposal] = []
    suppressed = set()
    for i in order:
        if i in suppressed:
            continue
        kept.append(proposals[i])
        for j in order:
            if j not in suppressed and j != i:
                if iou(proposals[i].box, proposals[j].box) > tau_nms:
                    suppressed.add(j)
    return kept


def filter_and_rank(proposals: list[RegionProposal], tau_b: float,
                    top_m: int) -> list[RegionProposal]:
    """Strictly-above-threshold confidences only, then the first top_m of them."""
    kept = [p for p in proposals if p.confidence > tau_b]
    kept.sort(key=lambda p: -p.confidence)  # stable: input order breaks ties
    return kept[:top_m]


def _cell_index(coord: float, cells: int) -> int:
    # Boundary coordinates belong to the higher-index cell; 1.0 to the last.
    if coord >= 1.0:
        return cells - 1
    return int(math.floor(coord * cells))


def grid_position(box: tuple[float, float, float, float], image_height: int,
                  image_width: int, rows: int = 3, cols: int = 3) -> GridPosition:
    """Map a box's normalized center into a coarse grid cell token."""
    x1, y1, x2, y2 = (float(v) for v in box)
    if not (x1 < x2 and y1 < y2):
        raise DataError(f"degenerate box {box}")
    if x1 < 0 or y1 < 0 or x2 > image_width or y2 > image_height:
        raise DataError(f"box {box} outside {image_height}x{image_width} image")
    col = _cell_index((x1 + x2) / (2.0 * image_width), cols)
    row = _cell_index((y1 + y2) / (2.0 * image_height), rows)
    if rows == 3 and cols == 3:
        token = _POSITION_NAMES_3X3[row * 3 + col]
    else:
        token = f"cell-{row}-{col}"
    return GridPosition(token=token, row=row, col=col)


@dataclass(frozen=True)
class ParsedTemplate:
    raw: str
    names: frozenset[str]
    two_object: bool


def parse_template(text: str, index: int | None = None) -> ParsedTemplate:
    """Validate placeholder usage; unknown placeholders are named in the error."""
    label = "template" if index is None else f"template {index}"
    names = set(_PLACEHOLDER_RE.findall(text))
    two_object = "c'" in names
    allowed = _TWO_OBJECT_NAMES if two_object else _SINGLE_REGION_NAMES
    for name in sorted(names):
        if name not in allowed:
            raise TemplateError(
                f"{label}: unknown placeholder ⟨{name}⟩ in {text!r}")
    return ParsedTemplate(raw=text, names=frozenset(names), two_object=two_object)


def load_templates(path: str | os.PathLike) -> tuple[str, ...]:
    """One template per line; blank lines skipped; errors name the line."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DataError(f"template file not found: {path}")
    templates = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                parse_template(line)
            except TemplateError as exc:
                raise TemplateError(f"{path}:{lineno}: {exc}") from exc
            templates.append(line)
    if not templates:
        raise DataError(f"{path}: no templates")
    return tuple(templates)


def _instantiate(template: str, p: str, c: str | None = None,
                 c2: str | None = None, pos: str | None = None) -> str:
    values = {"p": p, "c": c, "c'": c2, "pos": pos}

    def sub(match: re.Match) -> str:
        value = values[match.group(1)]
        if value is None:
            raise TemplateError(
                f"placeholder ⟨{match.group(1)}⟩ has no value here")
        return value

    return _PLACEHOLDER_RE.sub(sub, template)


def build_variant_pool(prompt: str, regions: list[tuple[RegionProposal, GridPosition]],
                       templates: tuple[str, ...],
                       rng: np.random.Generator) -> list[PromptVariant]:
    """Base prompt plus every template instantiation over the kept regions.

    Single-region templates expand per (template, region). Two-object
    templates use one rng-sampled ordered pair of distinct regions, shared
    across the pool build, and are skipped with fewer than two regions.
    """
    parsed = [parse_template(t, index=j) for j, t in enumerate(templates)]
    pool = [PromptVariant(text=prompt, kind="base")]
    pair: tuple[int, int] | None = None
    if len(regions) >= 2 and any(t.two_object for t in parsed):
        first = int(rng.integers(len(regions)))
        second = int(rng.integers(len(regions) - 1))
        if second >= first:
            second += 1
        pair = (first, second)
    for j, tpl in enumerate(parsed):
        if tpl.two_object:
            if pair is None:
                continue
            i, i2 = pair
            text = _instantiate(tpl.raw, prompt, c=regions[i][0].class_label,
                                c2=regions[i2][0].class_label)
            pool.append(PromptVariant(text=text, kind="template",
                                      template_index=j, region_indices=pair))
        else:
            for i, (proposal, position) in enumerate(regions):
                text = _instantiate(tpl.raw, prompt, c=proposal.class_label,
                                    pos=position.token)
                pool.append(PromptVariant(text=text, kind="template",
                                          template_index=j, region_indices=(i,)))
    return pool


def sampling_distribution(scores: np.ndarray, gamma: float,
                          fallback_index: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Temperature-weighted sampling law: w = max(s, 0)^gamma, normalized.

    When every weight is zero the mass collapses onto fallback_index (the
    base prompt in pool order) instead of dividing by zero.
    """
    if gamma <= 0:
        raise ConfigurationError(f"gamma must be positive, got {gamma}")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise DataError("cannot build a distribution over an empty pool")
    weights = np.clip(scores, 0.0, None) ** gamma
    total = weights.sum()
    if total == 0.0:
        probs = np.zeros_like(weights)
        probs[fallback_index] = 1.0
        return weights, probs
    return weights, weights / total


def score_and_sample(pool: list[PromptVariant], image: ImageBuffer,
                     backend: EmbedderBackend, gamma: float,
                     seed: int | np.random.Generator,
                     ) -> tuple[PromptVariant, np.ndarray, list[PromptVariant]]:
    """Weight each variant by image-text consistency and draw one.

    Returns the sampled variant, its text embedding, and the pool annotated
    with (consistency, weight, probability).
    """
    if not pool:
        raise DataError("cannot sample from an empty pool")
    rng = np.random.default_rng(seed)
    anchor = backend.embed_image_global(image)
    text_vecs = [backend.embed_text(v.text).vec for v in pool]
    scores = np.array([cosine(anchor, vec) for vec in text_vecs])
    base_index = next((i for i, v in enumerate(pool) if v.kind == "base"), 0)
    weights, probs = sampling_distribution(scores, gamma, fallback_index=base_index)
    annotated = [
        replace(v, consistency=float(s), weight=float(w), probability=float(q))
        for v, s, w, q in zip(pool, scores, weights, probs)
    ]
    choice = int(rng.choice(len(pool), p=probs))
    return annotated[choice], text_vecs[choice], annotated


def diffusion_loss(noise: np.ndarray, prediction: np.ndarray) -> float:
    """Mean squared error between target noise and the model's prediction."""
    noise = np.asarray(noise, dtype=np.float64)
    prediction = np.asarray(prediction, dtype=np.float64)
    if noise.shape != prediction.shape:
        raise ShapeMismatchError(
            f"noise shape {noise.shape} != prediction shape {prediction.shape}")
    return float(np.mean((noise - prediction) ** 2))


@dataclass(frozen=True)
class AugmentationTrace:
    """Everything one augmentation call did, for audit output."""

    prompt: str
    proposals: tuple[RegionProposal, ...]
    kept: tuple[RegionProposal, ...]
    positions: tuple[GridPosition, ...]
    pool: tuple[PromptVariant, ...]
    sampled_index: int
    seed: int

    @property
    def sampled(self) -> PromptVariant:
        return self.pool[self.sampled_index]

    def to_record(self) -> dict:
        def variant_row(v: PromptVariant) -> dict:
            return {
                "text": v.text, "kind": v.kind,
                "template_index": v.template_index,
                "region_indices": list(v.region_indices),
                "consistency": v.consistency, "weight": v.weight,
                "probability": v.probability,
            }

        return {
            "prompt": self.prompt,
            "proposals": [
                {"box": list(p.box), "class_label": p.class_label,
                 "confidence": p.confidence} for p in self.proposals],
            "kept": [
                {"box": list(p.box), "class_label": p.class_label,
                 "confidence": p.confidence, "position": g.token}
                for p, g in zip(self.kept, self.positions)],
            "pool": [variant_row(v) for v in self.pool],
            "sampled_index": self.sampled_index,
            "sampled_text": self.sampled.text,
            "seed": self.seed,
        }


def augment_prompt(image: ImageBuffer, prompt: str, detector: DetectorBackend,
                   backend: EmbedderBackend, config: AugmentConfig,
                   seed: int) -> AugmentationTrace:
    """Full pipeline: detect, merge, filter, position, build pool, sample."""
    if not prompt:
        raise DataError("base prompt must be non-empty")
    rng = np.random.default_rng(seed)
    proposals = detector.detect(image)
    merged = nms(proposals, config.tau_nms)
    kept = filter_and_rank(merged, config.tau_b, config.top_m)
    positions = [
        grid_position(p.box, image.height, image.width,
                      rows=config.grid_rows, cols=config.grid_cols)
        for p in kept
    ]
    pool = build_variant_pool(prompt, list(zip(kept, positions)),
                              config.templates, rng)
    sampled, _, annotated = score_and_sample(pool, image, backend, config.gamma, rng)
    sampled_index = next(i for i, v in enumerate(annotated) if v is sampled)
    return AugmentationTrace(
        prompt=prompt, proposals=tuple(proposals), kept=tuple(kept),
        positions=tuple(positions), pool=tuple(annotated),
        sampled_index=sampled_index, seed=seed)
