"""Two-threshold copy verdicts over fused and per-stream similarities.

The fused cosine gates the copy decision at ``tau1``; pairs that pass are
split into retrieve/exact versus style copies by comparing the weighted
stream score against ``tau2``.  Both comparisons are strictly-greater:
equality fails the gate.  Stream similarities are computed on the raw
backbone triples, upstream of fusion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ConfigurationError
from .features import EmbedderBackend, ImageBuffer, cosine
from .fusion import Fuser

RETRIEVE = "retrieve"
STYLE = "style"
NOT_COPY = "not_copy"
COPY_TYPES = (RETRIEVE, STYLE, NOT_COPY)

WEIGHT_SUM_TOL = 1e-9

# Operating point fixed by the calibration sweeps; see the calibration module.
DEFAULT_TAU1 = 0.938
DEFAULT_TAU2 = 0.970
DEFAULT_OMEGA = (0.24, 0.38, 0.38)


@dataclass(frozen=True)
class DecisionConfig:
    tau1: float = DEFAULT_TAU1
    tau2: float = DEFAULT_TAU2
    omega: tuple[float, float, float] = DEFAULT_OMEGA


def _omega_violations(omega) -> list[str]:
    omega = tuple(omega)
    if len(omega) != 3:
        return [f"omega must have three components, got {len(omega)}"]
    violations = []
    if any(w < 0.0 for w in omega):
        violations.append(f"omega components must be nonnegative, got {omega}")
    if abs(sum(omega) - 1.0) > WEIGHT_SUM_TOL:
        violations.append(f"omega must sum to 1 within {WEIGHT_SUM_TOL}, got sum {sum(omega)!r}")
    return violations


def validate_config(config: DecisionConfig) -> list[str]:
    """Collect every violated invariant; an empty list means the config is ok."""
    violations = []
    if not 0.0 < config.tau1 < 1.0:
        violations.append(f"tau1 must lie in (0, 1), got {config.tau1}")
    if not 0.0 < config.tau2 < 1.0:
        violations.append(f"tau2 must lie in (0, 1), got {config.tau2}")
    violations.extend(_omega_violations(config.omega))
    return violations


def _require_valid(config: DecisionConfig) -> None:
    violations = validate_config(config)
    if violations:
        raise ConfigurationError("; ".join(violations))


@dataclass(frozen=True)
class StreamSimilarities:
    s_vis: float
    s_clip: float
    s_tex: float
    s_fus: float
    s_bar: float | None  # absent when the gate fails; a 0 would corrupt aggregates


@dataclass(frozen=True)
class CopyVerdict:
    is_copy: bool
    copy_type: str
    scores: StreamSimilarities

    def __post_init__(self):
        if self.copy_type not in COPY_TYPES:
            raise ConfigurationError(f"unknown copy type {self.copy_type!r}")
        if (self.copy_type == NOT_COPY) != (not self.is_copy):
            raise ConfigurationError(
                f"inconsistent verdict: is_copy={self.is_copy}, copy_type={self.copy_type}")

    def to_record(self, query: str, reference: str) -> dict:
        """JSON-line payload for one evaluated pair."""
        s = self.scores
        return {
            "query": query,
            "reference": reference,
            "s_fus": s.s_fus,
            "s_vis": s.s_vis,
            "s_clip": s.s_clip,
            "s_tex": s.s_tex,
            "s_bar": s.s_bar,
            "is_copy": self.is_copy,
            "copy_type": self.copy_type,
        }


def weighted_score(streams: tuple[float, float, float],
                   omega: tuple[float, float, float]) -> float:
    """Affine combination w1*s_vis + w2*s_clip + w3*s_tex."""
    violations = _omega_violations(omega)
    if violations:
        raise ConfigurationError("; ".join(violations))
    s_vis, s_clip, s_tex = streams
    w1, w2, w3 = omega
    return w1 * s_vis + w2 * s_clip + w3 * s_tex


def decide_scores(s_fus: float, s_vis: float, s_clip: float, s_tex: float,
                  config: DecisionConfig) -> CopyVerdict:
    """Verdict from precomputed similarities; the gate is strictly-greater."""
    _require_valid(config)
    if s_fus <= config.tau1:
        scores = StreamSimilarities(s_vis=s_vis, s_clip=s_clip, s_tex=s_tex,
                                    s_fus=s_fus, s_bar=None)
        return CopyVerdict(is_copy=False, copy_type=NOT_COPY, scores=scores)
    s_bar = weighted_score((s_vis, s_clip, s_tex), config.omega)
    scores = StreamSimilarities(s_vis=s_vis, s_clip=s_clip, s_tex=s_tex,
                                s_fus=s_fus, s_bar=s_bar)
    copy_type = RETRIEVE if s_bar > config.tau2 else STYLE
    return CopyVerdict(is_copy=True, copy_type=copy_type, scores=scores)


def decide(g: ImageBuffer, r: ImageBuffer, backend: EmbedderBackend,
           fuser: Fuser, config: DecisionConfig) -> CopyVerdict:
    """Full pipeline verdict for a (query, reference) image pair."""
    _require_valid(config)
    tg = backend.embed_image(g)
    tr = backend.embed_image(r)
    s_fus = cosine(fuser.fuse(tg).vec, fuser.fuse(tr).vec)
    s_vis = cosine(tg.vis, tr.vis)
    s_clip = cosine(tg.clip, tr.clip)
    s_tex = cosine(tg.tex, tr.tex)
    return decide_scores(s_fus, s_vis, s_clip, s_tex, config)


def verdict_record_line(record: dict) -> str:
    """Canonical one-line JSON encoding used for verdict streams."""
    return json.dumps(record, sort_keys=True, separators=(",", ":"))
