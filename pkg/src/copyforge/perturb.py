"""Seeded image corruptions and the per-attack robustness report.

Ten attack kinds cover the usual photometric corruptions (gaussian noise
and blur, poisson, salt-and-pepper, speckle) and geometric edits (center
crop, both flips, random occlusion, rotation). Every transform is pure:
the same spec and seed reproduce the output bitwise. The report recomputes
all similarity scores per attack against an untouched counterpart.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .decision import DecisionConfig, decide
from .errors import ConfigurationError
from .features import EmbedderBackend, ImageBuffer
from .fusion import Fuser

KINDS = (
    "gaussian_noise", "gaussian_blur", "poisson", "salt_pepper", "speckle",
    "crop", "flip_h", "flip_v", "occlude", "rotate",
)

_DEFAULT_PARAMS: dict[str, dict[str, float]] = {
    "gaussian_noise": {"sigma": 0.1},
    "gaussian_blur": {"size": 5, "sigma": 1.5},
    "poisson": {"lam_base": 255.0},
    "salt_pepper": {"amount": 0.05},
    "speckle": {"var": 0.05},
    "crop": {"fraction": 0.20},
    "flip_h": {},
    "flip_v": {},
    "occlude": {"fraction": 0.10},
    "rotate": {"degrees": 30.0},
}


def _validate_params(kind: str, params: dict) -> None:
    allowed = _DEFAULT_PARAMS[kind]
    unknown = set(params) - set(allowed)
    if unknown:
        raise ConfigurationError(f"{kind}: unknown parameters {sorted(unknown)}")
    p = {**allowed, **params}
    if kind == "gaussian_noise" and p["sigma"] < 0:
        raise ConfigurationError(f"gaussian_noise sigma must be >= 0, got {p['sigma']}")
    if kind == "gaussian_blur":
        size = p["size"]
        if int(size) != size or size < 1 or size % 2 == 0:
            raise ConfigurationError(f"gaussian_blur size must be a positive odd integer, got {size}")
        if p["sigma"] <= 0:
            raise ConfigurationError(f"gaussian_blur sigma must be > 0, got {p['sigma']}")
    if kind == "poisson" and p["lam_base"] <= 0:
        raise ConfigurationError(f"poisson lam_base must be > 0, got {p['lam_base']}")
    if kind == "salt_pepper" and not 0.0 <= p["amount"] <= 1.0:
        raise ConfigurationError(f"salt_pepper amount must be in [0, 1], got {p['amount']}")
    if kind == "speckle" and p["var"] < 0:
        raise ConfigurationError(f"speckle var must be >= 0, got {p['var']}")
    if kind in ("crop", "occlude") and not 0.0 < p["fraction"] < 1.0:
        raise ConfigurationError(f"{kind} fraction must be in (0, 1), got {p['fraction']}")
    if kind == "rotate" and not math.isfinite(p["degrees"]):
        raise ConfigurationError(f"rotate degrees must be finite, got {p['degrees']}")


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown perturbation kind {self.kind!r}")
        object.__setattr__(self, "params", dict(self.params))
        _validate_params(self.kind, self.params)

    def param(self, name: str) -> float:
        return self.params.get(name, _DEFAULT_PARAMS[self.kind][name])


def _clip_image(pixels: np.ndarray) -> ImageBuffer:
    return ImageBuffer(pixels=np.clip(pixels, 0.0, 1.0))


def _gaussian_noise(img: np.ndarray, spec: PerturbationSpec,
                    rng: np.random.Generator) -> np.ndarray:
    return img + rng.normal(0.0, spec.param("sigma"), size=img.shape)


def _gaussian_blur(img: np.ndarray, spec: PerturbationSpec,
                   rng: np.random.Generator) -> np.ndarray:
    size = int(spec.param("size"))
    sigma = spec.param("sigma")
    offsets = np.arange(size) - (size - 1) / 2.0
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    kernel /= kernel.sum()
    out = ndimage.convolve1d(img, kernel, axis=0, mode="reflect")
    return ndimage.convolve1d(out, kernel, axis=1, mode="reflect")


def _poisson(img: np.ndarray, spec: PerturbationSpec,
             rng: np.random.Generator) -> np.ndarray:
    lam = spec.param("lam_base")
    return rng.poisson(img * lam).astype(np.float64) / lam


def _salt_pepper(img: np.ndarray, spec: PerturbationSpec,
                 rng: np.random.Generator) -> np.ndarray:
    # One uniform field decides both tails, so amount=0 flips no pixel at all.
    amount = spec.param("amount")
    u = rng.random(img.shape[:2])
    out = img.copy()
    out[u < amount / 2.0] = 1.0
    out[u >= 1.0 - amount / 2.0] = 0.0
    return out


def _speckle(img: np.ndarray, spec: PerturbationSpec,
             rng: np.random.Generator) -> np.ndarray:
    sigma = math.sqrt(spec.param("var"))
    return img * (1.0 + rng.normal(0.0, sigma, size=img.shape))


def _crop(img: np.ndarray, spec: PerturbationSpec,
          rng: np.random.Generator) -> np.ndarray:
    keep = 1.0 - spec.param("fraction")
    h, w = img.shape[:2]
    new_h, new_w = int(math.floor(keep * h)), int(math.floor(keep * w))
    top, left = (h - new_h) // 2, (w - new_w) // 2
    return img[top:top + new_h, left:left + new_w]


def _occlude(img: np.ndarray, spec: PerturbationSpec,
             rng: np.random.Generator) -> np.ndarray:
    h, w = img.shape[:2]
    side = int(round(math.sqrt(spec.param("fraction") * h * w)))
    side = max(1, min(side, h, w))
    top = int(rng.integers(0, h - side + 1))
    left = int(rng.integers(0, w - side + 1))
    out = img.copy()
    out[top:top + side, left:left + side] = 0.0
    return out


def _rotate(img: np.ndarray, spec: PerturbationSpec,
            rng: np.random.Generator) -> np.ndarray:
    # Bilinear, canvas preserved, exposed corners filled black.
    return ndimage.rotate(img, spec.param("degrees"), axes=(1, 0),
                          reshape=False, order=1, mode="constant", cval=0.0)


_TRANSFORMS = {
    "gaussian_noise": _gaussian_noise,
    "gaussian_blur": _gaussian_blur,
    "poisson": _poisson,
    "salt_pepper": _salt_pepper,
    "speckle": _speckle,
    "crop": _crop,
    "flip_h": lambda img, spec, rng: img[:, ::-1],
    "flip_v": lambda img, spec, rng: img[::-1, :],
    "occlude": _occlude,
    "rotate": _rotate,
}


def apply(image: ImageBuffer, spec: PerturbationSpec) -> ImageBuffer:
    """Run one corruption; a fresh generator per call keeps it deterministic."""
    rng = np.random.default_rng(spec.seed)
    out = _TRANSFORMS[spec.kind](image.pixels, spec, rng)
    return _clip_image(np.ascontiguousarray(out, dtype=np.float64))


def paper_suite(seed: int = 0) -> list[PerturbationSpec]:
    """The standard ten attacks, in report order, at their default strengths."""
    return [PerturbationSpec(kind=kind, seed=seed + i)
            for i, kind in enumerate(KINDS)]


SIDES = ("generated", "reference")


@dataclass(frozen=True)
class AttackRow:
    attack: str
    s_fus: float
    s_vis: float
    s_clip: float
    s_tex: float
    s_bar: float | None
    verdict: str


@dataclass(frozen=True)
class RobustnessReport:
    side: str
    rows: tuple[AttackRow, ...]


def _score_pair(g: ImageBuffer, r: ImageBuffer, backend: EmbedderBackend,
                fuser: Fuser, config: DecisionConfig, attack: str) -> AttackRow:
    verdict = decide(g, r, backend, fuser, config)
    s = verdict.scores
    return AttackRow(attack=attack, s_fus=s.s_fus, s_vis=s.s_vis,
                     s_clip=s.s_clip, s_tex=s.s_tex, s_bar=s.s_bar,
                     verdict=verdict.copy_type)


def robustness_report(g: ImageBuffer, r: ImageBuffer,
                      suite: list[PerturbationSpec], backend: EmbedderBackend,
                      fuser: Fuser, config: DecisionConfig,
                      side: str = "generated") -> RobustnessReport:
    """Clean-pair row first, then one row per attack on the chosen side."""
    if side not in SIDES:
        raise ConfigurationError(f"side must be one of {SIDES}, got {side!r}")
    if not suite:
        raise ConfigurationError("attack suite is empty")
    rows = [_score_pair(g, r, backend, fuser, config, attack="clean")]
    for spec in suite:
        if side == "generated":
            rows.append(_score_pair(apply(g, spec), r, backend, fuser, config,
                                    attack=spec.kind))
        else:
            rows.append(_score_pair(g, apply(r, spec), backend, fuser, config,
                                    attack=spec.kind))
    return RobustnessReport(side=side, rows=tuple(rows))


def report_to_csv(report: RobustnessReport, path: str | os.PathLike) -> None:
    """Table layout: clean row first, one attack per row, s_bar blank when gated off."""
    with open(os.fspath(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["attack", "s_fus", "s_vis", "s_clip", "s_tex", "s_bar", "verdict"])
        for row in report.rows:
            writer.writerow([
                row.attack, row.s_fus, row.s_vis, row.s_clip, row.s_tex,
                "" if row.s_bar is None else row.s_bar, row.verdict,
            ])
