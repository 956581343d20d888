"""Single merged run configuration: defaults, config file, flag overrides.

Precedence is flags > file > defaults. The defaults are the stock
operating point (tau1 = 0.938, tau2 = 0.970, omega = 0.24/0.38/0.38, crop
0.20, occlusion 0.10, rotation 30 degrees), so the common workflows run
with no config file at all. Unknown keys anywhere in the file are errors;
a typo must never silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .augment import AugmentConfig
from .cache import CachingBackend, EmbeddingCache
from .decision import DecisionConfig, validate_config
from .errors import ConfigurationError
from .features import EmbedderBackend, SyntheticEmbedder
from .fusion import FusionConfig, Fuser, build_fuser
from .perturb import KINDS, PerturbationSpec

CACHE_ENV_VAR = "COPYFORGE_CACHE_DIR"
BACKENDS = ("synthetic",)


@dataclass(frozen=True)
class PerturbDefaults:
    """Attack magnitudes for the standard suite; all single-level."""

    noise_sigma: float = 0.1
    blur_size: int = 5
    blur_sigma: float = 1.5
    poisson_lam_base: float = 255.0
    salt_pepper_amount: float = 0.05
    speckle_var: float = 0.05
    crop_fraction: float = 0.20
    occlude_fraction: float = 0.10
    rotate_degrees: float = 30.0


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    workers: int = 1
    backend: str = "synthetic"
    feature_dim: int = 512
    cache_dir: str | None = None
    decision: DecisionConfig = field(default_factory=DecisionConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    perturb: PerturbDefaults = field(default_factory=PerturbDefaults)

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}")
        if self.backend not in BACKENDS:
            raise ConfigurationError(
                f"unknown backend {self.backend!r}; built in: {BACKENDS}")
        if self.feature_dim < 4:
            raise ConfigurationError(f"feature_dim must be >= 4, got {self.feature_dim}")
        violations = validate_config(self.decision)
        if violations:
            raise ConfigurationError("; ".join(violations))


def _build_section(cls, raw: dict, where: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigurationError(f"unknown keys in [{where}]: {sorted(unknown)}")
    coerced = dict(raw)
    for name in ("omega", "templates"):
        if name in coerced and isinstance(coerced[name], list):
            coerced[name] = tuple(coerced[name])
    return cls(**coerced)


_SECTIONS = {
    "decision": DecisionConfig,
    "fusion": FusionConfig,
    "augment": AugmentConfig,
    "perturb": PerturbDefaults,
}
_TOP_LEVEL = {"seed", "workers", "backend", "feature_dim", "cache_dir"}


def load_run_config(path: str | os.PathLike | None = None,
                    overrides: dict | None = None) -> RunConfig:
    """Merge the defaults, an optional TOML file, and dotted-key overrides.

    Override keys are either top-level names ("seed") or section-qualified
    ("decision.tau1"); values replace whatever the file set.
    """
    data: dict = {}
    if path is not None:
        path = os.fspath(path)
        if not os.path.exists(path):
            raise ConfigurationError(f"config file not found: {path}")
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigurationError(f"{path}: invalid TOML ({exc})") from exc
        unknown = set(data) - _TOP_LEVEL - set(_SECTIONS)
        if unknown:
            raise ConfigurationError(f"{path}: unknown keys {sorted(unknown)}")
    for dotted, value in (overrides or {}).items():
        if "." in dotted:
            section, key = dotted.split(".", 1)
            if section not in _SECTIONS:
                raise ConfigurationError(f"unknown config section {section!r}")
            data.setdefault(section, {})[key] = value
        else:
            if dotted not in _TOP_LEVEL:
                raise ConfigurationError(f"unknown config key {dotted!r}")
            data[dotted] = value
    kwargs: dict = {k: v for k, v in data.items() if k in _TOP_LEVEL}
    for name, cls in _SECTIONS.items():
        if name in data:
            if not isinstance(data[name], dict):
                raise ConfigurationError(f"[{name}] must be a table")
            kwargs[name] = _build_section(cls, data[name], name)
    return RunConfig(**kwargs)


def config_echo(config: RunConfig) -> dict:
    """Plain nested dict of the effective configuration, for output artifacts."""
    out = dataclasses.asdict(config)
    for section in ("decision", "augment"):
        for key, value in out[section].items():
            if isinstance(value, tuple):
                out[section][key] = list(value)
    return out


def build_backend(config: RunConfig) -> EmbedderBackend:
    """Instantiate the embedder, wrapping it in the disk cache when one is set.

    The cache root comes from the config or the COPYFORGE_CACHE_DIR
    environment variable, config first.
    """
    if config.backend != "synthetic":
        raise ConfigurationError(f"unknown backend {config.backend!r}")
    backend: EmbedderBackend = SyntheticEmbedder(d=config.feature_dim, seed=config.seed)
    cache_dir = config.cache_dir or os.environ.get(CACHE_ENV_VAR)
    if cache_dir:
        backend = CachingBackend(backend, EmbeddingCache(cache_dir))
    return backend


def build_run_fuser(config: RunConfig) -> Fuser:
    return build_fuser(config.fusion, input_dim=config.feature_dim)


def build_suite(config: RunConfig) -> list[PerturbationSpec]:
    """The ten standard attacks at this run's magnitudes, in report order."""
    p = config.perturb
    params: dict[str, dict] = {
        "gaussian_noise": {"sigma": p.noise_sigma},
        "gaussian_blur": {"size": p.blur_size, "sigma": p.blur_sigma},
        "poisson": {"lam_base": p.poisson_lam_base},
        "salt_pepper": {"amount": p.salt_pepper_amount},
        "speckle": {"var": p.speckle_var},
        "crop": {"fraction": p.crop_fraction},
        "flip_h": {},
        "flip_v": {},
        "occlude": {"fraction": p.occlude_fraction},
        "rotate": {"degrees": p.rotate_degrees},
    }
    return [PerturbationSpec(kind=kind, params=params[kind], seed=config.seed + i)
            for i, kind in enumerate(KINDS)]
