"""Run configuration and its ``key = value`` text format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .graph import SCORE_FUNCTIONS
from .head import MERGES
from .model import VARIANTS, ModelConfig, variant_config
from .pyramid import PyramidConfig


@dataclass(frozen=True)
class RunConfig:
    variant: str = "spgat"
    patch: int = 7
    epochs: int = 200
    lr: float = 1e-3
    batch_size: int = 16
    sessions: int = 3
    seed: int = 0
    # pyramid
    dilation_rates: tuple[int, ...] = (1, 4, 8, 12)
    branch_channels: int = 24
    bottleneck_mids: tuple[int, int] = (16, 32)
    expansion: int = 2
    kernel: int = 3
    pooling: bool = True
    leaky_slope: float = 0.2
    score: str = "dot"
    merge: str = "attention"
    # data: a cube on disk, or a synthetic scene when cube_header is empty
    cube_header: str = ""
    cube_data: str = ""
    labels: str = ""
    normalize: bool = True
    train_per_class: str = "4"
    synth_classes: int = 4
    synth_bands: int = 32
    synth_height: int = 48
    synth_width: int = 48
    synth_noise: float = 0.3
    synth_context: str = "large"
    synth_seed: int = 7

    def __post_init__(self):
        positive = ("patch", "epochs", "batch_size", "sessions", "branch_channels",
                    "expansion", "kernel", "synth_classes", "synth_bands",
                    "synth_height", "synth_width")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr < 0:
            raise ConfigError(f"lr must be non-negative, got {self.lr}")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.score not in SCORE_FUNCTIONS:
            raise ConfigError(f"score must be one of {SCORE_FUNCTIONS}, got {self.score!r}")
        if self.merge not in MERGES:
            raise ConfigError(f"merge must be one of {MERGES}, got {self.merge!r}")
        if self.synth_noise < 0:
            raise ConfigError(f"synth_noise must be non-negative, got {self.synth_noise}")
        if bool(self.cube_header) != bool(self.cube_data) or bool(self.cube_header) != bool(self.labels):
            raise ConfigError("cube_header, cube_data and labels must be given together")
        self.split_request()
        self.model_config(2)

    @classmethod
    def paper_scale(cls, **overrides) -> "RunConfig":
        """Published training budget and widths."""
        base = dict(epochs=500, sessions=10, dilation_rates=(1, 12, 24, 36),
                    bottleneck_mids=(64, 128), expansion=4)
        return cls(**{**base, **overrides})

    def split_request(self):
        """``train_per_class`` as accepted by :func:`spgat.data.make_split`."""
        text = self.train_per_class.strip()
        if text == "all-but-one":
            return text
        try:
            if "." in text:
                value = float(text)
                if not 0.0 < value < 1.0:
                    raise ValueError
                return value
            value = int(text)
            if value < 1:
                raise ValueError
            return value
        except ValueError:
            raise ConfigError("train_per_class must be a positive count, a fraction in "
                              f"(0, 1) or 'all-but-one', got {text!r}") from None

    def pyramid_config(self) -> PyramidConfig:
        return PyramidConfig(dilation_rates=self.dilation_rates,
                             branch_channels=self.branch_channels,
                             bottleneck_mids=self.bottleneck_mids,
                             expansion=self.expansion, kernel=self.kernel,
                             pooling=self.pooling, leaky_slope=self.leaky_slope)

    def model_config(self, classes: int) -> ModelConfig:
        base = ModelConfig(classes=classes, patch=self.patch, pyramid=self.pyramid_config(),
                           score=self.score, merge=self.merge)
        return variant_config(base, self.variant)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _parse_value(name: str, kind, text: str):
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError
        if kind is int:
            return int(text, 0)
        if kind is float:
            return float(text)
        if kind is str:
            return text
        # tuples of ints
        parts = [p for p in text.replace(",", " ").split() if p]
        if not parts:
            raise ValueError
        return tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"invalid value for {name}: {text!r}") from None


_KINDS = {"int": int, "float": float, "str": str, "bool": bool}


def _field_kinds() -> dict[str, type]:
    out = {}
    for f in fields(RunConfig):
        out[f.name] = _KINDS.get(f.type, tuple)
    return out


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Read ``key = value`` lines (``#`` starts a comment) on top of ``base``."""
    kinds = _field_kinds()
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, kinds[key], value)
    return dataclasses.replace(base or RunConfig(), **values)


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config(text, base)


def format_config(config: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        v = getattr(config, f.name)
        if isinstance(v, tuple):
            v = ", ".join(str(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
