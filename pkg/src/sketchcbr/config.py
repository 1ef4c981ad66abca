"""Pipeline configuration stored as an INI file."""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .learning.zoo import ZOO, check_kind

CONFIG_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable constant of the pipeline with its default.

    ``threshold`` is the relative-gain stop rule of both case loops and
    ``max_iters`` their iteration cap; ``oracle_folds`` splits the library
    for training-sample generation, ``cv_folds`` is used for model
    selection.  ``max_features`` caps the feature-count search (0 = no cap).
    """

    seed: int = 0
    threshold: float = 0.01
    max_iters: int = 10
    nmi_bins: int = 64
    mrmr_bins: int = 8
    zoo: tuple = ZOO
    oracle_folds: int = 10
    cv_folds: int = 10
    max_features: int = 0
    sharpen: bool = True
    sharpen_levels: int = 3
    kappa: float = 2.0
    feather: float = 1.0

    def __post_init__(self):
        if not self.threshold > 0:
            raise ConfigError(f"threshold must be > 0, got {self.threshold}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        for name in ("nmi_bins", "mrmr_bins", "oracle_folds", "cv_folds"):
            if getattr(self, name) < 2:
                raise ConfigError(f"{name} must be >= 2, got {getattr(self, name)}")
        if self.sharpen_levels < 1:
            raise ConfigError(f"sharpen_levels must be >= 1, got {self.sharpen_levels}")
        if self.max_features < 0:
            raise ConfigError("max_features must be >= 0")
        if not self.zoo:
            raise ConfigError("zoo must name at least one model")
        for kind in self.zoo:
            try:
                check_kind(kind)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None

    @property
    def feature_cap(self):
        return self.max_features or None

    def replace(self, **changes) -> "PipelineConfig":
        data = asdict(self)
        data.update(changes)
        data["zoo"] = tuple(data["zoo"])
        return PipelineConfig(**data)

    def to_ini(self) -> str:
        lines = [f"# sketchcbr pipeline configuration (version {CONFIG_VERSION})", "[pipeline]"]
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ", ".join(value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def to_json_obj(self) -> dict:
        data = asdict(self)
        data["zoo"] = list(self.zoo)
        return data


def _line_of(text, key):
    for n, line in enumerate(text.splitlines(), 1):
        if line.split("=")[0].strip() == key:
            return n
    return 0


def load_config(path) -> PipelineConfig:
    """Read a config file; unknown keys and malformed values are errors."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"missing config file: {path}")
    text = path.read_text()
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if parser.sections() != ["pipeline"]:
        raise ConfigError(f"{path}: expected exactly one [pipeline] section")
    sec = parser["pipeline"]
    known = {f.name: f for f in fields(PipelineConfig)}
    values = {}
    for key in sec:
        where = f"{path}:{_line_of(text, key)}"
        if key not in known:
            raise ConfigError(f"{where}: unknown key {key!r}")
        default = getattr(PipelineConfig, key)
        try:
            if isinstance(default, bool):
                values[key] = sec.getboolean(key)
            elif isinstance(default, int):
                values[key] = sec.getint(key)
            elif isinstance(default, float):
                values[key] = sec.getfloat(key)
            else:
                values[key] = tuple(s.strip() for s in sec[key].split(",") if s.strip())
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key}: {exc}") from None
    try:
        return PipelineConfig(**values)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
