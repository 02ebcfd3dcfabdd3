"""Run configuration and its flat ``key = value`` text format.

Files look like::

    # comments start with '#'
    [train]
    epochs = 12
    dcp = true

    [data]
    target_identities = 20

Section headers only group keys for readability; every key name is unique
across both sections.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .clustering import DECAY_MODES

TOGGLES = ("dcp", "dwc", "cpr", "ctm", "augment")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    epochs: int = 12
    iterations: int = 25
    batch_identities: int = 16
    batch_instances: int = 8
    eps0: float = 0.8
    eta: float = 0.97
    decay: str = "exponential"
    min_samples: int = 4
    alpha: float = 0.4
    beta: float = 0.4
    momentum: float = 0.2
    ema: float = 0.99
    temperature: float = 0.05
    k: int = 2
    lr: float = 1e-4
    weight_decay: float = 5e-4
    milestones: tuple = ()
    hidden: int = 256
    embed_dim: int = 128
    pretrain_epochs: int = 6
    pretrain_iterations: int = 25
    pretrain_lr: float = 1e-3
    label_noise: float = 0.0
    seed: int = 0
    dcp: bool = True
    dwc: bool = True
    cpr: bool = True
    ctm: bool = True
    augment: bool = True

    def __post_init__(self):
        _check_ranges(self)

    def with_toggles(self, enabled=()):
        """Copy with exactly the named components switched on."""
        enabled = set(enabled)
        unknown = enabled - set(TOGGLES)
        if unknown:
            raise ConfigError(f"unknown components {sorted(unknown)}")
        return dataclasses.replace(self, **{t: t in enabled for t in TOGGLES})

    def toggles(self):
        return tuple(t for t in TOGGLES if getattr(self, t))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class DataConfig:
    source_identities: int = 30
    source_sequences: int = 8
    target_identities: int = 20
    target_sequences: int = 16
    eval_sequences: int = 8
    clothing_conditions: int = 2
    intra_spread: float = 0.2
    clothing_shift: float = 2.0
    frames: int = 30
    data_seed: int = 0
    kind: str = "silhouettes"

    def __post_init__(self):
        if self.kind not in ("silhouettes", "embeddings"):
            raise ConfigError(f"kind must be 'silhouettes' or 'embeddings', got {self.kind!r}")
        for name in ("source_identities", "target_identities"):
            if getattr(self, name) < 2:
                raise ConfigError(f"{name} must be at least 2")
        for name in ("source_sequences", "target_sequences", "eval_sequences",
                     "clothing_conditions", "frames"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.intra_spread < 0 or self.clothing_shift < 0:
            raise ConfigError("intra_spread and clothing_shift must be non-negative")


def _check_ranges(cfg: RunConfig):
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.epochs >= 0 and cfg.iterations >= 0, "epochs and iterations must be >= 0")
    need(cfg.pretrain_epochs >= 0 and cfg.pretrain_iterations >= 0, "pretrain budget must be >= 0")
    need(cfg.batch_identities >= 1 and cfg.batch_instances >= 1, "batch sizes must be >= 1")
    need(0.0 < cfg.eps0 <= 2.0, f"eps0 must lie in (0, 2], got {cfg.eps0}")
    need(0.0 < cfg.eta <= 1.0, f"eta must lie in (0, 1], got {cfg.eta}")
    need(cfg.decay in DECAY_MODES, f"decay must be one of {DECAY_MODES}, got {cfg.decay!r}")
    need(cfg.min_samples >= 1, "min_samples must be >= 1")
    for name in ("alpha", "beta", "momentum", "ema"):
        need(0.0 <= getattr(cfg, name) <= 1.0, f"{name} must lie in [0, 1], got {getattr(cfg, name)}")
    need(cfg.temperature > 0, "temperature must be positive")
    need(cfg.k >= 1, "k must be >= 1")
    need(cfg.lr > 0 and cfg.weight_decay >= 0, "lr must be positive and weight_decay >= 0")
    need(cfg.pretrain_lr > 0, "pretrain_lr must be positive")
    need(0.0 <= cfg.label_noise < 1.0, f"label_noise must lie in [0, 1), got {cfg.label_noise}")
    need(all(m >= 0 for m in cfg.milestones), "milestones must be non-negative")
    need(cfg.hidden >= 1 and cfg.embed_dim >= 1, "layer widths must be >= 1")


# ---------------------------------------------------------------------------
# Text format

_SECTIONS = {"train": RunConfig, "data": DataConfig}


def _field_types():
    out = {}
    for section, cls in _SECTIONS.items():
        for f in fields(cls):
            out[f.name] = (section, f)
    return out


def _parse_value(f, raw: str):
    default = f.default
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"invalid value for {f.name}: {raw!r}") from exc
    return raw


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_overrides(pairs):
    """``["key=value", ...]`` into a dict of raw strings."""
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_config(text: str = "", overrides=None):
    """Parse config text plus raw string overrides into ``(RunConfig, DataConfig)``."""
    types = _field_types()
    values = {name: {} for name in _SECTIONS}
    raw_items = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            if line[1:-1].strip() not in _SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section {line}")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = line.split("=", 1)
        raw_items.append((key.strip(), raw.strip(), f"line {lineno}"))
    for key, raw in (overrides or {}).items():
        raw_items.append((key, str(raw), "override"))
    for key, raw, where in raw_items:
        if key not in types:
            raise ConfigError(f"{where}: unknown key {key!r}")
        section, f = types[key]
        values[section][key] = _parse_value(f, raw)
    try:
        return RunConfig(**values["train"]), DataConfig(**values["data"])
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def dump_config(run: RunConfig, data: DataConfig | None = None) -> str:
    lines = []
    for section, obj in (("train", run), ("data", data)):
        if obj is None:
            continue
        lines.append(f"[{section}]")
        lines += [f"{f.name} = {_format_value(getattr(obj, f.name))}" for f in fields(obj)]
        lines.append("")
    return "\n".join(lines)


def load_config(path, overrides=None):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, overrides)
