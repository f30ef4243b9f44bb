"""YAML run configuration with strict, field-named validation.

Sections: ``cloud``, ``sizing``, ``som``, ``index``, ``pool``, ``integrate``,
``synth``, ``ablate``, plus a top-level ``seed``.  Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .pool import AGGREGATES, PROPAGATES, PoolChoice
from .sizing import KINDS, SizingPolicy
from .som import SomConfig


class ConfigError(ValueError):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class CloudSection:
    # aggregation-level grid in cm; None feeds the cloud through untouched
    cell: float | None = 20.0


@dataclass(frozen=True)
class IndexSection:
    k: int = 3


@dataclass(frozen=True)
class IntegrateSection:
    hidden_dim: int = 32
    output_dim: int = 16
    # padded sequence length; None pads to sizing.m_max
    length: int | None = None
    seed: int = 0


@dataclass(frozen=True)
class SynthSection:
    n_scenes: int = 1
    plane_points: int = 6000
    n_clusters: int | None = None
    radius_min: float = 0.2
    radius_max: float = 0.4


@dataclass(frozen=True)
class AblateSection:
    k_values: tuple = (1, 2, 3, 4, 5, 7)
    sizing: tuple = ("logarithm", "power", "linear", "static(256)", "static(196)",
                     "static(100)")
    aggregate: tuple = AGGREGATES
    propagate: tuple = PROPAGATES
    seeds: tuple = tuple(range(10))
    scenes_per_seed: int = 3


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    cloud: CloudSection = field(default_factory=CloudSection)
    sizing: SizingPolicy = field(default_factory=SizingPolicy)
    som: SomConfig = field(default_factory=SomConfig)
    index: IndexSection = field(default_factory=IndexSection)
    pool: PoolChoice = field(default_factory=PoolChoice)
    integrate: IntegrateSection = field(default_factory=IntegrateSection)
    synth: SynthSection = field(default_factory=SynthSection)
    ablate: AblateSection = field(default_factory=AblateSection)

    @property
    def sequence_length(self):
        return self.integrate.length or self.sizing.m_max


_SECTIONS = {
    "cloud": CloudSection,
    "sizing": SizingPolicy,
    "som": SomConfig,
    "index": IndexSection,
    "pool": PoolChoice,
    "integrate": IntegrateSection,
    "synth": SynthSection,
    "ablate": AblateSection,
}


def parse_sizing_label(label, base: SizingPolicy = SizingPolicy()) -> SizingPolicy:
    """``"logarithm"``, ``"power"``, ``"linear"`` or ``"static(<M>)"``."""
    label = str(label).strip()
    if label.startswith("static(") and label.endswith(")"):
        try:
            m = int(label[7:-1])
        except ValueError:
            raise ConfigError("ablate.sizing", f"bad static size in {label!r}") from None
        return dataclasses.replace(base, kind="static", m_static=m,
                                   m_max=max(base.m_max, m))
    if label not in KINDS or label == "static":
        raise ConfigError("ablate.sizing", f"unknown sizing policy {label!r}")
    return dataclasses.replace(base, kind=label)


def _build(section, cls, data):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(section, "expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{section}.{key}", "unknown key")
    kwargs = {}
    for key, value in data.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        # the section validators already prefix messages with the field name
        if msg.startswith(f"{section}."):
            fname, _, rest = msg.partition(": ")
            raise ConfigError(fname, rest) from None
        raise ConfigError(section, msg) from None


def _check_ablate(ab: AblateSection):
    for name in ("k_values", "sizing", "aggregate", "propagate", "seeds"):
        if len(getattr(ab, name)) == 0:
            raise ConfigError(f"ablate.{name}", "must be a non-empty list")
    for k in ab.k_values:
        if not isinstance(k, int) or k < 1:
            raise ConfigError("ablate.k_values", f"invalid K {k!r}")
    for s in ab.sizing:
        parse_sizing_label(s)
    for a in ab.aggregate:
        if a not in AGGREGATES:
            raise ConfigError("ablate.aggregate", f"unknown function {a!r}")
    for p in ab.propagate:
        if p not in PROPAGATES:
            raise ConfigError("ablate.propagate", f"unknown function {p!r}")
    if ab.scenes_per_seed < 1:
        raise ConfigError("ablate.scenes_per_seed", "must be >= 1")


def config_from_dict(data) -> RunConfig:
    data = dict(data or {})
    kwargs = {}
    if "seed" in data:
        seed = data.pop("seed")
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")
        kwargs["seed"] = seed
    for key, value in data.items():
        if key not in _SECTIONS:
            raise ConfigError(key, "unknown section")
        kwargs[key] = _build(key, _SECTIONS[key], value)
    cfg = RunConfig(**kwargs)

    if cfg.cloud.cell is not None and not cfg.cloud.cell > 0:
        raise ConfigError("cloud.cell", "must be positive")
    if not isinstance(cfg.index.k, int) or cfg.index.k < 1:
        raise ConfigError("index.k", "must be a positive integer")
    ig = cfg.integrate
    if ig.hidden_dim < 1 or ig.output_dim < 1:
        raise ConfigError("integrate.hidden_dim", "dimensions must be >= 1")
    if ig.length is not None and ig.length < cfg.sizing.m_max:
        raise ConfigError("integrate.length", "must be >= sizing.m_max")
    sy = cfg.synth
    if sy.n_scenes < 1 or sy.plane_points < 3:
        raise ConfigError("synth.n_scenes", "scene counts must be positive")
    if sy.n_clusters is not None and sy.n_clusters < 1:
        raise ConfigError("synth.n_clusters", "must be >= 1")
    if not 0 <= sy.radius_min <= sy.radius_max:
        raise ConfigError("synth.radius_min", "need 0 <= radius_min <= radius_max")
    _check_ablate(cfg.ablate)
    return cfg


def load_config(path) -> RunConfig:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"YAML parse error: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError("<file>", "top level must be a mapping")
    return config_from_dict(data)
