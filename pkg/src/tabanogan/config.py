"""Run configuration: a flat ``section.key = value`` text format.

Example::

    # global seed; every stage seed not set explicitly follows it
    seed = 7
    data.path = telemetry.csv
    data.drop = dow, hod
    train.epochs = 400
    invert.restarts = 5

Every key has a default, so an empty file (or the name ``demo``) describes
the built-in synthetic benchmark run.  Environment variables are never read.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .gan import TrainConfig
from .inversion import InversionConfig
from .io import DatasetSchema
from .preprocess import PreprocessConfig

DEMO = "demo"


class ConfigError(ValueError):
    pass


@dataclass
class SynthConfig:
    """Used when ``data.path`` is empty: the built-in benchmark table."""

    n_normal: int = 5000
    n_anomalies: int = 250
    seed: int = 0


@dataclass
class EvalConfig:
    k: int = 5
    holdout: float = 0.2  # fraction of normal rows held out for testing
    seed: int = 0  # holdout split

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 < self.holdout < 1.0:
            raise ValueError("holdout must be in (0, 1)")


@dataclass
class OutputConfig:
    dir: str = "out"


# section name -> settings dataclass
SECTIONS = {
    "data": DatasetSchema,
    "synth": SynthConfig,
    "preprocess": PreprocessConfig,
    "train": TrainConfig,
    "invert": InversionConfig,
    "eval": EvalConfig,
    "output": OutputConfig,
}
SEEDED = ("synth", "preprocess", "train", "invert", "eval")


@dataclass
class RunConfig:
    seed: int = 0
    data: DatasetSchema = field(default_factory=DatasetSchema)
    synth: SynthConfig = field(default_factory=SynthConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    invert: InversionConfig = field(default_factory=InversionConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    # stage seeds given explicitly; the rest follow ``seed``
    pinned_seeds: frozenset = frozenset()

    def with_seed(self, seed: int) -> "RunConfig":
        """Copy with a new global seed propagated to every unpinned stage."""
        out = dataclasses.replace(self, seed=int(seed))
        for name in SEEDED:
            if name not in self.pinned_seeds:
                setattr(out, name, dataclasses.replace(getattr(self, name), seed=int(seed)))
        return out

    def to_text(self) -> str:
        """Every key with its value; ``parse_config(to_text())`` round-trips."""
        lines = [f"seed = {self.seed}"]
        for name in SECTIONS:
            section = getattr(self, name)
            for f in dataclasses.fields(section):
                if f.name == "seed" and name not in self.pinned_seeds:
                    continue
                lines.append(f"{name}.{f.name} = {_format_value(getattr(section, f.name))}")
        return "\n".join(lines) + "\n"


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(str(x) for x in v)
    return str(v)


def _parse_value(text: str, default, where: str):
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = [t.strip() for t in text.split(",") if t.strip()]
            if default and isinstance(default[0], int):
                return tuple(int(t) for t in items)
            return tuple(items)
        return text
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {text!r} as {type(default).__name__}") from None


def parse_config(text: str, base_dir: Path | str | None = None, origin: str = "<config>",
                 check_paths: bool = True) -> RunConfig:
    """Parse config text.  Relative ``data.path`` values resolve against ``base_dir``.

    ``check_paths=False`` skips the existence check (used when reading the
    config stored inside a model bundle, whose data file may have moved).
    """
    seed = 0
    values: dict[str, dict] = {name: {} for name in SECTIONS}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{origin}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        seen.add(key)
        if key == "seed":
            seed = _parse_value(value, 0, where)
            continue
        section, _, name = key.partition(".")
        if section not in SECTIONS:
            raise ConfigError(f"{where}: unknown section {section!r} (known: seed, {', '.join(SECTIONS)})")
        defaults = {f.name: f.default for f in dataclasses.fields(SECTIONS[section])}
        if name not in defaults:
            raise ConfigError(f"{where}: unknown key {key!r}")
        values[section][name] = _parse_value(value, defaults[name], where)

    pinned = frozenset(s for s in SEEDED if "seed" in values[s])
    sections = {}
    for name, cls in SECTIONS.items():
        kwargs = values[name]
        if name in SEEDED:
            kwargs.setdefault("seed", seed)
        try:
            sections[name] = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{origin}: invalid [{name}] settings: {exc}") from None

    data = sections["data"]
    if data.path and check_paths:
        path = Path(data.path)
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        if not path.exists():
            raise ConfigError(f"{origin}: data.path {str(path)!r} does not exist")
        data.path = str(path)
    return RunConfig(seed=seed, pinned_seeds=pinned, **sections)


def load_config(source: str | Path | None = None) -> RunConfig:
    """Load a config file; ``None`` or ``"demo"`` gives the built-in demo run."""
    if source is None or str(source) == DEMO:
        return RunConfig()
    path = Path(source)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} not found")
    return parse_config(path.read_text(encoding="utf-8"), path.parent, str(path))
