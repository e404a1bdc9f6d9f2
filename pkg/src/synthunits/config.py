"""Contains the sectioned key-value pipeline config.

A config file has a `[pipeline]` section and one section per stage:

    [pipeline]
    stages = dpdp, dedup, metrics
    manifest = corpus/manifest.jsonl
    features = corpus/features
    output_dir = out
    seed = 13
    threads = 1

    [dpdp]
    codebook = codebook.kmcb
    lambda = 1.0

Relative paths resolve against the config file's directory. Every
seed is explicit: a config without `seed` is rejected.
"""
import configparser
from dataclasses import dataclass, field
import logging
import math
import os
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

from synthunits.errors import ConfigError


logger = logging.getLogger(__name__)

PIPELINE_SECTION = 'pipeline'
STAGE_ORDER = ('fit', 'assign', 'dpdp', 'dedup', 'metrics', 'f0', 'targets',
               'augment', 'compose')
PathLike = Union[str, 'os.PathLike[str]']


def parse_range(text: str, what: str = 'range') -> Tuple[float, float]:
    """Parses "low:high" into a (low, high) float pair."""
    parts = text.split(':')
    if len(parts) != 2:
        raise ConfigError(f"{what} must look like 'low:high', got {text!r}.")
    try:
        low, high = float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise ConfigError(f"{what} bounds must be numbers, got "
                          f"{text!r}.") from exc
    if not low <= high:
        raise ConfigError(f"{what} low bound exceeds high bound: {text!r}.")
    return low, high


@dataclass(frozen=True)
class StageConfig:
    """One stage's parameters, as raw strings plus typed getters.

    Attributes:
        name: The stage name; one of STAGE_ORDER.
        params: The raw key-value pairs from the stage's section.
        base_dir: The directory relative paths resolve against.
        seed: The stage's seed; its own `seed` key, else the
            pipeline seed.
    """

    name: str
    params: Mapping[str, str] = field(default_factory=dict)
    base_dir: Path = Path('.')
    seed: int = 0

    def has(self, key: str) -> bool:
        """True if the key is set for this stage."""
        return key in self.params

    def get(self, key: str, default: Optional[str] = None) -> str:
        """Returns a raw string value.

        Raises:
            ConfigError: If the key is unset and there's no default.
        """
        if key in self.params:
            return self.params[key]
        if default is None:
            raise ConfigError(f"[{self.name}] is missing {key!r}.")
        return default

    def get_int(self, key: str, default: Optional[int] = None) -> int:
        """Returns an int value."""
        raw = self.get(key, None if default is None else str(default))
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"[{self.name}] {key} must be an integer, "
                              f"got {raw!r}.") from exc

    def get_float(self, key: str, default: Optional[float] = None) -> float:
        """Returns a float value; 'inf' is accepted."""
        raw = self.get(key, None if default is None else repr(default))
        try:
            value = float(raw)
        except ValueError as exc:
            raise ConfigError(f"[{self.name}] {key} must be a number, got "
                              f"{raw!r}.") from exc
        if math.isnan(value):
            raise ConfigError(f"[{self.name}] {key} must not be NaN.")
        return value

    def get_range(self, key: str,
                  default: Optional[Tuple[float, float]] = None
                  ) -> Tuple[float, float]:
        """Returns a "low:high" value as a float pair."""
        if key not in self.params and default is not None:
            return default
        return parse_range(self.get(key), f'[{self.name}] {key}')

    def get_path(self, key: str, default: Optional[PathLike] = None
                 ) -> Path:
        """Returns a path resolved against `base_dir`.

        Existence isn't checked here; stages check at start.
        """
        raw = self.params.get(key)
        if raw is None:
            if default is None:
                raise ConfigError(f"[{self.name}] is missing {key!r}.")
            return Path(default)
        path = Path(raw)
        return path if path.is_absolute() else self.base_dir / path


@dataclass(frozen=True)
class PipelineConfig:
    """A parsed pipeline config.

    Attributes:
        stages: StageConfig objects in execution order.
        settings: The `[pipeline]` section, as a StageConfig named
            'pipeline' (for manifest, features, etc.).
        output_dir: Where stage outputs are written.
        threads: The worker cap for within-stage parallelism.
        seed: The pipeline seed.
    """

    stages: Tuple[StageConfig, ...]
    settings: StageConfig
    output_dir: Path
    threads: int = 1
    seed: int = 0

    @property
    def stage_names(self) -> Tuple[str, ...]:
        """The names of the configured stages, in order."""
        return tuple(stage.name for stage in self.stages)

    def stage(self, name: str) -> Optional[StageConfig]:
        """Returns the named stage's config, or None."""
        for stage in self.stages:
            if stage.name == name:
                return stage
        return None


def _split_names(raw: str) -> Tuple[str, ...]:
    return tuple(n for n in raw.replace(',', ' ').split() if n)


def parse_config(text: str, base_dir: PathLike = '.',
                 threads: Optional[int] = None) -> PipelineConfig:
    """Parses config text.

    Args:
        text: The INI-style config text.
        base_dir: (Optional.) The directory relative paths resolve
            against. Default is the working directory.
        threads: (Optional.) Overrides `[pipeline] threads`.

    Raises:
        ConfigError: For malformed text, unknown or out-of-order
            stages, or a missing seed.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"Malformed config: {exc}") from exc
    if not parser.has_section(PIPELINE_SECTION):
        raise ConfigError(f"Config needs a [{PIPELINE_SECTION}] section.")
    base = Path(base_dir)
    raw = dict(parser.items(PIPELINE_SECTION))
    settings = StageConfig(PIPELINE_SECTION, raw, base)
    if 'seed' not in raw:
        raise ConfigError("[pipeline] needs an explicit 'seed'.")
    seed = settings.get_int('seed')
    names = _split_names(raw.get('stages', ''))
    for name in names:
        if name not in STAGE_ORDER:
            raise ConfigError(f"Unknown stage {name!r}; stages are "
                              f"{', '.join(STAGE_ORDER)}.")
    if len(set(names)) != len(names):
        raise ConfigError(f"Stages are listed more than once: {names}.")
    order = [STAGE_ORDER.index(name) for name in names]
    if order != sorted(order):
        raise ConfigError(
            f"Stages {', '.join(names)} are out of order; they must follow "
            f"{', '.join(STAGE_ORDER)}."
        )
    for section in parser.sections():
        if section != PIPELINE_SECTION and section not in names:
            logger.warning('Config section [%s] is not a listed stage; '
                           'ignoring it.', section)
    stages = []
    for name in names:
        params: Dict[str, str] = dict(parser.items(name)) \
            if parser.has_section(name) else {}
        stage = StageConfig(name, params, base, seed)
        if 'seed' in params:
            stage = StageConfig(name, params, base, stage.get_int('seed'))
        stages.append(stage)
    thread_count = threads if threads is not None \
        else settings.get_int('threads', 1)
    if thread_count < 1:
        raise ConfigError(f"threads must be >= 1, got {thread_count}.")
    return PipelineConfig(
        stages=tuple(stages),
        settings=settings,
        output_dir=settings.get_path('output_dir', base / 'output'),
        threads=thread_count,
        seed=seed,
    )


def load_config(path: PathLike, threads: Optional[int] = None
                ) -> PipelineConfig:
    """Loads a config file; relative paths resolve against its dir."""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise ConfigError(f"Cannot read config {path}: {exc}") from exc
    return parse_config(text, path.parent, threads)
