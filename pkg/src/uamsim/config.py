"""Run configuration: INI-style sections mapped onto the typed config objects.

Grammar: `[section]` headers, `key = value` lines, `#`/`;` comments. Sections
are [env], [world], [ppo], [run]; every key must name a known field. [world]
holds either `world_file = path` or procedural-generation keys, not both.
"""

import configparser
from dataclasses import dataclass, fields

from .env import EnvConfig
from .errors import ConfigError
from .ppo import PpoHyper
from .world import GenConfig

_SECTIONS = ("env", "world", "ppo", "run")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class RunSection:
    seed: int = 0
    out_dir: str = "runs/out"
    checkpoint_every: int = 50
    n_workers: int = 1


@dataclass
class RunConfig:
    env: EnvConfig
    gen: GenConfig
    world_file: str
    ppo: PpoHyper
    run: RunSection


def _convert(raw: str, typ, key: str, section: str):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"invalid {typ.__name__} for '{key}' in [{section}]: {raw!r}")


def _fill(cls, items: dict, section: str):
    known = {f.name: f.type for f in fields(cls)}
    kwargs = {}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError(f"unknown key '{key}' in [{section}]")
        kwargs[key] = _convert(raw, known[key], key, section)
    try:
        return cls(**kwargs)
    except ValueError as e:
        raise ConfigError(f"[{section}]: {e}")


def load_run_config(path) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    with open(path) as f:
        try:
            parser.read_file(f, source=str(path))
        except configparser.Error as e:
            raise ConfigError(f"cannot parse config: {e}")
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")

    env_items = dict(parser.items("env")) if parser.has_section("env") else {}
    ppo_items = dict(parser.items("ppo")) if parser.has_section("ppo") else {}
    run_items = dict(parser.items("run")) if parser.has_section("run") else {}
    world_items = dict(parser.items("world")) if parser.has_section("world") else {}

    world_file = world_items.pop("world_file", None)
    if world_file is not None and world_items:
        raise ConfigError("[world] must set either world_file or generation keys, "
                          f"not both (extra: {sorted(world_items)})")

    return RunConfig(
        env=_fill(EnvConfig, env_items, "env"),
        gen=None if world_file else _fill(GenConfig, world_items, "world"),
        world_file=world_file,
        ppo=_fill(PpoHyper, ppo_items, "ppo"),
        run=_fill(RunSection, run_items, "run"),
    )


def load_env_config(path) -> EnvConfig:
    """Read only the [env] section of a config file (defaults if absent)."""
    return load_run_config(path).env
