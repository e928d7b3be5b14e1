"""Configuration file loading.

The file is INI-style::

    [run]
    corpus = corpus.jsonl
    samples_per_report = 5
    workers = 4

    [provider]
    kind = http-chat
    endpoint = https://api.example.com/v1/chat/completions
    model = gpt-3.5-turbo
    token_env = BUGREPRO_API_TOKEN

    [provider.params]
    temperature = 0.7

    [adapter]
    kind = defects4j
    timeout = 1800

Relative paths are resolved against the config file's directory. Values in
``[provider.params]`` are parsed as JSON when possible. API tokens are only
ever read from the environment.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import DEFAULT_INSTRUCTION, DEFAULT_SAMPLES
from .errors import ConfigError
from .generation import ProviderConfig
from .harness import AdapterSpec

_PATH_KEYS = {
    "run": ("corpus", "projects", "work_dir"),
    "provider": ("replay_dir", "record_dir"),
    "adapter": ("script",),
}
_SECRET_HINTS = ("token", "api_key", "apikey", "secret", "password")


@dataclass
class Config:
    provider: ProviderConfig
    adapter: AdapterSpec
    corpus: str | None = None
    projects: str | None = None
    samples_per_report: int = DEFAULT_SAMPLES
    workers: int = 1
    instruction: str = DEFAULT_INSTRUCTION
    include_title: bool = True
    work_dir: str | None = None
    keep_workspaces: bool = False

    def __post_init__(self):
        if self.samples_per_report < 1:
            raise ConfigError("samples_per_report must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.instruction:
            raise ConfigError("instruction must be non-empty")
        self.provider.samples_per_report = self.samples_per_report

    def snapshot(self) -> dict:
        return asdict(self)

    @classmethod
    def from_snapshot(cls, snap: dict) -> Config:
        snap = dict(snap)
        provider = ProviderConfig(**snap.pop("provider"))
        adapter = AdapterSpec(**snap.pop("adapter"))
        return cls(provider=provider, adapter=adapter, **snap)


def _coerce(value: str, typ):
    if typ is bool or typ == "bool":
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if typ in (int, "int"):
        return int(value)
    if typ in (float, "float"):
        return float(value)
    return value


def _typed(cls, name):
    for f in fields(cls):
        if f.name == name:
            t = f.type if isinstance(f.type, str) else f.type.__name__
            return t.split("|")[0].strip()
    raise ConfigError(f"unknown setting {cls.__name__}.{name}")


def _text(value: str) -> str:
    # JSON-quoted strings keep surrounding whitespace (INI strips it)
    v = value.strip()
    if len(v) >= 2 and v[0] == v[-1] == '"':
        return json.loads(v)
    return v


def _section(parser, name, cls, base: Path) -> dict:
    out = {}
    if not parser.has_section(name):
        return out
    for key, raw in parser.items(name):
        if any(h in key for h in _SECRET_HINTS) and key != "token_env":
            raise ConfigError(f"secrets must come from the environment, not [{name}] {key}")
        typ = _typed(cls, key)
        value = _coerce(_text(raw), typ) if typ in ("int", "float", "bool") else _text(raw)
        if key in _PATH_KEYS.get(name, ()) and value:
            value = str((base / value).resolve())
        out[key] = value
    return out


def load_config(path: str | Path | None = None, **overrides) -> Config:
    """Read a config file (optional) and apply non-None keyword overrides."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        base = path.parent.resolve()
    unknown = set(parser.sections()) - {"run", "provider", "provider.params", "adapter"}
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    try:
        run = _section(parser, "run", Config, base)
        prov = _section(parser, "provider", ProviderConfig, base)
        adap = _section(parser, "adapter", AdapterSpec, base)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    params = {}
    if parser.has_section("provider.params"):
        for key, raw in parser.items("provider.params"):
            try:
                params[key] = json.loads(raw)
            except json.JSONDecodeError:
                params[key] = raw
    prov["params"] = params
    for k, v in overrides.items():
        if v is None:
            continue
        if k in ("corpus", "projects", "work_dir"):
            v = str(Path(v).resolve())
        run[k] = v
    try:
        return Config(provider=ProviderConfig(**prov), adapter=AdapterSpec(**adap), **run)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
