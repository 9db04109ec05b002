"""Run configuration, loaded from gateway.toml.

Every tunable in the pipeline lives here with its default: provider choice
and model ids, retry/concurrency budgets, sampling and matching thresholds,
extraction dpi, intake minimums, the overlay subset threshold, and extra
filler words for transcript cleanup. A missing file means pure defaults;
unknown sections or keys are rejected rather than ignored so a typo cannot
silently run with defaults.

Parsing prefers the stdlib tomllib; on interpreters without it a small
fallback handles the subset this file actually uses (sections, string /
int / float / bool scalars, flat arrays, comments).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError

try:
    import tomllib
except ImportError:  # Python < 3.11
    tomllib = None

CONFIG_FILENAME = "gateway.toml"


@dataclass(frozen=True)
class GatewayConfig:
    provider: str = "mock"
    base_url: str = ""
    token_env: str = "PARTITUR_API_TOKEN"
    retries: int = 3
    repair_attempts: int = 1
    concurrency: int = 4
    backoff_base: float = 0.25
    models: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class SyncConfig:
    rate_hz: float = 2.0
    min_similarity: float = 0.85
    debounce_frames: int = 3


@dataclass(frozen=True)
class ExtractConfig:
    dpi: int = 300


@dataclass(frozen=True)
class IntakeConfig:
    min_video_width: int = 640
    min_video_height: int = 360


@dataclass(frozen=True)
class CuratorConfig:
    theta_sub: float = 0.90


@dataclass(frozen=True)
class TranscriptConfig:
    extra_fillers: tuple[str, ...] = ()


@dataclass(frozen=True)
class PipelineConfig:
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    sync: SyncConfig = field(default_factory=SyncConfig)
    extract: ExtractConfig = field(default_factory=ExtractConfig)
    intake: IntakeConfig = field(default_factory=IntakeConfig)
    curator: CuratorConfig = field(default_factory=CuratorConfig)
    transcript: TranscriptConfig = field(default_factory=TranscriptConfig)


_SECTIONS = {
    "gateway": GatewayConfig,
    "sync": SyncConfig,
    "extract": ExtractConfig,
    "intake": IntakeConfig,
    "curator": CuratorConfig,
    "transcript": TranscriptConfig,
}


def load_config(path: Path | None) -> PipelineConfig:
    """Build a PipelineConfig from a TOML file, or pure defaults for None."""
    if path is None:
        return PipelineConfig()
    path = Path(path)
    try:
        text = path.read_text("utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if tomllib is not None:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    else:
        data = _parse_toml_subset(text, str(path))
    return config_from_mapping(data, source=str(path))


def config_from_mapping(data: Mapping[str, Any], *, source: str = "config") -> PipelineConfig:
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"{source}: unknown section(s): {', '.join(unknown)}")
    built: dict[str, Any] = {}
    for name, cls in _SECTIONS.items():
        section = data.get(name)
        if section is None:
            built[name] = cls()
            continue
        if not isinstance(section, Mapping):
            raise ConfigError(f"{source}: [{name}] is not a table")
        built[name] = _section_from_mapping(cls, name, section, source)
    return PipelineConfig(**built)


def _section_from_mapping(cls, name: str, section: Mapping[str, Any], source: str):
    spec = {f.name: f.type for f in fields(cls)}
    unknown = sorted(set(section) - set(spec))
    if unknown:
        raise ConfigError(f"{source}: [{name}] has unknown key(s): {', '.join(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, value in section.items():
        kwargs[key] = _coerce(name, key, value, source)
    return cls(**kwargs)


def _coerce(section: str, key: str, value: Any, source: str):
    defaults = _SECTIONS[section]()
    current = getattr(defaults, key)
    if isinstance(current, bool):
        ok = isinstance(value, bool)
    elif isinstance(current, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(current, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(current, str):
        ok = isinstance(value, str)
    elif isinstance(current, tuple):
        ok = isinstance(value, (list, tuple)) and all(isinstance(v, str) for v in value)
        value = tuple(value) if ok else value
    elif isinstance(current, Mapping):
        ok = isinstance(value, Mapping) and all(
            isinstance(k, str) and isinstance(v, str) for k, v in value.items())
        value = dict(value) if ok else value
    else:  # pragma: no cover - every field above is one of these types
        ok = False
    if not ok:
        raise ConfigError(f"{source}: [{section}] {key} has the wrong type")
    return value


def with_mock_gateway(config: PipelineConfig) -> PipelineConfig:
    return replace(config, gateway=replace(config.gateway, provider="mock"))


# -- fallback parser ---------------------------------------------------------

_SECTION_RE = re.compile(r"^\[([A-Za-z0-9_.-]+)\]$")
_KEY_RE = re.compile(r"^([A-Za-z0-9_-]+)\s*=\s*(.+)$")
_STRING_RE = re.compile(r'^"((?:[^"\\]|\\.)*)"$')
_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(?:\d+\.\d*|\.\d+|\d+(?:[eE][+-]?\d+))$")

_ESCAPES = {"\\": "\\", '"': '"', "n": "\n", "t": "\t", "r": "\r"}


def _parse_toml_subset(text: str, source: str) -> dict[str, Any]:
    root: dict[str, Any] = {}
    table = root
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            table = root
            for part in m.group(1).split("."):
                table = table.setdefault(part, {})
                if not isinstance(table, dict):
                    raise ConfigError(f"{source}:{lineno}: section redefines a value")
            continue
        m = _KEY_RE.match(line)
        if not m:
            raise ConfigError(f"{source}:{lineno}: cannot parse line: {raw.strip()!r}")
        key, value = m.group(1), _parse_value(m.group(2).strip(), source, lineno)
        if key in table:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        table[key] = value
    return root


def _strip_comment(line: str) -> str:
    out = []
    in_string = False
    i = 0
    while i < len(line):
        ch = line[i]
        if ch == '"' and (i == 0 or line[i - 1] != "\\"):
            in_string = not in_string
        elif ch == "#" and not in_string:
            break
        out.append(ch)
        i += 1
    return "".join(out)


def _parse_value(token: str, source: str, lineno: int) -> Any:
    if token == "true":
        return True
    if token == "false":
        return False
    if _INT_RE.match(token):
        return int(token)
    if _FLOAT_RE.match(token):
        return float(token)
    m = _STRING_RE.match(token)
    if m:
        return _unescape(m.group(1), source, lineno)
    if token.startswith("[") and token.endswith("]"):
        inner = token[1:-1].strip()
        if not inner:
            return []
        return [_parse_value(part.strip(), source, lineno)
                for part in _split_array(inner, source, lineno)]
    raise ConfigError(f"{source}:{lineno}: unsupported value: {token!r}")


def _split_array(inner: str, source: str, lineno: int) -> list[str]:
    parts = []
    current = []
    in_string = False
    for i, ch in enumerate(inner):
        if ch == '"' and (i == 0 or inner[i - 1] != "\\"):
            in_string = not in_string
        if ch == "," and not in_string:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    if in_string:
        raise ConfigError(f"{source}:{lineno}: unterminated string in array")
    parts.append("".join(current))
    return [p for p in (s.strip() for s in parts) if p]


def _unescape(body: str, source: str, lineno: int) -> str:
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            i += 1
            if i >= len(body) or body[i] not in _ESCAPES:
                raise ConfigError(f"{source}:{lineno}: unsupported string escape")
            out.append(_ESCAPES[body[i]])
        else:
            out.append(ch)
        i += 1
    return "".join(out)
