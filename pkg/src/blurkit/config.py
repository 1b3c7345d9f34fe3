"""Flat ``key = value`` configuration grammar with bracketed sections.

Example::

    [model]
    scales = 2
    channels = 48,96,192

    [train]
    lr_init = 1e-3

Values stay strings at parse time; ``coerce`` converts on demand. Every
CLI flag maps to one of these keys, and flags override file values.
"""

from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    """Malformed configuration text or value."""


def parse_config(text: str) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current = sections.setdefault("", {})
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = sections.setdefault(line[1:-1].strip(), {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        current[key.strip()] = value.strip()
    return sections


def load_config(path) -> dict[str, dict[str, str]]:
    return parse_config(Path(path).read_text())


def format_config(sections: dict[str, dict[str, str]]) -> str:
    lines = []
    for name in sections:
        body = sections[name]
        if not body:
            continue
        if name:
            lines.append(f"[{name}]")
        for key, value in body.items():
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def coerce(value: str, kind):
    """Convert a config string to ``kind``; lists are comma separated."""
    try:
        if kind is bool:
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        if kind is str:
            return value
        if isinstance(kind, tuple) and kind[0] is list:
            item = kind[1]
            if not value:
                return []
            return [coerce(v.strip(), item) for v in value.split(",")]
    except ValueError as exc:
        raise ConfigError(f"cannot parse {value!r} as {kind}") from exc
    raise ConfigError(f"unsupported config type {kind}")


def get(sections, section: str, key: str, kind, default=None):
    body = sections.get(section, {})
    if key not in body:
        if default is None:
            raise ConfigError(f"missing [{section}] {key}")
        return default
    return coerce(body[key], kind)
