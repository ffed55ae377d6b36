"""Flat ``key=value`` configuration files.

One setting per line; blank lines and lines starting with ``#`` are ignored.
Keys may be dotted (``gacn.iterations=500``). Values are kept as strings and
converted by the consumer with :func:`coerce`.
"""

import math
from dataclasses import fields, is_dataclass, replace

from .exceptions import ConfigError


def parse_kv(text, source="<config>"):
    out = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}: line {line_no}: expected key=value, got {raw!r}")
        if key in out:
            raise ConfigError(f"{source}: line {line_no}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def read_kv(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_kv(text, str(path))


def format_kv(settings):
    """Inverse of :func:`parse_kv` for already-stringified values."""
    return "".join(f"{k}={v}\n" for k, v in settings.items())


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _float(text):
    low = text.lower()
    if low in ("inf", "infinity"):
        return math.inf
    return float(text)


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _strs(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _optional_int(text):
    return None if text.lower() in ("", "none", "auto") else int(text)


CONVERTERS = {
    int: int, float: _float, bool: _bool, str: str, "ints": _ints, "strs": _strs,
    "optional_int": _optional_int,
}


def coerce(key, value, kind):
    """Convert the string ``value`` of ``key`` to ``kind`` (a type or converter tag)."""
    if not isinstance(value, str):
        return value
    try:
        return CONVERTERS[kind](value)
    except (ValueError, KeyError):
        name = kind if isinstance(kind, str) else kind.__name__
        raise ConfigError(f"{key}: cannot read {value!r} as {name}") from None


def _optional_str(text):
    return None if text.lower() in ("", "none") else text


def _optional_float(text):
    return None if text.lower() in ("", "none") else _float(text)


CONVERTERS["optional_str"] = _optional_str
CONVERTERS["optional_float"] = _optional_float


def kind_for(f):
    """Converter tag for a dataclass field."""
    if f.type is tuple:
        return "ints"
    if f.type is int and f.default is None:
        return "optional_int"
    if f.type is str and f.default is None:
        return "optional_str"
    if f.type is object:
        return int
    return f.type


def dataclass_keys(cls, prefix=""):
    return [prefix + f.name for f in fields(cls) if not is_dataclass(f.type)]


def build_dataclass(cls, settings, prefix="", base=None, **overrides):
    """Instantiate ``cls`` from string ``settings`` under ``prefix``.

    Only keys present in ``settings`` change the fields of ``base``
    (default: ``cls()``); keyword ``overrides`` win over both.
    """
    base = base if base is not None else cls()
    updates = {}
    for f in fields(cls):
        key = prefix + f.name
        if key in settings and not is_dataclass(f.type):
            updates[f.name] = coerce(key, settings[key], kind_for(f))
    updates.update(overrides)
    return replace(base, **updates)
