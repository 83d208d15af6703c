"""Canonical ``key = value`` text used by run configs, manifests and checkpoints."""

import os
from typing import Dict, Iterable, Mapping, Tuple, Union

from .exceptions import ConfigError

TRUE_WORDS = ("1", "true", "yes", "on")
FALSE_WORDS = ("0", "false", "no", "off")


def parse_kv_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """
    Parse ``key = value`` lines.

    ``#`` starts a comment, blank lines are skipped, and a key may appear
    only once.

    Parameters
    ----------
    text : str
        Configuration text.
    source : str
        Name used in error messages.

    Returns
    -------
    Dict[str, str]
        Raw values in file order.

    Raises
    ------
    ConfigError
        On a line without ``=``, an empty key or a duplicate key.
    """
    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got {raw!r}")
        if key in values:
            raise ConfigError(f"{source}:{number}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def read_kv_file(path: Union[str, os.PathLike]) -> Dict[str, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_kv_text(fh.read(), os.fspath(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def format_kv_text(values: Mapping[str, object], prefix: str = "") -> str:
    """Render a mapping canonically: sorted keys, one ``key = value`` per line."""
    return "".join(f"{prefix}{key} = {values[key]}\n" for key in sorted(values))


def parse_bool(value: str, key: str = "value") -> bool:
    lowered = value.strip().lower()
    if lowered in TRUE_WORDS:
        return True
    if lowered in FALSE_WORDS:
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def parse_number(value: str, kind, key: str = "value"):
    try:
        return kind(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {value!r}") from exc


def parse_int_list(value: str, key: str = "value") -> Tuple[int, ...]:
    return tuple(parse_number(v.strip(), int, key) for v in value.split(",") if v.strip())


def format_int_list(values: Iterable[int]) -> str:
    return ",".join(str(v) for v in values)


def parse_parts(value: str, key: str = "conv_parts") -> Tuple[Tuple[int, int], ...]:
    """Parse ``"1x64,1x128,2x256"`` into ``((1, 64), (1, 128), (2, 256))``."""
    parts = []
    for item in value.split(","):
        count, sep, channels = item.strip().partition("x")
        if not sep:
            raise ConfigError(f"{key}: expected '<layers>x<channels>', got {item!r}")
        parts.append((parse_number(count, int, key), parse_number(channels, int, key)))
    return tuple(parts)


def format_parts(parts: Iterable[Tuple[int, int]]) -> str:
    return ",".join(f"{count}x{channels}" for count, channels in parts)
