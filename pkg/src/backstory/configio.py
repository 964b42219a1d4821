"""Flat key=value config files for decode settings.

The format is a line-oriented ``key = value`` file: blank lines and
``#`` comments are skipped, keys must be DecodeConfig field names, and
every field is optional — omitted keys keep their defaults.
"""

from __future__ import annotations

import dataclasses

from .errors import ValidationError
from .soft_decode import DecodeConfig

_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def _parse_lines(text: str, source: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(
                f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ValidationError(
                f"{source}:{lineno}: empty key or value in {raw!r}")
        if key in pairs:
            raise ValidationError(f"{source}:{lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def _coerce(name: str, value: str, target: type):
    try:
        if target is bool:
            word = value.lower()
            if word not in _BOOL_WORDS:
                raise ValueError(value)
            return _BOOL_WORDS[word]
        if target is int:
            return int(value)
        if target is float:
            return float(value)
        return value
    except ValueError:
        raise ValidationError(
            f"config key {name!r} needs a {target.__name__}, got {value!r}"
        ) from None


def parse_decode_config(text: str, source: str = "<config>",
                        base: DecodeConfig | None = None) -> DecodeConfig:
    """Build a DecodeConfig from key=value text, starting from ``base``."""
    types = {"float": float, "int": int, "str": str, "bool": bool,
             float: float, int: int, str: str, bool: bool}
    fields = {f.name: types[f.type] for f in dataclasses.fields(DecodeConfig)}
    pairs = _parse_lines(text, source)
    unknown = sorted(set(pairs) - set(fields))
    if unknown:
        raise ValidationError(
            f"{source}: unknown config keys: {', '.join(unknown)}")
    kwargs = {name: _coerce(name, value, fields[name])
              for name, value in pairs.items()}
    if base is not None:
        return dataclasses.replace(base, **kwargs)
    return DecodeConfig(**kwargs)


def load_decode_config(path, base: DecodeConfig | None = None) -> DecodeConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read config file: {exc}") from exc
    return parse_decode_config(text, source=str(path), base=base)


def save_decode_config(path, cfg: DecodeConfig) -> None:
    lines = [f"{f.name} = {getattr(cfg, f.name)}"
             for f in dataclasses.fields(DecodeConfig)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
