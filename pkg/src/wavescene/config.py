"""Flat key/value configuration documents.

The on-disk form is a human-readable text file of ``key = value`` lines
with ``#`` comments.  Values are typed: integers, floats, booleans
(``true``/``false``), double-quoted strings, and ``[a, b, c]`` lists of
scalars.  Unquoted bare words are read as strings for convenience, so
``scenario = minimal`` and ``scenario = "minimal"`` agree.
"""

from __future__ import annotations

from .errors import ConfigError

Scalar = bool | int | float | str
Value = Scalar | list


def _parse_scalar(token: str, lineno: int) -> Scalar:
    token = token.strip()
    if not token:
        raise ConfigError(f"line {lineno}: empty value")
    if token.startswith('"'):
        if not token.endswith('"') or len(token) < 2:
            raise ConfigError(f"line {lineno}: unterminated string {token!r}")
        return token[1:-1]
    if token == "true":
        return True
    if token == "false":
        return False
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        pass
    if any(c in token for c in "[]{}=,"):
        raise ConfigError(f"line {lineno}: cannot parse value {token!r}")
    return token


def parse_config(text: str) -> dict[str, Value]:
    """Parse a key/value document into a dict, preserving file order."""
    out: dict[str, Value] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or " " in key:
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if value.startswith("["):
            if not value.endswith("]"):
                raise ConfigError(f"line {lineno}: unterminated list {value!r}")
            body = value[1:-1].strip()
            items = [] if not body else [
                _parse_scalar(part, lineno) for part in body.split(",")
            ]
            out[key] = items
        else:
            out[key] = _parse_scalar(value, lineno)
    return out


def _format_scalar(value: Scalar) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(values: dict[str, Value]) -> str:
    """Render a dict back into the document form parse_config accepts."""
    lines = []
    for key, value in values.items():
        if isinstance(value, (list, tuple)):
            body = ", ".join(_format_scalar(v) for v in value)
            lines.append(f"{key} = [{body}]")
        else:
            lines.append(f"{key} = {_format_scalar(value)}")
    return "\n".join(lines) + "\n"


def load_config(path) -> dict[str, Value]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def save_config(values: dict[str, Value], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_config(values))
