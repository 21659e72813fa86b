"""``key = value`` text config files (one pair per line, ``#`` comments)."""

from .errors import InvalidSpec


def parse_kv(text):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise InvalidSpec(f"line {lineno}: expected 'key = value', got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def format_kv(pairs):
    """Inverse of :func:`parse_kv` for a mapping or a sequence of pairs."""
    items = pairs.items() if hasattr(pairs, "items") else pairs
    return "".join(f"{k} = {v}\n" for k, v in items)
