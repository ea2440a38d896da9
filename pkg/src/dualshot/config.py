"""Line-oriented `key = value` config files with `#` comments.

Values stay strings until a typed getter coerces them; unknown keys are
preserved so config snapshots round-trip into run manifests.
"""

from __future__ import annotations

__all__ = ["Config", "load_config", "parse_config"]


def parse_config(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {ln}: expected `key = value`, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"config line {ln}: empty key in {raw!r}")
        out[key] = value.strip()
    return out


def load_config(path: str) -> "Config":
    with open(path) as f:
        return Config(parse_config(f.read()))


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class Config:
    """Typed view over a flat key/value dict."""

    def __init__(self, values: dict[str, str] | None = None):
        self.values = dict(values or {})

    def get_int(self, key: str, default: int) -> int:
        return int(self.values[key]) if key in self.values else default

    def get_float(self, key: str, default: float) -> float:
        return float(self.values[key]) if key in self.values else default

    def get_bool(self, key: str, default: bool) -> bool:
        if key not in self.values:
            return default
        v = self.values[key].lower()
        if v in _TRUE:
            return True
        if v in _FALSE:
            return False
        raise ValueError(f"config key {key}: expected a boolean, got {self.values[key]!r}")

    def get_ints(self, key: str, default: tuple[int, ...]) -> tuple[int, ...]:
        if key not in self.values:
            return default
        return tuple(int(v) for v in self.values[key].split(",") if v.strip())

    def get_str(self, key: str, default: str) -> str:
        return self.values.get(key, default)
