"""Pipeline configuration and its plain-text ``section.key = value`` file format."""

import dataclasses
from dataclasses import dataclass, field

from .clustering import CutPolicy
from .errors import FormatError
from .features import FeatureConfig
from .linefit import SegmentConfig
from .ransac import RansacConfig
from .selection import SelectionConfig

EXPLICIT_SOURCES = ("builtin", "file", "none")
SECTIONS = ("features", "cut", "selection", "segments", "ransac")
# the RANSAC seed always comes from the top-level ``seed``
_SKIP = {("ransac", "seed")}


@dataclass
class PipelineConfig:
    features: FeatureConfig = field(default_factory=FeatureConfig)
    cut: CutPolicy = field(default_factory=CutPolicy)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    segments: SegmentConfig = field(default_factory=SegmentConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    explicit_lines: str = "builtin"
    seed: int = 0

    def validate(self):
        for name in SECTIONS:
            getattr(self, name).validate()
        if self.explicit_lines not in EXPLICIT_SOURCES:
            raise ValueError(f"explicit_lines must be one of {EXPLICIT_SOURCES}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        return self

    def ransac_config(self):
        return dataclasses.replace(self.ransac, seed=self.seed)


def _format_value(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(text):
    t = text.strip()
    low = t.lower()
    if low == "none":
        return None
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def _coerce(current_default, value, key):
    """Match the parsed value to the kind of the default; reject mismatches."""
    if isinstance(current_default, bool):
        if not isinstance(value, bool):
            raise ValueError(f"{key}: expected true/false")
        return value
    if isinstance(current_default, int) and not isinstance(current_default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{key}: expected an integer")
        return value
    if isinstance(current_default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{key}: expected a number")
        return float(value)
    if isinstance(current_default, str) and value is None:
        return "none"
    # str, None-able and mixed fields
    if isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def to_items(cfg):
    """Ordered ``(dotted_key, value)`` pairs covering every setting."""
    items = [("seed", cfg.seed), ("explicit_lines", cfg.explicit_lines)]
    for name in SECTIONS:
        sub = getattr(cfg, name)
        for f in dataclasses.fields(sub):
            if (name, f.name) not in _SKIP:
                items.append((f"{name}.{f.name}", getattr(sub, f.name)))
    return items


def dumps(cfg):
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in to_items(cfg))


def apply(cfg, key, value):
    """Set one dotted key from a parsed value (raises ``KeyError``/``ValueError``)."""
    defaults = PipelineConfig()
    if key in ("seed", "explicit_lines"):
        setattr(cfg, key, _coerce(getattr(defaults, key), value, key))
        return
    section, _, name = key.partition(".")
    if section not in SECTIONS or (section, name) in _SKIP:
        raise KeyError(key)
    sub = getattr(cfg, section)
    if name not in {f.name for f in dataclasses.fields(sub)}:
        raise KeyError(key)
    setattr(sub, name, _coerce(getattr(getattr(defaults, section), name), value, key))


def loads(text, path="<config>"):
    cfg = PipelineConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError("expected 'key = value'", path, lineno)
        key = key.strip()
        try:
            apply(cfg, key, _parse_value(value))
        except KeyError:
            raise FormatError(f"unknown key '{key}'", path, lineno) from None
        except ValueError as exc:
            raise FormatError(str(exc), path, lineno) from None
    try:
        cfg.validate()
    except ValueError as exc:
        raise FormatError(f"invalid configuration: {exc}", path) from None
    return cfg


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), path)


def save(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(cfg))
