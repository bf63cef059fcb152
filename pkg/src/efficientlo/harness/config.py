"""INI config files covering every network, synthetic-data, augmentation and training field.

Nested dataclasses become their own sections (``network.levels.0``,
``network.initial_cv``, ...). Values are Python literals.
"""
from __future__ import annotations

import ast
import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ParseError
from ..geometry import AugmentConfig
from ..odometry import NetworkConfig, toy_config
from .bench import BenchConfig
from .synth import SynthConfig
from .train import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    network: NetworkConfig = field(default_factory=toy_config)
    synth: SynthConfig = field(default_factory=SynthConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    data: dict = field(default_factory=lambda: {"source": "synthetic", "pairs": 8, "sequence_dir": "",
                                                "half_side": 15.0, "calib": ""})


def _flatten(obj, prefix: str, out: dict) -> None:
    own = out[prefix] = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if dataclasses.is_dataclass(v):
            _flatten(v, f"{prefix}.{f.name}", out)
        elif isinstance(v, tuple) and v and dataclasses.is_dataclass(v[0]):
            own[f.name + "_count"] = len(v)
            for i, item in enumerate(v):
                _flatten(item, f"{prefix}.{f.name}.{i}", out)
        else:
            own[f.name] = v


def to_sections(cfg: RunConfig) -> dict:
    out: dict = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, dict):
            out[f.name] = dict(v)
        else:
            _flatten(v, f.name, out)
    return out


def _fmt(v) -> str:
    if isinstance(v, float) and v == float("inf"):
        return "inf"
    return repr(v)


def dumps(cfg: RunConfig) -> str:
    lines = []
    for name, values in to_sections(cfg).items():
        if not values:
            continue
        lines.append(f"[{name}]")
        lines += [f"{k} = {_fmt(v)}" for k, v in values.items()]
        lines.append("")
    return "\n".join(lines)


def _parse_value(raw: str, where: str):
    raw = raw.strip()
    if raw in ("inf", "+inf"):
        return float("inf")
    if raw == "-inf":
        return float("-inf")
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        raise ParseError(f"{where}: cannot parse value {raw!r}") from None


def _build(cls, default, sections: dict, prefix: str, used: set):
    values = sections.get(prefix, {})
    used.add(prefix)
    kwargs = {}
    for f in dataclasses.fields(cls):
        cur = getattr(default, f.name)
        if dataclasses.is_dataclass(cur):
            kwargs[f.name] = _build(type(cur), cur, sections, f"{prefix}.{f.name}", used)
        elif isinstance(cur, tuple) and cur and dataclasses.is_dataclass(cur[0]):
            n = values.get(f.name + "_count", len(cur))
            items = []
            for i in range(n):
                base = cur[min(i, len(cur) - 1)]
                items.append(_build(type(base), base, sections, f"{prefix}.{f.name}.{i}", used))
            kwargs[f.name] = tuple(items)
        elif f.name in values:
            v = values[f.name]
            kwargs[f.name] = tuple(v) if isinstance(cur, tuple) and isinstance(v, list) else v
    known = {f.name for f in dataclasses.fields(cls)}
    known |= {f.name + "_count" for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ParseError(f"[{prefix}]: unknown keys {sorted(unknown)}")
    try:
        return dataclasses.replace(default, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"[{prefix}]: {exc}") from None


def loads(text: str, base: RunConfig | None = None, source: str = "<config>") -> RunConfig:
    """Parse INI text; fields not mentioned keep the values of ``base`` (defaults)."""
    base = base or RunConfig()
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ParseError(str(exc), getattr(exc, "lineno", None), source) from None
    sections = {
        s: {k: _parse_value(v, f"{source} [{s}] {k}") for k, v in parser.items(s)}
        for s in parser.sections()
    }
    used: set = set()
    kwargs = {}
    for f in dataclasses.fields(RunConfig):
        cur = getattr(base, f.name)
        if isinstance(cur, dict):
            used.add(f.name)
            extra = set(sections.get(f.name, {})) - set(cur)
            if extra:
                raise ParseError(f"[{f.name}]: unknown keys {sorted(extra)}")
            kwargs[f.name] = {**cur, **sections.get(f.name, {})}
        else:
            kwargs[f.name] = _build(type(cur), cur, sections, f.name, used)
    stray = set(sections) - used
    if stray:
        raise ParseError(f"unknown sections {sorted(stray)}", None, source)
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    return loads(Path(path).read_text(), source=str(path))


def save_config(path, cfg: RunConfig) -> None:
    Path(path).write_text(dumps(cfg))
