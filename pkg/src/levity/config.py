"""Line-based ``key = value`` run configuration files."""

import ast
from dataclasses import fields
from pathlib import Path

from .driver import RunConfig
from .errors import ConfigError, ParameterError

_FIELDS = {f.name: f for f in fields(RunConfig)}
_INTS = {"kmax", "kStart", "kAdapt", "grade", "mesh_elements", "patience"}
_STRINGS = {"case", "out_dir"}
_OPTIONAL = {"h_min", "h_max", "out_dir"}


def _parse_value(key, text):
    if key in _STRINGS:
        return text.strip().strip("\"'")
    if key in _OPTIONAL and text.strip().lower() in ("none", ""):
        return None
    if key == "holes":
        return _parse_holes(text)
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"{key} expects a number, got {text!r}") from None
    if key in _INTS:
        if value != int(value):
            raise ValueError(f"{key} expects an integer, got {text!r}")
        return int(value)
    return value


def _parse_holes(text):
    """``cx cy r; cx cy r`` or a Python-style list of triples."""
    text = text.strip()
    if not text or text.lower() == "none":
        return []
    if text.startswith("["):
        holes = ast.literal_eval(text)
    else:
        holes = [tuple(float(x) for x in part.replace(",", " ").split()) for part in text.split(";") if part.strip()]
    holes = [tuple(float(x) for x in h) for h in holes]
    if any(len(h) != 3 for h in holes):
        raise ValueError("holes must be (cx, cy, r) triples")
    return holes


def parse_config_text(text, source="<config>"):
    """Parse configuration text into a validated :class:`RunConfig`."""
    entries = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: expected 'key = value'", line=number)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{source}: unknown key {key!r}", line=number)
        if key in entries:
            raise ConfigError(f"{source}: duplicate key {key!r}", line=number)
        try:
            entries[key] = (_parse_value(key, value), number)
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(f"{source}: {exc}", line=number) from None

    case, case_line = entries.pop("case", ("CLC", None))
    try:
        base = RunConfig.from_case(case)
    except KeyError as exc:
        raise ConfigError(f"{source}: {exc.args[0]}", line=case_line) from None
    overrides = {k: v for k, (v, _) in entries.items()}
    try:
        return RunConfig.from_case(base.case, **overrides)
    except ParameterError as exc:
        # report the first key that is invalid on its own
        for key, (value, number) in entries.items():
            try:
                RunConfig.from_case(base.case, **{key: value})
            except ParameterError:
                raise ConfigError(f"{source}: {exc}", line=number) from None
        raise ConfigError(f"{source}: {exc}", line=max(n for _, n in entries.values())) from None


def parse_config(path):
    """Read a configuration file; missing keys take the case defaults."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))
