"""INI-style run configuration with ``[solver]`` and ``[synth]`` sections.

Keys are the field names of :class:`~videoderain.solver.SolverConfig` and
:class:`~videoderain.synth.SynthConfig`. Ranges are written as two
comma-separated numbers, e.g. ``streak_angle_range = -10, 10``; ``mu = auto``
selects the noise-based default.
"""

import configparser
import dataclasses
from dataclasses import dataclass, field

from .errors import ConfigError
from .solver import SolverConfig
from .synth import SynthConfig

__all__ = ["RunConfig", "load_config", "parse_config", "dump_config"]

_SECTIONS = {"solver": SolverConfig, "synth": SynthConfig}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class RunConfig:
    solver: SolverConfig = field(default_factory=SolverConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)


def _convert(section, key, raw, default):
    where = f"[{section}] {key}"
    text = raw.strip()
    try:
        if key == "mu":
            return None if text.lower() in ("", "auto", "none") else float(text)
        if isinstance(default, bool):
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            parts = tuple(float(p) for p in text.split(","))
            if len(parts) != len(default):
                raise ValueError(f"expected {len(default)} comma-separated numbers")
            return parts
        return text
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(text, source="<string>"):
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str  # keep key case so typos are reported verbatim
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    built = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]")
    for section, cls in _SECTIONS.items():
        defaults = {f.name: f.default for f in dataclasses.fields(cls)}
        values = {}
        if parser.has_section(section):
            for key, raw in parser.items(section):
                if key not in defaults:
                    raise ConfigError(f"{source}: unknown key '{key}' in [{section}]")
                values[key] = _convert(section, key, raw, defaults[key])
        try:
            built[section] = cls(**values)
        except ValueError as exc:
            raise ConfigError(f"{source}: [{section}] {exc}") from None
    return RunConfig(**built)


def load_config(path):
    """Read a configuration file; a missing ``path`` (``None``) gives all defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None
    return parse_config(text, source=str(path))


def _format(value):
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def dump_config(run):
    """Serialize a :class:`RunConfig` back into the file format."""
    lines = []
    for section in _SECTIONS:
        lines.append(f"[{section}]")
        obj = getattr(run, section)
        for f in dataclasses.fields(obj):
            lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)
