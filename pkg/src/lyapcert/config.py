"""Plain-text run configuration (INI grammar) with strict key validation.

Grammar: ``[section]`` headers followed by ``key = value`` lines; ``#`` and
``;`` start comments.  Every key must appear in :data:`SCHEMA`; values are
typed as float, int, str or comma-separated lists.  ``emit`` writes a
canonical form such that ``parse(emit(cfg)) == cfg``.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field

from .errors import ConfigurationError

COMMANDS = ("certify", "simulate", "discretize", "optimize", "report")

# section -> key -> (type, default); type is one of float, int, str, "floats", "strs"
SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {"command": (str, "certify"), "output": (str, "out")},
    "system": {
        "name": (str, "example42"),
        "p": (float, 0.0),
        "beta": (str, "x"),
        "states": ("strs", ["x1", "x2"]),
        "disturbances": ("strs", ["d1"]),
        "field": ("strs", []),
        "box": ("floats", []),
    },
    "certificate": {
        "kind": (str, "auto"),
        "c1": (float, 2.8594),
        "c2": (float, 2.6094),
        "lambda": (float, 0.9999),
        "mu": (float, -1.0),
        "K1": (float, 0.5),
        "K2": (float, 2.0),
        "V": (str, ""),
        "rho": (float, 1.0),
        "linear": (int, 0),
    },
    "sampling": {
        "density": (int, 10_000),
        "level_min": (float, 1e-4),
        "level_max": (float, 1e4),
        "seed": (int, 0),
        "runs": (int, 100),
        "steps": (int, 10),
        "radius": (float, 10.0),
        "horizon": (float, 10.0),
        "dwell": (float, 1.0),
        "strategy": (str, "vertices"),
    },
    "tolerances": {
        "integrator": (float, 1e-9),
        "delta_strict": (float, 1e-9),
        "eps_region": (float, 1e-12),
    },
    "optimize": {
        "c1_min": (float, 2.5),
        "c1_max": (float, 3.0),
        "c2_min": (float, 2.5),
        "c2_max": (float, 3.0),
        "lambda_min": (float, 0.99),
        "lambda_max": (float, 1.0),
        "resolution": (int, 24),
    },
    "report": {"inputs": ("strs", [])},
}

# positional ``key=value`` shorthands on the command line
ALIASES = {
    "p": ("system", "p"), "beta": ("system", "beta"),
    "c1": ("certificate", "c1"), "c2": ("certificate", "c2"), "lambda": ("certificate", "lambda"),
    "mu": ("certificate", "mu"), "K1": ("certificate", "K1"), "K2": ("certificate", "K2"),
    "seed": ("sampling", "seed"), "runs": ("sampling", "runs"), "steps": ("sampling", "steps"),
    "density": ("sampling", "density"), "tol": ("tolerances", "integrator"),
    "resolution": ("optimize", "resolution"),
}


def _defaults() -> dict:
    return {s: {k: (list(v[1]) if isinstance(v[1], list) else v[1]) for k, v in keys.items()}
            for s, keys in SCHEMA.items()}


@dataclass
class RunConfig:
    values: dict = field(default_factory=_defaults)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, raw, line: int | None = None) -> None:
        if section not in SCHEMA:
            raise ConfigurationError(_anchor(line) + f"unknown section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigurationError(_anchor(line) + f"unknown key {key!r} in [{section}]")
        self.values[section][key] = _convert(SCHEMA[section][key][0], raw, section, key, line)

    def validate(self) -> "RunConfig":
        v = self.values
        if v["run"]["command"] not in COMMANDS:
            raise ConfigurationError(f"unknown command {v['run']['command']!r}")
        for k, val in v["tolerances"].items():
            if not val > 0:
                raise ConfigurationError(f"tolerance {k} must be positive, got {val!r}")
        s = v["sampling"]
        if not (0 < s["level_min"] <= s["level_max"]):
            raise ConfigurationError("level range must satisfy 0 < level_min <= level_max")
        for k in ("density", "runs", "steps"):
            if s[k] < 1:
                raise ConfigurationError(f"sampling {k} must be at least 1")
        for k in ("horizon", "dwell", "radius"):
            if not s[k] > 0:
                raise ConfigurationError(f"sampling {k} must be positive")
        o = v["optimize"]
        for a in ("c1", "c2", "lambda"):
            if not o[a + "_min"] <= o[a + "_max"]:
                raise ConfigurationError(f"empty optimize range for {a}")
        if o["resolution"] < 2:
            raise ConfigurationError("optimize resolution must be at least 2")
        if v["system"]["p"] < 0:
            raise ConfigurationError("p must be nonnegative")
        return self

    def emit(self) -> str:
        lines = []
        for sec, keys in SCHEMA.items():
            lines.append(f"[{sec}]")
            for k, (typ, _) in keys.items():
                lines.append(f"{k} = {_format(typ, self.values[sec][k])}")
            lines.append("")
        return "\n".join(lines)


def _anchor(line):
    return "" if line is None else f"line {line}: "


def _format(typ, val) -> str:
    if typ is float:
        return repr(float(val))
    if typ == "floats":
        return ", ".join(repr(float(x)) for x in val)
    if typ == "strs":
        return "; ".join(val)
    return str(val)


def _convert(typ, raw, section, key, line):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if typ is float:
            return float(raw)
        if typ is int:
            return int(raw)
        if typ == "floats":
            return [float(x) for x in re.split(r"[,\s]+", raw) if x]
        if typ == "strs":
            sep = ";" if ";" in raw else ","
            return [x.strip() for x in raw.split(sep) if x.strip()]
        return raw
    except ValueError:
        raise ConfigurationError(_anchor(line) + f"bad value {raw!r} for {section}.{key}") from None


def _line_index(text: str) -> dict:
    """``(section, key) -> line number`` from a raw scan of the text."""
    out, sec = {}, None
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            sec = m.group(1).strip()
            out.setdefault((sec, None), no)
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and sec is not None:
            out.setdefault((sec, m.group(1).strip()), no)
    return out


def parse(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                   comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigurationError(_anchor(line) + f"malformed config: {exc.message if hasattr(exc, 'message') else exc}") from None
    lines = _line_index(text)
    cfg = RunConfig()
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigurationError(_anchor(lines.get((sec, None))) + f"unknown section [{sec}]")
        for key, raw in cp.items(sec):
            cfg.set(sec, key, raw, lines.get((sec, key)))
    return cfg.validate()


def load(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def apply_overrides(cfg: RunConfig, items) -> RunConfig:
    """Apply ``key=value`` or ``section.key=value`` strings."""
    for item in items:
        if "=" not in item:
            raise ConfigurationError(f"expected key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        if "." in key:
            sec, k = key.split(".", 1)
        elif key in ALIASES:
            sec, k = ALIASES[key]
        else:
            raise ConfigurationError(f"unknown override key {key!r}")
        cfg.set(sec, k, raw)
    return cfg.validate()
