"""
Experiment configuration read from INI files.

Every value has a default, so an empty file is a valid configuration. Unknown
sections or keys are errors, reported with the offending field and line.
See ``configs/example.ini`` for the full list of fields.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .conformal import make_family
from .errors import ConfigError

__all__ = ["ExperimentConfig", "VorticitySpec", "load_config", "parse_config", "parse_vorticity", "VORTICITY_PRESETS"]

# name -> allowed argument counts
VORTICITY_PRESETS = {
    "zero": (0,),
    "constant": (0, 1),
    "patch": (3,),
    "two_patch": (6,),
    "single_vortex": (2,),
}

_CALL = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


@dataclass(frozen=True)
class VorticitySpec:
    """A named initial vorticity with numeric arguments.

    ``patch(c, r, v)`` takes a complex centre; ``two_patch`` takes two such
    triples; ``single_vortex(position, circulation)`` places one particle.
    """

    name: str
    args: tuple

    def text(self) -> str:
        return f"{self.name}({', '.join(repr(a) for a in self.args)})"


def parse_vorticity(text: str) -> VorticitySpec:
    m = _CALL.match(text)
    if not m:
        raise ValueError(f"cannot parse vorticity {text!r}")
    name, body = m.group(1), m.group(2)
    if name not in VORTICITY_PRESETS:
        raise ValueError(f"unknown vorticity preset {name!r}; choose from {sorted(VORTICITY_PRESETS)}")
    args = [] if not body or not body.strip() else [a.strip() for a in body.split(",")]
    if len(args) not in VORTICITY_PRESETS[name]:
        raise ValueError(f"{name} takes {VORTICITY_PRESETS[name]} arguments, got {len(args)}")
    vals = []
    for a in args:
        try:
            v = complex(a.replace(" ", ""))
        except ValueError:
            raise ValueError(f"argument {a!r} is not a number") from None
        vals.append(v.real if v.imag == 0 else v)
    if name == "constant" and not vals:
        vals = [1.0]
    if name == "patch" and not (isinstance(vals[1], float) and vals[1] > 0):
        raise ValueError("patch radius must be a positive real")
    if name == "two_patch" and not all(isinstance(vals[i], float) and vals[i] > 0 for i in (1, 4)):
        raise ValueError("patch radii must be positive reals")
    if name == "single_vortex":
        if abs(vals[0]) >= 1:
            raise ValueError("vortex position must lie inside the unit disc")
        if not isinstance(vals[1], float):
            raise ValueError("circulation must be real")
    return VorticitySpec(name, tuple(vals))


@dataclass(frozen=True)
class ExperimentConfig:
    """All parameters of a run.

    Attributes mirror the INI layout: ``[domain] family``, ``[quadrature]
    n_r n_theta``, ``[flow] dt T vorticity record_every tracers``,
    ``[perturbation] kind eta dt_halving``, ``[checks] pairs levels``,
    ``[output] directory``, ``[run] seed``.
    """

    family: str = "polynomial(0.3, 2)"
    n_r: int = 32
    n_theta: int = 32
    dt: float = 2e-3
    T: float = 0.5
    vorticity: VorticitySpec = field(default_factory=lambda: parse_vorticity("patch(0.3, 0.2, 1.0)"))
    record_interval: float = 0.01
    tracers: int = 100
    perturbation: str = "jitter"
    eta: tuple = (1e-8, 1e-6, 1e-4)
    dt_halving: bool = True
    pairs: int = 10_000
    levels: int = 4
    output: str = "out"
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["vorticity"] = self.vorticity.text()
        d["eta"] = list(self.eta)
        return d

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form."""
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


def _positive_int(s):
    v = int(s)
    if v <= 0:
        raise ValueError("must be a positive integer")
    return v


def _positive_float(s):
    v = float(s)
    if not v > 0:
        raise ValueError("must be positive")
    return v


def _nonneg_int(s):
    v = int(s)
    if v < 0:
        raise ValueError("must be nonnegative")
    return v


def _family(s):
    # Validates name and parameters; univalence is checked when the map is used.
    make_family(s, check=False)
    return s.strip()


def _kind(s):
    s = s.strip()
    if s not in ("jitter", "resolution"):
        raise ValueError("must be 'jitter' or 'resolution'")
    return s


def _etas(s):
    vals = tuple(float(v) for v in s.replace(",", " ").split())
    if not vals or any(v < 0 for v in vals):
        raise ValueError("must be a list of nonnegative numbers")
    return vals


def _bool(s):
    low = s.strip().lower()
    if low in ("1", "yes", "true", "on"):
        return True
    if low in ("0", "no", "false", "off"):
        return False
    raise ValueError("must be true or false")


def _text(s):
    s = s.strip()
    if not s:
        raise ValueError("must not be empty")
    return s


# section -> key -> (attribute, converter)
_FIELDS = {
    "domain": {"family": ("family", _family)},
    "quadrature": {"n_r": ("n_r", _positive_int), "n_theta": ("n_theta", _positive_int)},
    "flow": {
        "dt": ("dt", _positive_float),
        "t": ("T", _positive_float),
        "vorticity": ("vorticity", parse_vorticity),
        "record_interval": ("record_interval", _positive_float),
        "tracers": ("tracers", _nonneg_int),
    },
    "perturbation": {"kind": ("perturbation", _kind), "eta": ("eta", _etas), "dt_halving": ("dt_halving", _bool)},
    "checks": {"pairs": ("pairs", _positive_int), "levels": ("levels", _positive_int)},
    "output": {"directory": ("output", _text)},
    "run": {"seed": ("seed", _nonneg_int)},
}


def _line_numbers(text: str) -> dict:
    """Map ``(section, key)`` and ``(section, None)`` to 1-based lines."""
    out = {}
    section = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            out.setdefault((section, None), i)
        elif section is not None and re.search(r"[=:]", line):
            key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
            out.setdefault((section, key), i)
    return out


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse INI text into an :class:`ExperimentConfig`.

    Raises
    ------
    ConfigError
        With the field name and line of the first problem.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any section", field=None, line=exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError("duplicate key", field=f"{exc.section}.{exc.option}", line=exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError("duplicate section", field=exc.section, line=exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", field=None, line=line) from None
    lines = _line_numbers(text)
    values = {}
    for section in parser.sections():
        sec = section.lower()
        if sec not in _FIELDS:
            raise ConfigError(f"unknown section; expected one of {sorted(_FIELDS)}", field=section, line=lines.get((sec, None)))
        for key, raw in parser.items(section):
            where = f"{sec}.{key}"
            if key not in _FIELDS[sec]:
                raise ConfigError(
                    f"unknown key; expected one of {sorted(_FIELDS[sec])}", field=where, line=lines.get((sec, key))
                )
            attr, conv = _FIELDS[sec][key]
            try:
                values[attr] = conv(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value {raw!r}: {exc}", field=where, line=lines.get((sec, key))) from None
    cfg = ExperimentConfig(**values)
    steps = cfg.T / cfg.dt
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
        raise ConfigError("T must be an integer multiple of dt", field="flow.t", line=lines.get(("flow", "t")))
    ratio = cfg.record_interval / cfg.dt
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ConfigError(
            "record_interval must be a positive multiple of dt",
            field="flow.record_interval",
            line=lines.get(("flow", "record_interval")),
        )
    return cfg


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Read a config file; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc.strerror}", field=None, line=None) from None
    return parse_config(text, source=str(p))
