"""INI configuration shared by the command-line tools.

Every key has a typed default; files may override any subset, unknown
sections or keys are rejected, and ``--set section.key=value`` flags win
over the file. ``dump`` renders the fully resolved document.
"""

import configparser
import dataclasses
import io

from neurohand.attention import AttentionConfig
from neurohand.errors import InvalidArgument, ParseError
from neurohand.fingertips import HierarchyConfig
from neurohand.grasp import GraspConfig
from neurohand.llm import TrainConfig
from neurohand.psom import InverseConfig

_TRAIN_KEYS = [f.name for f in dataclasses.fields(TrainConfig)]


def _hierarchy_defaults():
    h = HierarchyConfig()
    out = {}
    for f in dataclasses.fields(h):
        value = getattr(h, f.name)
        if isinstance(value, TrainConfig):
            prefix = f.name.split("_")[0]
            for k in _TRAIN_KEYS:
                out[f"{prefix}_{k}"] = getattr(value, k)
        elif f.name != "size":
            out[f.name] = value
    return out


def _dataclass_defaults(cls):
    obj = cls()
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(cls)}


def default_sections():
    return {
        "general": {"seed": 0},
        "data": {"n": 300, "width": 64, "height": 64, "blur": 0.0},
        "hierarchy": _hierarchy_defaults(),
        "psom": {**_dataclass_defaults(InverseConfig), "refine": True},
        "attention": _dataclass_defaults(AttentionConfig),
        "grasp": _dataclass_defaults(GraspConfig),
    }


def _coerce(text, default, where):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ParseError(f"{where}: cannot read {text!r} as {type(default).__name__}") from None
    return text


def _render(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _find_line(text, section, key):
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
            if current == section and not key:
                return lineno
        elif current == section and s.split("=", 1)[0].split(":", 1)[0].strip().lower() == key:
            return lineno
    return None


class Config:
    def __init__(self, sections=None):
        self.sections = sections or default_sections()

    def get(self, section, key):
        return self.sections[section][key]

    def set(self, section, key, text, where="--set"):
        if section not in self.sections:
            raise ParseError(f"{where}: unknown section [{section}]")
        if key not in self.sections[section]:
            raise ParseError(f"{where}: unknown key {key!r} in [{section}]")
        self.sections[section][key] = _coerce(text, self.sections[section][key], where)

    @property
    def seed(self):
        return self.get("general", "seed")

    def hierarchy(self, size=None):
        s = dict(self.sections["hierarchy"])
        trains = {}
        for prefix in ("global", "local"):
            trains[f"{prefix}_train"] = TrainConfig(**{k: s.pop(f"{prefix}_{k}") for k in _TRAIN_KEYS})
        if size is None:
            size = (self.get("data", "width"), self.get("data", "height"))
        return HierarchyConfig(size=tuple(size), **s, **trains)

    def inverse(self):
        s = self.sections["psom"]
        return InverseConfig(s["maxiter"], s["gtol"])

    def attention(self):
        return AttentionConfig(**self.sections["attention"])

    def grasp(self):
        return GraspConfig(**self.sections["grasp"])

    def dump(self):
        parser = configparser.ConfigParser(interpolation=None)
        for name, values in self.sections.items():
            parser[name] = {k: _render(v) for k, v in values.items()}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()


def parse_config(text, source="<config>"):
    cfg = Config()
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ParseError(f"{source}: {exc.message.splitlines()[0]}", line=line) from None
    for section in parser.sections():
        if section not in cfg.sections:
            raise ParseError(f"{source}: unknown section [{section}]", line=_find_line(text, section, ""))
        for key, value in parser[section].items():
            line = _find_line(text, section, key)
            where = f"{source} line {line}" if line else source
            cfg.set(section, key, value, where)
    return cfg


def load_config(path=None, overrides=()):
    """Defaults, then the file at ``path`` (if any), then ``section.key=value`` overrides."""
    if path is None:
        cfg = Config()
    else:
        with open(path, encoding="utf-8") as fh:
            cfg = parse_config(fh.read(), str(path))
    for item in overrides:
        name, sep, value = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot:
            raise InvalidArgument(f"override {item!r} is not of the form section.key=value")
        cfg.set(section, key.strip(), value)
    return cfg
