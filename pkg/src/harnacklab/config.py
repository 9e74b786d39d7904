"""Experiment configuration: a YAML file with a fixed schema and full defaults.

Every schema violation is reported with the line number of the offending
node. Command-line overrides use dotted keys (``bhi.rho=0.3``) and go
through the same validation.
"""

from __future__ import annotations

import copy
from pathlib import Path

import yaml

from . import domains
from .errors import ConfigError

_num = (int, float)


def _opt(t):
    return (type(None),) + (t if isinstance(t, tuple) else (t,))


# section -> key -> (accepted types, default)
SCHEMA = {
    "grid": {"dim": (int, 2), "n": (int, 129)},
    "domain": {
        "builtin": (_opt(str), "halfspace"),
        "params": (dict, {}),
        "file": (_opt(str), None),
        "design": (_opt(str), None),
        "Lambda": (_num, 1.0),
    },
    "thresholds": {
        "L_max": (_num, 10.0),
        "kappa_min": (_num, 0.05),
        "c_tol": (_num, 1e-3),
        "mu_min": (_num, 0.1),
        "Lambda_max": (_num, 5.0),
        "eta_min": (_num, 0.1),
    },
    "solver": {"tol": (_num, 1e-8), "method": (str, "amg"), "max_sweeps": (int, 200000)},
    "data": {"u": (dict, {"kind": "random", "seed": 1}), "v": (dict, {"kind": "random", "seed": 2})},
    "chains": {
        "delta": (_num, 0.1),
        "sigma_min": (_num, 0.05),
        "H_cfg": (_opt(_num), None),
        "seeds": (int, 50),
        "fields": (int, 10),
        "R": (_num, 0.8),
        "tau": (_num, 0.25),
    },
    "bhi": {
        "delta": (_num, 0.1),
        "R": (_num, 0.8),
        "rho": (_num, 0.25),
        "floor": (_num, 1e-3),
        "r0": (_num, 0.5),
        "levels": (_opt(int), None),
        "center": (_opt(list), None),
        "P": (_opt(list), None),
        "C_max": (_num, 16.0),
    },
    "acf": {
        "pair": (str, "halfplane"),
        "level": (_num, 0.05),
        "seeds": (list, [[0.0, 0.5], [0.0, -0.5]]),
        "radii": (_opt(list), None),
        "tol": (_num, 0.02),
    },
    "report": {"n": (int, 129), "designs": (_opt(list), None), "builtins": (list, ["halfspace"])},
    "output": (str, "harnacklab-out"),
    "seed": (int, 0),
}

# data kinds for u and v: kind -> (required keys, optional keys)
DATA_KINDS = {
    "random": (set(), {"seed"}),
    "linear": (set(), {"tilt"}),
    "component": ({"point"}, set()),
    "file": ({"path"}, set()),
}


def _check_data(entry: dict, where: str, line):
    kind = entry.get("kind")
    if kind not in DATA_KINDS:
        raise ConfigError(f"{_at(line)}{where}.kind must be one of {sorted(DATA_KINDS)}, got {kind!r}")
    need, extra = DATA_KINDS[kind]
    keys = set(entry) - {"kind"}
    if need - keys:
        raise ConfigError(f"{_at(line)}{where}: kind {kind!r} needs {sorted(need - keys)}")
    if keys - need - extra:
        raise ConfigError(f"{_at(line)}{where}: unknown keys {sorted(keys - need - extra)} for kind {kind!r}")
    if "seed" in entry and (not isinstance(entry["seed"], int) or isinstance(entry["seed"], bool)):
        raise ConfigError(f"{_at(line)}{where}.seed must be an integer")
    if "tilt" in entry and not isinstance(entry["tilt"], _num):
        raise ConfigError(f"{_at(line)}{where}.tilt must be a number")
    if "point" in entry:
        _check_point(entry["point"], f"{where}.point", line)
    if "path" in entry and not isinstance(entry["path"], str):
        raise ConfigError(f"{_at(line)}{where}.path must be a string")


def _check_point(p, where, line):
    if not isinstance(p, list) or not all(isinstance(c, _num) and not isinstance(c, bool) for c in p):
        raise ConfigError(f"{_at(line)}{where} must be a list of numbers")


RANGES = {
    ("domain", "builtin"): lambda v: v in domains.BUILTINS,
    ("grid", "dim"): lambda v: v in (2, 3),
    ("grid", "n"): lambda v: v >= 9 and v % 2 == 1,
    ("solver", "tol"): lambda v: v > 0,
    ("solver", "method"): lambda v: v in ("amg", "sor", "dense"),
    ("domain", "Lambda"): lambda v: v > 0,
    ("chains", "delta"): lambda v: 0 < v < 1,
    ("chains", "sigma_min"): lambda v: v > 0,
    ("chains", "tau"): lambda v: 0 < v < 1,
    ("chains", "R"): lambda v: 0 < v <= 1,
    ("bhi", "rho"): lambda v: 0 < v < 1,
    ("bhi", "R"): lambda v: 0 < v <= 1,
    ("bhi", "floor"): lambda v: 0 <= v < 1,
    ("bhi", "r0"): lambda v: 0 < v < 1,
    ("acf", "pair"): lambda v: v in ("halfplane", "sector", "domain"),
    ("report", "n"): lambda v: v >= 9 and v % 2 == 1,
}


def defaults() -> dict:
    out = {}
    for key, entry in SCHEMA.items():
        if isinstance(entry, dict):
            out[key] = {k: copy.deepcopy(d) for k, (_, d) in entry.items()}
        else:
            out[key] = copy.deepcopy(entry[1])
    return out


def _line(node) -> int:
    return node.start_mark.line + 1


def _check(types, value, where: str, line: int | None):
    # YAML bools are ints in Python; never accept them for numeric keys
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"{_at(line)}{where}: expected {_names(types)}, got a boolean")
    if not isinstance(value, types):
        raise ConfigError(f"{_at(line)}{where}: expected {_names(types)}, got {type(value).__name__}")


def _at(line):
    return f"line {line}: " if line is not None else ""


def _names(types) -> str:
    ts = types if isinstance(types, tuple) else (types,)
    return " or ".join("null" if t is type(None) else t.__name__ for t in ts)


def _apply(cfg: dict, section: str, key: str | None, value, line: int | None):
    if section not in SCHEMA:
        raise ConfigError(f"{_at(line)}unknown section {section!r}")
    entry = SCHEMA[section]
    if key is None:
        if isinstance(entry, dict):
            raise ConfigError(f"{_at(line)}section {section!r} must be a mapping")
        _check(entry[0], value, section, line)
        cfg[section] = value
        return
    if not isinstance(entry, dict):
        raise ConfigError(f"{_at(line)}{section!r} is not a section")
    if key not in entry:
        raise ConfigError(f"{_at(line)}unknown key {section}.{key}")
    types = entry[key][0]
    if float in (types if isinstance(types, tuple) else (types,)) and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    _check(types, value, f"{section}.{key}", line)
    rule = RANGES.get((section, key))
    if rule is not None and value is not None and not rule(value):
        raise ConfigError(f"{_at(line)}{section}.{key} = {value!r} is out of range")
    if section == "data":
        _check_data(value, f"data.{key}", line)
    elif (section, key) in (("bhi", "center"), ("bhi", "P")) and value is not None:
        _check_point(value, f"{section}.{key}", line)
    elif (section, key) == ("acf", "seeds"):
        for p in value:
            _check_point(p, "acf.seeds entry", line)
    elif (section, key) == ("acf", "radii") and value is not None:
        _check_point(value, "acf.radii", line)
    cfg[section][key] = value


def _value(node):
    return yaml.safe_load(yaml.serialize(node))


def loads(text: str, base_dir: Path | None = None) -> dict:
    """Parse and validate YAML text; missing keys take their defaults."""
    cfg = defaults()
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"{_at(line)}malformed YAML: {getattr(exc, 'problem', exc)}") from None
    if root is None:
        return _finish(cfg, base_dir)
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError(f"{_at(_line(root))}top level must be a mapping")
    for knode, vnode in root.value:
        section = knode.value
        if isinstance(SCHEMA.get(section), dict):
            if not isinstance(vnode, yaml.MappingNode):
                raise ConfigError(f"{_at(_line(vnode))}section {section!r} must be a mapping")
            for k2, v2 in vnode.value:
                _apply(cfg, section, k2.value, _value(v2), _line(k2))
        else:
            _apply(cfg, section, None, _value(vnode), _line(knode))
    return _finish(cfg, base_dir)


def _resolve(path: str, base_dir: Path | None, where: str) -> str:
    p = Path(path)
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    if not p.exists():
        raise ConfigError(f"{where} {path!r} does not exist")
    return str(p)


def _finish(cfg: dict, base_dir: Path | None) -> dict:
    if cfg["domain"]["file"] is not None:
        cfg["domain"]["file"] = _resolve(cfg["domain"]["file"], base_dir, "domain.file")
    for key in ("u", "v"):
        entry = cfg["data"][key]
        if entry["kind"] == "file":
            entry["path"] = _resolve(entry["path"], base_dir, f"data.{key}.path")
    dim = cfg["grid"]["dim"]
    for where, p in (("bhi.center", cfg["bhi"]["center"]), ("bhi.P", cfg["bhi"]["P"])):
        if p is not None and len(p) != dim:
            raise ConfigError(f"{where} must have {dim} coordinates")
    for key in ("u", "v"):
        p = cfg["data"][key].get("point")
        if p is not None and len(p) != dim:
            raise ConfigError(f"data.{key}.point must have {dim} coordinates")
    return cfg


def load(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads(text, p.parent)


def override(cfg: dict, assignments) -> dict:
    """Apply ``section.key=value`` strings (values parsed as YAML scalars)."""
    cfg = copy.deepcopy(cfg)
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            raise ConfigError(f"override {item!r}: value is not valid YAML") from None
        parts = key.strip().split(".")
        if len(parts) == 1:
            _apply(cfg, parts[0], None, value, None)
        elif len(parts) == 2:
            _apply(cfg, parts[0], parts[1], value, None)
        else:
            raise ConfigError(f"override key {key!r} has too many parts")
    return _finish(cfg, None)
