"""Experiment configuration: one JSON document, strict keys, dotted overrides."""

import copy
import json
import math

from .errors import ConfigError

DEFAULTS = {
    "dimension": 3,
    "beta": 0.1,
    "seed": 0,
    "output": None,
    "format": "json",
    "kernel": {"profile": "bump", "support_radius": 1.0},
    "grid": {"dx": 0.25, "dt": None},
    "mc": {"inner_paths": 4096, "replicas": 512, "horizon": 64.0, "t_max_factor": 16.0, "path_dt": 0.02,
           "rule": "trapezoid"},
    "quad": {"r_max": 16.0, "nodes": 8193, "tol": 1e-8, "max_iter": 10000},
    "experiment": {
        "T": 2.0,
        "T_ladder": [4.0, 16.0, 64.0],
        "x": [0.0, 0.0, 0.0],
        "x2": [1.0, 0.0, 0.0],
        "a": [0.0, 0.0, 0.0],
        "b": [0.0, 0.0, 0.0],
        "points": [[[0.0, 0.0, 0.0], 1.0]],
        "kind": "FE",
        "bracket": [0.0, 10.0],
        "tol": 1e-3,
        "n_outer": 16384,
        "n_inner": 4,
        "ensemble": None,
        "test_function": None,
        "families": 10,
    },
    "acceptance": {"criteria": list(range(1, 13)), "full": False},
}

# fields that must be strictly positive when set
POSITIVE = {
    "kernel.support_radius", "grid.dx", "grid.dt", "mc.inner_paths", "mc.replicas", "mc.horizon",
    "mc.t_max_factor", "mc.path_dt", "quad.r_max", "quad.nodes", "quad.tol", "quad.max_iter", "experiment.T",
    "experiment.tol", "experiment.n_outer", "experiment.n_inner", "experiment.families",
}
INTEGER = {"dimension", "seed", "mc.inner_paths", "mc.replicas", "quad.nodes", "quad.max_iter",
           "experiment.n_outer", "experiment.n_inner", "experiment.families"}
CHOICES = {
    "kernel.profile": ("bump", "indicator"),
    "format": ("json", "csv"),
    "mc.rule": ("trapezoid", "left"),
    "experiment.kind": ("PF", "FE"),
}
# blocks whose contents are free-form
OPAQUE = {"experiment.test_function"}


def _merge(base, new, prefix=""):
    for k, v in new.items():
        path = f"{prefix}{k}"
        if k not in base:
            raise ConfigError("config.load", f"unknown key {path!r}")
        if isinstance(base[k], dict) and path not in OPAQUE:
            if not isinstance(v, dict):
                raise ConfigError("config.load", f"{path!r} must be an object")
            _merge(base[k], v, path + ".")
        else:
            base[k] = copy.deepcopy(v)


def _strict_object(pairs):
    keys = [k for k, _ in pairs]
    dup = {k for k in keys if keys.count(k) > 1}
    if dup:
        raise ConfigError("config.load", f"duplicate keys {sorted(dup)}")
    return dict(pairs)


def parse_value(text):
    """Override values are JSON when they parse, plain strings otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_dotted(cfg, path, value):
    parts = path.split(".")
    node = cfg
    for i, p in enumerate(parts[:-1]):
        here = ".".join(parts[:i + 1])
        if p not in node or not isinstance(node[p], dict) or here in OPAQUE:
            raise ConfigError("config.override", f"unknown key {path!r}")
        node = node[p]
    if parts[-1] not in node or (isinstance(node[parts[-1]], dict) and path not in OPAQUE):
        raise ConfigError("config.override", f"unknown key {path!r}")
    node[parts[-1]] = value


def get_dotted(cfg, path):
    node = cfg
    for p in path.split("."):
        node = node[p]
    return node


def _validate(cfg):
    for path in POSITIVE | INTEGER | set(CHOICES):
        v = get_dotted(cfg, path)
        if v is None:
            continue
        if path in CHOICES:
            if v not in CHOICES[path]:
                raise ConfigError("config.validate", f"{path} must be one of {CHOICES[path]}, got {v!r}")
            continue
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError("config.validate", f"{path} must be a finite number, got {v!r}")
        if path in INTEGER and int(v) != v:
            raise ConfigError("config.validate", f"{path} must be an integer, got {v!r}")
        if path in POSITIVE and v <= 0:
            raise ConfigError("config.validate", f"{path} must be > 0, got {v!r}")
    if cfg["dimension"] < 3:
        raise ConfigError("config.validate", "dimension must be >= 3")
    b = cfg["beta"]
    if isinstance(b, bool) or not isinstance(b, (int, float)) or not (b >= 0 and math.isfinite(b)):
        raise ConfigError("config.validate", f"beta must be a finite number >= 0, got {b!r}")
    if not 0 <= cfg["seed"] < 2 ** 63:
        raise ConfigError("config.validate", "seed must lie in [0, 2^63)")
    for key in ("x", "x2", "a", "b"):
        v = cfg["experiment"][key]
        if not (isinstance(v, list) and len(v) == cfg["dimension"]
                and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v)):
            raise ConfigError("config.validate", f"experiment.{key} must be a list of {cfg['dimension']} numbers")
    crit = cfg["acceptance"]["criteria"]
    if not (isinstance(crit, list) and all(isinstance(c, int) and 1 <= c <= 12 for c in crit)):
        raise ConfigError("config.validate", "acceptance.criteria must be a list of integers in 1..12")
    return cfg


def load(text=None, overrides=()):
    """Resolved config from JSON text (or defaults) and ``(dotted.path, value)`` overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if text:
        try:
            user = json.loads(text, object_pairs_hook=_strict_object)
        except json.JSONDecodeError as exc:
            raise ConfigError("config.load", f"invalid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config.load", "config must be a JSON object")
        _merge(cfg, user)
    for path, value in overrides:
        set_dotted(cfg, path, value)
    return _validate(cfg)


def load_file(path, overrides=()):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("config.load", f"cannot read {path}: {exc.strerror}") from None
    return load(text, overrides)
