"""Run configuration: plain-text ``key = value`` files.

Recognized keys (all optional):

    matrix = 5,2;2,1        a = 0.2         r0_ratio = 0.1    r1_ratio = 0.5
    r0 = 0.02               r1 = 0.01       q_min = 1         slowdown = true
    seed = 0                samples = 10000 nmax = 5000       t_grid = -2:1:0.1
    out = reports           suite = all     alpha = 0.99      spread_alpha = 0.5
    pairs = 1000            conj_tol = 1e-6 ks_threshold = 0.02
    clt_n = 10000           clt_samples = 100000

``r0``/``r1`` are absolute radii and override the ratios.  Lines starting
with ``#`` are comments.
"""

import configparser
import math
from dataclasses import dataclass, field, fields

from .surface import ConfigError, ModelParams

SUITES = ("local-verify", "cones", "tower", "pressure", "conjugacy", "stats", "all")


@dataclass
class RunConfig:
    model: ModelParams = field(default_factory=ModelParams)
    suite: str = "all"
    seed: int = 0
    samples: int = 10000
    nmax: int = 5000
    t_grid: str = "-2:1:0.1"
    out: str = "reports"
    alpha: float = 0.99
    spread_alpha: float = 0.5
    pairs: int = 1000
    conj_tol: float = 1e-6
    ks_threshold: float = 0.02
    clt_n: int = 10000
    clt_samples: int = 100000

    def __post_init__(self):
        if self.suite not in SUITES:
            raise ConfigError("suite", f"must be one of {', '.join(SUITES)}")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        for name in ("samples", "nmax", "pairs", "clt_n", "clt_samples"):
            if int(getattr(self, name)) < 0:
                raise ConfigError(name, "must be non-negative")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError("alpha", "must lie in (0, 1)")
        if not (0.0 < self.spread_alpha < 1.0):
            raise ConfigError("spread_alpha", "must lie in (0, 1)")
        from .thermo import parse_t_grid
        try:
            parse_t_grid(self.t_grid)
        except ValueError as exc:
            raise ConfigError("t_grid", str(exc)) from None

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "model"}
        d["model"] = self.model.describe()
        return d


_MODEL_KEYS = {"matrix", "a", "r0_ratio", "r1_ratio", "q_min", "slowdown", "r0", "r1"}
_RUN_TYPES = {"suite": str, "seed": int, "samples": int, "nmax": int, "t_grid": str,
              "out": str, "alpha": float, "spread_alpha": float, "pairs": int,
              "conj_tol": float, "ks_threshold": float, "clt_n": int, "clt_samples": int}


def _as_int(text):
    try:
        return int(text)
    except ValueError:
        v = float(text)
        if v != int(v):
            raise
        return int(v)


def _parse_matrix(text):
    try:
        rows = [[int(v) for v in r.split(",")] for r in text.split(";")]
    except ValueError:
        raise ConfigError("matrix", "expected integers as 'a,b;c,d'") from None
    return tuple(tuple(r) for r in rows)


def _parse_bool(key, text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"not a boolean: {text!r}")


def build_model(values):
    """ModelParams from string values; absolute r0/r1 are converted to ratios."""
    kw = {}
    a = float(values.get("a", ModelParams.a))
    for key, text in values.items():
        try:
            if key == "matrix":
                kw[key] = _parse_matrix(text)
            elif key == "slowdown":
                kw[key] = _parse_bool(key, text)
            elif key == "q_min":
                kw[key] = int(text)
            elif key in ("a", "r0_ratio", "r1_ratio"):
                kw[key] = float(text)
        except ValueError:
            raise ConfigError(key, f"cannot parse {text!r}") from None
    if "r0" in values:
        r0 = float(values["r0"])
        if not r0 > 0:
            raise ConfigError("r0", "must be positive")
        kw["r0_ratio"] = r0 / a
    if "r1" in values:
        r1 = float(values["r1"])
        r0 = kw.get("r0_ratio", ModelParams.r0_ratio) * a
        if not (0 < r1 < r0):
            raise ConfigError("r1", f"need 0 < r1 < r0 (r1 = {r1}, r0 = {r0})")
        kw["r1_ratio"] = r1 / r0
    return ModelParams(**kw)


def load_config(path=None, overrides=None):
    """Read a config file (or none) and apply command-line overrides."""
    values = {}
    if path is not None:
        cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
        try:
            with open(path) as fh:
                cp.read_string("[run]\n" + fh.read())
        except (OSError, configparser.Error) as exc:
            raise ConfigError("config", str(exc)) from None
        values.update(dict(cp["run"]))
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = str(v)
    unknown = set(values) - _MODEL_KEYS - set(_RUN_TYPES)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown setting")
    model = build_model({k: v for k, v in values.items() if k in _MODEL_KEYS})
    run = {}
    for k, typ in _RUN_TYPES.items():
        if k in values:
            try:
                run[k] = _as_int(values[k]) if typ is int else typ(values[k])
            except ValueError:
                raise ConfigError(k, f"cannot parse {values[k]!r}") from None
            if typ is float and not math.isfinite(run[k]):
                raise ConfigError(k, "must be finite")
    return RunConfig(model=model, **run)


def validate_rectangle(config):
    """Q-condition for the default base rectangle; raises ConfigError on failure."""
    from .tower import RectangleError, choose_rectangle
    try:
        return choose_rectangle(config.model)
    except RectangleError as exc:
        raise ConfigError("q_min", str(exc)) from None
