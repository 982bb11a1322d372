"""Experiment configuration: flat ``dotted.key = value`` text.

Lines starting with ``#`` are comments.  Every violation is collected so a
single run of ``ergolab validate`` reports all of them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .dynsys import KINDS, make_system
from .errors import DomainError, ErgolabError

EXPERIMENTS = (
    "covariance",
    "clt",
    "stable",
    "asclt",
    "berry_esseen",
    "large_dev",
    "cgf_rate",
    "erdos_renyi",
    "moderate",
    "concentration_envelope",
    "correlation_dev",
    "empirical_measure",
    "shadowing",
    "periodogram",
    "nonconventional",
)

OBSERVABLE_CHOICES = ("coordinate", "centered_coordinate", "affine", "sign_threshold", "constant", "tabulated")
FUNCTIONALS = ("sum", "average", "correlation", "kantorovich")

# key -> (type, default); type is one of int, float, str, bool, "ints", "floats"
_COMMON = {
    "experiment": (str, None),
    "seed": (int, None),
    "system.kind": (str, None),
    "system.alpha": (float, None),
    "system.a": (float, None),
    "system.b": (float, None),
    "observable.kind": (str, "coordinate"),
    "observable.center": (str, "auto"),
    "observable.coord": (int, 0),
    "observable.c0": (float, 0.0),
    "observable.c1": (float, 1.0),
    "observable.theta": (float, 0.5),
    "observable.c": (float, 0.0),
    "observable.grid": ("floats", None),
    "observable.values": ("floats", None),
    "observable.interpolate": (bool, True),
    "ensemble.m": (int, None),
    "ensemble.n": (int, None),
    "ensemble.n_list": ("ints", None),
    "ensemble.burn_in": (int, 1000),
    "ensemble.calibration_length": (int, 10**7),
    "output.dir": (str, "."),
    "output.format": (str, "json"),
    "budget.max_steps": (float, 2e10),
}

_PARAMS = {
    "params.max_lag": (int, 20),
    "params.sigma2": (float, None),
    "params.orbits": (int, 10),
    "params.eps": (float, 0.2),
    "params.z_max": (float, 1.0),
    "params.z_points": (int, 41),
    "params.t_list": ("floats", None),
    "params.t": (float, 0.5),
    "params.rate": (float, None),
    "params.k_list": ("ints", None),
    "params.window_budget": (int, 10**7),
    "params.theta": (float, 0.75),
    "params.a": (float, 0.5),
    "params.b": (float, math.inf),
    "params.functional": (str, "average"),
    "params.k": (int, 0),
    "params.mu_target": (float, 0.5),
    "params.m_test": (int, 200),
    "params.omega_points": (int, 129),
    "params.ell": (int, 2),
}

KEYS = {**_COMMON, **_PARAMS}

# which sizes each experiment needs: "n" (single length) or "n_list"
_SIZES = {
    "covariance": ("m", "n"),
    "clt": ("m", "n_list"),
    "stable": ("m", "n"),
    "asclt": ("n_list",),
    "berry_esseen": ("m", "n_list"),
    "large_dev": ("m", "n_list"),
    "cgf_rate": ("m", "n"),
    "erdos_renyi": (),
    "moderate": ("m", "n_list"),
    "concentration_envelope": ("m", "n"),
    "correlation_dev": ("m", "n_list"),
    "empirical_measure": ("m", "n_list"),
    "shadowing": ("m", "n_list"),
    "periodogram": ("m", "n_list"),
    "nonconventional": ("m", "n"),
}


class ConfigError(ErgolabError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class ExperimentConfig:
    values: dict
    explicit: set = field(default_factory=set)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    @property
    def experiment(self):
        return self.values["experiment"]

    @property
    def seed(self):
        return self.values["seed"]

    def system(self):
        params = {k: self.values[f"system.{k}"] for k in ("alpha", "a", "b") if self.values.get(f"system.{k}") is not None}
        return make_system(self.values["system.kind"], **params)

    def echo(self):
        """Explicitly set keys in sorted order, as parsed values."""
        return {k: _plain(self.values[k]) for k in sorted(self.explicit)}


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _convert(kind, raw):
    if kind is str:
        return raw
    if kind is int:
        v = float(raw) if any(c in raw for c in "eE.") else int(raw)
        if isinstance(v, float):
            if not v.is_integer():
                raise ValueError(f"expected an integer, got {raw!r}")
            v = int(v)
        return v
    if kind is float:
        return float(raw)
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"expected true/false, got {raw!r}")
    items = [s.strip() for s in raw.split(",") if s.strip()]
    if not items:
        raise ValueError("empty list")
    conv = int if kind == "ints" else float
    return tuple(_convert(conv, s) for s in items)


def parse_config(text):
    """Parse and validate; raises :class:`ConfigError` listing every problem."""
    problems = []
    seen = {}
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            problems.append(f"line {lineno}: expected key=value, got {s!r}")
            continue
        key, _, value = s.partition("=")
        key, value = key.strip(), value.split(" #")[0].strip()
        if key in seen:
            problems.append(f"line {lineno}: duplicate key {key!r} (first set on line {seen[key]})")
            continue
        seen[key] = lineno
        if key not in KEYS:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            raw[key] = _convert(KEYS[key][0], value)
        except ValueError as exc:
            problems.append(f"line {lineno}: {key}: {exc}")
    values = {k: d for k, (_, d) in KEYS.items()}
    values.update(raw)
    problems += _check(values, seen)
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(values, set(raw))


def _where(seen, key):
    return f"line {seen[key]}: " if key in seen else ""


def _check(v, seen):
    out = []
    exp = v["experiment"]
    if v["seed"] is None:
        out.append("seed: missing (a seed is required; there is no clock-based default)")
    elif not 0 <= v["seed"] < 2**64:
        out.append(f"{_where(seen, 'seed')}seed: must be in [0, 2^64)")
    if exp is None:
        out.append("experiment: missing")
    elif exp not in EXPERIMENTS:
        out.append(f"{_where(seen, 'experiment')}experiment: unknown {exp!r}; choose from {', '.join(EXPERIMENTS)}")
    kind = v["system.kind"]
    if kind is None:
        out.append("system.kind: missing")
    elif kind not in KINDS:
        out.append(f"{_where(seen, 'system.kind')}system.kind: unknown {kind!r}; choose from {', '.join(KINDS)}")
    else:
        params = {k: v[f"system.{k}"] for k in ("alpha", "a", "b") if v[f"system.{k}"] is not None}
        try:
            make_system(kind, **params)
        except DomainError as exc:
            msg = str(exc).replace(f"{kind}.", "system.").replace(f"{kind}: ", "")
            names = [k for k in params if f"system.{k}" in msg or f"'{k}'" in msg]
            loc = _where(seen, f"system.{names[0]}") if names else ""
            out.append(f"{loc}{msg}")
    ok = v["observable.kind"]
    if ok not in OBSERVABLE_CHOICES:
        out.append(f"{_where(seen, 'observable.kind')}observable.kind: unknown {ok!r}")
    elif ok == "tabulated":
        g, vals = v["observable.grid"], v["observable.values"]
        if g is None or vals is None:
            out.append("observable.grid and observable.values are required for tabulated observables")
        elif len(g) != len(vals):
            out.append("observable.grid and observable.values differ in length")
        elif any(b <= a for a, b in zip(g, g[1:])):
            out.append(f"{_where(seen, 'observable.grid')}observable.grid: must be strictly increasing")
    c = v["observable.center"]
    if c not in ("auto", "none"):
        try:
            float(c)
        except ValueError:
            out.append(f"{_where(seen, 'observable.center')}observable.center: expected auto, none or a number")
    if v["observable.coord"] not in (0, 1):
        out.append(f"{_where(seen, 'observable.coord')}observable.coord: must be 0 or 1")
    for key in ("ensemble.m", "ensemble.n"):
        if v[key] is not None and v[key] < 1:
            out.append(f"{_where(seen, key)}{key}: must be >= 1")
    if v["ensemble.burn_in"] < 0:
        out.append(f"{_where(seen, 'ensemble.burn_in')}ensemble.burn_in: must be >= 0")
    nl = v["ensemble.n_list"]
    if nl is not None:
        if any(n < 1 for n in nl):
            out.append(f"{_where(seen, 'ensemble.n_list')}ensemble.n_list: entries must be >= 1")
        if any(b <= a for a, b in zip(nl, nl[1:])):
            out.append(f"{_where(seen, 'ensemble.n_list')}ensemble.n_list: must be strictly increasing")
    if v["output.format"] not in ("csv", "json"):
        out.append(f"{_where(seen, 'output.format')}output.format: must be csv or json")
    if exp in _SIZES:
        for need in _SIZES[exp]:
            key = f"ensemble.{need}"
            if need == "n_list" and nl is None and v["ensemble.n"] is not None:
                continue
            if v[key] is None:
                out.append(f"{key}: required for experiment {exp}")
        out += _check_params(exp, v, seen)
    return out


def _check_params(exp, v, seen):
    out = []

    def bad(key, msg):
        out.append(f"{_where(seen, key)}{key}: {msg}")

    if v["params.max_lag"] < 0:
        bad("params.max_lag", "must be >= 0")
    if v["params.eps"] <= 0:
        bad("params.eps", "must be > 0")
    if v["params.z_max"] <= 0:
        bad("params.z_max", "must be > 0")
    if v["params.z_points"] < 3:
        bad("params.z_points", "must be >= 3")
    if not 0.5 < v["params.theta"] < 1.0:
        bad("params.theta", "must lie in (1/2, 1)")
    if v["params.orbits"] < 1:
        bad("params.orbits", "must be >= 1")
    if not 0 < v["params.mu_target"] <= 1:
        bad("params.mu_target", "must lie in (0, 1]")
    if v["params.functional"] not in FUNCTIONALS:
        bad("params.functional", f"choose from {', '.join(FUNCTIONALS)}")
    if v["params.k"] < 0:
        bad("params.k", "must be >= 0")
    if v["params.ell"] < 1:
        bad("params.ell", "must be >= 1")
    if v["params.omega_points"] < 2:
        bad("params.omega_points", "must be >= 2")
    if v["params.sigma2"] is not None and v["params.sigma2"] < 0:
        bad("params.sigma2", "must be >= 0")
    if exp == "moderate":
        a, b = v["params.a"], v["params.b"]
        if a <= 0 <= b or b < a:
            bad("params.a", "[a, b] must exclude 0")
    if exp == "erdos_renyi":
        if v["params.rate"] is None:
            out.append("params.rate: required for experiment erdos_renyi")
        elif v["params.rate"] <= 0:
            bad("params.rate", "must be > 0")
        if v["params.k_list"] is None:
            out.append("params.k_list: required for experiment erdos_renyi")
        elif any(k < 1 for k in v["params.k_list"]):
            bad("params.k_list", "entries must be >= 1")
    if exp == "stable" and v["system.kind"] not in (None, "manneville_pomeau"):
        bad("system.kind", "the stable experiment needs manneville_pomeau")
    if exp in ("empirical_measure", "asclt") and v["system.kind"] in ("cat", "henon", "lozi"):
        bad("system.kind", f"{exp} needs a 1-D system")
    return out


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
