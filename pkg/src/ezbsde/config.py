"""Experiment configuration in INI format.

Example::

    [model]
    kind = heston
    b = 5
    l = 0.0225
    ...

    [preferences]
    delta = 0.08
    gamma = 2
    psi = 1.2

    [constraints]
    pi = interval 0 0.1

Unknown sections or keys are rejected. Validation errors name the offending
key as ``section.key``.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .bsde import BasisSpec, GeneratorContext, SolverConfig
from .constraints import ConstraintSet, FullSpace, Interval, parse_constraint
from .markets import MarketModel, make_black_scholes, make_heston, make_linear_diffusion
from .paths import TimeGrid
from .preferences import ParameterDomainError, Preferences


class ConfigError(ValueError):
    pass


MODEL_KEYS = {
    "black_scholes": ("r", "mu", "sigma", "x0"),
    "linear_diffusion": ("b", "a", "sigma", "r0", "r1", "lambda0", "lambda1", "rho", "x0"),
    "heston": ("b", "l", "a", "r0", "r1", "sigma", "lambda", "rho", "x0"),
}
MODEL_DEFAULTS = {
    "black_scholes": {"x0": 0.0},
    "linear_diffusion": {"x0": 0.0, "r1": 1.0},
    "heston": {"r1": 0.0},
}
DEFAULT_HORIZON = {"black_scholes": 30.0, "linear_diffusion": 12.0, "heston": 10.0}

SECTIONS = {
    "model": None,  # keys depend on kind
    "preferences": ("delta", "gamma", "psi"),
    "constraints": ("pi", "c_hat"),
    "grid": ("t", "n"),
    "mc": ("m", "seed", "degree", "kz"),
    "run": ("command", "out", "omega"),
}
COMMANDS = ("solve", "sweep", "verify")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    model_params: dict
    prefs: Preferences
    pi_set: ConstraintSet = field(default_factory=FullSpace)
    c_set: Optional[ConstraintSet] = None
    T: float = 30.0
    N: int = 100
    M: int = 100_000
    seed: int = 42
    degree: int = 3
    kz: Optional[float] = None
    command: str = "solve"
    out: str = "out"
    omega: float = 1.0
    source: Optional[str] = None

    def build_model(self) -> MarketModel:
        p = dict(self.model_params)
        if self.kind == "black_scholes":
            return make_black_scholes(p["r"], p["mu"], p["sigma"], x0=p["x0"])
        if self.kind == "linear_diffusion":
            return make_linear_diffusion(p["b"], p["a"], p["sigma"], p["r0"], p["r1"], p["lambda0"],
                                         p["lambda1"], p["rho"], x0=p["x0"])
        return make_heston(p["b"], p["l"], p["a"], p["r0"], p["r1"], p["sigma"], p["lambda"], p["rho"],
                           x0=p.get("x0"))

    def grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.N)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(basis=BasisSpec(self.degree), kz=self.kz)

    def context(self, model: Optional[MarketModel] = None) -> GeneratorContext:
        model = self.build_model() if model is None else model
        return GeneratorContext(model=model, prefs=self.prefs, setA=self.pi_set, T=self.T, setC=self.c_set)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def with_value(self, path: str, value: float) -> "ExperimentConfig":
        """Copy with one sweepable parameter changed.

        Supported paths: ``constraints.pi_upper``, ``constraints.pi_lower``,
        ``preferences.gamma``, ``preferences.psi``.
        """
        if path in ("preferences.gamma", "preferences.psi"):
            key = path.split(".")[1]
            try:
                return self.replace(prefs=self.prefs.replace(**{key: value}))
            except ParameterDomainError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        if path in ("constraints.pi_upper", "constraints.pi_lower"):
            base = self.pi_set
            lo, hi = (base.lo, base.hi) if isinstance(base, Interval) else (0.0, 1.0)
            if path.endswith("upper"):
                hi = value
            else:
                lo = value
            if lo > hi:
                raise ConfigError(f"{path}: interval [{lo}, {hi}] is empty")
            return self.replace(pi_set=Interval(lo, hi))
        raise ConfigError(f"unknown sweep parameter {path!r}; use constraints.pi_upper, "
                          "constraints.pi_lower, preferences.gamma or preferences.psi")


def _number(section, key, raw) -> float:
    try:
        val = float(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}: expected a number, got {raw!r}") from None
    if not math.isfinite(val):
        raise ConfigError(f"{section}.{key}: must be finite, got {raw!r}")
    return val


def _integer(section, key, raw, low=1) -> int:
    try:
        val = int(raw)
    except ValueError:
        try:
            f = float(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key}: expected an integer, got {raw!r}") from None
        if not (math.isfinite(f) and f == int(f)):
            raise ConfigError(f"{section}.{key}: expected an integer, got {raw!r}")
        val = int(f)
    if val < low:
        raise ConfigError(f"{section}.{key}: must be >= {low}, got {val}")
    return val


def _read(text: str, origin: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=origin)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{origin}, line {exc.lineno}: key outside of any [section]") from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(f"{origin}, line {exc.lineno}: {exc.message.splitlines()[0]}") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{origin}, line {lineno}: cannot parse {line.strip()!r}") from None
    return cp


def parse_config(text: str, origin: str = "<config>") -> ExperimentConfig:
    cp = _read(text, origin)
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
        allowed = SECTIONS[sec]
        if allowed is not None:
            for key in cp[sec]:
                if key not in allowed:
                    raise ConfigError(f"{sec}.{key}: unknown key")
    if not cp.has_section("model"):
        raise ConfigError("missing [model] section")
    if not cp.has_section("preferences"):
        raise ConfigError("missing [preferences] section")

    m = cp["model"]
    kind = m.get("kind", "").strip().lower()
    if kind not in MODEL_KEYS:
        raise ConfigError(f"model.kind: expected one of {sorted(MODEL_KEYS)}, got {kind!r}")
    params = dict(MODEL_DEFAULTS[kind])
    for key, raw in m.items():
        if key == "kind":
            continue
        if key not in MODEL_KEYS[kind]:
            raise ConfigError(f"model.{key}: unknown key for model kind {kind}")
        params[key] = _number("model", key, raw)
    missing = [k for k in MODEL_KEYS[kind] if k not in params and not (kind == "heston" and k == "x0")]
    if missing:
        raise ConfigError(f"model.{missing[0]}: required for model kind {kind}")

    pr = cp["preferences"]
    vals = {}
    for key in ("delta", "gamma", "psi"):
        if key not in pr:
            raise ConfigError(f"preferences.{key}: required")
        vals[key] = _number("preferences", key, pr[key])
    for key, ok in (("delta", vals["delta"] > 0), ("gamma", vals["gamma"] > 1), ("psi", vals["psi"] > 1)):
        if not ok:
            bound = "> 0" if key == "delta" else "> 1"
            raise ConfigError(f"preferences.{key}: must be {bound}, got {vals[key]}")
    prefs = Preferences(**vals)

    kw = {}
    if cp.has_section("constraints"):
        c = cp["constraints"]
        for key, attr in (("pi", "pi_set"), ("c_hat", "c_set")):
            if key in c:
                try:
                    kw[attr] = parse_constraint(c[key])
                except ValueError as exc:
                    raise ConfigError(f"constraints.{key}: {exc}") from None
    kw["T"] = DEFAULT_HORIZON[kind]
    if cp.has_section("grid"):
        g = cp["grid"]
        if "t" in g:
            kw["T"] = _number("grid", "T", g["t"])
            if kw["T"] <= 0:
                raise ConfigError(f"grid.T: must be > 0, got {kw['T']}")
        if "n" in g:
            kw["N"] = _integer("grid", "N", g["n"])
    if cp.has_section("mc"):
        s = cp["mc"]
        if "m" in s:
            kw["M"] = _integer("mc", "M", s["m"], low=2)
        if "seed" in s:
            kw["seed"] = _integer("mc", "seed", s["seed"], low=0)
            if kw["seed"] >= 2**64:
                raise ConfigError("mc.seed: must fit in 64 bits")
        if "degree" in s:
            kw["degree"] = _integer("mc", "degree", s["degree"], low=0)
        if "kz" in s:
            kw["kz"] = _number("mc", "kz", s["kz"])
            if kw["kz"] <= 0:
                raise ConfigError(f"mc.kz: must be > 0, got {kw['kz']}")
    if cp.has_section("run"):
        r = cp["run"]
        if "command" in r:
            if r["command"] not in COMMANDS:
                raise ConfigError(f"run.command: expected one of {COMMANDS}, got {r['command']!r}")
            kw["command"] = r["command"]
        if "out" in r:
            kw["out"] = r["out"]
        if "omega" in r:
            kw["omega"] = _number("run", "omega", r["omega"])
            if kw["omega"] <= 0:
                raise ConfigError(f"run.omega: must be > 0, got {kw['omega']}")
    cfg = ExperimentConfig(kind=kind, model_params=params, prefs=prefs, source=origin, **kw)
    try:
        model = cfg.build_model()
    except ParameterDomainError as exc:
        raise ConfigError(f"model: {exc}") from None
    if cfg.pi_set.dim != model.n:
        raise ConfigError(f"constraints.pi: dimension {cfg.pi_set.dim} does not match {model.n} asset(s)")
    if cfg.c_set is not None:
        try:
            cfg.context(model)
        except ParameterDomainError as exc:
            raise ConfigError(f"constraints.c_hat: {exc}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), origin=str(path))
