"""INI config files: one format for model, solver, swing and bench sections.

Values are parsed with ``ast.literal_eval`` where possible (numbers, lists,
booleans) and fall back to plain strings, so a config can say
``sigma = [0.2, 0.2]`` or ``method = trainkm`` without quoting games.
"""

from __future__ import annotations

import ast
import configparser
import hashlib

from .bench import INSTANCES
from .model import ModelSpec
from .solvers import SolverConfig
from .swing import SwingSpec

__all__ = ["load_config", "parse_model", "parse_solver", "config_digest"]

MODEL_KEYS = {
    "dim", "T", "dt", "r", "div", "sigma", "rho", "x0", "strike", "payoff",
    "dynamics", "svAlpha", "svEpsY", "svVol", "svRho", "svMean", "eulerDt",
    "instance",
}

_SV_KEYS = ("svAlpha", "svEpsY", "svVol", "svRho", "svMean", "eulerDt")


class ConfigError(ValueError):
    pass


def _literal(value: str):
    try:
        return ast.literal_eval(value)
    except (ValueError, SyntaxError):
        return value


def _section(parser: configparser.ConfigParser, name: str) -> dict:
    if not parser.has_section(name):
        return {}
    return {key: _literal(val) for key, val in parser.items(name)}


def load_config(path) -> dict:
    """Read an INI file into {section: {key: parsed value}}."""
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep key case (svAlpha etc.)
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    return {name: _section(parser, name) for name in parser.sections()}


def parse_model(section: dict) -> ModelSpec:
    """Build a ModelSpec from a [model] section.

    ``instance = M3`` pulls the registered benchmark parameters, with any
    other keys acting as overrides.
    """
    data: dict = {}
    if "instance" in section:
        inst = section["instance"]
        if inst not in INSTANCES:
            raise ConfigError(
                f"model.instance: unknown instance {inst!r} "
                f"(known: {sorted(INSTANCES)})"
            )
        data.update(INSTANCES[inst])
    sv = dict(data.get("sv_params") or {})
    for key, value in section.items():
        if key == "instance":
            continue
        if key in _SV_KEYS:
            sv[key] = value
        elif key in MODEL_KEYS:
            data[key] = value
        else:
            data.setdefault("extra", {})
            data["extra"][key] = value
    if sv:
        data["sv_params"] = sv
    missing = {"dim", "T", "dt", "r", "strike", "x0"} - set(data)
    if missing:
        raise ConfigError(f"[model] missing required keys: {sorted(missing)}")
    try:
        return ModelSpec(**data)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"[model] invalid: {err}") from err


def parse_solver(section: dict, seed: int | None = None) -> SolverConfig:
    if "solver" not in section:
        raise ConfigError("[solver] missing required key: solver")
    kwargs = dict(section)
    if seed is not None:
        kwargs["seed"] = seed
    try:
        return SolverConfig(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"[solver] invalid: {err}") from err


def parse_swing(section: dict, model: ModelSpec) -> SwingSpec:
    missing = {"n_swing", "refract"} - set(section)
    if missing:
        raise ConfigError(f"[swing] missing required keys: {sorted(missing)}")
    try:
        return SwingSpec(model, int(section["n_swing"]),
                         float(section["refract"]),
                         terminal=section.get("terminal", "all"))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"[swing] invalid: {err}") from err


def config_digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
