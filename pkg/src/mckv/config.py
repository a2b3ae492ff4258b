"""Experiment configuration: a sectioned key-value file with a typed schema.

Example::

    [run]
    command = simulate
    output_dir = runs/pure
    formats = csv, json

    [scenario]
    name = pure-diffusion

    [sim]
    N = 100000
    T = 1.0
    dt = 0.001
    snapshot_times = 0, 0.5, 1

    [initial]
    kind = gaussian
    mean = 0
    std = 1
    lo = -10
    hi = 10
    cells = 4000

Only the output directory may come from the environment (``MCKV_OUTPUT_DIR``).
"""
from __future__ import annotations

import configparser
import io
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from mckv.coefficients import SCENARIOS, CoefficientSet, scenario
from mckv.grid import GridDensity, gaussian_density, translate, uniform_density

COMMANDS = ("simulate", "fp-solve", "converge", "stability", "check-assumptions",
            "transport-selftest")
FORMATS = ("csv", "json")
OUTPUT_ENV = "MCKV_OUTPUT_DIR"


class ConfigError(ValueError):
    def __init__(self, message: str, section: str | None = None, key: str | None = None,
                 line: int | None = None):
        where = []
        if section:
            where.append(f"[{section}]" + (f" {key}" if key else ""))
        if line:
            where.append(f"line {line}")
        super().__init__(f"{' '.join(where)}: {message}" if where else message)
        self.section, self.key, self.line = section, key, line

    def to_dict(self) -> dict:
        return {"message": str(self), "section": self.section, "key": self.key, "line": self.line}


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _words(text: str) -> tuple:
    return tuple(v for v in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none") else float(text)


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


# section -> key -> (parser, check, default); default None means optional
SCHEMA = {
    "run": {
        "command": (str, lambda v: v in COMMANDS, "simulate"),
        "output_dir": (str, None, "runs/out"),
        "formats": (_words, lambda v: bool(v) and set(v) <= set(FORMATS), ("csv", "json")),
    },
    "sim": {
        "N": (int, _positive, 1000),
        "T": (float, _positive, 1.0),
        "dt": (float, _positive, 0.01),
        "n_mollifier": (int, _positive, 16),
        "seed": (int, lambda v: 0 <= v < 2**64, 0),
        "snapshot_times": (_floats, None, ()),
        "p": (float, lambda v: v >= 1, 1.0),
        "kde_method": (str, lambda v: v in ("auto", "exact", "binned"), "auto"),
        "dense": (_bool, None, False),
        "max_wall_seconds": (_opt_float, lambda v: v is None or v > 0, None),
    },
    "initial": {
        "kind": (str, lambda v: v in ("gaussian", "uniform"), "gaussian"),
        "mean": (float, None, 0.0),
        "std": (float, _positive, 1.0),
        "a": (float, None, 0.0),
        "b": (float, None, 1.0),
        "lo": (float, None, -10.0),
        "hi": (float, None, 10.0),
        "cells": (int, _positive, 4000),
    },
    "fp": {
        "dt": (float, _positive, 1e-4),
        "record_every": (int, _positive, 100),
        "picard_tol": (_opt_float, lambda v: v is None or v > 0, None),
    },
    "study": {
        "n_list": (_ints, lambda v: len(v) >= 3 and all(b > a > 0 for a, b in zip(v, v[1:])),
                   (4, 8, 16, 32)),
        "shift": (float, None, 0.1),
        "particle": (_bool, None, False),
        "samples": (int, _positive, 1000),
        "seeds": (_ints, lambda v: len(v) == 2 and v[0] != v[1], (0, 1)),
        "selftest_pairs": (int, _positive, 200),
    },
}


@dataclass
class ExperimentConfig:
    command: str
    output_dir: str
    formats: tuple
    scenario: dict
    sim: dict
    initial: dict
    fp: dict
    study: dict
    source: str | None = field(default=None, compare=False)

    def coefficients(self) -> CoefficientSet:
        params = dict(self.scenario)
        name = params.pop("name")
        d = int(params.pop("d", 1))
        return scenario(name, d=d, **params)

    def initial_density(self, shift: float = 0.0) -> GridDensity:
        i = self.initial
        if i["kind"] == "gaussian":
            l = gaussian_density(i["mean"], i["std"], i["lo"], i["hi"], i["cells"])
        else:
            l = uniform_density(i["a"], i["b"], i["lo"], i["hi"], i["cells"])
        return translate(l, shift) if shift else l

    def sim_config(self):
        from mckv.particles import SimConfig

        s = dict(self.sim)
        return SimConfig(N=s["N"], T=s["T"], dt=s["dt"], n_mollifier=s["n_mollifier"],
                         seed=s["seed"], snapshot_times=s["snapshot_times"],
                         d=int(self.scenario.get("d", 1)), p=s["p"], kde_method=s["kde_method"],
                         dense=s["dense"], max_wall_seconds=s["max_wall_seconds"])

    def to_dict(self) -> dict:
        return {"run": {"command": self.command, "output_dir": self.output_dir,
                        "formats": list(self.formats)},
                "scenario": dict(self.scenario), "sim": _listify(self.sim),
                "initial": dict(self.initial), "fp": dict(self.fp), "study": _listify(self.study)}


def _listify(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _line_index(text: str) -> dict:
    """(section, key) -> 1-based line number, for error messages."""
    out, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            out[(section, None)] = no
        elif section and s and s[0] not in "#;" and ("=" in s or ":" in s):
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip()
            out[(section, key)] = no
    return out


def _scenario_value(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    vals = _floats(text) if "," in text else None
    return list(vals) if vals is not None else text


def parse_config(text: str, source: str | None = None) -> ExperimentConfig:
    lines = _line_index(text)
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}", line=getattr(exc, "lineno", None)) from exc
    known = set(SCHEMA) | {"scenario"}
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"unknown section (expected one of {sorted(known)})", sec,
                              line=lines.get((sec, None)))
    values = {}
    for sec, keys in SCHEMA.items():
        got = dict(cp[sec]) if cp.has_section(sec) else {}
        for k in got:
            if k not in keys:
                raise ConfigError("unknown key", sec, k, lines.get((sec, k)))
        out = {}
        for k, (parse, check, default) in keys.items():
            if k not in got:
                out[k] = default
                continue
            try:
                v = parse(got[k])
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"cannot parse {got[k]!r}: {exc}", sec, k,
                                  lines.get((sec, k))) from exc
            if check is not None and not check(v):
                raise ConfigError(f"value {got[k]!r} out of range", sec, k, lines.get((sec, k)))
            out[k] = v
        values[sec] = out
    if not cp.has_section("scenario") or "name" not in cp["scenario"]:
        raise ConfigError("missing scenario name", "scenario", "name",
                          lines.get(("scenario", None)))
    scen = {"name": cp["scenario"]["name"].strip()}
    if scen["name"] not in SCENARIOS:
        raise ConfigError(f"unknown scenario (choose from {', '.join(SCENARIOS)})",
                          "scenario", "name", lines.get(("scenario", "name")))
    for k, v in cp["scenario"].items():
        if k != "name":
            scen[k] = _scenario_value(v)
    cfg = ExperimentConfig(values["run"]["command"], values["run"]["output_dir"],
                           tuple(values["run"]["formats"]), scen, values["sim"],
                           values["initial"], values["fp"], values["study"], source)
    validate(cfg, lines)
    return cfg


def validate(cfg: ExperimentConfig, lines: dict | None = None) -> None:
    """Cross-field checks: the scenario builds and the SimConfig is consistent."""
    lines = lines or {}
    try:
        cfg.coefficients()
    except ValueError as exc:
        raise ConfigError(str(exc), "scenario", line=lines.get(("scenario", None))) from exc
    i = cfg.initial
    if i["hi"] <= i["lo"]:
        raise ConfigError("hi must exceed lo", "initial", "hi", lines.get(("initial", "hi")))
    try:
        cfg.sim_config()
    except ValueError as exc:
        raise ConfigError(str(exc), "sim", line=lines.get(("sim", None))) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for sec, vals in cfg.to_dict().items():
        cp[sec] = {k: _fmt(v) for k, v in vals.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def resolve_output_dir(cfg: ExperimentConfig, override: str | None = None) -> Path:
    return Path(override or os.environ.get(OUTPUT_ENV) or cfg.output_dir)
