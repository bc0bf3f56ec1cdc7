"""Run configuration: sectioned key-value files plus command-line overrides.

The file format is INI-style (``[kernel]``, ``[grid]``, ``[solver]``,
``[quadrature]``, ``[dynamics]``, ``[verify]``), read with
:mod:`configparser`.  Keys are case-sensitive.  Every value is parsed
through a typed schema so a bad entry raises :class:`ConfigError` naming
``section.key``.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

from .errors import CoagError, ConfigError
from .kernel import KernelSpec
from .operator import QuadratureConfig
from .profile import LogGrid
from .solver import SolverConfig
from .verify import VerifyConfig


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _int(s: str) -> int:
    return int(s.strip())


def _str(s: str) -> str:
    return s.strip()


def _opt_float(s: str) -> float | None:
    s = s.strip()
    return None if s.lower() in ("", "auto", "none") else _float(s)


def _floats(s: str) -> tuple[float, ...]:
    parts = [p for p in s.replace(",", " ").split() if p]
    return tuple(_float(p) for p in parts)


def _pair(s: str) -> tuple[float, float] | None:
    v = _floats(s)
    if not v:
        return None
    if len(v) != 2:
        raise ValueError("expected two numbers or nothing")
    return v


# section -> key -> (parser, default text)
SCHEMA: dict[str, dict[str, tuple[Callable[[str], object], str]]] = {
    "kernel": {
        "kind": (_str, "product"),
        "alpha": (_float, "0.25"),
        "beta": (_float, "0.25"),
        "K0": (_float, "1.0"),
        "k0": (_opt_float, "auto"),
        "h_lambda_method": (_str, "auto"),
    },
    "grid": {
        "x_min": (_float, "-18.0"),
        "x_max": (_float, "7.0"),
        "n": (_int, "512"),
    },
    "solver": {
        "damping": (_float, "0.5"),
        "max_iterations": (_int, "500"),
        "residual_tol": (_float, "1e-4"),
        "gauge": (_str, "PinHalfPlateau"),
        "scheme": (_str, "relaxation"),
        "plateau_window": (_float, "2.0"),
    },
    "quadrature": {
        "panels_per_cell": (_int, "1"),
        "tail_cutoff_tol": (_float, "1e-15"),
        "interior_margin": (_float, "2.0"),
    },
    "dynamics": {
        "kernel": (_str, "product"),
        "cells": (_int, "256"),
        "xi_min": (_float, "1e-3"),
        "xi_max": (_float, "1e2"),
        "t_end": (_float, "1.0"),
        "cfl": (_float, "0.3"),
        "output_times": (_floats, ""),
        "profile_dir": (_str, ""),
    },
    "verify": {
        "margin": (_float, "2.0"),
        "small_x_decades": (_float, "2.0"),
        "r_decades": (_float, "6.0"),
        "osc_window": (_pair, ""),
        "profile_dir": (_str, ""),
    },
}

# command-line flag -> section.key
FLAG_KEYS = {
    "alpha": "kernel.alpha",
    "beta": "kernel.beta",
    "grid_min": "grid.x_min",
    "grid_max": "grid.x_max",
    "grid_n": "grid.n",
    "damping": "solver.damping",
    "tol": "solver.residual_tol",
    "max_iters": "solver.max_iterations",
}


@dataclass(frozen=True)
class DynamicsConfig:
    kernel: str = "product"
    cells: int = 256
    xi_min: float = 1e-3
    xi_max: float = 1e2
    t_end: float = 1.0
    cfl: float = 0.3
    output_times: tuple[float, ...] = ()
    profile_dir: str = ""


@dataclass(frozen=True)
class RunConfig:
    """Typed view of the effective configuration."""

    text: dict[str, dict[str, str]]
    kernel: KernelSpec
    h_lambda_method: str
    grid: LogGrid
    solver: SolverConfig
    quad: QuadratureConfig
    dynamics: DynamicsConfig
    verify: VerifyConfig
    verify_profile_dir: str

    def effective(self) -> dict[str, dict[str, str]]:
        return {s: dict(kv) for s, kv in self.text.items()}


def read_config_text(path: str | Path | None) -> dict[str, dict[str, str]]:
    """Raw ``{section: {key: text}}`` from a file; unknown names raise."""
    out: dict[str, dict[str, str]] = {}
    if path is None:
        return out
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist", key="--config")
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}", key="--config") from exc
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", key=section)
        for key, value in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}", key=f"{section}.{key}")
            out.setdefault(section, {})[key] = _unquote(value)
    return out


def _unquote(v: str) -> str:
    v = v.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
        return v[1:-1]
    return v


def merge(file_text: Mapping[str, Mapping[str, str]],
          overrides: Mapping[str, str]) -> dict[str, dict[str, str]]:
    """Defaults, then file values, then ``section.key`` overrides."""
    text = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    for s, kv in file_text.items():
        text[s].update(kv)
    for dotted, v in overrides.items():
        s, _, k = dotted.partition(".")
        if s not in SCHEMA or k not in SCHEMA[s]:
            raise ConfigError(f"unknown key {dotted}", key=dotted)
        text[s][k] = str(v)
    return text


def _parse(text, section: str, key: str):
    parser, _ = SCHEMA[section][key]
    raw = text[section][key]
    try:
        return parser(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value {raw!r} for {section}.{key}: {exc}", key=f"{section}.{key}") from exc


def _build(name: str, fn):
    # library validation errors are re-raised naming the section
    try:
        return fn()
    except ConfigError:
        raise
    except (CoagError, ValueError) as exc:
        raise ConfigError(f"invalid [{name}] settings: {exc}", key=name) from exc


def build_config(text: Mapping[str, Mapping[str, str]]) -> RunConfig:
    v = {s: {k: _parse(text, s, k) for k in keys} for s, keys in SCHEMA.items()}
    kv = v["kernel"]
    if kv["kind"].lower() != "product":
        raise ConfigError("only product kernels can be configured from a file", key="kernel.kind")
    kernel = _build("kernel", lambda: KernelSpec(alpha=kv["alpha"], beta=kv["beta"],
                                                 K0=kv["K0"], k0=kv["k0"]))
    if kv["h_lambda_method"] not in ("auto", "closed_form", "quadrature"):
        raise ConfigError("h_lambda_method must be auto, closed_form or quadrature",
                          key="kernel.h_lambda_method")
    g = v["grid"]
    grid = _build("grid", lambda: LogGrid(g["x_min"], g["x_max"], g["n"]))
    solver = _build("solver", lambda: SolverConfig(**v["solver"]))
    quad = _build("quadrature", lambda: QuadratureConfig(**v["quadrature"]))
    dyn = v["dynamics"]
    if dyn["kernel"] not in ("product", "constant"):
        raise ConfigError("dynamics.kernel must be product or constant", key="dynamics.kernel")
    if dyn["cells"] < 2 or not 0.0 < dyn["xi_min"] < dyn["xi_max"]:
        raise ConfigError("dynamics needs cells >= 2 and 0 < xi_min < xi_max", key="dynamics")
    if not dyn["t_end"] > 0.0:
        raise ConfigError("dynamics.t_end must be positive", key="dynamics.t_end")
    if not 0.0 < dyn["cfl"] <= 1.0:
        raise ConfigError("dynamics.cfl must lie in (0, 1]", key="dynamics.cfl")
    dynamics = DynamicsConfig(**dyn)
    ver = dict(v["verify"])
    verify_dir = ver.pop("profile_dir")
    verify = _build("verify", lambda: VerifyConfig(margin=ver["margin"],
                                                   small_x_decades=ver["small_x_decades"],
                                                   r_decades=ver["r_decades"],
                                                   osc_window=ver["osc_window"]))
    return RunConfig(
        text={s: dict(kv) for s, kv in text.items()},
        kernel=kernel,
        h_lambda_method=kv["h_lambda_method"],
        grid=grid,
        solver=solver,
        quad=quad,
        dynamics=dynamics,
        verify=verify,
        verify_profile_dir=verify_dir,
    )


def load_config(path: str | Path | None = None,
                overrides: Mapping[str, str] | None = None) -> RunConfig:
    return build_config(merge(read_config_text(path), overrides or {}))


def write_config(text: Mapping[str, Mapping[str, str]], path: str | Path) -> None:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for s, kv in text.items():
        cp[s] = dict(kv)
    with open(path, "w", encoding="utf-8") as fh:
        cp.write(fh)
