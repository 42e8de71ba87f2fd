"""INI configuration files.

Sections and keys::

    [problem]  case (ex81 | ex82 | cavity | file), nx, ny, mesh_file, mesh_format, lid
    [scheme]   m, l, nu, alpha, r, quad_degree, convection
    [time]     dt | dt_rule (h^2, h^3, h2, h3), T
    [solver]   picard_tol, picard_max, reuse_factorization
    [output]   dir, vtk_every

Scheme parameters not given fall back to the defaults of the selected case.
"""
from __future__ import annotations

import configparser
import math
from pathlib import Path

from .solver import ConfigError, RunConfig, steps_for_rule

_SCHEMA = {
    "problem": {"case": str, "nx": int, "ny": int, "mesh_file": str, "mesh_format": str, "lid": float},
    "scheme": {"m": int, "l": int, "nu": float, "alpha": float, "r": float, "quad_degree": int,
               "convection": bool},
    "time": {"dt": float, "dt_rule": str, "T": float},
    "solver": {"picard_tol": float, "picard_max": int, "reuse_factorization": bool},
    "output": {"dir": str, "vtk_every": int},
}

_RENAME = {("output", "dir"): "output_dir"}


def case_defaults(case: str) -> dict:
    """nu, alpha, r, T of a named problem."""
    if case == "cavity":
        from .cases import CavityProblem
        c = CavityProblem()
    elif case == "file":
        return {}
    else:
        from .cases import CaseError, registry
        try:
            c = registry(case, verify=False)
        except CaseError as exc:
            raise ConfigError(str(exc)) from None
    return {"nu": c.nu, "alpha": c.alpha, "r": c.r, "T": c.T}


def parse_dt_rule(rule: str) -> int:
    """'h^2' / 'h2' -> 2."""
    key = rule.strip().lower().replace("^", "").replace("**", "")
    if key not in ("h1", "h2", "h3", "h4"):
        raise ConfigError(f"unknown dt_rule {rule!r}; use h^2 or h^3")
    return int(key[1])


def mesh_size(nx: int, ny: int) -> float:
    """Largest cell diameter of the uniform unit-square mesh."""
    return math.hypot(1.0 / nx, 1.0 / ny)


def _convert(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot read {raw!r} as {kind.__name__}") from None


def read_config(text: str, source: str = "<string>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    values: dict = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            values[_RENAME.get((section, key), key)] = _convert(section, key, raw, _SCHEMA[section][key])

    if "case" not in values:
        raise ConfigError(f"{source}: missing required key 'case' in [problem]")
    case = values["case"]
    if case == "file" and "mesh_file" not in values:
        raise ConfigError(f"{source}: case = file needs mesh_file")
    for key, val in case_defaults(case).items():
        values.setdefault(key, val)
    if "m" not in values:
        raise ConfigError(f"{source}: missing required key 'm' in [scheme]")

    rule = values.pop("dt_rule", None)
    if rule is not None and "dt" in values:
        raise ConfigError(f"{source}: give either dt or dt_rule, not both")
    T = values.get("T")
    if T is None:
        raise ConfigError(f"{source}: missing required key 'T' in [time]")
    if rule is not None:
        if case == "file":
            from .mesh import import_mesh
            h = import_mesh(values["mesh_file"], values.get("mesh_format", "vc")).h
        else:
            h = mesh_size(values.get("nx", 8), values.get("ny", values.get("nx", 8)))
        values["dt"] = T / steps_for_rule(h, T, parse_dt_rule(rule))
    elif "dt" not in values:
        raise ConfigError(f"{source}: missing 'dt' or 'dt_rule' in [time]")
    if "nx" in values and "ny" not in values:
        values["ny"] = values["nx"]
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return read_config(text, source=str(path))
