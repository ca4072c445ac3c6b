"""Run configuration: TOML file with ``[model]``, ``[boundary]`` and ``[run]`` sections.

Every key is optional; defaults are listed in ``MODEL_DEFAULTS``,
``BOUNDARY_DEFAULTS`` and ``RUN_DEFAULTS``.  Unknown sections or keys are
rejected.  Complex values are given as a number or as a ``[re, im]`` pair.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .algebra import MAX_LENGTH, ChainSpec, EtaExpansion
from .errors import DomainError
from .manybody import ModelParams

MODEL_DEFAULTS: dict[str, Any] = {"z": [1.3, 1.6, 1.9, 2.2], "G": 0.8, "Gamma": 0.3}
BOUNDARY_DEFAULTS: dict[str, Any] = {
    "eta": 0.1, "xi": 0.3, "psi": 0.2, "phi": -0.4, "alpha": 0.5, "beta": 0.2,
    "gamma": 0.3, "delta": -0.1, "lambda": 0.7, "mu": 0.25,
}
RUN_DEFAULTS: dict[str, Any] = {
    "seed": 0,            # single generator seed for every random draw
    "cap": MAX_LENGTH,    # largest admissible L
    "tol": 1e-8,          # relative energy tolerance
    "residual_tol": 1e-8, # Bethe residual tolerance
    "cond_cap": 1e12,     # linear-system condition cap
    "samples": 20,        # (u, v) samples in verify
    "out": None,          # JSON report path (stdout if unset)
    "csv": None,          # optional CSV table path (spectrum)
    "gamma_path": None,   # solve: Gamma values (default: the model Gamma)
    "state": 0,           # solve: ED eigenstate index used as seed at the path start
    "roots": None,        # solve: explicit seed squared roots, list of [re, im]
    "corrupt_r": False,   # debug: perturb one R-matrix entry in verify
}
SECTIONS = {"model": set(MODEL_DEFAULTS) | {"L"}, "boundary": set(BOUNDARY_DEFAULTS), "run": set(RUN_DEFAULTS)}


class ConfigError(ValueError):
    """Invalid run configuration (CLI exit code 2)."""


def _real(name: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{name} must be a finite number, got {value!r}")
    return float(value)


def _complex(name: str, value) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(f"{name} must be a number or a [re, im] pair")
        return complex(_real(name, value[0]), _real(name, value[1]))
    return complex(_real(name, value))


def _int(name: str, value, low: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < low:
        raise ConfigError(f"{name} must be an integer >= {low}, got {value!r}")
    return value


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams
    expansion: EtaExpansion
    eta: complex
    seed: int = 0
    cap: int = MAX_LENGTH
    tol: float = 1e-8
    residual_tol: float = 1e-8
    cond_cap: float = 1e12
    samples: int = 20
    out: str | None = None
    csv: str | None = None
    gamma_path: tuple[float, ...] | None = None
    state: int = 0
    roots: tuple[complex, ...] | None = None
    corrupt_r: bool = False
    raw: dict = field(default_factory=dict)  # merged input, echoed into reports

    def chain(self) -> ChainSpec:
        return ChainSpec(tuple(self.model.eps), self.eta, max_length=self.cap)

    def boundary(self):
        return self.expansion.boundary(self.eta)


def read_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from exc


def build_config(data: dict, overrides: dict | None = None) -> RunConfig:
    """Validate ``data`` (parsed TOML) plus ``[run]`` ``overrides`` into a :class:`RunConfig`."""
    for section, body in data.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        unknown = set(body) - SECTIONS[section]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    model = {**MODEL_DEFAULTS, **data.get("model", {})}
    bnd = {**BOUNDARY_DEFAULTS, **data.get("boundary", {})}
    run = {**RUN_DEFAULTS, **data.get("run", {})}
    run.update({k: v for k, v in (overrides or {}).items() if v is not None})

    cap = _int("run.cap", run["cap"], 1)
    if not isinstance(model["z"], list) or not model["z"]:
        raise ConfigError("model.z must be a non-empty list")
    z = [_real("model.z", v) for v in model["z"]]
    if "L" in model and _int("model.L", model["L"], 1) != len(z):
        raise ConfigError(f"model.L = {model['L']} but z has {len(z)} entries")
    if len(z) > cap:
        raise ConfigError(f"L = {len(z)} exceeds the cap {cap}")
    try:
        params = ModelParams(tuple(z), _real("model.G", model["G"]), _real("model.Gamma", model["Gamma"]),
                             max_length=cap)
        names = ("xi", "psi", "phi", "alpha", "beta", "gamma", "delta", "lambda", "mu")
        values = {n: _complex(f"boundary.{n}", bnd[n]) for n in names}
        values["lam"] = values.pop("lambda")
        ep = EtaExpansion(**values)
    except (ValueError, DomainError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    eta = _complex("boundary.eta", bnd["eta"])
    if eta == 0:
        raise ConfigError("boundary.eta must be nonzero")

    for name in ("tol", "residual_tol", "cond_cap"):
        if _real(f"run.{name}", run[name]) <= 0:
            raise ConfigError(f"run.{name} must be positive")
    for name in ("out", "csv"):
        if run[name] is not None and not isinstance(run[name], str):
            raise ConfigError(f"run.{name} must be a path string")
    if not isinstance(run["corrupt_r"], bool):
        raise ConfigError("run.corrupt_r must be true or false")
    path = run["gamma_path"]
    if path is not None:
        if not isinstance(path, list) or not path:
            raise ConfigError("run.gamma_path must be a non-empty list")
        path = tuple(_real("run.gamma_path", g) for g in path)
    roots = run["roots"]
    if roots is not None:
        if not isinstance(roots, list) or len(roots) != len(z):
            raise ConfigError(f"run.roots must list {len(z)} squared roots")
        roots = tuple(_complex("run.roots", r) for r in roots)
    state = _int("run.state", run["state"])
    if state >= params.dim:
        raise ConfigError(f"run.state must be below 2**L = {params.dim}")

    raw = {"model": {**model, "L": len(z)}, "boundary": bnd, "run": run}
    return RunConfig(
        model=params, expansion=ep, eta=eta, seed=_int("run.seed", run["seed"]), cap=cap,
        tol=float(run["tol"]), residual_tol=float(run["residual_tol"]), cond_cap=float(run["cond_cap"]),
        samples=_int("run.samples", run["samples"], 1), out=run["out"], csv=run["csv"],
        gamma_path=path, state=state, roots=roots, corrupt_r=run["corrupt_r"], raw=raw,
    )


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    return build_config(read_config(path), overrides)
