"""JSON experiment configuration and deterministic report serialization."""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Any, Optional

import numpy as np

from mesoscatter.errors import ConfigError, MesoscatterError
from mesoscatter.kernels import PlaneWave
from mesoscatter.polarization import PolarizationPair, pair_from_json

DEFAULT_OUTPUTS = {
    "far_field_csv": "far_field.csv",
    "report_json": "report.json",
    "include_timing": False,
}


@dataclasses.dataclass(frozen=True)
class SolverSettings:
    method: str = "auto"
    tol: float = 1e-10
    max_iter: int = 2000
    restart: int = 50


@dataclasses.dataclass(frozen=True)
class LSSettings:
    N: int = 32
    tol: float = 1e-10


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    wave: PlaneWave
    cluster: dict
    shape: dict
    pol: PolarizationPair
    solver: SolverSettings
    ls: LSSettings
    sweep_c_r: Optional[tuple]
    directions: Any
    convention: str
    holder_alpha: Optional[float]
    counting: dict
    outputs: dict
    seed: int
    raw: dict

    def echo(self) -> dict:
        """The input document, as it will be echoed into reports."""
        return self.raw


def _require(doc: dict, key: str, path: str):
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    if key not in doc:
        raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
    return doc[key]


def _vector(value, path: str) -> np.ndarray:
    try:
        v = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected three numbers") from None
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ConfigError(path, "expected three finite numbers")
    return v


def _number(value, path: str, positive: bool = False, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, "expected a number")
    if integer and int(value) != value:
        raise ConfigError(path, "expected an integer")
    if not math.isfinite(value) or (positive and value <= 0):
        raise ConfigError(path, "expected a positive finite number" if positive else "not finite")
    return int(value) if integer else float(value)


def _parse_wave(doc) -> PlaneWave:
    k = _number(_require(doc, "k", "wave"), "wave.k", positive=True)
    theta = _vector(_require(doc, "theta", "wave"), "wave.theta")
    P = _vector(_require(doc, "P", "wave"), "wave.P")
    if abs(np.linalg.norm(theta) - 1.0) > 1e-12:
        raise ConfigError("wave.theta", "must be a unit vector")
    theta = theta / np.linalg.norm(theta)
    if abs(theta @ P) > 1e-12 * max(1.0, np.linalg.norm(P)):
        raise ConfigError("wave.P", "must satisfy P . theta = 0")
    P = P - (theta @ P) * theta
    return PlaneWave(k, theta, P)


def _section(doc: dict, key: str) -> dict:
    sec = doc.get(key, {})
    if sec is None:
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(key, "expected an object")
    return sec


def parse_config(doc: dict) -> ExperimentConfig:
    """Validates a configuration document.

    Raises:
        ConfigError: with the dotted path of the first offending field.
    """
    if not isinstance(doc, dict):
        raise ConfigError("$", "configuration must be a JSON object")
    wave = _parse_wave(_require(doc, "wave", ""))

    cluster = _section(doc, "cluster")
    if cluster:
        if "centers" not in cluster:
            _number(_require(cluster, "n_per_side", "cluster"), "cluster.n_per_side",
                    positive=True, integer=True)
        if "c_r" in cluster:
            c = _number(cluster["c_r"], "cluster.c_r", positive=True)
            if c < 1:
                raise ConfigError("cluster.c_r", "must be >= 1")

    shape = _section(doc, "shape")
    pol = None
    if shape:
        try:
            pol = pair_from_json(shape)
        except KeyError as exc:
            raise ConfigError(f"shape.{exc.args[0]}", "missing required field") from None
        except (MesoscatterError, ValueError) as exc:
            raise ConfigError("shape", str(exc)) from None

    s = _section(doc, "solver")
    method = s.get("method", "auto")
    if method not in ("auto", "direct", "iterative"):
        raise ConfigError("solver.method", "must be 'auto', 'direct' or 'iterative'")
    solver = SolverSettings(
        method,
        _number(s.get("tol", 1e-10), "solver.tol", positive=True),
        _number(s.get("max_iter", 2000), "solver.max_iter", positive=True, integer=True),
        _number(s.get("restart", 50), "solver.restart", positive=True, integer=True),
    )
    ls_doc = _section(doc, "ls")
    ls = LSSettings(
        _number(ls_doc.get("N", 32), "ls.N", positive=True, integer=True),
        _number(ls_doc.get("tol", 1e-10), "ls.tol", positive=True),
    )

    sweep = _section(doc, "sweep")
    sweep_c_r = None
    if "c_r" in sweep:
        values = sweep["c_r"]
        if not isinstance(values, list) or not values:
            raise ConfigError("sweep.c_r", "expected a non-empty list")
        sweep_c_r = tuple(
            _number(v, f"sweep.c_r[{i}]", positive=True) for i, v in enumerate(values)
        )
        if any(c < 1 for c in sweep_c_r):
            raise ConfigError("sweep.c_r", "values must be >= 1")

    eff = _section(doc, "effective")
    convention = eff.get("convention", "depolarizing")
    if convention not in ("depolarizing", "lorentz"):
        raise ConfigError("effective.convention", "must be 'depolarizing' or 'lorentz'")

    analysis = _section(doc, "analysis")
    alpha = analysis.get("holder_alpha")
    if alpha is not None:
        alpha = _number(alpha, "analysis.holder_alpha", positive=True)
        if alpha > 1:
            raise ConfigError("analysis.holder_alpha", "must lie in (0, 1]")

    counting = _section(doc, "counting")
    outputs = dict(DEFAULT_OUTPUTS)
    outputs.update(_section(doc, "outputs"))
    for key, value in outputs.items():
        if key != "include_timing" and value is not None and not isinstance(value, str):
            raise ConfigError(f"outputs.{key}", "expected a file name")
    seed = _number(doc.get("seed", 0), "seed", integer=True)

    return ExperimentConfig(
        wave=wave, cluster=cluster, shape=shape, pol=pol, solver=solver, ls=ls,
        sweep_c_r=sweep_c_r, directions=doc.get("directions", "lebedev86"),
        convention=convention, holder_alpha=alpha, counting=counting,
        outputs=outputs, seed=seed, raw=doc,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("$", f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_config(doc)


def require(cfg: ExperimentConfig, section: str):
    """Raises a schema error when a subcommand needs a section the config lacks."""
    if section == "cluster" and not cfg.cluster:
        raise ConfigError("cluster", "missing required section")
    if section == "shape" and cfg.pol is None:
        raise ConfigError("shape", "missing required section")
    if section == "sweep" and cfg.sweep_c_r is None:
        raise ConfigError("sweep.c_r", "missing required field")
    if section == "cluster.c_r" and "c_r" not in cfg.cluster:
        raise ConfigError("cluster.c_r", "missing required field")


def _encode(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        text = format(x, ".17g")
        return text if any(ch in text for ch in ".en") else text + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items())
        return "{" + ", ".join(items) + "}"
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_report(obj) -> str:
    """Deterministic JSON: insertion-ordered keys, floats at 17 significant digits."""
    return _encode(obj) + "\n"
