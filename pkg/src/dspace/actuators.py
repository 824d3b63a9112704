"""Experiment executors.

An actuator turns (configuration, experiment) into a ``MeasurementResult``.
``resolve_actuator`` builds one from an experiment's ``actuator`` settings
by looking its ``kind`` up in a registry; new kinds are added with
``register_actuator``.
"""

from __future__ import annotations

import csv
import json
import math
import shlex
import string
import subprocess
import threading
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigurationError
from .space import Configuration, Experiment, ProbabilitySpace, canonical_id, normalize_value, render_value
from .store import FAILED, OK, MeasurementResult

Actuator = Callable[[Configuration], MeasurementResult]
ActuatorFactory = Callable[[Experiment, Any], Actuator]

UNCHARACTERIZED = "uncharacterized configuration"
_REGISTRY: dict[str, ActuatorFactory] = {}


def register_actuator(kind: str, factory: ActuatorFactory) -> None:
    _REGISTRY[kind] = factory


def resolve_actuator(experiment: Experiment, store=None) -> Actuator:
    factory = _REGISTRY.get(experiment.kind)
    if factory is None:
        raise ConfigurationError(
            f"experiment {experiment.name!r}: unknown actuator kind {experiment.kind!r}"
        )
    return factory(experiment, store)


def failed(experiment: Experiment, reason: str, cost_s: float | None = None) -> MeasurementResult:
    return MeasurementResult(
        experiment_name=experiment.name,
        experiment_parameters=experiment.parameters,
        status=FAILED,
        reason=reason,
        cost_s=cost_s,
    )


def succeeded(experiment: Experiment, values: Mapping[str, float], cost_s=None, units=None) -> MeasurementResult:
    units = units or {}
    missing = [p for p in experiment.measured_properties if p not in values]
    if missing:
        return failed(experiment, f"missing properties {missing}", cost_s)
    bad = [p for p in experiment.measured_properties if not math.isfinite(values[p])]
    if bad:
        return failed(experiment, f"non-finite values for {bad}", cost_s)
    return MeasurementResult(
        experiment_name=experiment.name,
        experiment_parameters=experiment.parameters,
        property_values={
            p: {"value": float(values[p]), "unit": units.get(p), "status": OK}
            for p in experiment.measured_properties
        },
        cost_s=cost_s,
    )


# -- tabular replay ----------------------------------------------------------


def _key(value: Any) -> str:
    if isinstance(value, str):
        try:
            return render_value(normalize_value(float(value)))
        except ValueError:
            return value
    return render_value(value)


@dataclass
class TabularWorkload:
    """An exhaustively characterized space replayed from a CSV table.

    Columns are ``<dims...>,<props...>,status[,cost_s]``. Dimension columns
    are every column that is not a property, ``status``, ``reason`` or
    ``cost_s``.
    """

    path: Path
    dimensions: list[str]
    properties: list[str]
    rows: dict = field(default_factory=dict)
    has_cost: bool = False

    @classmethod
    def load(cls, path, properties) -> "TabularWorkload":
        path = Path(path)
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            if "status" not in header:
                raise ConfigurationError(f"{path}: table has no status column")
            missing = [p for p in properties if p not in header]
            if missing:
                raise ConfigurationError(f"{path}: table lacks property columns {missing}")
            reserved = set(properties) | {"status", "cost_s", "reason"}
            dims = [c for c in header if c not in reserved]
            rows = {}
            for lineno, row in enumerate(reader, start=2):
                key = tuple(_key(row[d]) for d in dims)
                if key in rows:
                    raise ConfigurationError(f"{path}:{lineno}: duplicate row for {key}")
                rows[key] = row
        return cls(path, dims, list(properties), rows, "cost_s" in header)

    def validate(self, space: ProbabilitySpace) -> None:
        if sorted(self.dimensions) != sorted(space.names):
            raise ConfigurationError(
                f"{self.path}: columns {self.dimensions} do not match space {space.names}"
            )
        for key in self.rows:
            for dim, cell in zip(self.dimensions, key):
                d = space.dimension(dim)
                if cell not in {_key(v) for v in d.values}:
                    raise ConfigurationError(f"{self.path}: {dim}={cell} outside the space")

    def lookup(self, config: Mapping[str, Any]) -> dict | None:
        try:
            key = tuple(_key(config[d]) for d in self.dimensions)
        except KeyError:
            return None
        return self.rows.get(key)


def tabular_measure(workload: TabularWorkload, config: Mapping[str, Any], experiment: Experiment) -> MeasurementResult:
    row = workload.lookup(config)
    if row is None:
        return failed(experiment, UNCHARACTERIZED)
    cost = float(row["cost_s"]) if workload.has_cost and row.get("cost_s") else None
    status = (row.get("status") or OK).strip()
    if status != OK:
        return failed(experiment, row.get("reason") or "marked failed in table", cost)
    try:
        values = {p: float(row[p]) for p in experiment.measured_properties}
    except (KeyError, ValueError) as exc:
        return failed(experiment, f"unreadable table row: {exc}", cost)
    return succeeded(experiment, values, cost)


_TABLES: dict[tuple, TabularWorkload] = {}
_TABLES_LOCK = threading.Lock()


def load_table(path, properties) -> TabularWorkload:
    """Load once per (path, mtime, properties); read-only afterwards."""
    p = Path(path).resolve()
    key = (str(p), p.stat().st_mtime_ns, tuple(properties))
    with _TABLES_LOCK:
        if key not in _TABLES:
            _TABLES[key] = TabularWorkload.load(p, properties)
        return _TABLES[key]


def _tabular_factory(experiment: Experiment, store=None) -> Actuator:
    path = experiment.actuator.get("path")
    if not path:
        raise ConfigurationError(f"experiment {experiment.name!r}: tabular actuator needs a path")
    workload = load_table(path, experiment.measured_properties)
    return lambda config: tabular_measure(workload, config, experiment)


# -- synthetic surfaces ------------------------------------------------------


@dataclass
class SyntheticSurface:
    """Closed-form objective over encoded configurations.

    Numeric dimensions encode as their value, categorical ones as the index
    of the value in ``levels`` (or its position in ``effects``). The surface
    is::

        base = offset + sum(coef[d] * x_d) + sum(effects[d][value])
               + sum(w * x_a * x_b for each interaction)
        value = scale[v] * base + shift[v]   (v = value of the affine_by dimension)

    plus optional gaussian noise seeded per (seed, configuration).
    """

    coefficients: dict = field(default_factory=dict)
    effects: dict = field(default_factory=dict)
    interactions: list = field(default_factory=list)
    offset: float = 0.0
    levels: dict = field(default_factory=dict)
    affine_by: dict | None = None
    noise_sigma: float = 0.0
    seed: int = 0
    fail_when: list = field(default_factory=list)

    @classmethod
    def from_settings(cls, settings: Mapping) -> "SyntheticSurface":
        noise = settings.get("noise") or {"kind": "none"}
        if isinstance(noise, str):
            noise = {"kind": noise}
        if noise.get("kind", "none") not in ("none", "gaussian"):
            raise ConfigurationError(f"unknown noise model {noise!r}")
        sigma = float(noise.get("sigma", 0.0)) if noise.get("kind") == "gaussian" else 0.0
        effects = {
            d: {render_value(normalize_value(k)): float(v) for k, v in table.items()}
            for d, table in (settings.get("effects") or {}).items()
        }
        affine = settings.get("affine_by")
        if affine:
            affine = {
                "dimension": affine["dimension"],
                "values": {
                    render_value(normalize_value(k)): (float(v[0]), float(v[1]))
                    for k, v in affine["values"].items()
                },
            }
        return cls(
            coefficients={k: float(v) for k, v in (settings.get("coefficients") or {}).items()},
            effects=effects,
            interactions=list(settings.get("interactions") or []),
            offset=float(settings.get("offset", 0.0)),
            levels={
                d: [render_value(normalize_value(v)) for v in vals]
                for d, vals in (settings.get("levels") or {}).items()
            },
            affine_by=affine,
            noise_sigma=sigma,
            seed=int(settings.get("seed", 0)),
            fail_when=list(settings.get("fail_when") or []),
        )

    def encode(self, dim: str, value: Any) -> float:
        value = normalize_value(value)
        if not isinstance(value, str):
            return float(value)
        text = render_value(value)
        if dim in self.levels:
            return float(self.levels[dim].index(text))
        if dim in self.effects:
            return float(list(self.effects[dim]).index(text))
        raise ConfigurationError(f"categorical dimension {dim!r} has no encoding levels")

    def is_failure(self, config: Mapping[str, Any]) -> bool:
        for cond in self.fail_when:
            if all(render_value(normalize_value(config.get(d))) == render_value(normalize_value(v))
                   for d, v in cond.items()):
                return True
        return False

    def evaluate(self, config: Mapping[str, Any]) -> float:
        """Noise-free surface value."""
        total = self.offset
        for d, coef in self.coefficients.items():
            total += coef * self.encode(d, config[d])
        for d, table in self.effects.items():
            total += table.get(render_value(normalize_value(config[d])), 0.0)
        for term in self.interactions:
            a, b = term["dims"]
            total += float(term["weight"]) * self.encode(a, config[a]) * self.encode(b, config[b])
        if self.affine_by:
            value = render_value(normalize_value(config[self.affine_by["dimension"]]))
            scale, shift = self.affine_by["values"].get(value, (1.0, 0.0))
            total = scale * total + shift
        return total

    def noise(self, config: Mapping[str, Any]) -> float:
        if self.noise_sigma <= 0:
            return 0.0
        digest = int(canonical_id(Configuration(config))[:16], 16)
        rng = np.random.default_rng([self.seed, digest])
        return float(rng.normal(0.0, self.noise_sigma))


def synthetic_measure(surface: SyntheticSurface, config: Mapping[str, Any], experiment: Experiment,
                      prop: str | None = None) -> MeasurementResult:
    if surface.is_failure(config):
        return failed(experiment, "configuration is infeasible")
    value = surface.evaluate(config) + surface.noise(config)
    props = [prop] if prop else list(experiment.measured_properties)
    return succeeded(experiment, {p: value for p in props})


def _synthetic_factory(experiment: Experiment, store=None) -> Actuator:
    surface = SyntheticSurface.from_settings(experiment.actuator)
    return lambda config: synthetic_measure(surface, config, experiment)


# -- external command --------------------------------------------------------


def command_measure(settings: Mapping, config: Mapping[str, Any], experiment: Experiment) -> MeasurementResult:
    """Run a command template; the last stdout line must be a JSON object of properties.

    Placeholders use ``$name`` / ``${name}`` syntax and are filled from the
    configuration and then the experiment parameters.
    """
    template = settings.get("command")
    if not template:
        raise ConfigurationError(f"experiment {experiment.name!r}: command actuator needs a command")
    values = {k: render_value(v) for k, v in experiment.parameters.items()}
    values.update({k: render_value(v) for k, v in config.items()})
    argv = shlex.split(template) if isinstance(template, str) else list(template)
    try:
        argv = [string.Template(a).substitute(values) for a in argv]
    except (KeyError, ValueError) as exc:
        return failed(experiment, f"bad command template: {exc}")
    timeout = float(settings.get("timeout", 600))
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout,
                              cwd=settings.get("cwd"))
    except subprocess.TimeoutExpired:
        return failed(experiment, "timeout")
    except OSError as exc:
        return failed(experiment, f"could not start command: {exc}")
    if proc.returncode != 0:
        return failed(experiment, f"exit status {proc.returncode}: {proc.stderr[-500:]}")
    lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
    try:
        doc = json.loads(lines[-1])
        if not isinstance(doc, dict):
            raise ValueError("not an object")
        return succeeded(experiment, {k: float(v) for k, v in doc.items()})
    except (IndexError, ValueError, TypeError) as exc:
        return failed(experiment, f"unparseable output ({exc}): {proc.stderr[-500:]}")


def _command_factory(experiment: Experiment, store=None) -> Actuator:
    return lambda config: command_measure(experiment.actuator, config, experiment)


register_actuator("tabular", _tabular_factory)
register_actuator("synthetic", _synthetic_factory)
register_actuator("command", _command_factory)
