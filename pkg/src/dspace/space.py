"""Configuration spaces, configurations, experiments and action spaces.

Everything here is immutable after construction. A ``ProbabilitySpace`` is
the scope plus selection criteria of a study (dimensions with per-dimension
probability weights); an ``ActionSpace`` lists the experiments that can
measure a configuration and which properties each one provides.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Any, Union

import numpy as np

from .errors import ConfigurationError, EncapsulationError, MappingError

Value = Union[str, int, float]

CATEGORICAL = "categorical"
DISCRETE = "discrete"
_KIND_ALIASES = {
    "categorical": CATEGORICAL,
    "discrete": DISCRETE,
    "discrete-numeric": DISCRETE,
    "numeric": DISCRETE,
}


def normalize_value(value: Any, kind: str | None = None) -> Value:
    """Coerce ``value`` into the canonical Python type used for comparisons.

    Categorical values are strings (YAML booleans become "true"/"false").
    Numeric values are ints when integral, floats otherwise.
    """
    if kind == CATEGORICAL:
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, (int, float)):
            return render_value(value)
        return str(value)
    if isinstance(value, bool):
        if kind == DISCRETE:
            raise ConfigurationError(f"boolean {value!r} is not a numeric value")
        return "true" if value else "false"
    if isinstance(value, (Fraction, Decimal)):
        value = float(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ConfigurationError(f"non-finite value {value!r}")
        if value.is_integer():
            return int(value)
        return value
    if isinstance(value, int):
        return value
    if kind == DISCRETE:
        try:
            return normalize_value(float(value), DISCRETE)
        except (TypeError, ValueError):
            raise ConfigurationError(f"{value!r} is not numeric") from None
    return str(value)


def render_value(value: Value) -> str:
    """Canonical decimal text: integers bare, others to 12 significant digits."""
    if isinstance(value, str):
        return value
    value = normalize_value(value)
    if isinstance(value, int):
        return str(value)
    return format(value, ".12g")


@dataclass(frozen=True)
class Dimension:
    name: str
    values: tuple
    kind: str = CATEGORICAL
    weights: tuple | None = None

    def __post_init__(self):
        kind = _KIND_ALIASES.get(self.kind)
        if kind is None:
            raise ConfigurationError(f"dimension {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        values = tuple(normalize_value(v, kind) for v in self.values)
        if not values:
            raise ConfigurationError(f"dimension {self.name!r} has no values")
        if len(set(values)) != len(values):
            raise ConfigurationError(f"dimension {self.name!r} has duplicate values")
        object.__setattr__(self, "values", values)
        if self.weights is not None:
            weights = tuple(float(w) for w in self.weights)
            if len(weights) != len(values):
                raise ConfigurationError(
                    f"dimension {self.name!r}: {len(weights)} weights for {len(values)} values"
                )
            if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
                raise ConfigurationError(
                    f"dimension {self.name!r}: weights must be non-negative and sum to 1"
                )
            object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return len(self.values)

    def index(self, value: Any) -> int:
        try:
            return self.values.index(normalize_value(value, self.kind))
        except (ValueError, ConfigurationError):
            raise EncapsulationError(
                f"value {value!r} not admissible for dimension {self.name!r}"
            ) from None

    def __contains__(self, value: Any) -> bool:
        try:
            return normalize_value(value, self.kind) in self.values
        except ConfigurationError:
            return False

    def probabilities(self) -> np.ndarray:
        if self.weights is None:
            return np.full(self.size, 1.0 / self.size)
        return np.asarray(self.weights)

    def to_document(self) -> dict:
        doc = {"name": self.name, "kind": self.kind, "values": list(self.values)}
        if self.weights is not None:
            doc["weights"] = list(self.weights)
        return doc


class Configuration(Mapping):
    """An immutable assignment of one value to each dimension.

    Equality and hashing ignore the order in which assignments were given.
    """

    __slots__ = ("_data", "_hash")

    def __init__(self, assignments: Mapping[str, Any] | None = None, **kwargs):
        data = dict(assignments or {})
        data.update(kwargs)
        self._data = {str(k): normalize_value(v) for k, v in data.items()}
        self._hash = None

    def __getitem__(self, key):
        return self._data[key]

    def __iter__(self):
        return iter(self._data)

    def __len__(self):
        return len(self._data)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._data.items()))
        return self._hash

    def __eq__(self, other):
        if isinstance(other, Mapping):
            return self._data == dict(other)
        return NotImplemented

    def __repr__(self):
        inner = ", ".join(f"{k}={v!r}" for k, v in self._data.items())
        return f"Configuration({inner})"

    def replace(self, **changes) -> "Configuration":
        data = dict(self._data)
        data.update(changes)
        return Configuration(data)

    def as_dict(self) -> dict:
        return dict(self._data)

    @property
    def id(self) -> str:
        return canonical_id(self)


def canonical_id(configuration: Mapping[str, Any], space: "ProbabilitySpace | None" = None) -> str:
    """Deterministic digest of a configuration, independent of assignment order.

    When ``space`` is given the configuration is validated against it first;
    the digest itself depends only on the (dimension, value) pairs, so equal
    configurations from different studies share an id.
    """
    if space is not None:
        space.validate(configuration)
    pairs = []
    for name in sorted(configuration):
        value = normalize_value(configuration[name])
        tag = "s" if isinstance(value, str) else "n"
        pairs.append([name, f"{tag}:{render_value(value)}"])
    payload = json.dumps(pairs, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:32]


@dataclass(frozen=True)
class ProbabilitySpace:
    """Ordered finite dimensions plus per-dimension selection weights."""

    dimensions: tuple = ()

    def __post_init__(self):
        dims = tuple(self.dimensions)
        names = [d.name for d in dims]
        if len(set(names)) != len(names):
            raise ConfigurationError("dimension names must be unique")
        object.__setattr__(self, "dimensions", dims)

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dimensions]

    def dimension(self, name: str) -> Dimension:
        for d in self.dimensions:
            if d.name == name:
                return d
        raise KeyError(name)

    def contains(self, configuration: Mapping[str, Any]) -> bool:
        if set(configuration) != set(self.names):
            return False
        return all(configuration[d.name] in d for d in self.dimensions)

    def validate(self, configuration: Mapping[str, Any]) -> Configuration:
        if set(configuration) != set(self.names):
            raise EncapsulationError(
                f"configuration dimensions {sorted(configuration)} do not match space {self.names}"
            )
        for d in self.dimensions:
            if configuration[d.name] not in d:
                raise EncapsulationError(
                    f"value {configuration[d.name]!r} not admissible for dimension {d.name!r}"
                )
        return self.configuration(configuration)

    def configuration(self, assignments: Mapping[str, Any]) -> Configuration:
        """Build a configuration with values coerced to each dimension's kind."""
        return Configuration(
            {d.name: normalize_value(assignments[d.name], d.kind) for d in self.dimensions}
        )

    def to_document(self) -> dict:
        return {"dimensions": [d.to_document() for d in self.dimensions]}

    @classmethod
    def from_document(cls, doc: Mapping) -> "ProbabilitySpace":
        dims = []
        for d in doc.get("dimensions", []):
            dims.append(
                Dimension(
                    name=d["name"],
                    kind=d.get("kind", CATEGORICAL),
                    values=tuple(d["values"]),
                    weights=tuple(d["weights"]) if d.get("weights") is not None else None,
                )
            )
        return cls(tuple(dims))


def cardinality(space: ProbabilitySpace) -> int:
    return math.prod(d.size for d in space.dimensions)


def enumerate_space(space: ProbabilitySpace) -> Iterator[Configuration]:
    """Every configuration once, lexicographic in declaration and value order."""
    names = space.names
    for combo in itertools.product(*(d.values for d in space.dimensions)):
        yield Configuration(dict(zip(names, combo)))


def as_rng(rng: int | np.random.Generator | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def draw(space: ProbabilitySpace, rng: int | np.random.Generator | None = None) -> Configuration:
    """Draw one configuration, each dimension independently by its weights."""
    gen = as_rng(rng)
    data = {}
    for d in space.dimensions:
        if d.weights is None:
            i = int(gen.integers(d.size))
        else:
            i = int(gen.choice(d.size, p=d.probabilities()))
        data[d.name] = d.values[i]
    return Configuration(data)


def _canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class Experiment:
    name: str
    actuator: dict = field(default_factory=dict)
    measured_properties: tuple = ()
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        props = tuple(self.measured_properties)
        if not props:
            raise ConfigurationError(f"experiment {self.name!r} measures no properties")
        if len(set(props)) != len(props):
            raise ConfigurationError(f"experiment {self.name!r} lists a property twice")
        object.__setattr__(self, "measured_properties", props)
        object.__setattr__(self, "actuator", dict(self.actuator))
        object.__setattr__(self, "parameters", dict(self.parameters or {}))

    @property
    def kind(self) -> str:
        return self.actuator.get("kind", "")

    @property
    def parameters_key(self) -> str:
        return _canonical_json(self.parameters)

    def to_document(self) -> dict:
        doc = {
            "name": self.name,
            "actuator": dict(self.actuator),
            "measures": list(self.measured_properties),
        }
        if self.parameters:
            doc["parameters"] = dict(self.parameters)
        return doc

    @classmethod
    def from_document(cls, doc: Mapping) -> "Experiment":
        return cls(
            name=doc["name"],
            actuator=dict(doc.get("actuator", {})),
            measured_properties=tuple(doc.get("measures", doc.get("measured_properties", ()))),
            parameters=dict(doc.get("parameters") or {}),
        )


@dataclass(frozen=True)
class ActionSpace:
    experiments: tuple = ()

    def __post_init__(self):
        exps = tuple(self.experiments)
        names = [e.name for e in exps]
        if len(set(names)) != len(names):
            raise ConfigurationError("experiment names must be unique")
        seen: dict[str, str] = {}
        for e in exps:
            for p in e.measured_properties:
                if p in seen:
                    raise ConfigurationError(
                        f"property {p!r} is measured by both {seen[p]!r} and {e.name!r}"
                    )
                seen[p] = e.name
        object.__setattr__(self, "experiments", exps)

    def __iter__(self):
        return iter(self.experiments)

    def __len__(self):
        return len(self.experiments)

    def experiment(self, name: str) -> Experiment:
        for e in self.experiments:
            if e.name == name:
                return e
        raise KeyError(name)

    @property
    def properties(self) -> list[str]:
        return [p for e in self.experiments for p in e.measured_properties]

    def provider(self, prop: str) -> Experiment:
        """The experiment that measures ``prop``."""
        for e in self.experiments:
            if prop in e.measured_properties:
                return e
        raise ConfigurationError(f"no experiment in the action space measures {prop!r}")

    def includes(self, experiment_name: str, parameters_key: str) -> bool:
        return any(
            e.name == experiment_name and e.parameters_key == parameters_key
            for e in self.experiments
        )

    def with_experiment(self, experiment: Experiment) -> "ActionSpace":
        return ActionSpace(self.experiments + (experiment,))

    def to_document(self) -> list:
        return [e.to_document() for e in self.experiments]

    @classmethod
    def from_document(cls, doc) -> "ActionSpace":
        return cls(tuple(Experiment.from_document(e) for e in doc or []))


@dataclass(frozen=True)
class ValueMapping:
    """Per-dimension bijections from source values to target values.

    Dimensions not listed map by identity.
    """

    mappings: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for dim, table in dict(self.mappings or {}).items():
            table = {normalize_value(k): normalize_value(v) for k, v in table.items()}
            if len(set(table.values())) != len(table):
                raise MappingError(f"mapping for dimension {dim!r} is not injective")
            clean[dim] = table
        object.__setattr__(self, "mappings", clean)

    def validate(self, source: ProbabilitySpace) -> None:
        """Check the mapping is total over each covered source dimension."""
        for dim, table in self.mappings.items():
            try:
                values = source.dimension(dim).values
            except KeyError:
                raise MappingError(f"mapping covers unknown dimension {dim!r}") from None
            missing = [v for v in values if v not in table]
            if missing:
                raise MappingError(f"mapping for {dim!r} does not cover {missing}")

    def inverse(self) -> "ValueMapping":
        return ValueMapping({d: {v: k for k, v in t.items()} for d, t in self.mappings.items()})

    def to_document(self) -> dict:
        return {d: dict(t) for d, t in self.mappings.items()}


def map_configuration(config: Mapping[str, Any], mapping: ValueMapping) -> Configuration:
    """Translate a source configuration to its equivalent in the target space."""
    data = dict(config)
    for dim, table in mapping.mappings.items():
        if dim not in data:
            continue
        value = normalize_value(data[dim])
        if value not in table:
            raise MappingError(f"value {value!r} of dimension {dim!r} is not mapped")
        data[dim] = table[value]
    return Configuration(data)
