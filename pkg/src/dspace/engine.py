"""Discovery spaces: a probability space and an action space bound to a store.

``DiscoverySpace.sample`` is the only way data enters a space. If the
shared store already holds a result for the configuration and experiment,
it is reused instead of measured again; either way the configuration is
appended to the space's own sampling record. ``read`` returns only what the
record references, so results written by other spaces stay invisible until
this space samples them.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import threading
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from typing import Any

from .actuators import resolve_actuator
from .errors import ConfigurationError, EncapsulationError, IntegrityError, PolicyViolation
from .space import ActionSpace, Configuration, Experiment, ProbabilitySpace, canonical_id
from .store import MeasurementResult, SampleStore, dumps

log = logging.getLogger(__name__)

MEASURED = "measured"
REUSED = "reused"
PREDICTED = "predicted"

REUSE_ONLY = "reuse-only"
ALWAYS_MEASURE = "always-measure"


@dataclass(frozen=True)
class Sample:
    """A configuration plus the property values its experiments produced."""

    configuration: Configuration
    values: dict
    provenance: dict
    origin: str
    seq: int
    operation_id: str
    failures: dict = field(default_factory=dict)

    @property
    def entity_id(self) -> str:
        return canonical_id(self.configuration)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_document(self) -> dict:
        return {
            "configuration": self.configuration.as_dict(),
            "entity_id": self.entity_id,
            "failures": dict(self.failures),
            "operation_id": self.operation_id,
            "origin": self.origin,
            "provenance": dict(self.provenance),
            "seq": self.seq,
            "values": dict(self.values),
        }


def measure(actions: Iterable[Experiment], config: Configuration, store=None) -> list[MeasurementResult]:
    """Run every experiment on ``config``; one result each, ok or failed."""
    return [resolve_actuator(e, store)(config) for e in actions]


def _assemble(config, results: list[MeasurementResult], actions: ActionSpace) -> tuple[dict, dict, dict]:
    values, provenance, failures = {}, {}, {}
    for r in results:
        exp = actions.experiment(r.experiment_name)
        if r.ok:
            for p in exp.measured_properties:
                values[p] = r.property_values[p].value
                provenance[p] = exp.name
        else:
            failures[exp.name] = r.reason
    return values, provenance, failures


class DiscoverySpace:
    """A probability space times an action space, plus its sampling record."""

    def __init__(
        self,
        space_id: str,
        space: ProbabilitySpace,
        actions: ActionSpace,
        store: SampleStore,
        reuse_policy: str = REUSE_ONLY,
    ):
        if reuse_policy not in (REUSE_ONLY, ALWAYS_MEASURE):
            raise ConfigurationError(f"unknown reuse policy {reuse_policy!r}")
        self.space_id = space_id
        self.space = space
        self.actions = actions
        self.store = store
        self.reuse_policy = reuse_policy
        self.invocations: Counter = Counter()
        self._actuators: dict[str, Any] = {}
        self._lock = threading.Lock()

    # -- construction --------------------------------------------------------

    @classmethod
    def create(cls, store: SampleStore, space_id: str, space: ProbabilitySpace,
               actions: ActionSpace, reuse_policy: str = REUSE_ONLY) -> "DiscoverySpace":
        ds = cls(space_id, space, actions, store, reuse_policy)
        store.save_space(space_id, ds.to_document())
        return ds

    @classmethod
    def open(cls, store: SampleStore, space_id: str) -> "DiscoverySpace":
        doc = store.load_space(space_id)
        if doc is None:
            raise ConfigurationError(f"no space {space_id!r} in {store.path}")
        return cls(
            space_id,
            ProbabilitySpace.from_document(doc["space"]),
            ActionSpace.from_document(doc["actions"]),
            store,
            doc.get("reuse_policy", REUSE_ONLY),
        )

    def to_document(self) -> dict:
        return {
            "actions": self.actions.to_document(),
            "name": self.space_id,
            "reuse_policy": self.reuse_policy,
            "space": self.space.to_document(),
        }

    # -- sampling ------------------------------------------------------------

    def _actuator(self, experiment: Experiment):
        if experiment.name not in self._actuators:
            self._actuators[experiment.name] = resolve_actuator(experiment, self.store)
        return self._actuators[experiment.name]

    def sample(self, config: Mapping[str, Any], operation_id: str,
               experiments: Iterable[str] | None = None) -> Sample:
        """Sample ``config`` for ``operation_id``, measuring only what the store lacks.

        ``experiments`` restricts which experiments of the action space apply;
        by default all of them do.
        """
        config = self.space.validate(config)
        if experiments is None:
            exps = list(self.actions)
        else:
            try:
                exps = [self.actions.experiment(n) for n in experiments]
            except KeyError as exc:
                raise EncapsulationError(f"experiment {exc} not in the action space") from None
        entity_id = canonical_id(config)
        with self._lock:
            existing = self.store.get_by_id(entity_id)
            used: list[MeasurementResult] = []
            measured_any = False
            for exp in exps:
                prior = existing.result_for(exp.name, exp.parameters_key) if existing else None
                if prior is not None and self.reuse_policy == REUSE_ONLY:
                    used.append(prior)
                    continue
                result = self._actuator(exp)(config)
                self.invocations[(entity_id, exp.name)] += 1
                try:
                    _, rid = self.store.insert_result(
                        config, result, allow_repeat=self.reuse_policy == ALWAYS_MEASURE
                    )
                except PolicyViolation:
                    # Another writer stored this measurement first; theirs wins.
                    ent = self.store.get_by_id(entity_id)
                    used.append(ent.result_for(exp.name, exp.parameters_key))
                    continue
                used.append(_with_id(result, rid))
                measured_any = True
            if exps and all(e.kind == "surrogate" for e in exps):
                origin = PREDICTED
            else:
                origin = MEASURED if measured_any else REUSED
            entry = self.store.append_record(
                self.space_id, operation_id, entity_id, origin, [r.result_id for r in used]
            )
        values, provenance, failures = _assemble(config, used, self.actions)
        log.debug("sampled %s for %s (%s)", entity_id, operation_id, origin)
        return Sample(config, values, provenance, origin, entry.seq, operation_id, failures)

    # -- reading -------------------------------------------------------------

    def read(self, operation_id: str | None = None) -> list[Sample]:
        """Samples referenced by the sampling record, in record order."""
        entries = self.store.records(self.space_id)
        if operation_id is not None:
            entries = [e for e in entries if e.operation_id == operation_id]
        results = self.store.results_by_ids(rid for e in entries for rid in e.result_ids)
        samples = []
        for e in entries:
            ent = self.store.get_by_id(e.entity_id)
            if ent is None:
                raise IntegrityError(f"sampling record references missing entity {e.entity_id}")
            used = []
            for rid in e.result_ids:
                if rid not in results:
                    raise IntegrityError(
                        f"sampling record of entity {e.entity_id} references missing result {rid}"
                    )
                used.append(results[rid])
            config = self.space.configuration(ent.assignments)
            values, provenance, failures = _assemble(config, used, self.actions)
            samples.append(Sample(config, values, provenance, e.origin, e.seq, e.operation_id, failures))
        return samples

    def operations(self) -> list[str]:
        seen = {}
        for e in self.store.records(self.space_id):
            seen.setdefault(e.operation_id, None)
        return list(seen)

    def operation_log_csv(self) -> str:
        """CSV of (operation_id, seq, entity_id, origin, timestamp) rows."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["operation_id", "seq", "entity_id", "origin", "timestamp"])
        for e in self.store.records(self.space_id):
            w.writerow([e.operation_id, e.seq, e.entity_id, e.origin, e.timestamp])
        return buf.getvalue()

    def unique_operation_id(self, prefix: str) -> str:
        ops = set(self.operations())
        if prefix not in ops:
            return prefix
        n = 2
        while f"{prefix}-{n}" in ops:
            n += 1
        return f"{prefix}-{n}"


def _with_id(result: MeasurementResult, rid: int) -> MeasurementResult:
    return MeasurementResult.from_document(result.to_document(), rid)


def create_space(definition: Mapping, store: SampleStore) -> DiscoverySpace:
    """Create a space from a parsed YAML definition ``{space: {...}, actions: [...]}``."""
    space_doc = definition["space"]
    space_id = space_doc["name"]
    space = ProbabilitySpace.from_document(space_doc)
    actions = ActionSpace.from_document(definition.get("actions", []))
    return DiscoverySpace.create(
        store, space_id, space, actions, definition.get("reuse_policy", REUSE_ONLY)
    )


def samples_to_jsonl(samples: Iterable[Sample]) -> str:
    return "".join(dumps(s.to_document()) + "\n" for s in samples)


def samples_to_csv(samples: list[Sample], space: ProbabilitySpace, actions: ActionSpace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    props = actions.properties
    w.writerow(["operation_id", "seq", "entity_id", "origin", *space.names, *props, "failures"])
    for s in samples:
        w.writerow([
            s.operation_id, s.seq, s.entity_id, s.origin,
            *(s.configuration[n] for n in space.names),
            *(repr(s.values[p]) if p in s.values else "" for p in props),
            json.dumps(s.failures, sort_keys=True) if s.failures else "",
        ])
    return buf.getvalue()
