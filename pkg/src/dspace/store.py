"""The common-context sample store.

A single SQLite file holds every measured configuration in one generic
schema: entities keyed by ``canonical_id``, their measurement results with
provenance, plus the space definitions and sampling records that the
discovery engine persists alongside. SQLite's file locking makes the store
safe for concurrent readers and writers in separate processes; WAL mode
lets readers proceed while a writer commits.
"""

from __future__ import annotations

import json
import math
import os
import sqlite3
import threading
import time
from collections.abc import Iterator, Mapping
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import DuplicateIdError, ImportFormatError, IntegrityError, PolicyViolation
from .space import ActionSpace, Configuration, ProbabilitySpace, canonical_id

SCHEMA_HEADER = {"schema": "dspace-store/1"}
OK = "ok"
FAILED = "failed"

_DDL = """
CREATE TABLE IF NOT EXISTS entities (
    entity_id   TEXT PRIMARY KEY,
    assignments TEXT NOT NULL,
    created_at  INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS results (
    result_id       INTEGER PRIMARY KEY AUTOINCREMENT,
    entity_id       TEXT NOT NULL REFERENCES entities(entity_id),
    experiment_name TEXT NOT NULL,
    parameters      TEXT NOT NULL,
    payload         TEXT NOT NULL,
    status          TEXT NOT NULL,
    measured_at     INTEGER NOT NULL
);
CREATE INDEX IF NOT EXISTS results_by_entity ON results(entity_id, experiment_name, parameters);
CREATE TABLE IF NOT EXISTS spaces (
    space_id   TEXT PRIMARY KEY,
    definition TEXT NOT NULL,
    created_at INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS records (
    record_id    INTEGER PRIMARY KEY AUTOINCREMENT,
    space_id     TEXT NOT NULL,
    operation_id TEXT NOT NULL,
    seq          INTEGER NOT NULL,
    entity_id    TEXT NOT NULL,
    origin       TEXT NOT NULL,
    result_ids   TEXT NOT NULL,
    timestamp    INTEGER NOT NULL,
    UNIQUE(space_id, operation_id, seq)
);
CREATE INDEX IF NOT EXISTS records_by_space ON records(space_id, record_id);
"""


def now_ns() -> int:
    return time.time_ns()


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class PropertyValue:
    value: float | None
    unit: str | None = None
    status: str = OK

    def to_document(self) -> dict:
        return {"status": self.status, "unit": self.unit, "value": self.value}

    @classmethod
    def from_document(cls, doc) -> "PropertyValue":
        if not isinstance(doc, Mapping):
            return cls(float(doc))
        return cls(doc.get("value"), doc.get("unit"), doc.get("status", OK))


@dataclass(frozen=True)
class MeasurementResult:
    """Outcome of one experiment applied to one configuration.

    ``cost_s`` is the (possibly simulated) measurement time; metrics use it to
    turn reuse counts into time savings.
    """

    experiment_name: str
    property_values: dict = field(default_factory=dict)
    status: str = OK
    reason: str | None = None
    experiment_parameters: dict = field(default_factory=dict)
    measured_at: int = 0
    cost_s: float | None = None
    result_id: int | None = field(default=None, compare=False)

    def __post_init__(self):
        values = {
            k: v if isinstance(v, PropertyValue) else PropertyValue.from_document(v)
            for k, v in dict(self.property_values).items()
        }
        object.__setattr__(self, "property_values", values)
        object.__setattr__(self, "experiment_parameters", dict(self.experiment_parameters or {}))
        if self.status not in (OK, FAILED):
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == OK:
            for name, pv in values.items():
                if pv.value is None or not math.isfinite(pv.value):
                    raise ValueError(f"ok result has non-finite value for {name!r}")
        elif not self.reason:
            raise ValueError("failed result requires a reason")
        if not self.measured_at:
            object.__setattr__(self, "measured_at", now_ns())

    @property
    def ok(self) -> bool:
        return self.status == OK

    @property
    def parameters_key(self) -> str:
        return dumps(self.experiment_parameters)

    def values(self) -> dict[str, float]:
        return {k: v.value for k, v in self.property_values.items() if v.status == OK}

    def to_document(self) -> dict:
        return {
            "cost_s": self.cost_s,
            "experiment_name": self.experiment_name,
            "experiment_parameters": self.experiment_parameters,
            "measured_at": self.measured_at,
            "property_values": {k: v.to_document() for k, v in self.property_values.items()},
            "reason": self.reason,
            "status": self.status,
        }

    @classmethod
    def from_document(cls, doc: Mapping, result_id: int | None = None) -> "MeasurementResult":
        return cls(
            experiment_name=doc["experiment_name"],
            property_values=doc.get("property_values", {}),
            status=doc.get("status", OK),
            reason=doc.get("reason"),
            experiment_parameters=doc.get("experiment_parameters", {}),
            measured_at=doc["measured_at"],
            cost_s=doc.get("cost_s"),
            result_id=result_id,
        )


@dataclass(frozen=True)
class StoredEntity:
    entity_id: str
    assignments: Configuration
    results: tuple = ()
    created_at: int = 0

    def result_for(self, experiment_name: str, parameters_key: str) -> MeasurementResult | None:
        """Latest result of the given experiment, if any."""
        found = None
        for r in self.results:
            if r.experiment_name == experiment_name and r.parameters_key == parameters_key:
                found = r
        return found

    def to_document(self) -> dict:
        return {
            "assignments": self.assignments.as_dict(),
            "created_at": self.created_at,
            "entity_id": self.entity_id,
            "results": [r.to_document() for r in self.results],
        }


@dataclass(frozen=True)
class RecordEntry:
    record_id: int
    space_id: str
    operation_id: str
    seq: int
    entity_id: str
    origin: str
    result_ids: tuple
    timestamp: int


class SampleStore:
    """Handle on a store file. Cheap to create; one per process or thread is fine."""

    def __init__(self, path: str | os.PathLike, timeout: float = 60.0):
        self.path = Path(path)
        self.timeout = timeout
        self._local = threading.local()
        self._conn().executescript(_DDL)

    # -- connection plumbing -------------------------------------------------

    def _conn(self) -> sqlite3.Connection:
        conn = getattr(self._local, "conn", None)
        pid = getattr(self._local, "pid", None)
        if conn is None or pid != os.getpid():
            self.path.parent.mkdir(parents=True, exist_ok=True)
            conn = sqlite3.connect(str(self.path), timeout=self.timeout, isolation_level=None)
            conn.execute("PRAGMA journal_mode=WAL")
            conn.execute("PRAGMA synchronous=FULL")
            conn.execute(f"PRAGMA busy_timeout={int(self.timeout * 1000)}")
            self._local.conn = conn
            self._local.pid = os.getpid()
        return conn

    @contextmanager
    def _tx(self) -> Iterator[sqlite3.Connection]:
        """Write transaction: takes the database write lock up front."""
        conn = self._conn()
        conn.execute("BEGIN IMMEDIATE")
        try:
            yield conn
        except BaseException:
            conn.execute("ROLLBACK")
            raise
        else:
            conn.execute("COMMIT")

    @contextmanager
    def _snapshot(self) -> Iterator[sqlite3.Connection]:
        """Read transaction: every query inside sees one consistent snapshot."""
        conn = self._conn()
        conn.execute("BEGIN")
        try:
            yield conn
        finally:
            conn.execute("COMMIT")

    def close(self) -> None:
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
            self._local.conn = None

    # -- entities and results ------------------------------------------------

    def put_result(
        self,
        assignments: Mapping[str, Any],
        result: MeasurementResult,
        allow_repeat: bool = False,
    ) -> str:
        """Store ``result`` for the configuration, creating the entity if needed."""
        entity_id, _ = self.insert_result(assignments, result, allow_repeat=allow_repeat)
        return entity_id

    def insert_result(
        self,
        assignments: Mapping[str, Any],
        result: MeasurementResult,
        allow_repeat: bool = False,
    ) -> tuple[str, int]:
        """Like :meth:`put_result` but also returns the new result's row id."""
        config = Configuration(assignments)
        entity_id = canonical_id(config)
        with self._tx() as conn:
            self._ensure_entity(conn, entity_id, config, now_ns())
            if not allow_repeat:
                dup = conn.execute(
                    "SELECT 1 FROM results WHERE entity_id=? AND experiment_name=? AND parameters=?",
                    (entity_id, result.experiment_name, result.parameters_key),
                ).fetchone()
                if dup:
                    raise PolicyViolation(
                        f"entity {entity_id} already has a result for {result.experiment_name!r}"
                    )
            cur = conn.execute(
                "INSERT INTO results(entity_id, experiment_name, parameters, payload, status, measured_at)"
                " VALUES (?,?,?,?,?,?)",
                (
                    entity_id,
                    result.experiment_name,
                    result.parameters_key,
                    dumps(result.to_document()),
                    result.status,
                    result.measured_at,
                ),
            )
            return entity_id, cur.lastrowid

    @staticmethod
    def _ensure_entity(conn, entity_id: str, config: Configuration, created_at: int) -> None:
        row = conn.execute(
            "SELECT assignments FROM entities WHERE entity_id=?", (entity_id,)
        ).fetchone()
        if row is None:
            conn.execute(
                "INSERT INTO entities(entity_id, assignments, created_at) VALUES (?,?,?)",
                (entity_id, dumps(config.as_dict()), created_at),
            )
        elif Configuration(json.loads(row[0])) != config:
            raise IntegrityError(f"entity id collision for {entity_id}")

    def get_by_id(self, entity_id: str) -> StoredEntity | None:
        with self._snapshot() as conn:
            return self._load_entity(conn, entity_id)

    @staticmethod
    def _load_entity(conn, entity_id: str) -> StoredEntity | None:
        row = conn.execute(
            "SELECT assignments, created_at FROM entities WHERE entity_id=?", (entity_id,)
        ).fetchone()
        if row is None:
            return None
        results = tuple(
            MeasurementResult.from_document(json.loads(payload), rid)
            for rid, payload in conn.execute(
                "SELECT result_id, payload FROM results WHERE entity_id=? ORDER BY result_id",
                (entity_id,),
            )
        )
        return StoredEntity(entity_id, Configuration(json.loads(row[0])), results, row[1])

    def results_by_ids(self, result_ids) -> dict[int, MeasurementResult]:
        ids = list(result_ids)
        if not ids:
            return {}
        marks = ",".join("?" * len(ids))
        with self._snapshot() as conn:
            rows = conn.execute(
                f"SELECT result_id, payload FROM results WHERE result_id IN ({marks})", ids
            ).fetchall()
        return {rid: MeasurementResult.from_document(json.loads(p), rid) for rid, p in rows}

    def entities(self) -> list[StoredEntity]:
        """All entities, ordered by id, read in one snapshot."""
        with self._snapshot() as conn:
            results: dict[str, list] = {}
            for rid, eid, payload in conn.execute(
                "SELECT result_id, entity_id, payload FROM results ORDER BY result_id"
            ):
                results.setdefault(eid, []).append(
                    MeasurementResult.from_document(json.loads(payload), rid)
                )
            return [
                StoredEntity(eid, Configuration(json.loads(a)), tuple(results.get(eid, ())), c)
                for eid, a, c in conn.execute(
                    "SELECT entity_id, assignments, created_at FROM entities ORDER BY entity_id"
                )
            ]

    def count(self) -> tuple[int, int]:
        """(entity count, result count)."""
        with self._snapshot() as conn:
            n_ent = conn.execute("SELECT COUNT(*) FROM entities").fetchone()[0]
            n_res = conn.execute("SELECT COUNT(*) FROM results").fetchone()[0]
        return n_ent, n_res

    def match(self, space: ProbabilitySpace, actions: ActionSpace) -> list[StoredEntity]:
        """Entities inside ``space`` holding a result from an experiment of ``actions``."""
        out = []
        for ent in self.entities():
            if not space.contains(ent.assignments):
                continue
            if any(actions.includes(r.experiment_name, r.parameters_key) for r in ent.results):
                out.append(ent)
        return out

    # -- export / import -----------------------------------------------------

    def export_jsonl(self, path: str | os.PathLike) -> int:
        """Write every entity as canonical JSON lines; returns the entity count."""
        ents = self.entities()
        tmp = Path(f"{path}.tmp")
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(dumps(SCHEMA_HEADER) + "\n")
            for ent in ents:
                fh.write(dumps(ent.to_document()) + "\n")
        os.replace(tmp, path)
        return len(ents)

    def import_jsonl(self, path: str | os.PathLike) -> int:
        """Load an export file atomically: any malformed line aborts the whole import."""
        parsed = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if lineno == 1:
                    try:
                        header = json.loads(line)
                    except json.JSONDecodeError as exc:
                        raise ImportFormatError(f"bad header: {exc}", lineno) from None
                    if header != SCHEMA_HEADER:
                        raise ImportFormatError(f"unsupported header {line.strip()!r}", lineno)
                    continue
                if not line.strip():
                    continue
                parsed.append((lineno, _parse_entity_line(line, lineno)))
        with self._tx() as conn:
            for lineno, (ent, results) in parsed:
                try:
                    self._ensure_entity(conn, ent.entity_id, ent.assignments, ent.created_at)
                except IntegrityError as exc:
                    raise ImportFormatError(str(exc), lineno) from None
                existing = {
                    p for (p,) in conn.execute(
                        "SELECT payload FROM results WHERE entity_id=?", (ent.entity_id,)
                    )
                }
                for res in results:
                    payload = dumps(res.to_document())
                    if payload in existing:
                        continue
                    conn.execute(
                        "INSERT INTO results(entity_id, experiment_name, parameters, payload, status, measured_at)"
                        " VALUES (?,?,?,?,?,?)",
                        (
                            ent.entity_id,
                            res.experiment_name,
                            res.parameters_key,
                            payload,
                            res.status,
                            res.measured_at,
                        ),
                    )
        return len(parsed)

    # -- space metadata and sampling records --------------------------------

    def save_space(self, space_id: str, definition: Mapping) -> None:
        with self._tx() as conn:
            if conn.execute("SELECT 1 FROM spaces WHERE space_id=?", (space_id,)).fetchone():
                raise DuplicateIdError(f"space {space_id!r} already exists")
            conn.execute(
                "INSERT INTO spaces(space_id, definition, created_at) VALUES (?,?,?)",
                (space_id, dumps(definition), now_ns()),
            )

    def load_space(self, space_id: str) -> dict | None:
        with self._snapshot() as conn:
            row = conn.execute(
                "SELECT definition FROM spaces WHERE space_id=?", (space_id,)
            ).fetchone()
        return json.loads(row[0]) if row else None

    def space_ids(self) -> list[str]:
        with self._snapshot() as conn:
            return [r[0] for r in conn.execute("SELECT space_id FROM spaces ORDER BY space_id")]

    def append_record(
        self, space_id: str, operation_id: str, entity_id: str, origin: str, result_ids
    ) -> RecordEntry:
        ts = now_ns()
        with self._tx() as conn:
            (last,) = conn.execute(
                "SELECT COALESCE(MAX(seq), -1) FROM records WHERE space_id=? AND operation_id=?",
                (space_id, operation_id),
            ).fetchone()
            ids = tuple(int(i) for i in result_ids)
            cur = conn.execute(
                "INSERT INTO records(space_id, operation_id, seq, entity_id, origin, result_ids, timestamp)"
                " VALUES (?,?,?,?,?,?,?)",
                (space_id, operation_id, last + 1, entity_id, origin, dumps(list(ids)), ts),
            )
            return RecordEntry(cur.lastrowid, space_id, operation_id, last + 1, entity_id, origin, ids, ts)

    def records(self, space_id: str) -> list[RecordEntry]:
        with self._snapshot() as conn:
            rows = conn.execute(
                "SELECT record_id, space_id, operation_id, seq, entity_id, origin, result_ids, timestamp"
                " FROM records WHERE space_id=? ORDER BY record_id",
                (space_id,),
            ).fetchall()
        return [
            RecordEntry(r[0], r[1], r[2], r[3], r[4], r[5], tuple(json.loads(r[6])), r[7])
            for r in rows
        ]


def _parse_entity_line(line: str, lineno: int) -> tuple[StoredEntity, list[MeasurementResult]]:
    try:
        doc = json.loads(line)
        assignments = Configuration(doc["assignments"])
        entity_id = doc["entity_id"]
        results = [MeasurementResult.from_document(r) for r in doc.get("results", [])]
        created_at = int(doc["created_at"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ImportFormatError(f"malformed entity: {exc}", lineno) from None
    if canonical_id(assignments) != entity_id:
        raise ImportFormatError(f"entity_id {entity_id} does not match its assignments", lineno)
    return StoredEntity(entity_id, assignments, tuple(results), created_at), results
