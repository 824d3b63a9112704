"""YAML job documents: loading, schema validation and path resolution."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from .errors import SchemaError

SCHEMA_VERSION = 1
SCHEMAS = ("space-v1", "optimizer-v1", "transfer-v1")


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = resources.files("dspace").joinpath("schemas", f"{name}.json").read_text("utf-8")
    return json.loads(text)


def _path_of(error) -> str:
    parts = []
    for p in error.absolute_path:
        if isinstance(p, int):
            parts.append(f"[{p}]")
        else:
            parts.append(f".{p}" if parts else str(p))
    return "".join(parts) or "<root>"


def validate(doc, schema_name: str) -> None:
    """Raise ``SchemaError`` naming the first offending field."""
    validator = jsonschema.Draft202012Validator(load_schema(schema_name))
    error = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if error is not None:
        field = _path_of(error)
        raise SchemaError(f"{schema_name}: {field}: {error.message}", field)


def load_document(path, schema_name: str) -> dict:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise SchemaError(f"{path}: not valid YAML: {exc}") from None
    validate(doc, schema_name)
    return doc


def resolve_paths(doc: dict, base: Path) -> dict:
    """Make actuator ``path`` and ``cwd`` settings absolute relative to ``base``."""
    for action in doc.get("actions", []):
        act = action.get("actuator", {})
        for key in ("path", "cwd"):
            if key in act and not Path(act[key]).is_absolute():
                act[key] = str((base / act[key]).resolve())
    return doc
