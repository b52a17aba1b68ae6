"""Results and report files: JSON documents tagged with a schema name and version."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

RESULTS_SCHEMA = "gcnfool-attack-results"
REPORT_SCHEMA = "gcnfool-metrics-report"
SCHEMA_VERSION = 1


class SchemaError(ValueError):
    pass


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(path, document: dict) -> None:
    write_atomic(path, json.dumps(document, indent=2, sort_keys=True) + "\n")


def tagged(schema: str, body: dict) -> dict:
    return {"schema": schema, "schema_version": SCHEMA_VERSION, **body}


def load_tagged(path, schema: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    if doc.get("schema") != schema:
        raise SchemaError(f"{path}: expected schema {schema!r}, found {doc.get('schema')!r}")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(
            f"{path}: schema version {doc.get('schema_version')} is not supported "
            f"(expected {SCHEMA_VERSION})"
        )
    return doc
