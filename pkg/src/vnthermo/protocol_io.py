"""JSON protocol documents with strict key checking.

A document has four top-level keys: ``name``, ``layout`` (list of subsystem
records), ``config`` and ``steps`` (list of ``{"kind", "id", "params"}``).
"""

from __future__ import annotations

import json
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any

from .engine import STEP_SCHEMA, Protocol, RunConfig, Step
from .errors import ProtocolError, ProtocolParseError
from .qcore import SubsystemSpec, SystemLayout

TOP_KEYS = {"name", "layout", "config", "steps"}
SUBSYSTEM_KEYS = {"label", "role", "pointer_basis", "ready", "records"}
STEP_KEYS = {"kind", "id", "params"}
CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def _check_keys(obj, allowed: set[str], required: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise ProtocolParseError(f"{where}: expected an object, got {type(obj).__name__}")
    for k in obj:
        if k not in allowed:
            raise ProtocolParseError(f"{where}: unknown key {k!r}")
    for k in sorted(required - set(obj)):
        raise ProtocolParseError(f"{where}: missing key {k!r}")


def from_dict(doc: Any) -> Protocol:
    _check_keys(doc, TOP_KEYS, {"layout", "steps"}, "$")
    if not isinstance(doc["layout"], list):
        raise ProtocolParseError("$.layout: expected a list")
    subs = []
    for i, rec in enumerate(doc["layout"]):
        where = f"$.layout[{i}]"
        _check_keys(rec, SUBSYSTEM_KEYS, {"label", "role", "pointer_basis"}, where)
        try:
            subs.append(SubsystemSpec(rec["label"], rec["role"], tuple(rec["pointer_basis"]),
                                      rec.get("ready"), rec.get("records")))
        except (ValueError, TypeError) as exc:
            raise ProtocolError(f"{where}: {exc}") from exc
    try:
        lay = SystemLayout(tuple(subs))
    except ProtocolError:
        raise
    except Exception as exc:
        raise ProtocolError(f"$.layout: {exc}") from exc

    cfg = doc.get("config", {})
    _check_keys(cfg, CONFIG_KEYS, set(), "$.config")
    try:
        config = RunConfig(**cfg)
    except TypeError as exc:
        raise ProtocolParseError(f"$.config: {exc}") from exc

    if not isinstance(doc["steps"], list):
        raise ProtocolParseError("$.steps: expected a list")
    steps = []
    for i, rec in enumerate(doc["steps"]):
        where = f"$.steps[{i}]"
        _check_keys(rec, STEP_KEYS, {"kind", "id"}, where)
        kind = rec["kind"]
        if kind not in STEP_SCHEMA:
            raise ProtocolParseError(f"{where}.kind: unknown step kind {kind!r}")
        params = rec.get("params", {})
        required, optional = STEP_SCHEMA[kind]
        _check_keys(params, set(required) | set(optional), set(required), f"{where}.params")
        steps.append(Step(kind, str(rec["id"]), params))
    proto = Protocol(doc.get("name", "protocol"), lay, tuple(steps), config)
    proto.validate()
    return proto


def to_dict(p: Protocol) -> dict:
    layout = []
    for s in p.layout.subsystems:
        rec = {"label": s.label, "role": s.role, "pointer_basis": list(s.pointer_basis)}
        if s.ready is not None:
            rec["ready"] = s.ready
        if s.records is not None:
            rec["records"] = list(s.records)
        layout.append(rec)
    cfg = asdict(p.config)
    if cfg["system"] is not None:
        cfg["system"] = list(cfg["system"])
    return {
        "name": p.name,
        "layout": layout,
        "config": cfg,
        "steps": [{"kind": s.kind, "id": s.id, "params": dict(s.params)} for s in p.steps],
    }


def loads(text: str) -> Protocol:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return from_dict(doc)


def dumps(p: Protocol) -> str:
    return json.dumps(to_dict(p), indent=2) + "\n"


def load(path) -> Protocol:
    return loads(Path(path).read_text(encoding="utf-8"))


def dump(p: Protocol, path) -> None:
    Path(path).write_text(dumps(p), encoding="utf-8", newline="\n")
