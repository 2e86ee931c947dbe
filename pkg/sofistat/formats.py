"""
On-disk formats: partition text files and checksummed action / tower JSON.

Indexed partition::

    carrier 4
    blocks 2
    assignment 0 0 1 1

Cylinder partition::

    cylinder
    alphabet 2
    blocks 2
    coords 1,a
    table 0 1 1 0
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from sofistat.errors import InputError
from sofistat.partitions import CylinderPartition, IndexedPartition, Partition
from sofistat.sofic_towers import Tower
from sofistat.words import FiniteAction, format_word_list, parse_word_list

FORMAT_VERSION = 1


# ────────────────────── Partitions ──────────────────


def format_partition(p: Partition) -> str:
    if isinstance(p, IndexedPartition):
        lines = [
            f"carrier {p.carrier_size}",
            f"blocks {p.block_count}",
            "assignment " + " ".join(str(b) for b in p.assignment.tolist()),
        ]
    else:
        lines = [
            "cylinder",
            f"alphabet {p.alphabet}",
            f"blocks {p.block_count}",
            f"coords {format_word_list(p.coords)}",
            "table " + " ".join(str(b) for b in p.table),
        ]
    return "\n".join(lines) + "\n"


def _fields(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition(" ")
        if key in out:
            raise InputError(f"duplicate field {key!r} in partition file")
        out[key] = value.strip()
    return out


def _ints(value: str, name: str) -> list[int]:
    try:
        return [int(tok) for tok in value.split()]
    except ValueError as exc:
        raise InputError(f"field {name!r} must hold integers") from exc


def parse_partition(text: str) -> Partition:
    fields = _fields(text)
    try:
        if "cylinder" in fields:
            return CylinderPartition(
                parse_word_list(fields["coords"]),
                int(fields["alphabet"]),
                _ints(fields["table"], "table"),
                int(fields["blocks"]),
            )
        assignment = _ints(fields["assignment"], "assignment")
        carrier = int(fields["carrier"])
    except KeyError as exc:
        raise InputError(f"partition file is missing field {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise InputError(f"malformed partition file: {exc}") from exc
    if len(assignment) != carrier:
        raise InputError(f"assignment lists {len(assignment)} points, carrier says {carrier}")
    return IndexedPartition(assignment, int(fields["blocks"]))


def write_partition(path: Path, p: Partition) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_partition(p), encoding="utf-8")
    return path


def read_partition(path: Path) -> Partition:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read partition file {path}: {exc}") from exc
    return parse_partition(text)


# ────────────────────── Actions / towers ────────────


class ActionDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    size: int = Field(ge=1)
    generators: list[list[int]]


class TowerDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    levels: list[ActionDoc] = Field(min_length=1)
    maps: list[list[int]]


class FileDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format_version: int = FORMAT_VERSION
    kind: str
    checksum: str
    body: dict[str, Any]


def _checksum(body: dict[str, Any]) -> str:
    return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _action_body(action: FiniteAction) -> dict[str, Any]:
    return {"size": action.size, "generators": [g.tolist() for g in action.gens]}


def action_to_doc(obj: FiniteAction | Tower) -> dict[str, Any]:
    if isinstance(obj, Tower):
        kind = "tower"
        body = {"levels": [_action_body(a) for a in obj.levels], "maps": [m.tolist() for m in obj.maps]}
    else:
        kind = "action"
        body = _action_body(obj)
    return {"format_version": FORMAT_VERSION, "kind": kind, "checksum": _checksum(body), "body": body}


def action_from_doc(raw: dict[str, Any]) -> FiniteAction | Tower:
    try:
        doc = FileDoc.model_validate(raw)
        if doc.format_version != FORMAT_VERSION:
            raise InputError(f"unsupported format_version {doc.format_version}")
        if _checksum(doc.body) != doc.checksum:
            raise InputError("checksum mismatch")
        if doc.kind == "action":
            body = ActionDoc.model_validate(doc.body)
            return FiniteAction(body.generators, size=body.size)
        if doc.kind == "tower":
            body = TowerDoc.model_validate(doc.body)
            return Tower([FiniteAction(level.generators, size=level.size) for level in body.levels], body.maps)
    except ValidationError as exc:
        raise InputError(f"invalid action file: {exc.errors()[0]['msg']}") from exc
    raise InputError(f"unknown document kind {doc.kind!r}")


def write_action(path: Path, obj: FiniteAction | Tower) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(action_to_doc(obj), separators=(",", ":")) + "\n", encoding="utf-8")
    return path


def read_action(path: Path) -> FiniteAction | Tower:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot load {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise InputError(f"{path} does not hold a JSON object")
    return action_from_doc(raw)
