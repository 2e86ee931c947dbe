from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence

from pydantic import BaseModel, ConfigDict

from sofistat.config import CONFIG
from sofistat.errors import InputError

NEG_INF_TEXT = "-inf"


# ────────────────────── Scalars ─────────────────────


def fraction_text(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


def parse_fraction(text: str | int | float | Fraction) -> Fraction:
    if isinstance(text, Fraction):
        return text
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise InputError(f"not a rational number: {text!r}") from exc


def entropy_text(value: float) -> str:
    if value == -math.inf:
        return NEG_INF_TEXT
    return repr(float(value))


# ────────────────────── Provenance ──────────────────


class Provenance(BaseModel):
    model_config = ConfigDict(frozen=True)

    config_hash: str
    seed: int
    version: str
    exact: bool

    def csv_header(self) -> list[str]:
        return [
            f"# config_hash={self.config_hash}",
            f"# seed={self.seed}",
            f"# version={self.version}",
            f"# exact={str(self.exact).lower()}",
        ]


def config_hash(payload: dict[str, Any]) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()


def provenance(payload: dict[str, Any], seed: int, exact: bool) -> Provenance:
    return Provenance(config_hash=config_hash(payload), seed=seed, version=CONFIG.version, exact=exact)


# ────────────────────── Writers ─────────────────────


def write_json(path: Path, prov: Provenance, body: dict[str, Any]) -> Path:
    doc = {"provenance": prov.model_dump(mode="json"), **body}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n", encoding="utf-8")
    return path


def write_long_csv(path: Path, prov: Provenance, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Long-format CSV: provenance comment lines, then one observation per row."""
    buf = io.StringIO()
    for line in prov.csv_header():
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path
