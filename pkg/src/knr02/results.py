"""Tabular experiment results with deterministic CSV/JSON emission."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .errors import ConfigError

SIG_DIGITS = 17


def format_number(x: Any) -> str:
    """Locale-independent, round-trip exact text for numbers; ``str`` otherwise."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float) or hasattr(x, "dtype"):
        v = float(x)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.{SIG_DIGITS}g}"
    return str(x)


def to_jsonable(x):
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if hasattr(x, "dtype"):
        return x.item() if getattr(x, "ndim", 0) == 0 else [to_jsonable(v) for v in x.tolist()]
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


@dataclass
class ExperimentResult:
    """Named columns, one tuple per row, and a metadata mapping."""

    name: str
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = tuple(self.columns)
        for r in self.rows:
            self._check(r)

    def _check(self, row: Sequence) -> None:
        if len(row) != len(self.columns):
            raise ConfigError(f"row of length {len(row)} for {len(self.columns)} columns")

    def append(self, *row) -> None:
        self._check(row)
        self.rows.append(tuple(row))

    def column(self, name: str) -> list:
        k = self.columns.index(name)
        return [r[k] for r in self.rows]

    def where(self, **match) -> "ExperimentResult":
        keep = [r for r in self.rows if all(r[self.columns.index(k)] == v for k, v in match.items())]
        return ExperimentResult(self.name, self.columns, keep, dict(self.metadata))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([format_number(v) for v in r])
        return buf.getvalue()

    def metadata_json(self) -> str:
        return json.dumps(to_jsonable(self.metadata), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.name}.csv"
        meta_path = out / f"{self.name}.meta.json"
        csv_path.write_text(self.to_csv(), encoding="utf-8")
        meta_path.write_text(self.metadata_json(), encoding="utf-8")
        return csv_path, meta_path


__all__ = ["ExperimentResult", "SIG_DIGITS", "format_number", "to_jsonable"]
