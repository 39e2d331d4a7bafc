"""Result records and the append-only records file."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

TASKS = ("pos", "uas")
SETTINGS = ("few_shot", "full_finetune", "zero_shot")


@dataclass(frozen=True)
class ResultRecord:
    language: str
    task: str
    setting: str
    lapt_steps: int
    vocab_size: int
    alpha: float
    finetuning_lines: int
    seed: int
    score: float

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.setting not in SETTINGS:
            raise ValueError(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        if not 0.0 <= self.score <= 100.0:
            raise ValueError(f"score {self.score} outside [0, 100]")

    @property
    def cell(self):
        """Grid coordinates without the outcome."""
        return (self.lapt_steps, self.vocab_size, self.alpha, self.seed)


@dataclass(frozen=True)
class AggregateRecord:
    language: str
    task: str
    setting: str
    lapt_steps: int
    vocab_size: int
    alpha: float
    finetuning_lines: int
    n: int
    mean: float
    sd: float


def mean_sd(values):
    """Mean and sample standard deviation (0 for a single value)."""
    values = np.asarray(list(values), dtype=float)
    if values.size == 0:
        raise ValueError("no values")
    sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return float(values.mean()), sd


def aggregate(records) -> list[AggregateRecord]:
    """Collapse seeds: one aggregate per (language, task, setting, config)."""
    groups = {}
    for r in records:
        key = (r.language, r.task, r.setting, r.lapt_steps, r.vocab_size, r.alpha)
        groups.setdefault(key, []).append(r)
    out = []
    for key, rs in groups.items():
        m, sd = mean_sd(r.score for r in rs)
        out.append(AggregateRecord(*key, finetuning_lines=rs[0].finetuning_lines,
                                   n=len(rs), mean=m, sd=sd))
    return out


COLUMNS = [f.name for f in fields(ResultRecord)]
SCHEMA_HASH = hashlib.sha256("\t".join(COLUMNS).encode()).hexdigest()[:16]
_TYPES = {f.name: f.type for f in fields(ResultRecord)}


class SchemaMismatch(ValueError):
    pass


def _format(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(name, text):
    kind = _TYPES[name]
    if kind in ("int", int):
        return int(text)
    if kind in ("float", float):
        return float(text)
    return text


def format_record(r: ResultRecord) -> str:
    return "\t".join(_format(getattr(r, c)) for c in COLUMNS)


class RecordsFile:
    """Tab-separated records with a schema-hash guard line.

    Layout: ``# schema <hash>`` then a header row then one row per record.
    Appending to a file with a different hash raises ``SchemaMismatch``.
    """

    def __init__(self, path):
        self.path = Path(path)

    def _check_header(self):
        with open(self.path, encoding="utf-8") as fh:
            first = fh.readline().rstrip("\n")
            header = fh.readline().rstrip("\n")
        if first != f"# schema {SCHEMA_HASH}" or header != "\t".join(COLUMNS):
            raise SchemaMismatch(f"{self.path}: records schema does not match ({first!r})")

    def append(self, records):
        new = not self.path.exists() or self.path.stat().st_size == 0
        if not new:
            self._check_header()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            if new:
                fh.write(f"# schema {SCHEMA_HASH}\n")
                fh.write("\t".join(COLUMNS) + "\n")
            for r in records:
                fh.write(format_record(r) + "\n")

    def read(self) -> list[ResultRecord]:
        if not self.path.exists():
            return []
        self._check_header()
        return read_records(self.path)


def read_records(path) -> list[ResultRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(rows, delimiter="\t")
    for row in reader:
        out.append(ResultRecord(**{c: _parse(c, row[c]) for c in COLUMNS}))
    return out


def write_records(path, records):
    path = Path(path)
    if path.exists():
        path.unlink()
    RecordsFile(path).append(records)


def records_to_columns(records) -> dict:
    return {c: [getattr(r, c) for r in records] for c in COLUMNS}
