"""Alpha-weighted multinomial language sampling.

Unit probabilities are ``q_i = n_i**alpha / sum_j n_j**alpha`` over
(optionally capped, optionally grouped) unit sizes. ``alpha=1`` reproduces
the raw proportions, ``alpha=0`` is uniform, values in between up-sample
small units.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LanguageWeight:
    unit: str
    q: float


def corpus_sizes(corpora: dict, measure: str = "lines") -> dict:
    """Per-language size of ``{code: [lines]}`` in lines or UTF-8 bytes."""
    if measure == "lines":
        return {code: len(lines) for code, lines in corpora.items()}
    if measure == "bytes":
        return {code: sum(len(l.encode("utf-8")) + 1 for l in lines)
                for code, lines in corpora.items()}
    raise ValueError(f"unknown size measure {measure!r}")


def truncate_to_bytes(lines, byte_cap):
    """Longest prefix of ``lines`` whose UTF-8 size (newlines included) fits the cap."""
    total, out = 0, []
    for line in lines:
        total += len(line.encode("utf-8")) + 1
        if total > byte_cap:
            break
        out.append(line)
    return out


def apply_cap(sizes: dict, caps: dict) -> dict:
    """``min(size, cap)`` for every unit that has a cap."""
    for code, cap in caps.items():
        if cap is not None and cap < 0:
            raise ValueError(f"negative cap for {code}: {cap}")
    return {code: (min(n, caps[code]) if caps.get(code) is not None else n)
            for code, n in sizes.items()}


def _check_groups(codes, groups: dict):
    seen = {}
    for name, members in groups.items():
        for code in members:
            if code not in codes:
                raise ValueError(f"group {name!r} references unknown language {code!r}")
            if code in seen:
                raise ValueError(f"language {code!r} appears in groups {seen[code]!r} and {name!r}")
            seen[code] = name
    clash = set(groups) & (set(codes) - set(seen))
    if clash:
        raise ValueError(f"group names collide with ungrouped languages: {sorted(clash)}")
    return seen


def group_languages(sizes: dict, groups: dict | None) -> dict:
    """Collapse each group into one unit whose size is the members' sum.

    Ungrouped languages keep their own entry; group units are appended in
    ``groups`` order.
    """
    groups = groups or {}
    member_of = _check_groups(sizes, groups)
    units = {code: n for code, n in sizes.items() if code not in member_of}
    for name, members in groups.items():
        units[name] = sum(sizes[c] for c in members)
    return units


def compute_sampling_weights(sizes: dict, alpha: float) -> list[LanguageWeight]:
    if not sizes:
        raise ValueError("need at least one sampling unit")
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    for unit, n in sizes.items():
        if not n > 0:
            raise ValueError(f"unit {unit!r} has nonpositive size {n}")
    logs = np.array([alpha * math.log(n) for n in sizes.values()])
    logs -= logs.max()
    w = np.exp(logs)
    w /= w.sum()
    return [LanguageWeight(unit, float(q)) for unit, q in zip(sizes, w)]


def weights_table(raw_sizes: dict, alphas, caps=None, groups=None) -> list[dict]:
    """Rows of (unit, raw size, capped size, q at each alpha)."""
    capped = apply_cap(raw_sizes, caps or {})
    raw_units = group_languages(raw_sizes, groups)
    units = group_languages(capped, groups)
    rows = [{"unit": u, "raw_size": raw_units[u], "capped_size": units[u]} for u in units]
    for alpha in alphas:
        for row, w in zip(rows, compute_sampling_weights(units, alpha)):
            row[f"q_alpha_{alpha:g}"] = w.q
    return rows


def write_weights_table(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), delimiter="\t", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})


def allocate_steps(total_steps: int, weights: list[LanguageWeight]) -> dict:
    """Split a step budget across units: floor of ``q * total``, remainder to the
    unit with the largest weight."""
    alloc = {w.unit: math.floor(w.q * total_steps) for w in weights}
    largest = max(weights, key=lambda w: w.q).unit
    alloc[largest] += total_steps - sum(alloc.values())
    return alloc


class _Cycler:
    """Uniform draws without replacement, reshuffled every pass."""

    def __init__(self, lines, rng):
        self.lines = lines
        self.rng = rng
        self.order = rng.permutation(len(lines))
        self.pos = 0

    def next(self):
        if self.pos == len(self.order):
            self.order = self.rng.permutation(len(self.lines))
            self.pos = 0
        line = self.lines[self.order[self.pos]]
        self.pos += 1
        return line


class SampledStream:
    """Infinite sentence-wise stream.

    Each line first draws a unit from ``weights`` and then the next line of
    that unit's shuffled cycle. Grouped languages are concatenated, so lines
    within a group are drawn in proportion to member size.
    """

    def __init__(self, corpora: dict, weights: list[LanguageWeight], seed: int = 0,
                 groups: dict | None = None):
        groups = groups or {}
        self.rng = np.random.default_rng(seed)
        self.units = [w.unit for w in weights]
        self.probs = np.array([w.q for w in weights])
        self.probs /= self.probs.sum()
        self.cyclers = []
        for unit in self.units:
            members = groups.get(unit, [unit])
            lines = [line for code in members for line in corpora.get(code, ())]
            if not lines:
                raise ValueError(f"sampling unit {unit!r} has no lines")
            self.cyclers.append(_Cycler(lines, self.rng))
        self._buffer = np.empty(0, dtype=np.int64)
        self._pos = 0

    def __iter__(self):
        return self

    def next_unit(self) -> int:
        if self._pos == len(self._buffer):
            self._buffer = self.rng.choice(len(self.units), size=4096, p=self.probs)
            self._pos = 0
        u = int(self._buffer[self._pos])
        self._pos += 1
        return u

    def __next__(self) -> str:
        return self.cyclers[self.next_unit()].next()

    def take(self, n: int, with_units: bool = False):
        out = []
        for _ in range(n):
            u = self.next_unit()
            line = self.cyclers[u].next()
            out.append((self.units[u], line) if with_units else line)
        return out


def sample_stream(corpora: dict, weights: list[LanguageWeight], seed: int = 0,
                  groups: dict | None = None) -> SampledStream:
    return SampledStream(corpora, weights, seed, groups)
