"""Level-wise mining of frequent gap-constrained patterns.

The miner grows patterns one symbol at a time. Level 1 counts single
symbols; level 2 pairs frequent symbols and, for every pair that
survives, tries each canonical base as an absent symbol in the gap;
levels three and up build candidates purely by joining frequent
patterns whose overlap agrees (no fresh absent-symbol insertion).
Candidates are scored by summed one-off support and kept when they meet
the level's threshold.

Thresholds come from a schedule: ``fixed`` applies the base everywhere,
``single_drop`` divides the base by a ratio from length 3 on, and
``decay`` multiplies the base by a per-length factor sequence, reusing
the last factor beyond its end. A run is configured by mode:

- ``onp_miner``       fixed threshold, absent symbols enabled
- ``gonpm``           single-drop threshold, absent symbols enabled
- ``gonpm_plus``      decay threshold, absent symbols enabled
- ``positive_only``   fixed threshold, absent symbols disabled
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, ParseError
from .pattern import (
    CANONICAL_CODES,
    Gap,
    PackedCorpus,
    Pattern,
    _as_packed,
    format_pattern,
    parse_pattern,
    support_db_many,
)

MODES = ("onp_miner", "gonpm", "gonpm_plus", "positive_only")

_MODE_SCHEDULE = {
    "onp_miner": "fixed",
    "gonpm": "single_drop",
    "gonpm_plus": "decay",
    "positive_only": "fixed",
}

DEFAULT_DECAY = (0.9, 0.85, 0.75, 0.65)
DEFAULT_RATIO = 1.3


@dataclass(frozen=True)
class ThresholdSchedule:
    """Minimum-support threshold as a function of pattern length.

    ``factors`` gives the decay multipliers for lengths 2, 3, ... in
    order; lengths past the end keep the final factor. Thresholds never
    increase with length.
    """

    kind: str
    base: float
    ratio: float | None = None
    factors: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("fixed", "single_drop", "decay"):
            raise DataError(f"unknown schedule kind {self.kind!r}")
        if self.base <= 0:
            raise DataError("schedule base must be positive")
        if self.kind == "single_drop":
            if self.ratio is None or self.ratio < 1.0:
                raise DataError("single_drop needs a ratio >= 1")
        elif self.ratio is not None:
            raise DataError(f"ratio is only valid for single_drop, not {self.kind}")
        if self.kind == "decay":
            if not self.factors:
                raise DataError("decay needs at least one factor")
            prev = 1.0
            for f in self.factors:
                if not (0.0 < f <= 1.0) or f > prev:
                    raise DataError("decay factors must be nonincreasing in (0, 1]")
                prev = f
        elif self.factors is not None:
            raise DataError(f"factors are only valid for decay, not {self.kind}")

    def threshold(self, length: int) -> float:
        if length < 1:
            raise ValueError("pattern length starts at 1")
        if self.kind == "fixed":
            return self.base
        if self.kind == "single_drop":
            return self.base if length < 3 else self.base / self.ratio
        if length == 1:
            return self.base
        idx = min(length - 2, len(self.factors) - 1)
        return self.base * self.factors[idx]


@dataclass(frozen=True)
class MiningConfig:
    """Everything that determines a mining run besides the corpus."""

    mode: str
    gap: Gap
    schedule: ThresholdSchedule
    max_level: int | None = None
    max_patterns: int | None = None
    alphabet: tuple[int, ...] = CANONICAL_CODES

    def __post_init__(self):
        if not isinstance(self.gap, Gap):
            object.__setattr__(self, "gap", Gap(*self.gap))
        if self.mode not in MODES:
            raise DataError(f"unknown mode {self.mode!r}")
        expected = _MODE_SCHEDULE[self.mode]
        if self.schedule.kind != expected:
            raise DataError(
                f"mode {self.mode} requires a {expected} schedule, got {self.schedule.kind}"
            )
        if self.max_level is not None and self.max_level < 1:
            raise DataError("max_level must be >= 1")
        if self.max_patterns is not None and self.max_patterns < 1:
            raise DataError("max_patterns must be >= 1")

    @property
    def negatives_enabled(self) -> bool:
        return self.mode != "positive_only"


@dataclass
class LevelSet:
    """Frequent patterns of one length with their supports."""

    level: int
    entries: list[tuple[Pattern, int]]

    def __post_init__(self):
        self.entries.sort(key=lambda e: e[0].canonical())
        for p, _ in self.entries:
            if p.length != self.level:
                raise DataError(f"pattern {p} does not belong at level {self.level}")

    def patterns(self) -> list[Pattern]:
        return [p for p, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class MiningResult:
    config: MiningConfig
    levels: list[LevelSet]
    stats: list[dict] = field(default_factory=list)

    def all_entries(self) -> list[tuple[Pattern, int]]:
        out: list[tuple[Pattern, int]] = []
        for lv in self.levels:
            out.extend(lv.entries)
        return out

    def frequent_set(self) -> set[Pattern]:
        return {p for p, _ in self.all_entries()}

    def total(self) -> int:
        return sum(len(lv) for lv in self.levels)

    def length_histogram(self) -> dict[int, int]:
        return {lv.level: len(lv) for lv in self.levels if len(lv)}


def _evaluate(packed: PackedCorpus, patterns: Sequence[Pattern], threads: int) -> list[int]:
    """Support of each pattern, evaluated independently (thread-safe kernels)."""
    return [int(v) for v in support_db_many(packed, patterns, threads=threads)]


def frequent_1(sdb, config: MiningConfig) -> LevelSet:
    """Frequent single symbols: canonical bases plus any code present."""
    packed = _as_packed(sdb)
    threshold = config.schedule.threshold(1)
    if packed.flat.size:
        counts = np.bincount(packed.flat)
    else:
        counts = np.zeros(1, dtype=np.int64)
    candidates = set(config.alphabet) | {int(c) for c in np.unique(packed.flat)}
    entries = []
    for code in sorted(candidates):
        n = int(counts[code]) if code < counts.shape[0] else 0
        if n >= threshold:
            entries.append((Pattern((code,), config.gap), n))
    return LevelSet(1, entries)


def find_onp2(sdb, config: MiningConfig, f1: LevelSet, threads: int = 1) -> tuple[LevelSet, dict]:
    """Level-2 pass: score symbol pairs, then absent-symbol variants.

    Absent-symbol candidates are generated only for pairs that met the
    level-2 threshold, one per canonical base.
    """
    packed = _as_packed(sdb)
    threshold = config.schedule.threshold(2)
    symbols = [p.positives[0] for p in f1.patterns()]
    pairs = [Pattern((a, b), config.gap) for a in symbols for b in symbols]
    pos_support = _evaluate(packed, pairs, threads)
    kept = [(p, s) for p, s in zip(pairs, pos_support) if s >= threshold]

    neg_candidates: list[Pattern] = []
    if config.negatives_enabled:
        for p, _ in kept:
            for e in config.alphabet:
                neg_candidates.append(Pattern(p.positives, config.gap, (e,)))
        neg_support = _evaluate(packed, neg_candidates, threads)
        kept.extend((p, s) for p, s in zip(neg_candidates, neg_support) if s >= threshold)

    stats = {
        "level": 2,
        "candidates": len(pairs) + len(neg_candidates),
        "pruned": 0,
        "evaluated": len(pairs) + len(neg_candidates),
        "kept": len(kept),
    }
    return LevelSet(2, kept), stats


def pattern_join(patterns: Iterable[Pattern]) -> list[Pattern]:
    """Join length-k patterns into length-(k+1) candidates.

    ``p`` joins ``q`` when dropping p's first symbol (and the absent
    symbol of its first gap) leaves exactly q without its last symbol
    (and the absent symbol of its last gap). The join appends q's last
    symbol and final gap slot to p. Self-joins are allowed. Output is
    deduplicated and canonically sorted.
    """
    pats = list(patterns)
    if not pats:
        return []
    by_prefix: dict[tuple, list[Pattern]] = {}
    for q in pats:
        key = (q.positives[:-1], q.negatives[:-1])
        by_prefix.setdefault(key, []).append(q)
    out: set[Pattern] = set()
    for p in pats:
        suffix = (p.positives[1:], p.negatives[1:])
        for q in by_prefix.get(suffix, ()):
            out.add(
                Pattern(
                    p.positives + (q.positives[-1],),
                    p.gap,
                    p.negatives + (q.negatives[-1],),
                )
            )
    return sorted(out, key=format_pattern)


def filter_level(
    sdb,
    candidates: Sequence[Pattern],
    threshold: float,
    threads: int = 1,
) -> tuple[list[tuple[Pattern, int]], dict]:
    """Score candidates against a threshold, positives first.

    Any all-positive candidate that misses the threshold disqualifies
    every candidate sharing its symbols before those are scored at all.
    """
    packed = _as_packed(sdb)
    positives = [c for c in candidates if c.is_positive]
    others = [c for c in candidates if not c.is_positive]

    kept: list[tuple[Pattern, int]] = []
    failed_symbols: set[tuple[int, ...]] = set()
    for p, s in zip(positives, _evaluate(packed, positives, threads)):
        if s >= threshold:
            kept.append((p, s))
        else:
            failed_symbols.add(p.positives)

    survivors = [c for c in others if c.positives not in failed_symbols]
    pruned = len(others) - len(survivors)
    for p, s in zip(survivors, _evaluate(packed, survivors, threads)):
        if s >= threshold:
            kept.append((p, s))

    stats = {
        "candidates": len(candidates),
        "pruned": pruned,
        "evaluated": len(positives) + len(survivors),
        "kept": len(kept),
    }
    return kept, stats


def mine(sdb, config: MiningConfig, threads: int = 1) -> MiningResult:
    """Run the full level-wise loop until a level comes up empty.

    The terminating empty level is kept in the result. ``max_level``
    stops expansion at a depth; ``max_patterns`` truncates the newest
    level (support-descending, canonical-ascending) once the cumulative
    pattern count would pass the cap, then stops.
    """
    packed = _as_packed(sdb)
    result = MiningResult(config, [])

    def note(stats: dict, t0: float):
        stats["seconds"] = time.perf_counter() - t0
        result.stats.append(stats)

    def cap_and_continue(level: LevelSet) -> bool:
        """Append a level, applying caps; return True to keep expanding."""
        if config.max_patterns is not None:
            total = result.total() + len(level)
            if total > config.max_patterns:
                room = config.max_patterns - result.total()
                trimmed = sorted(
                    level.entries, key=lambda e: (-e[1], e[0].canonical())
                )[:room]
                level = LevelSet(level.level, trimmed)
                result.levels.append(level)
                return False
        result.levels.append(level)
        if not level.entries:
            return False
        if config.max_level is not None and level.level >= config.max_level:
            return False
        return True

    t0 = time.perf_counter()
    f1 = frequent_1(packed, config)
    note({"level": 1, "candidates": len(config.alphabet), "pruned": 0,
          "evaluated": len(config.alphabet), "kept": len(f1)}, t0)
    if not cap_and_continue(f1):
        return result

    t0 = time.perf_counter()
    f2, stats = find_onp2(packed, config, f1, threads)
    note(stats, t0)
    if not cap_and_continue(f2):
        return result

    current = f2
    while True:
        level = current.level + 1
        t0 = time.perf_counter()
        candidates = pattern_join(current.patterns())
        entries, stats = filter_level(
            packed, candidates, config.schedule.threshold(level), threads
        )
        stats["level"] = level
        note(stats, t0)
        current = LevelSet(level, entries)
        if not cap_and_continue(current):
            return result


# ---------------------------------------------------------------------------
# Pattern files
# ---------------------------------------------------------------------------

_PATTERN_LINE = re.compile(
    r"^(?P<pat>.+?) #SUP: (?P<sup>\d+) #LEN: (?P<len>\d+) #CLASS: (?P<cls>.*)$"
)


def pattern_tokens_line(p: Pattern) -> str:
    """Token-encoded rendering: symbols by code, absent symbols as ``f<n>``."""
    parts = [str(p.positives[0])]
    for j in range(1, p.length):
        e = p.negatives[j - 1]
        if e is not None:
            parts.append(f"f{e}")
        parts.append(str(p.positives[j]))
    return " -1 ".join(parts) + " -1 -2"


def write_patterns(
    entries: Iterable[tuple[Pattern, int]],
    path: str,
    label: str,
    tokens_path: str | None = None,
) -> None:
    """Write pattern lines plus a token-encoded companion file.

    Each line is the canonical pattern string followed by its support,
    length, and source class. The companion (``<path>.enc`` by default)
    holds the same patterns one per line in token form.
    """
    entries = list(entries)
    tokens_path = tokens_path if tokens_path is not None else path + ".enc"
    with open(path, "w") as fh:
        for p, sup in entries:
            fh.write(f"{p.canonical()} #SUP: {sup} #LEN: {p.length} #CLASS: {label}\n")
    with open(tokens_path, "w") as fh:
        for p, _ in entries:
            fh.write(pattern_tokens_line(p) + "\n")


def read_patterns(path: str) -> list[tuple[Pattern, int, str]]:
    """Parse a pattern file back into (pattern, support, class) rows."""
    out: list[tuple[Pattern, int, str]] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            m = _PATTERN_LINE.match(line)
            if m is None:
                raise ParseError("malformed pattern line", line=lineno)
            pat = parse_pattern(m.group("pat"))
            if pat.length != int(m.group("len")):
                raise ParseError(
                    f"length field {m.group('len')} disagrees with pattern {pat}",
                    line=lineno,
                )
            out.append((pat, int(m.group("sup")), m.group("cls")))
    return out


def result_entries_for_file(result: MiningResult) -> list[tuple[Pattern, int]]:
    """Flatten a result for serialization: level order, canonical within."""
    return result.all_entries()
