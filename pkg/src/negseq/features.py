"""Pattern catalogs and pattern-count feature matrices.

Mining runs per class; the catalog keeps, for each class, its
highest-support patterns at or above a length floor, subject to a
per-class size band. The union is deduplicated (first contributing
class wins, later ones are recorded as provenance) and ordered by the
canonical pattern string. A feature matrix then scores every sequence
against every catalog pattern with the one-off support count.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, ParseError, UndersizedClassError
from .miner import MiningResult
from .pattern import PackedCorpus, Pattern, parse_pattern, support_matrix
from .seqio import Corpus

MIN_LENGTH = 4
CAP_MIN = 300
CAP_MAX = 600


@dataclass
class CatalogEntry:
    pattern: Pattern
    support: int
    source: str
    sources: list[str]


@dataclass
class PatternCatalog:
    """Deduplicated feature patterns in canonical order."""

    entries: list[CatalogEntry]
    min_length: int
    cap_min: int
    cap_max: int

    def __post_init__(self):
        self.entries.sort(key=lambda e: e.pattern.canonical())
        seen = set()
        for e in self.entries:
            if e.pattern in seen:
                raise DataError(f"duplicate catalog pattern {e.pattern}")
            seen.add(e.pattern)

    def patterns(self) -> list[Pattern]:
        return [e.pattern for e in self.entries]

    def length_histogram(self) -> dict[int, int]:
        hist: dict[int, int] = {}
        for e in self.entries:
            hist[e.pattern.length] = hist.get(e.pattern.length, 0) + 1
        return dict(sorted(hist.items()))

    def __len__(self) -> int:
        return len(self.entries)


def _class_entries(result) -> list[tuple[Pattern, int]]:
    if isinstance(result, MiningResult):
        return result.all_entries()
    return list(result)


def select_patterns(
    per_class: Mapping[str, object],
    min_length: int = MIN_LENGTH,
    cap_min: int = CAP_MIN,
    cap_max: int = CAP_MAX,
    allow_undersized: bool = False,
) -> PatternCatalog:
    """Build a catalog from per-class mining output.

    Classes are processed in sorted label order. Within a class,
    patterns of length >= ``min_length`` are ranked by support
    descending (canonical string breaking ties) and the top ``cap_max``
    are taken. A class with fewer than ``cap_min`` qualifying patterns
    is an error unless ``allow_undersized`` is set.
    """
    if cap_min > cap_max:
        raise DataError(f"cap_min {cap_min} exceeds cap_max {cap_max}")
    chosen: dict[Pattern, CatalogEntry] = {}
    for label in sorted(per_class):
        qualifying = [
            (p, s) for p, s in _class_entries(per_class[label]) if p.length >= min_length
        ]
        if len(qualifying) < cap_min and not allow_undersized:
            raise UndersizedClassError(
                f"class {label!r} has {len(qualifying)} patterns of length >= "
                f"{min_length}, below the floor of {cap_min}"
            )
        qualifying.sort(key=lambda e: (-e[1], e[0].canonical()))
        for p, s in qualifying[:cap_max]:
            if p in chosen:
                chosen[p].sources.append(label)
            else:
                chosen[p] = CatalogEntry(p, s, label, [label])
    return PatternCatalog(list(chosen.values()), min_length, cap_min, cap_max)


_CATALOG_LINE = re.compile(
    r"^(?P<pat>.+?) #SUP: (?P<sup>\d+) #LEN: (?P<len>\d+)"
    r" #CLASS: (?P<cls>\S*) #SRC: (?P<src>.*)$"
)


def write_catalog(catalog: PatternCatalog, path: str) -> None:
    """Pattern-file lines extended with a ``#SRC:`` provenance field."""
    with open(path, "w") as fh:
        for e in catalog.entries:
            fh.write(
                f"{e.pattern.canonical()} #SUP: {e.support} #LEN: {e.pattern.length}"
                f" #CLASS: {e.source} #SRC: {','.join(e.sources)}\n"
            )


def read_catalog(
    path: str,
    min_length: int = MIN_LENGTH,
    cap_min: int = CAP_MIN,
    cap_max: int = CAP_MAX,
) -> PatternCatalog:
    entries = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            m = _CATALOG_LINE.match(line)
            if m is None:
                raise ParseError("malformed catalog line", line=lineno)
            entries.append(
                CatalogEntry(
                    parse_pattern(m.group("pat")),
                    int(m.group("sup")),
                    m.group("cls"),
                    m.group("src").split(","),
                )
            )
    return PatternCatalog(entries, min_length, cap_min, cap_max)


@dataclass
class FeatureMatrix:
    """Sequences by patterns; cells are one-off support counts.

    ``normalization`` records an applied transform (``"length"`` divides
    each row by its sequence length); it is not serialized, so matrices
    read back from disk carry ``None`` here.
    """

    ids: list[str]
    labels: list[str]
    columns: list[Pattern]
    values: np.ndarray
    normalization: str | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (len(self.ids), len(self.columns)):
            raise DataError(
                f"matrix shape {self.values.shape} does not match "
                f"{len(self.ids)} rows x {len(self.columns)} columns"
            )
        if len(self.labels) != len(self.ids):
            raise DataError("need one label per row")

    @property
    def classes(self) -> list[str]:
        return sorted(set(self.labels))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FeatureMatrix)
            and self.ids == other.ids
            and self.labels == other.labels
            and self.columns == other.columns
            and self.values.shape == other.values.shape
            and bool(np.array_equal(self.values, other.values))
        )


def featurize(
    corpus: Corpus,
    catalog: PatternCatalog,
    threads: int = 1,
    normalize: str | None = None,
) -> FeatureMatrix:
    """Score every sequence against every catalog pattern.

    Rows follow corpus order, columns follow catalog order. With
    ``normalize="length"`` each row is divided by its sequence length.
    """
    if normalize not in (None, "length"):
        raise DataError(f"unknown normalization {normalize!r}")
    packed = PackedCorpus.from_corpus(corpus)
    patterns = catalog.patterns()
    values = support_matrix(packed, patterns, threads=threads)

    out = values
    if normalize == "length":
        lengths = np.asarray([max(len(s), 1) for s in corpus], dtype=np.float64)
        out = values / lengths[:, None]
    return FeatureMatrix(
        ids=[s.id for s in corpus],
        labels=[s.label for s in corpus],
        columns=patterns,
        values=out,
        normalization=normalize,
    )


def write_matrix(matrix: FeatureMatrix, path: str) -> None:
    """CSV with a quoted header row: "id","label", then pattern strings."""
    is_float = np.issubdtype(matrix.values.dtype, np.floating)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_NONNUMERIC)
        writer.writerow(["id", "label"] + [p.canonical() for p in matrix.columns])
        for i, (seq_id, label) in enumerate(zip(matrix.ids, matrix.labels)):
            row = matrix.values[i]
            cells = [repr(float(v)) for v in row] if is_float else [int(v) for v in row]
            writer.writerow([seq_id, label] + cells)


def read_matrix(path: str) -> FeatureMatrix:
    """Inverse of :func:`write_matrix` (normalization flag not recovered)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty matrix file") from None
        if header[:2] != ["id", "label"]:
            raise DataError(f"{path}: matrix header must start with id,label")
        columns = [parse_pattern(text) for text in header[2:]]
        ids: list[str] = []
        labels: list[str] = []
        rows: list[list[str]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(columns) + 2:
                raise ParseError(
                    f"expected {len(columns) + 2} cells, got {len(row)}", line=lineno
                )
            ids.append(row[0])
            labels.append(row[1])
            rows.append(row[2:])
    is_float = any("." in cell or "e" in cell or "E" in cell for r in rows for cell in r)
    dtype = np.float64 if is_float else np.int64
    values = np.asarray([[float(c) if is_float else int(c) for c in r] for r in rows], dtype=dtype)
    if not rows:
        values = values.reshape(0, len(columns))
    return FeatureMatrix(ids, labels, columns, values)
