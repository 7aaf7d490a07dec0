"""Sequence ingestion: FASTA parsing, integer encoding, and corpus files.

Symbols are encoded as small positive integers. The four canonical bases
take fixed codes (A=1, C=2, G=3, T=4) and the IUPAC redundant codes are
assigned contiguous integers from 5 in a fixed order, so encodings are
stable across runs and machines. Encoded corpora are written one sequence
per line with ``-1`` separators and a ``-2`` terminator, plus a sidecar
manifest carrying ids and class labels.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import requests

from .errors import DataError, FetchError, ParseError

CANONICAL = "ACGT"
# Fixed assignment order for the IUPAC redundant/ambiguity codes; their
# integer codes are 5..16 in this order.
REDUNDANT = "URYSWKMBDHVN"


class SymbolTable:
    """Bidirectional map between residue characters and integer codes.

    The default table maps the canonical bases to 1..4 and the redundant
    codes to 5..16. With ``map_u_to_t`` the RNA base U becomes an alias
    for code 4; the remaining redundant codes keep their default values
    so that encodings stay comparable across the two modes. Decoding is
    the exact inverse of encoding for every non-aliased character.
    """

    def __init__(self, mapping: Mapping[str, int], aliases: Mapping[str, int] | None = None):
        self._encode = dict(mapping)
        self._decode = {}
        for ch, code in mapping.items():
            if code in self._decode:
                raise ValueError(f"duplicate code {code} in symbol table")
            self._decode[code] = ch
        if aliases:
            for ch, code in aliases.items():
                if ch in self._encode:
                    raise ValueError(f"alias {ch!r} collides with a mapped character")
                if code not in self._decode:
                    raise ValueError(f"alias {ch!r} points at unmapped code {code}")
                self._encode[ch] = code

    @classmethod
    def default(cls, map_u_to_t: bool = False) -> "SymbolTable":
        mapping = {ch: i + 1 for i, ch in enumerate(CANONICAL)}
        redundant = REDUNDANT if not map_u_to_t else REDUNDANT.replace("U", "")
        for ch in redundant:
            # Codes stay pinned to the position in REDUNDANT even when U
            # is aliased away, so e.g. R is 6 in both modes.
            mapping[ch] = 5 + REDUNDANT.index(ch)
        aliases = {"U": mapping["T"]} if map_u_to_t else None
        return cls(mapping, aliases)

    def encode_char(self, ch: str) -> int:
        try:
            return self._encode[ch]
        except KeyError:
            raise DataError(f"unmapped character {ch!r}") from None

    def decode(self, code: int) -> str:
        try:
            return self._decode[code]
        except KeyError:
            raise DataError(f"unmapped code {code}") from None

    def __contains__(self, ch: str) -> bool:
        return ch in self._encode

    @property
    def canonical_codes(self) -> tuple[int, ...]:
        return tuple(self._encode[ch] for ch in CANONICAL)

    def items(self):
        return self._encode.items()


@dataclass
class SequenceRecord:
    """One FASTA record: id, free-text description, residue string."""

    id: str
    description: str
    residues: str


@dataclass
class EncodedSequence:
    """Integer-encoded sequence with its id and class label."""

    id: str
    label: str
    tokens: list[int]

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class Corpus:
    """An ordered collection of encoded sequences.

    ``labels`` lists the distinct class names in order of first
    appearance; sequence ids must be unique.
    """

    sequences: list[EncodedSequence] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for seq in self.sequences:
            if seq.id in seen:
                raise DataError(f"duplicate sequence id {seq.id!r}")
            seen.add(seq.id)

    @property
    def labels(self) -> list[str]:
        out: list[str] = []
        for seq in self.sequences:
            if seq.label not in out:
                out.append(seq.label)
        return out

    def by_label(self) -> dict[str, list[EncodedSequence]]:
        groups: dict[str, list[EncodedSequence]] = {}
        for seq in self.sequences:
            groups.setdefault(seq.label, []).append(seq)
        return groups

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)


def parse_fasta(text: str, table: SymbolTable | None = None) -> list[SequenceRecord]:
    """Parse FASTA text into records, validating residues against ``table``.

    Lowercase residues are folded to uppercase. Data before the first
    header, an empty record body, or a character missing from the table
    all raise :class:`ParseError` naming the offending line.
    """
    table = table or SymbolTable.default()
    records: list[SequenceRecord] = []
    header: tuple[str, str] | None = None
    body: list[str] = []
    header_line = 0

    def flush(at_line: int):
        if header is None:
            return
        residues = "".join(body)
        if not residues:
            raise ParseError(f"record {header[0]!r} has no sequence data", line=header_line)
        records.append(SequenceRecord(header[0], header[1], residues))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(">"):
            flush(lineno)
            name = line[1:].strip()
            if not name:
                raise ParseError("empty FASTA header", line=lineno)
            parts = name.split(None, 1)
            header = (parts[0], parts[1] if len(parts) > 1 else "")
            header_line = lineno
            body = []
        else:
            if header is None:
                raise ParseError("sequence data before first header", line=lineno)
            chunk = line.upper()
            for ch in chunk:
                if ch not in table:
                    raise ParseError(f"unmapped character {ch!r}", line=lineno)
            body.append(chunk)
    flush(-1)
    if header is None:
        raise ParseError("no FASTA records found")
    return records


def encode_records(
    records: Iterable[SequenceRecord],
    label: str,
    table: SymbolTable | None = None,
) -> Corpus:
    """Encode parsed records into a single-label corpus."""
    table = table or SymbolTable.default()
    seqs = []
    for rec in records:
        tokens = [table.encode_char(ch) for ch in rec.residues.upper()]
        seqs.append(EncodedSequence(rec.id, label, tokens))
    return Corpus(seqs)


def merge_corpora(corpora: Iterable[Corpus]) -> Corpus:
    """Concatenate corpora, preserving order; ids must stay unique."""
    seqs: list[EncodedSequence] = []
    for corpus in corpora:
        seqs.extend(corpus.sequences)
    return Corpus(seqs)


def default_manifest_path(data_path: str) -> str:
    return data_path + ".manifest.tsv"


def write_encoded(corpus: Corpus, data_path: str, manifest_path: str | None = None) -> None:
    """Write a corpus as token lines plus a tab-separated manifest.

    Each data line is the sequence's tokens separated by ``-1`` and
    terminated by ``-1 -2``. The manifest has one row per line:
    line index, sequence id, label.
    """
    if len(corpus) == 0:
        raise DataError("refusing to write an empty corpus")
    manifest_path = manifest_path or default_manifest_path(data_path)
    with open(data_path, "w") as fh:
        for seq in corpus:
            fh.write(" -1 ".join(str(t) for t in seq.tokens) + " -1 -2\n")
    with open(manifest_path, "w") as fh:
        for i, seq in enumerate(corpus):
            fh.write(f"{i}\t{seq.id}\t{seq.label}\n")


def read_encoded(data_path: str, manifest_path: str | None = None) -> Corpus:
    """Inverse of :func:`write_encoded`; validates framing and the manifest."""
    manifest_path = manifest_path or default_manifest_path(data_path)
    rows: list[tuple[str, str]] = []
    with open(manifest_path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError("manifest row needs 3 tab-separated fields", line=lineno)
            idx, seq_id, label = parts
            if int(idx) != len(rows):
                raise ParseError(f"manifest line index {idx} out of order", line=lineno)
            rows.append((seq_id, label))

    seqs: list[EncodedSequence] = []
    with open(data_path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) < 2 or fields[-1] != "-2" or fields[-2] != "-1":
                raise ParseError("sequence line must end with '-1 -2'", line=lineno)
            tokens: list[int] = []
            expect_token = True
            for tok in fields[:-1]:
                try:
                    value = int(tok)
                except ValueError:
                    raise ParseError(f"non-integer token {tok!r}", line=lineno) from None
                if expect_token:
                    if value <= 0:
                        raise ParseError(f"expected positive token, got {value}", line=lineno)
                    tokens.append(value)
                else:
                    if value != -1:
                        raise ParseError(f"expected -1 separator, got {value}", line=lineno)
                expect_token = not expect_token
            if not tokens:
                raise ParseError("empty sequence line", line=lineno)
            if len(seqs) >= len(rows):
                raise ParseError("more sequence lines than manifest rows", line=lineno)
            seq_id, label = rows[len(seqs)]
            seqs.append(EncodedSequence(seq_id, label, tokens))
    if len(seqs) != len(rows):
        raise DataError(
            f"manifest lists {len(rows)} sequences but data file has {len(seqs)}"
        )
    return Corpus(seqs)


def fetch_accessions(
    accessions: list[str],
    endpoint: str,
    cache_dir: str,
    timeout: float = 30.0,
) -> tuple[list[SequenceRecord], dict[str, str]]:
    """Fetch FASTA records by accession with an on-disk cache.

    ``endpoint`` is either a URL template containing ``{accession}`` or a
    base URL the accession is appended to. Each accession is fetched at
    most once; cached files short-circuit the network entirely. Returns
    records in input order (duplicates repeated) plus a map of
    accession -> failure reason for the ones that could not be fetched.
    Raises :class:`FetchError` only if every accession failed.
    """
    os.makedirs(cache_dir, exist_ok=True)
    fetched: dict[str, list[SequenceRecord]] = {}
    failures: dict[str, str] = {}
    for acc in accessions:
        if acc in fetched or acc in failures:
            continue
        cache_path = os.path.join(cache_dir, f"{acc}.fasta")
        text = None
        if os.path.exists(cache_path):
            with open(cache_path) as fh:
                text = fh.read()
        else:
            if "{accession}" in endpoint:
                url = endpoint.format(accession=acc)
            else:
                url = endpoint.rstrip("/") + "/" + acc
            try:
                resp = requests.get(url, timeout=timeout)
                resp.raise_for_status()
                text = resp.text
            except Exception as exc:  # noqa: BLE001 - any transport failure is reportable
                failures[acc] = str(exc)
                continue
        try:
            records = parse_fasta(text)
        except ParseError as exc:
            failures[acc] = f"bad FASTA: {exc}"
            continue
        if not os.path.exists(cache_path):
            with open(cache_path, "w") as fh:
                fh.write(text)
        fetched[acc] = records

    out: list[SequenceRecord] = []
    for acc in accessions:
        if acc in fetched:
            out.extend(fetched[acc])
    if accessions and not fetched:
        raise FetchError(
            "all accessions failed: "
            + "; ".join(f"{acc}: {why}" for acc, why in failures.items())
        )
    return out, failures
