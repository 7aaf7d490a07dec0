"""Shared helpers for the test suite."""

import pytest

from negseq.seqio import Corpus, EncodedSequence, SymbolTable

TABLE = SymbolTable.default()


def enc(residues: str) -> list[int]:
    """Encode a residue string with the default symbol table."""
    return [TABLE.encode_char(ch) for ch in residues.upper()]


def make_corpus(residue_strings, labels=None, prefix="s") -> Corpus:
    """Build a corpus from residue strings; labels default to 'all'."""
    if labels is None:
        labels = ["all"] * len(residue_strings)
    elif isinstance(labels, str):
        labels = [labels] * len(residue_strings)
    seqs = [
        EncodedSequence(f"{prefix}{i}", lab, enc(s))
        for i, (s, lab) in enumerate(zip(residue_strings, labels))
    ]
    return Corpus(seqs)


@pytest.fixture
def table() -> SymbolTable:
    return TABLE
