"""Encoding, FASTA parsing, and corpus serialization tests."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from negseq.errors import DataError, FetchError, ParseError
from negseq.seqio import (
    CANONICAL,
    REDUNDANT,
    Corpus,
    EncodedSequence,
    SymbolTable,
    encode_records,
    fetch_accessions,
    merge_corpora,
    parse_fasta,
    read_encoded,
    write_encoded,
)

# ---------------------------------------------------------------------------
# Symbol table
# ---------------------------------------------------------------------------


def test_canonical_codes_are_fixed():
    table = SymbolTable.default()
    assert [table.encode_char(c) for c in "ACGT"] == [1, 2, 3, 4]
    assert table.canonical_codes == (1, 2, 3, 4)


def test_redundant_codes_are_contiguous_from_5():
    table = SymbolTable.default()
    assert [table.encode_char(c) for c in REDUNDANT] == list(range(5, 17))


def test_decode_inverts_encode():
    table = SymbolTable.default()
    for ch in CANONICAL + REDUNDANT:
        assert table.decode(table.encode_char(ch)) == ch


def test_u_aliasing_keeps_other_codes_pinned():
    table = SymbolTable.default(map_u_to_t=True)
    assert table.encode_char("U") == table.encode_char("T") == 4
    # R keeps its default slot even though U vacated code 5.
    assert table.encode_char("R") == 6
    assert table.decode(4) == "T"


def test_unmapped_character_rejected():
    table = SymbolTable.default()
    with pytest.raises(DataError, match="unmapped character 'X'"):
        table.encode_char("X")


# ---------------------------------------------------------------------------
# FASTA parsing
# ---------------------------------------------------------------------------


def test_parse_single_record():
    (rec,) = parse_fasta(">x desc\nAGC\n")
    assert rec.id == "x"
    assert rec.description == "desc"
    assert rec.residues == "AGC"


def test_parse_concatenates_body_lines():
    a, b = parse_fasta(">a\nAG\nCT\n>b\nTT\n")
    assert (a.id, a.residues) == ("a", "AGCT")
    assert (b.id, b.residues) == ("b", "TT")


def test_parse_folds_lowercase():
    (rec,) = parse_fasta(">a\nacgt\n")
    assert rec.residues == "ACGT"


def test_parse_errors_name_the_line():
    with pytest.raises(ParseError, match="line 2: unmapped character 'X'"):
        parse_fasta(">a\nAXC\n")
    with pytest.raises(ParseError, match="line 1: sequence data before first header"):
        parse_fasta("AGC\n>a\nA\n")
    with pytest.raises(ParseError, match="no sequence data"):
        parse_fasta(">a\n>b\nAC\n")
    with pytest.raises(ParseError, match="empty FASTA header"):
        parse_fasta(">\nAC\n")
    with pytest.raises(ParseError, match="no FASTA records"):
        parse_fasta("\n\n")


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def test_encode_examples():
    recs = parse_fasta(">r1\nAGC\n>r2\nTACG\n>r3\nN\n")
    corpus = encode_records(recs, "v")
    assert corpus.sequences[0].tokens == [1, 3, 2]
    assert corpus.sequences[1].tokens == [4, 1, 2, 3]
    assert corpus.sequences[2].tokens == [16]
    assert all(s.label == "v" for s in corpus)


def test_encoding_preserves_length():
    recs = parse_fasta(">a\nACGTURYSWKMBDHVN\n")
    corpus = encode_records(recs, "x")
    assert len(corpus.sequences[0]) == 16


def test_corpus_rejects_duplicate_ids():
    with pytest.raises(DataError, match="duplicate"):
        Corpus([EncodedSequence("a", "x", [1]), EncodedSequence("a", "y", [2])])


def test_corpus_labels_in_first_appearance_order():
    corpus = Corpus(
        [
            EncodedSequence("a", "beta", [1]),
            EncodedSequence("b", "alpha", [2]),
            EncodedSequence("c", "beta", [3]),
        ]
    )
    assert corpus.labels == ["beta", "alpha"]
    assert [s.id for s in corpus.by_label()["beta"]] == ["a", "c"]


def test_merge_corpora_preserves_order_and_uniqueness():
    c1 = Corpus([EncodedSequence("a", "x", [1])])
    c2 = Corpus([EncodedSequence("b", "y", [2])])
    merged = merge_corpora([c1, c2])
    assert [s.id for s in merged] == ["a", "b"]
    with pytest.raises(DataError):
        merge_corpora([c1, c1])


# ---------------------------------------------------------------------------
# Encoded-file round trip
# ---------------------------------------------------------------------------


def test_write_encoded_line_format(tmp_path):
    corpus = Corpus(
        [EncodedSequence("r1", "v", [1, 3, 2]), EncodedSequence("r2", "v", [4])]
    )
    data = tmp_path / "c.encoded"
    write_encoded(corpus, str(data))
    assert data.read_text() == "1 -1 3 -1 2 -1 -2\n4 -1 -2\n"
    manifest = (tmp_path / "c.encoded.manifest.tsv").read_text()
    assert manifest == "0\tr1\tv\n1\tr2\tv\n"


def test_write_encoded_refuses_empty(tmp_path):
    with pytest.raises(DataError, match="empty"):
        write_encoded(Corpus([]), str(tmp_path / "c.encoded"))


@given(
    st.lists(
        st.tuples(
            st.lists(st.integers(1, 16), min_size=1, max_size=30),
            st.sampled_from(["a", "b", "c"]),
        ),
        min_size=1,
        max_size=10,
    )
)
@settings(max_examples=60, deadline=None)
def test_round_trip_random_corpora(tmp_path_factory, rows):
    tmp = tmp_path_factory.mktemp("roundtrip")
    corpus = Corpus(
        [EncodedSequence(f"s{i}", lab, toks) for i, (toks, lab) in enumerate(rows)]
    )
    path = str(tmp / "c.encoded")
    write_encoded(corpus, path)
    back = read_encoded(path)
    assert back == corpus


def test_read_encoded_rejects_bad_framing(tmp_path):
    data = tmp_path / "c.encoded"
    manifest = tmp_path / "c.encoded.manifest.tsv"
    manifest.write_text("0\ts0\tv\n")

    data.write_text("1 -1 3\n")
    with pytest.raises(ParseError, match="must end with '-1 -2'"):
        read_encoded(str(data))

    data.write_text("1 x 3 -1 -2\n")
    with pytest.raises(ParseError, match="non-integer token"):
        read_encoded(str(data))

    data.write_text("1 -1 -3 -1 2 -1 -2\n")
    with pytest.raises(ParseError, match="expected positive token"):
        read_encoded(str(data))


def test_read_encoded_rejects_manifest_mismatch(tmp_path):
    data = tmp_path / "c.encoded"
    data.write_text("1 -1 -2\n")
    manifest = tmp_path / "c.encoded.manifest.tsv"
    manifest.write_text("0\ts0\tv\n1\ts1\tv\n")
    with pytest.raises(DataError, match="manifest lists 2"):
        read_encoded(str(data))


# ---------------------------------------------------------------------------
# Accession fetching (network stubbed out)
# ---------------------------------------------------------------------------


class _FakeResponse:
    def __init__(self, text, status=200):
        self.text = text
        self.status_code = status

    def raise_for_status(self):
        if self.status_code >= 400:
            raise RuntimeError(f"HTTP {self.status_code}")


def test_fetch_uses_cache_and_reports_failures(tmp_path, monkeypatch):
    calls = []

    def fake_get(url, timeout):
        calls.append(url)
        if "bad" in url:
            return _FakeResponse("", status=404)
        acc = url.rsplit("/", 1)[-1]
        return _FakeResponse(f">{acc}\nACGT\n")

    monkeypatch.setattr("negseq.seqio.requests.get", fake_get)
    cache = str(tmp_path / "cache")

    records, failures = fetch_accessions(
        ["x1", "bad1", "x1"], "https://host/api", cache
    )
    # x1 fetched once, returned twice, in input order.
    assert [r.id for r in records] == ["x1", "x1"]
    assert list(failures) == ["bad1"]
    assert calls == ["https://host/api/x1", "https://host/api/bad1"]

    # Second round is served entirely from the cache.
    calls.clear()
    records, failures = fetch_accessions(["x1"], "https://host/api", cache)
    assert [r.id for r in records] == ["x1"]
    assert failures == {} and calls == []


def test_fetch_template_endpoint(tmp_path, monkeypatch):
    def fake_get(url, timeout):
        assert url == "https://host/api?id=x9"
        return _FakeResponse(">x9\nAC\n")

    monkeypatch.setattr("negseq.seqio.requests.get", fake_get)
    records, failures = fetch_accessions(
        ["x9"], "https://host/api?id={accession}", str(tmp_path / "cache")
    )
    assert [r.id for r in records] == ["x9"] and failures == {}


def test_fetch_raises_when_everything_fails(tmp_path, monkeypatch):
    monkeypatch.setattr(
        "negseq.seqio.requests.get",
        lambda url, timeout: _FakeResponse("", status=500),
    )
    with pytest.raises(FetchError):
        fetch_accessions(["a", "b"], "https://host/api", str(tmp_path / "cache"))
