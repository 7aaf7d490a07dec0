"""Gap-constrained patterns with absent-symbol slots, and their matching.

A pattern is a sequence of required symbols separated by a shared gap
window ``[M,N]``: between adjacent matched positions there must be
between M and N intervening positions (wildcards). Each internal gap may
additionally carry an absent symbol ("negative"): the occurrence is
valid only if that symbol appears nowhere strictly between the two
matched positions.

Support counting uses the one-off rule: no two counted occurrences may
share a matched position. Counting proceeds by a deterministic greedy
scan (leftmost root first, smallest admissible extension first, full
backtracking within a root before abandoning it); matched positions are
marked used, wildcard positions are not, and absent-symbol checks look
at every intervening position whether used or not.

The greedy count is a lower bound on the true maximum number of
disjoint occurrences; :func:`oracle_max_disjoint` computes the exact
maximum by exhaustive search and exists for validation at small sizes.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, OracleGuardError
from .seqio import CANONICAL, Corpus

CANONICAL_CODES = (1, 2, 3, 4)


@dataclass(frozen=True)
class Gap:
    """Inclusive bounds on the number of wildcards between matched symbols."""

    min_gap: int
    max_gap: int

    def __post_init__(self):
        if not (0 <= self.min_gap <= self.max_gap):
            raise DataError(f"bad gap bounds [{self.min_gap},{self.max_gap}]")

    def __str__(self) -> str:
        return f"[{self.min_gap},{self.max_gap}]"


@dataclass(frozen=True)
class Pattern:
    """Required symbols, one shared gap, and per-gap absent symbols.

    ``negatives`` has one entry per internal gap; ``None`` means the gap
    is unconstrained. Absent symbols are restricted to the canonical
    bases. Patterns are immutable and hashable, and their total order is
    the lexicographic order of :meth:`canonical`.
    """

    positives: tuple[int, ...]
    gap: Gap
    negatives: tuple[int | None, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not self.positives:
            raise DataError("pattern needs at least one symbol")
        if any(s < 1 for s in self.positives):
            raise DataError("symbol codes must be positive")
        if len(self.positives) == 1 and self.gap != Gap(0, 0):
            # No internal gaps: normalize so equality follows meaning
            # and the canonical form round-trips.
            object.__setattr__(self, "gap", Gap(0, 0))
        if self.negatives is None:
            object.__setattr__(self, "negatives", (None,) * (len(self.positives) - 1))
        if len(self.negatives) != len(self.positives) - 1:
            raise DataError("need one absent-symbol slot per internal gap")
        for e in self.negatives:
            if e is not None and e not in CANONICAL_CODES:
                raise DataError(f"absent symbol must be canonical, got code {e}")

    @property
    def length(self) -> int:
        return len(self.positives)

    @property
    def is_positive(self) -> bool:
        return all(e is None for e in self.negatives)

    def positive_projection(self) -> "Pattern":
        """The same symbols and gap with every absent-symbol slot cleared."""
        return Pattern(self.positives, self.gap)

    def canonical(self) -> str:
        return format_pattern(self)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        pos = np.asarray(self.positives, dtype=np.int64)
        neg = np.asarray([0 if e is None else e for e in self.negatives], dtype=np.int64)
        return pos, neg

    def __str__(self) -> str:
        return self.canonical()


def symbol_str(code: int) -> str:
    """Render a symbol code: canonical bases by letter, others as ``#n``."""
    if 1 <= code <= 4:
        return CANONICAL[code - 1]
    return f"#{code}"


def format_pattern(p: Pattern) -> str:
    """Canonical text form, e.g. ``A[0,2]~G C[0,2]C``.

    ``~X`` marks the symbol absent from the preceding gap. This string
    defines the total order over patterns and is inverted exactly by
    :func:`parse_pattern`.
    """
    parts = [symbol_str(p.positives[0])]
    for j in range(1, p.length):
        parts.append(str(p.gap))
        e = p.negatives[j - 1]
        if e is not None:
            parts.append("~" + symbol_str(e) + " ")
        parts.append(symbol_str(p.positives[j]))
    return "".join(parts)


_TOKEN = re.compile(
    r"\s*(?:(?P<sym>[ACGT]|\#\d+)|(?P<gap>\[\d+,\d+\])|(?P<neg>~(?:[ACGT]|\#\d+)))"
)


def _sym_code(text: str) -> int:
    if text.startswith("#"):
        code = int(text[1:])
        if code < 5:
            raise DataError(f"numeric symbol form reserved for codes >= 5, got {text}")
        return code
    return CANONICAL.index(text) + 1


def parse_pattern(text: str) -> Pattern:
    """Parse the canonical text form back into a :class:`Pattern`."""
    tokens: list[tuple[str, str]] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise DataError(f"cannot parse pattern at {text[pos:]!r}")
        tokens.append((m.lastgroup, m.group(m.lastgroup)))
        pos = m.end()

    if not tokens or tokens[0][0] != "sym":
        raise DataError(f"pattern must start with a symbol: {text!r}")
    positives = [_sym_code(tokens[0][1])]
    negatives: list[int | None] = []
    gap: Gap | None = None
    i = 1
    while i < len(tokens):
        kind, value = tokens[i]
        if kind != "gap":
            raise DataError(f"expected gap after symbol in {text!r}")
        lo, hi = value[1:-1].split(",")
        this_gap = Gap(int(lo), int(hi))
        if gap is None:
            gap = this_gap
        elif this_gap != gap:
            raise DataError(f"pattern mixes gap windows {gap} and {this_gap}")
        i += 1
        neg: int | None = None
        if i < len(tokens) and tokens[i][0] == "neg":
            neg = _sym_code(tokens[i][1][1:])
            i += 1
        if i >= len(tokens) or tokens[i][0] != "sym":
            raise DataError(f"dangling gap in pattern {text!r}")
        negatives.append(neg)
        positives.append(_sym_code(tokens[i][1]))
        i += 1
    if gap is None:
        gap = Gap(0, 0)
    return Pattern(tuple(positives), gap, tuple(negatives))


# ---------------------------------------------------------------------------
# Matching kernels. One source serves both the compiled and the plain-Python
# path so there is exactly one definition of the greedy semantics.
# ---------------------------------------------------------------------------


def _count_impl(flat, lo, hi, positives, negatives, min_gap, max_gap):
    k = positives.shape[0]
    if k == 1:
        # Single-symbol occurrences can never overlap.
        total = 0
        sym = positives[0]
        for i in range(lo, hi):
            if flat[i] == sym:
                total += 1
        return total
    used = np.zeros(hi - lo, dtype=np.uint8)
    pos = np.empty(k, dtype=np.int64)
    nxt = np.empty(k, dtype=np.int64)
    count = 0
    for root in range(lo, hi):
        if used[root - lo] == 1 or flat[root] != positives[0]:
            continue
        pos[0] = root
        j = 1
        nxt[1] = root + 1 + min_gap
        while j > 0:
            p = nxt[j]
            limit = pos[j - 1] + 1 + max_gap
            if limit > hi - 1:
                limit = hi - 1
            found = False
            while p <= limit:
                if used[p - lo] == 0 and flat[p] == positives[j]:
                    e = negatives[j - 1]
                    ok = True
                    if e != 0:
                        # Absent-symbol check scans used positions too.
                        for q in range(pos[j - 1] + 1, p):
                            if flat[q] == e:
                                ok = False
                                break
                    if ok:
                        found = True
                        break
                p += 1
            if not found:
                j -= 1
                continue
            pos[j] = p
            nxt[j] = p + 1
            if j == k - 1:
                for t in range(k):
                    used[pos[t] - lo] = 1
                count += 1
                break
            j += 1
            nxt[j] = p + 1 + min_gap
    return count


def _per_seq_impl(flat, starts, ends, positives, negatives, min_gap, max_gap, out):
    for s in range(starts.shape[0]):
        out[s] = _count_impl(flat, starts[s], ends[s], positives, negatives, min_gap, max_gap)


def _batch_db_impl(flat, starts, ends, ppos, pstarts, pneg, nstarts, gmin, gmax, out):
    for i in range(out.shape[0]):
        positives = ppos[pstarts[i] : pstarts[i + 1]]
        negatives = pneg[nstarts[i] : nstarts[i + 1]]
        total = 0
        for s in range(starts.shape[0]):
            total += _count_impl(
                flat, starts[s], ends[s], positives, negatives, gmin[i], gmax[i]
            )
        out[i] = total


def _batch_matrix_impl(flat, starts, ends, ppos, pstarts, pneg, nstarts, gmin, gmax, out):
    for i in range(out.shape[0]):
        positives = ppos[pstarts[i] : pstarts[i + 1]]
        negatives = pneg[nstarts[i] : nstarts[i + 1]]
        for s in range(starts.shape[0]):
            out[i, s] = _count_impl(
                flat, starts[s], ends[s], positives, negatives, gmin[i], gmax[i]
            )


try:  # pragma: no cover - exercised implicitly by every test run
    from numba import njit

    _count_impl = njit(nogil=True, cache=True)(_count_impl)
    _per_seq_impl = njit(nogil=True, cache=True)(_per_seq_impl)
    _batch_db_impl = njit(nogil=True, cache=True)(_batch_db_impl)
    _batch_matrix_impl = njit(nogil=True, cache=True)(_batch_matrix_impl)
    HAVE_COMPILED_KERNEL = True
except ImportError:  # pragma: no cover
    HAVE_COMPILED_KERNEL = False


@dataclass
class PackedCorpus:
    """Token sequences concatenated into one flat array for the kernels."""

    flat: np.ndarray
    starts: np.ndarray
    ends: np.ndarray

    @classmethod
    def from_token_lists(cls, token_lists: Iterable[Sequence[int]]) -> "PackedCorpus":
        lists = [np.asarray(t, dtype=np.int64) for t in token_lists]
        if lists:
            flat = np.concatenate(lists) if len(lists) > 1 else lists[0].copy()
        else:
            flat = np.empty(0, dtype=np.int64)
        lengths = np.asarray([len(t) for t in lists], dtype=np.int64)
        ends = np.cumsum(lengths)
        starts = ends - lengths
        return cls(flat, starts, ends)

    @classmethod
    def from_corpus(cls, corpus: Corpus) -> "PackedCorpus":
        return cls.from_token_lists(seq.tokens for seq in corpus)

    def __len__(self) -> int:
        return len(self.starts)


def _as_packed(sdb) -> PackedCorpus:
    if isinstance(sdb, PackedCorpus):
        return sdb
    if isinstance(sdb, Corpus):
        return PackedCorpus.from_corpus(sdb)
    return PackedCorpus.from_token_lists(sdb)


def support_oneoff(tokens: Sequence[int], pattern: Pattern) -> int:
    """Greedy one-off occurrence count of ``pattern`` in one sequence."""
    flat = np.asarray(tokens, dtype=np.int64)
    pos, neg = pattern.arrays()
    return int(
        _count_impl(flat, 0, flat.shape[0], pos, neg, pattern.gap.min_gap, pattern.gap.max_gap)
    )


def support_db(sdb, pattern: Pattern) -> int:
    """Sum of per-sequence one-off supports over a sequence database."""
    packed = _as_packed(sdb)
    out = np.zeros(len(packed), dtype=np.int64)
    pos, neg = pattern.arrays()
    _per_seq_impl(
        packed.flat, packed.starts, packed.ends, pos, neg,
        pattern.gap.min_gap, pattern.gap.max_gap, out,
    )
    return int(out.sum())


def support_per_sequence(packed: PackedCorpus, pattern: Pattern) -> np.ndarray:
    """One-off support of ``pattern`` in each sequence of ``packed``."""
    out = np.zeros(len(packed), dtype=np.int64)
    pos, neg = pattern.arrays()
    _per_seq_impl(
        packed.flat, packed.starts, packed.ends, pos, neg,
        pattern.gap.min_gap, pattern.gap.max_gap, out,
    )
    return out


def _pack_patterns(patterns: Sequence[Pattern]):
    """Concatenate pattern arrays so a batch kernel can slice per pattern."""
    pstarts = np.zeros(len(patterns) + 1, dtype=np.int64)
    nstarts = np.zeros(len(patterns) + 1, dtype=np.int64)
    pos_parts: list[np.ndarray] = []
    neg_parts: list[np.ndarray] = []
    gmin = np.zeros(len(patterns), dtype=np.int64)
    gmax = np.zeros(len(patterns), dtype=np.int64)
    for i, pat in enumerate(patterns):
        pos, neg = pat.arrays()
        pos_parts.append(pos)
        neg_parts.append(neg)
        pstarts[i + 1] = pstarts[i] + pos.shape[0]
        nstarts[i + 1] = nstarts[i] + neg.shape[0]
        gmin[i] = pat.gap.min_gap
        gmax[i] = pat.gap.max_gap
    ppos = np.concatenate(pos_parts) if pos_parts else np.zeros(0, dtype=np.int64)
    pneg = np.concatenate(neg_parts) if neg_parts else np.zeros(0, dtype=np.int64)
    return ppos, pstarts, pneg, nstarts, gmin, gmax


def _batch_chunks(n_patterns: int, threads: int) -> list[tuple[int, int]]:
    if n_patterns == 0:
        return []
    threads = max(1, int(threads))
    n_chunks = min(n_patterns, threads * 4) if threads > 1 else 1
    bounds = np.linspace(0, n_patterns, n_chunks + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def support_db_many(sdb, patterns: Sequence[Pattern], threads: int = 1) -> np.ndarray:
    """Database support for every pattern, one compiled pass per chunk.

    Output order matches the input order; the chunking is purely a work
    split, so the result is independent of ``threads``.
    """
    packed = _as_packed(sdb)
    out = np.zeros(len(patterns), dtype=np.int64)
    if not patterns:
        return out
    ppos, pstarts, pneg, nstarts, gmin, gmax = _pack_patterns(patterns)

    def run(lo: int, hi: int) -> None:
        _batch_db_impl(
            packed.flat, packed.starts, packed.ends,
            ppos, pstarts[lo : hi + 1], pneg, nstarts[lo : hi + 1],
            gmin[lo:hi], gmax[lo:hi], out[lo:hi],
        )

    chunks = _batch_chunks(len(patterns), threads)
    if len(chunks) == 1:
        run(*chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(lambda c: run(*c), chunks))
    return out


def support_matrix(sdb, patterns: Sequence[Pattern], threads: int = 1) -> np.ndarray:
    """Per-sequence supports for every pattern, shape (n_sequences, n_patterns)."""
    packed = _as_packed(sdb)
    out = np.zeros((len(patterns), len(packed)), dtype=np.int64)
    if not patterns or len(packed) == 0:
        return out.T.copy()
    ppos, pstarts, pneg, nstarts, gmin, gmax = _pack_patterns(patterns)

    def run(lo: int, hi: int) -> None:
        _batch_matrix_impl(
            packed.flat, packed.starts, packed.ends,
            ppos, pstarts[lo : hi + 1], pneg, nstarts[lo : hi + 1],
            gmin[lo:hi], gmax[lo:hi], out[lo:hi],
        )

    chunks = _batch_chunks(len(patterns), threads)
    if len(chunks) == 1:
        run(*chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(lambda c: run(*c), chunks))
    return out.T.copy()


def occurrences_all(tokens: Sequence[int], pattern: Pattern) -> list[tuple[int, ...]]:
    """Every occurrence of ``pattern``, as 1-based position tuples.

    Enumeration is exhaustive (no one-off restriction) and emitted in
    lexicographic order of the position tuples. Intended for analysis
    and validation; cost grows with the product of gap window widths.
    """
    seq = list(tokens)
    m = len(seq)
    k = pattern.length
    min_gap, max_gap = pattern.gap.min_gap, pattern.gap.max_gap
    out: list[tuple[int, ...]] = []
    stack: list[int] = []

    def extend(depth: int, last: int):
        if depth == k:
            out.append(tuple(p + 1 for p in stack))
            return
        lo = last + 1 + min_gap
        hi = min(last + 1 + max_gap, m - 1)
        e = pattern.negatives[depth - 1]
        for p in range(lo, hi + 1):
            if seq[p] != pattern.positives[depth]:
                continue
            if e is not None and any(seq[q] == e for q in range(last + 1, p)):
                continue
            stack.append(p)
            extend(depth + 1, p)
            stack.pop()

    for root in range(m):
        if seq[root] != pattern.positives[0]:
            continue
        stack.append(root)
        extend(1, root)
        stack.pop()
    return out


def oracle_max_disjoint(
    tokens: Sequence[int],
    pattern: Pattern,
    max_occurrences: int = 20,
) -> int:
    """Exact maximum number of pairwise position-disjoint occurrences.

    Branch-and-bound over :func:`occurrences_all`. Refuses problems with
    more than ``max_occurrences`` occurrences rather than risk an
    exponential blowup; raise the guard explicitly for bigger cases.
    """
    occs = occurrences_all(tokens, pattern)
    if len(occs) > max_occurrences:
        raise OracleGuardError(
            f"{len(occs)} occurrences exceed the oracle guard of {max_occurrences}"
        )
    occ_sets = [frozenset(o) for o in occs]
    n = len(occ_sets)
    best = 0

    def walk(i: int, taken: set, depth: int):
        nonlocal best
        if depth + (n - i) <= best:
            return
        if i == n:
            if depth > best:
                best = depth
            return
        if not (occ_sets[i] & taken):
            walk(i + 1, taken | occ_sets[i], depth + 1)
        walk(i + 1, taken, depth)

    walk(0, set(), 0)
    return best
