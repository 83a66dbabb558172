"""Overlap metrics over token sequences: n-gram, skip-bigram, and LCS scores.

All counting excludes punctuation-only tokens and keeps stopwords. Multi
reference scores take the per-reference maximum by f1. Optional Porter
stemming normalizes surfaces before counting; it is off by default.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence, TypeVar

from mmrsum.errors import DataError
from mmrsum.textproc import Token, porter_stem

_Item = TypeVar("_Item")


@dataclass(frozen=True)
class RougeScore:
    recall: float
    precision: float
    f1: float

    def __post_init__(self):
        for name in ("recall", "precision", "f1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} out of range: {v}")

    @classmethod
    def from_counts(cls, overlap: int, cand_units: int, ref_units: int) -> RougeScore:
        p = overlap / cand_units if cand_units else 0.0
        r = overlap / ref_units if ref_units else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(recall=r, precision=p, f1=f1)


def _words(tokens: Sequence[Token], stem: bool) -> list[str]:
    out = [t.surface for t in tokens if t.is_word]
    if stem:
        out = [porter_stem(w) for w in out]
    return out


def ngram_multiset(
    tokens: Sequence[Token], n: int, stem: bool = False
) -> Counter[tuple[str, ...]]:
    """Contiguous n-grams over word tokens, with multiplicity."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    words = _words(tokens, stem)
    return Counter(tuple(words[i : i + n]) for i in range(len(words) - n + 1))


def skip_bigram_multiset(
    tokens: Sequence[Token], d_max: int, stem: bool = False
) -> Counter[tuple[str, str]]:
    """Ordered pairs (words[i], words[j]) with i < j and j - i <= d_max."""
    if d_max < 1:
        raise ValueError(f"d_max must be positive, got {d_max}")
    words = _words(tokens, stem)
    pairs: Counter[tuple[str, str]] = Counter()
    for i in range(len(words)):
        for j in range(i + 1, min(i + d_max, len(words) - 1) + 1):
            pairs[(words[i], words[j])] += 1
    return pairs


def _clipped_overlap(cand: Counter, ref: Counter) -> int:
    return sum((cand & ref).values())


def _best_by_f1(scores: list[RougeScore]) -> RougeScore:
    best = scores[0]
    for s in scores[1:]:
        if s.f1 > best.f1:
            best = s
    return best


def rouge_n(
    candidate: Sequence[Token],
    references: Sequence[Sequence[Token]],
    n: int,
    stem: bool = False,
) -> RougeScore:
    """Clipped n-gram overlap; multi-reference = maximum by f1."""
    if not references:
        raise DataError("rouge_n needs at least one reference")
    cand_units = ngram_multiset(candidate, n, stem)
    ref_multisets = [ngram_multiset(r, n, stem) for r in references]
    if all(sum(m.values()) == 0 for m in ref_multisets):
        raise DataError(f"every reference has fewer than {n} word tokens")
    scores = []
    for ref_units in ref_multisets:
        overlap = _clipped_overlap(cand_units, ref_units)
        scores.append(
            RougeScore.from_counts(overlap, sum(cand_units.values()), sum(ref_units.values()))
        )
    return _best_by_f1(scores)


def rouge_su(
    candidate: Sequence[Token],
    references: Sequence[Sequence[Token]],
    d_max: int = 4,
    stem: bool = False,
) -> RougeScore:
    """Skip-bigram overlap extended with unigrams as extra counting units."""
    if not references:
        raise DataError("rouge_su needs at least one reference")

    def units(tokens: Sequence[Token]) -> Counter:
        combined: Counter = Counter(skip_bigram_multiset(tokens, d_max, stem))
        combined.update(ngram_multiset(tokens, 1, stem))
        return combined

    cand_units = units(candidate)
    ref_multisets = [units(r) for r in references]
    if all(sum(m.values()) == 0 for m in ref_multisets):
        raise DataError("every reference is empty after punctuation filtering")
    scores = []
    for ref_units in ref_multisets:
        overlap = _clipped_overlap(cand_units, ref_units)
        scores.append(
            RougeScore.from_counts(overlap, sum(cand_units.values()), sum(ref_units.values()))
        )
    return _best_by_f1(scores)


def lcs_length(a: Sequence[_Item], b: Sequence[_Item]) -> int:
    """Longest common subsequence length by dynamic programming."""
    if not a or not b:
        return 0
    if len(b) > len(a):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                curr.append(prev[j - 1] + 1)
            else:
                curr.append(max(prev[j], curr[j - 1]))
        prev = curr
    return prev[-1]


def rouge_l(
    candidate: Sequence[Token],
    reference: Sequence[Token],
    stem: bool = False,
) -> RougeScore:
    """Flat-sequence LCS score: recall = L/|reference|, precision = L/|candidate|."""
    cand = _words(candidate, stem)
    ref = _words(reference, stem)
    if not cand or not ref:
        raise DataError("rouge_l operands must contain at least one word token")
    lcs = lcs_length(cand, ref)
    return RougeScore.from_counts(lcs, len(cand), len(ref))


def truncate_words(tokens: Sequence[Token], limit: int) -> list[Token]:
    """Truncate after the limit-th word token; punctuation standing between
    the last kept word and the next word survives."""
    if limit < 1:
        raise ValueError(f"limit must be positive, got {limit}")
    out: list[Token] = []
    seen = 0
    for tok in tokens:
        if tok.is_word:
            seen += 1
            if seen > limit:
                break
        out.append(tok)
    return out
