"""Text primitives: tokenization, sentence splitting, sparse TF-IDF vectors.

Everything here is deterministic and pure. Tokens are lowercased; leading and
trailing punctuation is split into single-character tokens while interior
punctuation (hyphens, abbreviation dots) stays attached to the word.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

DEFAULT_ABBREVIATIONS = frozenset({
    "mr.", "mrs.", "ms.", "dr.", "prof.", "gen.", "sen.", "rep.", "gov.",
    "st.", "jr.", "sr.", "co.", "inc.", "corp.", "ltd.",
    "u.s.", "u.k.", "u.n.", "e.g.", "i.e.", "etc.", "vs.", "no.",
    "jan.", "feb.", "mar.", "apr.", "aug.", "sept.", "oct.", "nov.", "dec.",
})


@dataclass(frozen=True)
class Token:
    """One lowercased token; ``is_word`` is False for pure punctuation."""

    surface: str
    is_word: bool

    def __post_init__(self):
        if not self.surface:
            raise ValueError("empty token surface")


@dataclass(frozen=True)
class SentenceSpan:
    """A tokenized sentence with its position inside a document collection."""

    tokens: tuple[Token, ...]
    doc_index: int
    sent_index_in_doc: int
    global_index: int

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("sentence with no tokens")

    @property
    def surfaces(self) -> tuple[str, ...]:
        return tuple(t.surface for t in self.tokens)

    @property
    def word_surfaces(self) -> tuple[str, ...]:
        return tuple(t.surface for t in self.tokens if t.is_word)

    @property
    def text(self) -> str:
        return " ".join(self.surfaces)


def tokenize(text: str) -> list[Token]:
    """Split on whitespace, then peel leading/trailing punctuation characters
    into their own tokens. All surfaces are lowercased."""
    tokens: list[Token] = []
    for chunk in text.split():
        chunk = chunk.lower()
        lead: list[str] = []
        while chunk and not chunk[0].isalnum():
            lead.append(chunk[0])
            chunk = chunk[1:]
        trail: list[str] = []
        while chunk and not chunk[-1].isalnum():
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(Token(c, False) for c in lead)
        if chunk:
            tokens.append(Token(chunk, True))
        tokens.extend(Token(c, False) for c in reversed(trail))
    return tokens


def word_surfaces(tokens: Iterable[Token]) -> tuple[str, ...]:
    """Surfaces of word tokens only (punctuation dropped)."""
    return tuple(t.surface for t in tokens if t.is_word)


def as_tokens(surfaces: Iterable[str]) -> list[Token]:
    """Wrap already-split surfaces as Tokens without re-splitting them."""
    return [
        Token(s, any(ch.isalnum() for ch in s))
        for s in (x.lower() for x in surfaces)
    ]


def join_tokens(tokens: Iterable[Token]) -> str:
    return " ".join(t.surface for t in tokens)


_TERMINALS = {".", "?", "!"}
_CLOSERS = {'"', "'", "”", "’", ")", "]"}


def split_sentences(
    text: str,
    abbreviations: frozenset[str] | None = None,
) -> list[str]:
    """Split at ``.``, ``?`` or ``!`` followed by whitespace or end of text.

    Closing quotes or brackets may stand between the terminator and the
    whitespace; they belong to the finished sentence. A terminal period is
    not a boundary when the word it closes is in the abbreviation list
    (compared lowercased, e.g. "mr.", "u.s.").
    """
    if abbreviations is None:
        abbreviations = DEFAULT_ABBREVIATIONS
    sentences: list[str] = []
    start = 0
    for i, ch in enumerate(text):
        if ch not in _TERMINALS or i < start:
            continue
        end = i + 1
        while end < len(text) and text[end] in _CLOSERS:
            end += 1
        if end < len(text) and not text[end].isspace():
            continue
        if ch == ".":
            j = i
            while j > 0 and not text[j - 1].isspace():
                j -= 1
            word = text[j : i + 1].lower()
            if word in abbreviations:
                continue
        piece = text[start:end].strip()
        if piece:
            sentences.append(piece)
        start = end
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


@dataclass(frozen=True)
class SparseVector:
    """Term -> weight map with no explicit zeros; weights must be finite."""

    entries: Mapping[str, float]

    def __post_init__(self):
        for term, w in self.entries.items():
            if w == 0.0:
                raise ValueError(f"zero-weight entry stored for {term!r}")
            if not math.isfinite(w):
                raise ValueError(f"non-finite weight for {term!r}")

    def norm(self) -> float:
        return math.sqrt(sum(w * w for w in self.entries.values()))


def dot(a: SparseVector, b: SparseVector) -> float:
    if len(a.entries) > len(b.entries):
        a, b = b, a
    return sum(w * b.entries.get(term, 0.0) for term, w in a.entries.items())


def cosine(a: SparseVector, b: SparseVector) -> float:
    na, nb = a.norm(), b.norm()
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot(a, b) / (na * nb)


class TfIdfStats:
    """Per-sentence document frequencies over one mega-document.

    idf(term) = ln(n_sentences / df(term)); terms present in every sentence
    get weight zero and are dropped from vectors. Only word tokens count.
    """

    def __init__(self, sentences: Sequence[Sequence[Token]], stem: bool = False):
        self.stem = stem
        self.n_sentences = len(sentences)
        df: Counter[str] = Counter()
        for sent in sentences:
            df.update(set(self._terms(sent)))
        self.df: dict[str, int] = dict(df)

    def _terms(self, tokens: Iterable[Token]) -> list[str]:
        terms = [t.surface for t in tokens if t.is_word]
        if self.stem:
            terms = [porter_stem(t) for t in terms]
        return terms

    def idf(self, term: str) -> float:
        d = self.df.get(term)
        if d is None or d == 0:
            return 0.0
        return math.log(self.n_sentences / d)


def tfidf_vector(tokens: Sequence[Token], stats: TfIdfStats) -> SparseVector:
    """TF-IDF vector of a token sequence: tf(term) * ln(N / df(term)).

    Terms unseen by ``stats`` or present in every sentence are dropped.
    Raises on an empty model.
    """
    if stats.n_sentences == 0:
        raise ValueError("TF-IDF stats built over zero sentences")
    tf = Counter(stats._terms(tokens))
    entries = {}
    for term, count in tf.items():
        w = count * stats.idf(term)
        if w != 0.0:
            entries[term] = w
    return SparseVector(entries)


# ---------------------------------------------------------------------------
# Porter stemmer (flag-controlled normalization; default off everywhere)
# ---------------------------------------------------------------------------

_VOWELS = "aeiou"


def _is_cons(word: str, i: int) -> bool:
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        return i == 0 or not _is_cons(word, i - 1)
    return True


def _measure(stem: str) -> int:
    """Count of vowel->consonant transitions: the m in [C](VC)^m[V]."""
    m = 0
    prev_vowel = False
    for i in range(len(stem)):
        v = not _is_cons(stem, i)
        if prev_vowel and not v:
            m += 1
        prev_vowel = v
    return m


def _has_vowel(stem: str) -> bool:
    return any(not _is_cons(stem, i) for i in range(len(stem)))


def _ends_double_cons(stem: str) -> bool:
    return (
        len(stem) >= 2
        and stem[-1] == stem[-2]
        and _is_cons(stem, len(stem) - 1)
    )


def _ends_cvc(stem: str) -> bool:
    if len(stem) < 3:
        return False
    if not (_is_cons(stem, len(stem) - 3) and not _is_cons(stem, len(stem) - 2) and _is_cons(stem, len(stem) - 1)):
        return False
    return stem[-1] not in "wxy"


def porter_stem(word: str) -> str:
    """Porter (1980) stemming algorithm for lowercase ASCII words."""
    if len(word) <= 2 or not word.isalpha():
        return word

    # step 1a
    if word.endswith("sses"):
        word = word[:-2]
    elif word.endswith("ies"):
        word = word[:-2]
    elif not word.endswith("ss") and word.endswith("s"):
        word = word[:-1]

    # step 1b
    if word.endswith("eed"):
        if _measure(word[:-3]) > 0:
            word = word[:-1]
    else:
        fired = False
        if word.endswith("ed") and _has_vowel(word[:-2]):
            word = word[:-2]
            fired = True
        elif word.endswith("ing") and _has_vowel(word[:-3]):
            word = word[:-3]
            fired = True
        if fired:
            if word.endswith(("at", "bl", "iz")):
                word += "e"
            elif _ends_double_cons(word) and word[-1] not in "lsz":
                word = word[:-1]
            elif _measure(word) == 1 and _ends_cvc(word):
                word += "e"

    # step 1c
    if word.endswith("y") and _has_vowel(word[:-1]):
        word = word[:-1] + "i"

    # steps 2-4: ordered (suffix, replacement, minimum measure) tables
    for table, min_m in (
        (
            (
                ("ational", "ate"), ("tional", "tion"), ("enci", "ence"),
                ("anci", "ance"), ("izer", "ize"), ("abli", "able"),
                ("alli", "al"), ("entli", "ent"), ("eli", "e"),
                ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
                ("ator", "ate"), ("alism", "al"), ("iveness", "ive"),
                ("fulness", "ful"), ("ousness", "ous"), ("aliti", "al"),
                ("iviti", "ive"), ("biliti", "ble"),
            ),
            1,
        ),
        (
            (
                ("icate", "ic"), ("ative", ""), ("alize", "al"),
                ("iciti", "ic"), ("ical", "ic"), ("ful", ""), ("ness", ""),
            ),
            1,
        ),
        (
            (
                ("al", ""), ("ance", ""), ("ence", ""), ("er", ""),
                ("ic", ""), ("able", ""), ("ible", ""), ("ant", ""),
                ("ement", ""), ("ment", ""), ("ent", ""), ("ion", ""),
                ("ou", ""), ("ism", ""), ("ate", ""), ("iti", ""),
                ("ous", ""), ("ive", ""), ("ize", ""),
            ),
            2,
        ),
    ):
        for suffix, repl in table:
            if word.endswith(suffix):
                stem = word[: len(word) - len(suffix)]
                if suffix == "ion" and min_m == 2 and not stem.endswith(("s", "t")):
                    break
                if _measure(stem) >= min_m:
                    word = stem + repl
                break

    # step 5a
    if word.endswith("e"):
        stem = word[:-1]
        m = _measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            word = stem

    # step 5b
    if _measure(word) > 1 and _ends_double_cons(word) and word.endswith("l"):
        word = word[:-1]
    return word
