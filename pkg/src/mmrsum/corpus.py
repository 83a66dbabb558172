"""Dataset ingestion and synthesis.

Topics (clusters of dated documents plus reference summaries) and SDS pairs
(single article/summary records) arrive as JSON Lines. A topic is flattened
into a mega-document: documents sorted chronologically, sentences segmented,
tokenized, filtered, and assigned dense global indices.
"""
from __future__ import annotations

import datetime
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from mmrsum.errors import DataError
from mmrsum.textproc import SentenceSpan, Token, split_sentences, tokenize

logger = logging.getLogger(__name__)

QUOTE_SURFACES = frozenset({'"', "“", "”", "`"})
PERIOD = "."


@dataclass(frozen=True)
class Document:
    body: str
    date: str | None = None
    title: str | None = None

    def parsed_date(self) -> datetime.date | None:
        if self.date is None:
            return None
        try:
            return datetime.date.fromisoformat(self.date)
        except ValueError as exc:
            raise DataError(f"unparseable document date {self.date!r}") from exc


@dataclass(frozen=True)
class Topic:
    topic_id: str
    documents: tuple[Document, ...]
    references: tuple[tuple[Token, ...], ...] = ()

    def __post_init__(self):
        if not self.documents:
            raise DataError(f"topic {self.topic_id!r} has no documents")


@dataclass(frozen=True)
class MegaDocument:
    """Flattened topic: retained sentences in chronological document order."""

    topic_id: str
    sentences: tuple[SentenceSpan, ...]

    @property
    def tokens(self) -> list[Token]:
        return [t for s in self.sentences for t in s.tokens]

    @property
    def ownership(self) -> list[int]:
        """Owning global sentence index for every token position."""
        return [s.global_index for s in self.sentences for _ in s.tokens]

    def to_json(self) -> str:
        payload = {
            "topic_id": self.topic_id,
            "sentences": [
                {
                    "surfaces": list(s.surfaces),
                    "is_word": [t.is_word for t in s.tokens],
                    "doc_index": s.doc_index,
                    "sent_index_in_doc": s.sent_index_in_doc,
                    "global_index": s.global_index,
                }
                for s in self.sentences
            ],
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> MegaDocument:
        payload = json.loads(text)
        sentences = []
        for rec in payload["sentences"]:
            toks = tuple(
                Token(surf, bool(w))
                for surf, w in zip(rec["surfaces"], rec["is_word"])
            )
            sentences.append(
                SentenceSpan(
                    tokens=toks,
                    doc_index=rec["doc_index"],
                    sent_index_in_doc=rec["sent_index_in_doc"],
                    global_index=rec["global_index"],
                )
            )
        return cls(topic_id=payload["topic_id"], sentences=tuple(sentences))


def build_megadoc(topic: Topic) -> MegaDocument:
    """Flatten a topic into one ordered, filtered sentence sequence.

    Documents are stably sorted by date with undated ones after all dated
    ones. Sentences are dropped when they open with a quotation mark, do
    not end with the period token, or contain no word token.
    """
    order = sorted(
        range(len(topic.documents)),
        key=lambda i: (
            topic.documents[i].parsed_date() is None,
            topic.documents[i].parsed_date() or datetime.date.min,
        ),
    )
    sentences: list[SentenceSpan] = []
    for doc_index in order:
        doc = topic.documents[doc_index]
        kept_in_doc = 0
        for raw in split_sentences(doc.body):
            toks = tuple(tokenize(raw))
            if not toks:
                continue
            if toks[0].surface in QUOTE_SURFACES:
                continue
            if toks[-1].surface != PERIOD:
                continue
            if not any(t.is_word for t in toks):
                continue
            sentences.append(
                SentenceSpan(
                    tokens=toks,
                    doc_index=doc_index,
                    sent_index_in_doc=kept_in_doc,
                    global_index=len(sentences),
                )
            )
            kept_in_doc += 1
    if not sentences:
        raise DataError(f"topic {topic.topic_id!r}: no sentence survived filtering")
    return MegaDocument(topic_id=topic.topic_id, sentences=tuple(sentences))


# ---------------------------------------------------------------------------
# JSON Lines loading and saving
# ---------------------------------------------------------------------------

def _read_lines(path: str | Path) -> list[str]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"no such file: {p}")
    return p.read_text(encoding="utf-8").splitlines()


def load_topics(path: str | Path) -> list[Topic]:
    """Load topics from JSON Lines: {id, documents:[{date?,title?,body}], references:[str]}."""
    topics: list[Topic] = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            docs = tuple(
                Document(
                    body=d["body"],
                    date=d.get("date"),
                    title=d.get("title"),
                )
                for d in rec["documents"]
            )
            refs = tuple(tuple(tokenize(r)) for r in rec.get("references", []))
            topics.append(Topic(topic_id=str(rec["id"]), documents=docs, references=refs))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}:{lineno}: bad topic record ({exc})") from exc
    return topics


def load_sds_pairs(
    path: str | Path, lenient: bool = False
) -> list[tuple[list[Token], list[Token]]]:
    """Load (article, summary) token pairs from JSON Lines {article, summary}.

    Malformed lines are fatal unless ``lenient``, in which case they are
    logged with their line number and skipped.
    """
    pairs: list[tuple[list[Token], list[Token]]] = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            article, summary = rec["article"], rec["summary"]
            if not isinstance(article, str) or not isinstance(summary, str):
                raise TypeError("article and summary must be strings")
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            if lenient:
                logger.warning("%s:%d: skipping bad record (%s)", path, lineno, exc)
                continue
            raise DataError(f"{path}:{lineno}: bad SDS record ({exc})") from exc
        pairs.append((tokenize(article), tokenize(summary)))
    return pairs


def save_topics_jsonl(topics: Iterable[Topic], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in topics:
            rec = {
                "id": t.topic_id,
                "documents": [
                    {
                        k: v
                        for k, v in (
                            ("date", d.date),
                            ("title", d.title),
                            ("body", d.body),
                        )
                        if v is not None
                    }
                    for d in t.documents
                ],
                "references": [" ".join(tok.surface for tok in r) for r in t.references],
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def save_sds_jsonl(
    pairs: Iterable[tuple[Sequence[Token], Sequence[Token]]], path: str | Path
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for article, summary in pairs:
            rec = {
                "article": " ".join(t.surface for t in article),
                "summary": " ".join(t.surface for t in summary),
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Synthetic fusion corpus
# ---------------------------------------------------------------------------

_ONSETS = "bcdfgklmnprstvz"
_NUCLEI = "aeiou"


def _word_pool(size: int) -> list[str]:
    """Deterministic pool of pronounceable two-syllable words."""
    pool = []
    for a in _ONSETS:
        for b in _NUCLEI:
            for c in _ONSETS:
                for d in _NUCLEI:
                    pool.append(a + b + c + d)
                    if len(pool) == size:
                        return pool
    raise ValueError(f"cannot build {size} distinct words")


@dataclass(frozen=True)
class SynthCorpus:
    topics: tuple[Topic, ...]
    sds_pairs: tuple[tuple[list[Token], list[Token]], ...]
    key_sentences: dict[str, tuple[str, ...]] = field(default_factory=dict)
    """topic id -> text of the planted key sentence of each document."""


def synth_fusion_corpus(
    seed: int,
    n_topics: int,
    vocab_size: int = 120,
    docs_per_topic: int = 3,
    filler_range: tuple[int, int] = (2, 4),
) -> SynthCorpus:
    """Build topics whose reference summary is a known fusion of planted
    key sentences, plus SDS pairs that teach two-sentence lead copying.

    Every document opens with a key sentence of four to eight words (length
    drawn per topic) unique within the topic; the reference is the
    chronological concatenation of the keys, so key sentences dominate any
    reference-overlap score by construction. Fillers draw from a disjoint
    pool. Deterministic per seed.
    """
    import numpy as np

    if n_topics < 0 or vocab_size <= 0 or docs_per_topic <= 0:
        raise ValueError("corpus dimensions must be positive")
    lo, hi = filler_range
    if not 0 < lo <= hi:
        raise ValueError(f"bad filler range {filler_range}")

    rng = np.random.RandomState(seed)
    pool = _word_pool(vocab_size)
    split = max(8 * docs_per_topic, (2 * vocab_size) // 3)
    if split >= vocab_size:
        raise ValueError("vocab too small for the requested topic shape")
    key_pool, filler_pool = pool[:split], pool[split:]

    topics: list[Topic] = []
    sds: list[tuple[list[Token], list[Token]]] = []
    key_sents: dict[str, tuple[str, ...]] = {}
    base = datetime.date(2005, 1, 1)

    for t in range(n_topics):
        topic_id = f"synth-{t:03d}"
        picks = rng.permutation(len(key_pool))[: 8 * docs_per_topic]
        # distinct dates so chronological order is unambiguous
        day_offsets = rng.permutation(5000)[:docs_per_topic]
        # Key length varies across topics so sentence starts stay
        # unpredictable, but is shared within a topic so reference overlap
        # ranks keys by content rather than by length.
        m_k = int(rng.randint(4, 9))
        keys_per_doc = []
        docs: list[Document] = []
        for d in range(docs_per_topic):
            words = [key_pool[i] for i in picks[8 * d : 8 * d + m_k]]
            key = " ".join(words) + " ."
            keys_per_doc.append(key)
            n_fill = int(rng.randint(lo, hi + 1))
            fillers = []
            for _ in range(n_fill):
                m = int(rng.randint(4, 8))
                fw = [filler_pool[i] for i in rng.randint(0, len(filler_pool), m)]
                fillers.append(" ".join(fw) + " .")
            body = " ".join([key] + fillers)
            date = base + datetime.timedelta(days=int(day_offsets[d]))
            docs.append(Document(body=body, date=date.isoformat()))
            # Two-sentence summaries teach the abstractor to continue past
            # its first sentence boundary instead of always stopping there.
            sds.append((tokenize(body), tokenize(key + " " + fillers[0])))
        # chronological fusion of the key sentences is the reference
        by_date = sorted(range(docs_per_topic), key=lambda i: docs[i].date)
        reference = " ".join(keys_per_doc[i] for i in by_date)
        shuffled = [docs[i] for i in rng.permutation(docs_per_topic)]
        topics.append(
            Topic(
                topic_id=topic_id,
                documents=tuple(shuffled),
                references=(tuple(tokenize(reference)),),
            )
        )
        key_sents[topic_id] = tuple(keys_per_doc)

    return SynthCorpus(
        topics=tuple(topics), sds_pairs=tuple(sds), key_sentences=key_sents
    )
