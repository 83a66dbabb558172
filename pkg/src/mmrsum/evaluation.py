"""Scoring and analysis reports: overlap metrics per topic with corpus
means, extractiveness of summaries against their source, and where in the
source the summary content comes from.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from mmrsum.corpus import MegaDocument, Topic
from mmrsum.errors import DataError
from mmrsum.metrics import RougeScore, ngram_multiset, rouge_n, rouge_su, truncate_words
from mmrsum.neural import PERIOD
from mmrsum.textproc import Token, as_tokens

NGRAM_RULE = (
    "n-grams are word-token sequences (punctuation excluded, stopwords kept), "
    "n = 1..3, matched within sentence boundaries"
)


# ---------------------------------------------------------------------------
# Overlap evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TopicScores:
    topic_id: str
    rouge_1: RougeScore
    rouge_2: RougeScore
    rouge_su4: RougeScore


@dataclass(frozen=True)
class EvalReport:
    per_topic: tuple[TopicScores, ...]
    mean_rouge_1: RougeScore
    mean_rouge_2: RougeScore
    mean_rouge_su4: RougeScore
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        def score(s: RougeScore) -> dict:
            return {"recall": s.recall, "precision": s.precision, "f1": s.f1}

        return json.dumps(
            {
                "config": self.config,
                "per_topic": [
                    {
                        "topic": t.topic_id,
                        "rouge_1": score(t.rouge_1),
                        "rouge_2": score(t.rouge_2),
                        "rouge_su4": score(t.rouge_su4),
                    }
                    for t in self.per_topic
                ],
                "mean": {
                    "rouge_1": score(self.mean_rouge_1),
                    "rouge_2": score(self.mean_rouge_2),
                    "rouge_su4": score(self.mean_rouge_su4),
                },
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> EvalReport:
        d = json.loads(text)

        def score(s: dict) -> RougeScore:
            return RougeScore(s["recall"], s["precision"], s["f1"])

        return cls(
            per_topic=tuple(
                TopicScores(
                    topic_id=t["topic"],
                    rouge_1=score(t["rouge_1"]),
                    rouge_2=score(t["rouge_2"]),
                    rouge_su4=score(t["rouge_su4"]),
                )
                for t in d["per_topic"]
            ),
            mean_rouge_1=score(d["mean"]["rouge_1"]),
            mean_rouge_2=score(d["mean"]["rouge_2"]),
            mean_rouge_su4=score(d["mean"]["rouge_su4"]),
            config=d["config"],
        )

    def render_table(self) -> str:
        lines = []
        if self.config:
            lines.append("config: " + json.dumps(self.config, sort_keys=True))
        lines.append(f"{'topic':<20} {'R-1':>7} {'R-2':>7} {'R-SU4':>7}")
        for t in self.per_topic:
            lines.append(
                f"{t.topic_id:<20} {100 * t.rouge_1.f1:>7.2f} "
                f"{100 * t.rouge_2.f1:>7.2f} {100 * t.rouge_su4.f1:>7.2f}"
            )
        lines.append(
            f"{'MEAN':<20} {100 * self.mean_rouge_1.f1:>7.2f} "
            f"{100 * self.mean_rouge_2.f1:>7.2f} {100 * self.mean_rouge_su4.f1:>7.2f}"
        )
        return "\n".join(lines)


def _mean_score(scores: Sequence[RougeScore]) -> RougeScore:
    return RougeScore(
        recall=float(np.mean([s.recall for s in scores])),
        precision=float(np.mean([s.precision for s in scores])),
        f1=float(np.mean([s.f1 for s in scores])),
    )


def evaluate(
    summaries: Mapping[str, Sequence[Token]],
    topics: Sequence[Topic],
    truncate_100: bool = False,
    stem: bool = False,
    config: Mapping | None = None,
) -> EvalReport:
    """Score every summary against its topic's references; means are
    arithmetic over topics. Topic order in the report is sorted by id, so
    the result does not depend on input order."""
    if not summaries:
        raise DataError("no summaries to evaluate")
    by_id = {t.topic_id: t for t in topics}
    rows: list[TopicScores] = []
    for topic_id in sorted(summaries):
        topic = by_id.get(topic_id)
        if topic is None:
            raise DataError(f"summary for unknown topic {topic_id!r}")
        if not topic.references:
            raise DataError(f"topic {topic_id!r} has no reference summaries")
        tokens = list(summaries[topic_id])
        if truncate_100:
            tokens = truncate_words(tokens, 100)
        rows.append(
            TopicScores(
                topic_id=topic_id,
                rouge_1=rouge_n(tokens, topic.references, 1, stem=stem),
                rouge_2=rouge_n(tokens, topic.references, 2, stem=stem),
                rouge_su4=rouge_su(tokens, topic.references, d_max=4, stem=stem),
            )
        )
    return EvalReport(
        per_topic=tuple(rows),
        mean_rouge_1=_mean_score([r.rouge_1 for r in rows]),
        mean_rouge_2=_mean_score([r.rouge_2 for r in rows]),
        mean_rouge_su4=_mean_score([r.rouge_su4 for r in rows]),
        config=dict(config or {}),
    )


# ---------------------------------------------------------------------------
# Analysis reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnalysisReport:
    """Either or both halves of the source-overlap analysis: containment
    percentages, and location quartiles per summary sentence position."""

    ngram_containment: tuple[tuple[int, float], ...] = ()
    sentence_containment: float | None = None
    location_quartiles: tuple[tuple[int, tuple[float, float, float]], ...] = ()

    def __post_init__(self):
        for _, pct in self.ngram_containment:
            if not 0.0 <= pct <= 100.0:
                raise ValueError(f"containment percentage out of range: {pct}")
        if self.sentence_containment is not None:
            if not 0.0 <= self.sentence_containment <= 100.0:
                raise ValueError("sentence containment out of range")
        for _, (lo, mid, hi) in self.location_quartiles:
            if not lo <= mid <= hi:
                raise ValueError(f"quartiles out of order: {(lo, mid, hi)}")

    def merged(self, other: AnalysisReport) -> AnalysisReport:
        if self.ngram_containment and other.ngram_containment:
            raise ValueError("both reports carry containment figures")
        if self.location_quartiles and other.location_quartiles:
            raise ValueError("both reports carry location figures")
        return AnalysisReport(
            ngram_containment=self.ngram_containment or other.ngram_containment,
            sentence_containment=(
                self.sentence_containment
                if self.sentence_containment is not None
                else other.sentence_containment
            ),
            location_quartiles=self.location_quartiles or other.location_quartiles,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "ngram_rule": NGRAM_RULE,
                "ngram_containment": [[n, pct] for n, pct in self.ngram_containment],
                "sentence_containment": self.sentence_containment,
                "location_quartiles": [
                    [k, list(q)] for k, q in self.location_quartiles
                ],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> AnalysisReport:
        d = json.loads(text)
        return cls(
            ngram_containment=tuple((n, pct) for n, pct in d["ngram_containment"]),
            sentence_containment=d["sentence_containment"],
            location_quartiles=tuple(
                (k, tuple(q)) for k, q in d["location_quartiles"]
            ),
        )

    def render_table(self) -> str:
        lines = [f"rule: {NGRAM_RULE}"]
        if self.ngram_containment:
            lines.append("containment in source (%)")
            for n, pct in self.ngram_containment:
                lines.append(f"  {n}-grams {pct:>7.2f}")
        if self.sentence_containment is not None:
            lines.append(f"  sentences {self.sentence_containment:>6.2f}")
        if self.location_quartiles:
            lines.append("source-sentence location by summary sentence (q1/median/q3)")
            for k, (lo, mid, hi) in self.location_quartiles:
                lines.append(f"  sentence {k}: {lo:.1f} / {mid:.1f} / {hi:.1f}")
        return "\n".join(lines)


def summary_sentence_chunks(tokens: Sequence[str]) -> list[tuple[str, ...]]:
    """Split a flat summary into sentence chunks at period symbols; an
    unterminated tail is kept as a final partial chunk."""
    chunks: list[tuple[str, ...]] = []
    current: list[str] = []
    for tok in tokens:
        current.append(tok)
        if tok == PERIOD:
            chunks.append(tuple(current))
            current = []
    if current:
        chunks.append(tuple(current))
    return chunks


def _source_gram_sets(mega: MegaDocument, ns: Sequence[int]) -> dict[int, set]:
    """Per-n union over sentences of each sentence's n-gram set."""
    out: dict[int, set] = {n: set() for n in ns}
    for sent in mega.sentences:
        for n in ns:
            out[n].update(ngram_multiset(sent.tokens, n))
    return out


def _contains_run(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    if not needle or len(needle) > len(haystack):
        return False
    needle = tuple(needle)
    return any(
        tuple(haystack[i : i + len(needle)]) == needle
        for i in range(len(haystack) - len(needle) + 1)
    )


def extractiveness_report(
    summaries: Mapping[str, Sequence[str]],
    megadocs: Mapping[str, MegaDocument],
) -> AnalysisReport:
    """Percentage of summary n-grams (n = 1..3) and completed summary
    sentences found verbatim in the source. Counting follows NGRAM_RULE;
    a sentence counts when its word sequence appears as a contiguous run
    inside one source sentence."""
    ns = (1, 2, 3)
    totals = {n: 0 for n in ns}
    matched = {n: 0 for n in ns}
    sentence_total = 0
    sentence_matched = 0
    for topic_id, tokens in summaries.items():
        if topic_id not in megadocs:
            raise DataError(f"no source mega-document for topic {topic_id!r}")
        mega = megadocs[topic_id]
        source_grams = _source_gram_sets(mega, ns)
        source_words = [s.word_surfaces for s in mega.sentences]
        for chunk in summary_sentence_chunks(tokens):
            chunk_tokens = as_tokens(chunk)
            for n in ns:
                for gram, count in ngram_multiset(chunk_tokens, n).items():
                    totals[n] += count
                    if gram in source_grams[n]:
                        matched[n] += count
            if chunk[-1] == PERIOD:
                sentence_total += 1
                words = [t.surface for t in chunk_tokens if t.is_word]
                if any(_contains_run(sw, words) for sw in source_words):
                    sentence_matched += 1
    return AnalysisReport(
        ngram_containment=tuple(
            (n, 100.0 * matched[n] / totals[n] if totals[n] else 100.0) for n in ns
        ),
        sentence_containment=(
            100.0 * sentence_matched / sentence_total if sentence_total else 100.0
        ),
    )


def content_location_report(
    summaries: Mapping[str, Sequence[str]],
    megadocs: Mapping[str, MegaDocument],
    max_position: int = 5,
) -> AnalysisReport:
    """Quartiles of the source-sentence index where each summary sentence's
    n-grams first occur, grouped by summary sentence position (1-based).
    n-grams with no source occurrence contribute nothing."""
    ns = (1, 2, 3)
    locations: dict[int, list[int]] = {k: [] for k in range(1, max_position + 1)}
    for topic_id, tokens in summaries.items():
        if topic_id not in megadocs:
            raise DataError(f"no source mega-document for topic {topic_id!r}")
        mega = megadocs[topic_id]
        per_sentence = [
            {n: set(ngram_multiset(s.tokens, n)) for n in ns} for s in mega.sentences
        ]
        for k, chunk in enumerate(summary_sentence_chunks(tokens), start=1):
            if k > max_position:
                break
            chunk_tokens = as_tokens(chunk)
            for n in ns:
                for gram, count in ngram_multiset(chunk_tokens, n).items():
                    loc = next(
                        (
                            j
                            for j, grams in enumerate(per_sentence)
                            if gram in grams[n]
                        ),
                        None,
                    )
                    if loc is not None:
                        locations[k].extend([loc] * count)
    quartiles = tuple(
        (k, tuple(float(q) for q in np.percentile(locations[k], (25, 50, 75))))
        for k in sorted(locations)
        if locations[k]
    )
    return AnalysisReport(location_quartiles=quartiles)


def median_locations(report: AnalysisReport) -> dict[int, float]:
    """Summary-sentence position -> median source-sentence index."""
    return {k: q[1] for k, q in report.location_quartiles}
