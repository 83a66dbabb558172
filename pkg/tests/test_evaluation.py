"""Tests for scoring reports and source-overlap analyses."""
from __future__ import annotations

import numpy as np
import pytest

from mmrsum.controller import CopyAbstractor, MmrConfig, pg_mmr_summarize
from mmrsum.corpus import Document, Topic, build_megadoc, synth_fusion_corpus
from mmrsum.errors import DataError
from mmrsum.evaluation import (
    AnalysisReport,
    EvalReport,
    content_location_report,
    evaluate,
    extractiveness_report,
    median_locations,
    summary_sentence_chunks,
)
from mmrsum.metrics import rouge_n
from mmrsum.textproc import tokenize


def topic_with_reference(topic_id, body, reference):
    return Topic(
        topic_id=topic_id,
        documents=(Document(body=body),),
        references=(tuple(tokenize(reference)),),
    )


def disjoint_megadoc(n_sentences):
    """Sentences with pairwise-disjoint vocabularies, one per index."""
    body = " ".join(f"w{i}a w{i}b w{i}c." for i in range(n_sentences))
    return build_megadoc(Topic("disjoint", (Document(body=body),)))


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def test_evaluate_verbatim_reference_scores_one():
    text = "the cat sat on the mat ."
    topic = topic_with_reference("t1", "ignored.", text)
    report = evaluate({"t1": tokenize(text)}, [topic])
    row = report.per_topic[0]
    assert row.rouge_1.f1 == 1.0
    assert row.rouge_2.f1 == 1.0
    assert row.rouge_su4.f1 == 1.0
    assert report.mean_rouge_1.f1 == 1.0


def test_evaluate_degenerate_summary_scores_zero():
    topic = topic_with_reference("t1", "ignored.", "the cat sat on the mat .")
    report = evaluate({"t1": tokenize("zebra")}, [topic])
    row = report.per_topic[0]
    assert row.rouge_1.f1 == 0.0
    assert row.rouge_2.f1 == 0.0
    assert row.rouge_su4.f1 == 0.0


def test_evaluate_matches_metric_oracles():
    topic = topic_with_reference("t1", "ignored.", "the quick brown fox jumps .")
    summary = tokenize("the slow brown fox sleeps .")
    report = evaluate({"t1": summary}, [topic])
    row = report.per_topic[0]
    assert row.rouge_1 == rouge_n(summary, topic.references, 1)
    assert row.rouge_2 == rouge_n(summary, topic.references, 2)


def test_evaluate_mean_is_arithmetic():
    topics = [
        topic_with_reference("a", "x.", "the cat sat ."),
        topic_with_reference("b", "x.", "a dog ran far ."),
    ]
    summaries = {"a": tokenize("the cat sat ."), "b": tokenize("no overlap here .")}
    report = evaluate(summaries, topics)
    f1s = [t.rouge_1.f1 for t in report.per_topic]
    assert report.mean_rouge_1.f1 == pytest.approx(float(np.mean(f1s)))
    recalls = [t.rouge_su4.recall for t in report.per_topic]
    assert report.mean_rouge_su4.recall == pytest.approx(float(np.mean(recalls)))


def test_evaluate_invariant_to_topic_order():
    topics = [
        topic_with_reference("a", "x.", "alpha beta gamma ."),
        topic_with_reference("b", "x.", "delta epsilon zeta ."),
    ]
    summaries = {"b": tokenize("delta epsilon ."), "a": tokenize("alpha beta .")}
    fwd = evaluate(summaries, topics)
    rev = evaluate(dict(reversed(list(summaries.items()))), list(reversed(topics)))
    assert fwd == rev
    assert fwd.to_json() == rev.to_json()
    assert [t.topic_id for t in fwd.per_topic] == ["a", "b"]


def test_evaluate_truncation_flag_changes_precision():
    words = [f"w{i}" for i in range(150)]
    reference = " ".join(words[:100])
    topic = topic_with_reference("t1", "x.", reference)
    summary = tokenize(" ".join(words))
    plain = evaluate({"t1": summary}, [topic])
    cut = evaluate({"t1": summary}, [topic], truncate_100=True)
    assert cut.per_topic[0].rouge_1.precision == 1.0
    assert plain.per_topic[0].rouge_1.precision == pytest.approx(100 / 150)
    assert cut.per_topic[0].rouge_1.recall == plain.per_topic[0].rouge_1.recall == 1.0


def test_evaluate_rejects_missing_topic_and_references():
    topic = topic_with_reference("known", "x.", "the cat .")
    with pytest.raises(DataError, match="unknown topic"):
        evaluate({"other": tokenize("the cat .")}, [topic])
    bare = Topic("bare", (Document(body="x."),))
    with pytest.raises(DataError, match="no reference"):
        evaluate({"bare": tokenize("the cat .")}, [bare])
    with pytest.raises(DataError, match="no summaries"):
        evaluate({}, [topic])


def test_eval_report_json_round_trip():
    topic = topic_with_reference("t1", "x.", "the quick brown fox .")
    report = evaluate(
        {"t1": tokenize("the brown fox .")}, [topic], config={"k": 7, "lambda": 0.6}
    )
    again = EvalReport.from_json(report.to_json())
    assert again == report
    assert again.to_json() == report.to_json()


def test_eval_report_table_layout():
    topic = topic_with_reference("t1", "x.", "the quick brown fox .")
    report = evaluate({"t1": tokenize("the brown fox .")}, [topic], config={"k": 7})
    table = report.render_table()
    assert "R-1" in table and "R-2" in table and "R-SU4" in table
    assert "MEAN" in table
    assert table.splitlines()[0].startswith("config:")


# ---------------------------------------------------------------------------
# extractiveness
# ---------------------------------------------------------------------------

def stub_summaries(seed=23, n_topics=3, max_len=30):
    corpus = synth_fusion_corpus(seed=seed, n_topics=n_topics)
    megadocs = {t.topic_id: build_megadoc(t) for t in corpus.topics}
    cfg = MmrConfig(k=2, lam=0.6, min_len=1, max_len=max_len)
    summaries = {
        tid: list(
            pg_mmr_summarize(mega, CopyAbstractor(), "cosine", cfg).draft.tokens
        )
        for tid, mega in megadocs.items()
    }
    return summaries, megadocs


def test_copy_summaries_are_fully_extractive():
    summaries, megadocs = stub_summaries()
    report = extractiveness_report(summaries, megadocs)
    assert report.ngram_containment == ((1, 100.0), (2, 100.0), (3, 100.0))
    assert report.sentence_containment == 100.0


def test_novel_words_score_zero_everywhere():
    mega = disjoint_megadoc(3)
    report = extractiveness_report({"disjoint": ["qqq", "zzz", "yyy", "."]}, {"disjoint": mega})
    assert report.ngram_containment == ((1, 0.0), (2, 0.0), (3, 0.0))
    assert report.sentence_containment == 0.0


def test_reordered_source_sentences_stay_fully_extractive():
    mega = disjoint_megadoc(4)
    s3 = [t.surface for t in mega.sentences[3].tokens]
    s1 = [t.surface for t in mega.sentences[1].tokens]
    report = extractiveness_report({"disjoint": s3 + s1}, {"disjoint": mega})
    assert report.ngram_containment == ((1, 100.0), (2, 100.0), (3, 100.0))
    assert report.sentence_containment == 100.0


def test_paraphrase_profile_high_unigrams_no_sentences():
    body = (
        "the economy grew rapidly last year. "
        "analysts expect slower growth ahead. "
        "exports rose in every quarter."
    )
    mega = build_megadoc(Topic("econ", (Document(body=body),)))
    summary = tokenize("growth slowed but the economy rose last quarter .")
    report = extractiveness_report({"econ": [t.surface for t in summary]}, {"econ": mega})
    pct = dict(report.ngram_containment)
    assert pct[1] >= 50.0
    assert pct[1] >= pct[2] >= pct[3]
    assert report.sentence_containment == 0.0


def test_partial_trailing_sentence_counts_ngrams_not_sentences():
    mega = disjoint_megadoc(2)
    tokens = [t.surface for t in mega.sentences[0].tokens[:-1]]  # no period
    report = extractiveness_report({"disjoint": tokens}, {"disjoint": mega})
    assert dict(report.ngram_containment)[1] == 100.0
    # No completed sentence at all -> vacuous 100.
    assert report.sentence_containment == 100.0


def test_extractiveness_requires_matching_megadoc():
    with pytest.raises(DataError, match="no source mega-document"):
        extractiveness_report({"nope": ["a", "."]}, {})


# ---------------------------------------------------------------------------
# content location
# ---------------------------------------------------------------------------

def test_copy_from_one_sentence_has_median_at_that_index():
    mega = disjoint_megadoc(6)
    s3 = [t.surface for t in mega.sentences[3].tokens]
    report = content_location_report({"disjoint": s3}, {"disjoint": mega})
    assert report.location_quartiles == ((1, (3.0, 3.0, 3.0)),)


def test_two_copied_sentences_yield_two_medians():
    mega = disjoint_megadoc(41)
    s3 = [t.surface for t in mega.sentences[3].tokens]
    s40 = [t.surface for t in mega.sentences[40].tokens]
    report = content_location_report({"disjoint": s3 + s40}, {"disjoint": mega})
    assert median_locations(report) == {1: 3.0, 2: 40.0}
    for _, (lo, mid, hi) in report.location_quartiles:
        assert lo == mid == hi


def test_first_occurrence_wins_for_repeated_content():
    body = "alpha beta gamma. delta epsilon zeta. alpha beta gamma."
    mega = build_megadoc(Topic("rep", (Document(body=body),)))
    s_last = [t.surface for t in mega.sentences[2].tokens]
    report = content_location_report({"rep": s_last}, {"rep": mega})
    assert median_locations(report) == {1: 0.0}


def test_unmatched_ngrams_contribute_nothing():
    mega = disjoint_megadoc(3)
    report = content_location_report({"disjoint": ["qqq", "zzz", "."]}, {"disjoint": mega})
    assert report.location_quartiles == ()


def test_positions_beyond_limit_are_ignored():
    mega = disjoint_megadoc(8)
    tokens: list[str] = []
    for i in range(7):
        tokens.extend(t.surface for t in mega.sentences[i].tokens)
    report = content_location_report({"disjoint": tokens}, {"disjoint": mega}, max_position=5)
    assert sorted(median_locations(report)) == [1, 2, 3, 4, 5]


# ---------------------------------------------------------------------------
# AnalysisReport plumbing
# ---------------------------------------------------------------------------

def test_summary_sentence_chunks_fixtures():
    assert summary_sentence_chunks(["a", ".", "b", "c", ".", "d"]) == [
        ("a", "."),
        ("b", "c", "."),
        ("d",),
    ]
    assert summary_sentence_chunks([]) == []


def test_analysis_report_validation():
    with pytest.raises(ValueError, match="percentage"):
        AnalysisReport(ngram_containment=((1, 120.0),))
    with pytest.raises(ValueError, match="quartiles"):
        AnalysisReport(location_quartiles=((1, (5.0, 4.0, 6.0)),))


def test_analysis_report_merge_and_round_trip():
    summaries, megadocs = stub_summaries(seed=29, n_topics=2)
    ext = extractiveness_report(summaries, megadocs)
    loc = content_location_report(summaries, megadocs)
    combined = ext.merged(loc)
    assert combined.ngram_containment == ext.ngram_containment
    assert combined.location_quartiles == loc.location_quartiles
    assert AnalysisReport.from_json(combined.to_json()) == combined
    with pytest.raises(ValueError, match="containment"):
        ext.merged(ext)
    table = combined.render_table()
    assert table.startswith("rule:")
    assert "1-grams" in table and "sentence 1" in table
