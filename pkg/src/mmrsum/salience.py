"""Sentence importance (three variants) and redundancy for the MMR objective.

Importance variants: TF-IDF cosine against the whole sentence set, a linear
regressor predicting reference overlap from sentence features, and an oracle
that reads the references directly. All of them min-max normalize, so at
least one sentence always scores 1 and stays selectable.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from mmrsum.errors import DataError, NumericalError
from mmrsum.metrics import lcs_length, rouge_l
from mmrsum.neural import PERIOD, AbstractorParams, sentence_embedding
from mmrsum.textproc import (
    SentenceSpan,
    TfIdfStats,
    Token,
    cosine,
    tfidf_vector,
)

DEFAULT_SENTENCE_CAP = 33_000


def normalize_importance(scores: Sequence[float]) -> np.ndarray:
    """Min-max normalize to [0,1]; a constant input maps to all ones so the
    downstream selector always has a top sentence."""
    if len(scores) == 0:
        raise DataError("no scores to normalize")
    arr = np.asarray(scores, dtype=float)
    if not np.isfinite(arr).all():
        raise NumericalError("non-finite importance scores")
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        return np.ones_like(arr)
    return (arr - lo) / (hi - lo)


def importance_cosine(
    sentences: Sequence[SentenceSpan], stats: TfIdfStats
) -> np.ndarray:
    """TF-IDF cosine between each sentence and the concatenated sentence set,
    min-max normalized. Raw scores are all zero when every term is shared by
    every sentence (the document vector is empty); normalization then maps
    the constant row to all ones."""
    all_tokens = [t for s in sentences for t in s.tokens]
    doc_vec = tfidf_vector(all_tokens, stats)
    raw = [cosine(tfidf_vector(s.tokens, stats), doc_vec) for s in sentences]
    return normalize_importance(raw)


def importance_oracle(
    sentences: Sequence[SentenceSpan],
    references: Sequence[Sequence[Token]],
) -> np.ndarray:
    """Best-possible importance: max reference overlap recall per sentence."""
    if not references:
        raise DataError("oracle importance needs at least one reference")
    raw = []
    for s in sentences:
        if not any(t.is_word for t in s.tokens):
            raw.append(0.0)
            continue
        raw.append(max(rouge_l(s.tokens, ref).recall for ref in references))
    return normalize_importance(raw)


def redundancy(s: SentenceSpan, partial_summary: Sequence[Token]) -> float:
    """Overlap precision of a source sentence against the running summary:
    LCS length over the sentence's word count. Empty summary scores 0."""
    s_words = [t.surface for t in s.tokens if t.is_word]
    p_words = [t.surface for t in partial_summary if t.is_word]
    if not s_words or not p_words:
        return 0.0
    return lcs_length(s_words, p_words) / len(s_words)


# ---------------------------------------------------------------------------
# Feature extraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureVector:
    """Regression features for one sentence within its sentence set."""

    length: int
    abs_position: int
    rel_position: float
    quality: np.ndarray
    doc_vector: np.ndarray
    doc_cosine: float

    def as_array(self) -> np.ndarray:
        """Feature layout: [length, abs_position, rel_position, doc_cosine]
        followed by the sentence embedding. The shared doc_vector stays out;
        it is constant across one sentence set."""
        return np.concatenate(
            [
                np.array(
                    [
                        float(self.length),
                        float(self.abs_position),
                        self.rel_position,
                        self.doc_cosine,
                    ]
                ),
                self.quality,
            ]
        )


def _dense_cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b) / (na * nb)


def extract_features(
    sentences: Sequence[SentenceSpan], params: AbstractorParams
) -> list[FeatureVector]:
    """Features for every sentence of one set (a document or a mega-document).

    Positions are relative to the owning document; the document vector is
    the mean embedding over the whole set.
    """
    if not sentences:
        raise DataError("no sentences to featurize")
    embeddings = [sentence_embedding(s, params) for s in sentences]
    doc_vector = np.mean(embeddings, axis=0)
    per_doc_counts: dict[int, int] = {}
    for s in sentences:
        per_doc_counts[s.doc_index] = per_doc_counts.get(s.doc_index, 0) + 1
    out = []
    for s, emb in zip(sentences, embeddings):
        out.append(
            FeatureVector(
                length=len(s.tokens),
                abs_position=s.sent_index_in_doc,
                rel_position=s.sent_index_in_doc / per_doc_counts[s.doc_index],
                quality=emb,
                doc_vector=doc_vector,
                doc_cosine=_dense_cosine(emb, doc_vector),
            )
        )
    return out


def split_article_sentences(article: Sequence[Token]) -> list[SentenceSpan]:
    """Cut a flat token list at period tokens; an unterminated tail is kept."""
    spans: list[SentenceSpan] = []
    current: list[Token] = []
    for tok in article:
        current.append(tok)
        if tok.surface == PERIOD:
            spans.append(
                SentenceSpan(
                    tokens=tuple(current),
                    doc_index=0,
                    sent_index_in_doc=len(spans),
                    global_index=len(spans),
                )
            )
            current = []
    if current:
        spans.append(
            SentenceSpan(
                tokens=tuple(current),
                doc_index=0,
                sent_index_in_doc=len(spans),
                global_index=len(spans),
            )
        )
    return spans


# ---------------------------------------------------------------------------
# Regression model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImportanceTrainConfig:
    epsilon: float = 0.1
    learning_rate: float = 0.05
    epochs: int = 300
    l2: float = 1e-4
    seed: int = 0
    holdout_fraction: float = 0.1
    sentence_cap: int = DEFAULT_SENTENCE_CAP
    loss: str = "epsilon"  # or "squared"

    def __post_init__(self):
        if self.loss not in ("epsilon", "squared"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if not 0 < self.holdout_fraction < 1:
            raise ValueError("holdout_fraction must be in (0,1)")


@dataclass(frozen=True)
class ImportanceModel:
    weights: np.ndarray
    bias: float
    feature_mean: np.ndarray
    feature_std: np.ndarray
    train_loss: float
    holdout_mae: float
    epochs: int
    seed: int
    loss: str

    def __post_init__(self):
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias)):
            raise NumericalError("non-finite importance model parameters")

    def predict(self, features: Sequence[FeatureVector]) -> np.ndarray:
        x = np.stack([f.as_array() for f in features])
        z = (x - self.feature_mean) / self.feature_std
        return z @ self.weights + self.bias


def train_importance(
    sds_pairs: Sequence[tuple[Sequence[Token], Sequence[Token]]],
    abstractor_params: AbstractorParams,
    config: ImportanceTrainConfig = ImportanceTrainConfig(),
) -> ImportanceModel:
    """Fit the linear importance regressor on single-document pairs.

    Every article sentence becomes one example: features from
    ``extract_features`` over the article's own sentences, target = overlap
    recall of the sentence against the pair's summary. Full-batch
    subgradient descent on epsilon-insensitive loss (or plain squared loss
    under the fallback flag), with columnwise standardization recorded in
    the model.
    """
    xs: list[np.ndarray] = []
    ys: list[float] = []
    for article, summary in sds_pairs:
        spans = split_article_sentences(article)
        spans = [s for s in spans if any(t.is_word for t in s.tokens)]
        if not spans or not any(t.is_word for t in summary):
            continue
        feats = extract_features(spans, abstractor_params)
        for s, f in zip(spans, feats):
            xs.append(f.as_array())
            ys.append(rouge_l(s.tokens, summary).recall)
            if len(xs) >= config.sentence_cap:
                break
        if len(xs) >= config.sentence_cap:
            break
    if len(xs) < 10:
        raise DataError(f"need at least 10 training sentences, got {len(xs)}")

    x = np.stack(xs)
    y = np.asarray(ys)
    rng = np.random.RandomState(config.seed)
    order = rng.permutation(len(x))
    n_hold = max(1, int(round(len(x) * config.holdout_fraction)))
    hold_idx, train_idx = order[:n_hold], order[n_hold:]
    xt, yt = x[train_idx], y[train_idx]
    xh, yh = x[hold_idx], y[hold_idx]

    mean = xt.mean(axis=0)
    std = xt.std(axis=0)
    std[std == 0] = 1.0
    zt = (xt - mean) / std

    w = np.zeros(x.shape[1])
    b = float(yt.mean())
    n = len(yt)
    for _ in range(config.epochs):
        err = zt @ w + b - yt
        if config.loss == "squared":
            gw = 2 * (zt.T @ err) / n + config.l2 * w
            gb = 2 * float(err.mean())
        else:
            active = np.abs(err) > config.epsilon
            sign = np.sign(err) * active
            gw = (zt.T @ sign) / n + config.l2 * w
            gb = float(sign.mean())
        w -= config.learning_rate * gw
        b -= config.learning_rate * gb

    err = zt @ w + b - yt
    if config.loss == "squared":
        train_loss = float((err**2).mean())
    else:
        train_loss = float(np.maximum(np.abs(err) - config.epsilon, 0.0).mean())
    zh = (xh - mean) / std
    holdout_mae = float(np.abs(zh @ w + b - yh).mean())

    return ImportanceModel(
        weights=w,
        bias=b,
        feature_mean=mean,
        feature_std=std,
        train_loss=train_loss,
        holdout_mae=holdout_mae,
        epochs=config.epochs,
        seed=config.seed,
        loss=config.loss,
    )


def importance_summrec(
    sentences: Sequence[SentenceSpan],
    model: ImportanceModel,
    abstractor_params: AbstractorParams,
) -> np.ndarray:
    """Predicted reference-overlap recall, clamped to [0,1], then normalized."""
    features = extract_features(sentences, abstractor_params)
    raw = np.clip(model.predict(features), 0.0, 1.0)
    return normalize_importance(raw)


IMPORTANCE_VARIANTS = ("cosine", "summrec", "bestsummrec")


def compute_importance(
    variant: str,
    sentences: Sequence[SentenceSpan],
    references: Sequence[Sequence[Token]] = (),
    model: ImportanceModel | None = None,
    abstractor_params: AbstractorParams | None = None,
) -> np.ndarray:
    """Dispatch to one importance variant over a mega-document's sentences."""
    if variant == "cosine":
        stats = TfIdfStats([s.tokens for s in sentences])
        return importance_cosine(sentences, stats)
    if variant == "summrec":
        if model is None or abstractor_params is None:
            raise DataError("summrec importance needs a trained model and abstractor")
        return importance_summrec(sentences, model, abstractor_params)
    if variant == "bestsummrec":
        return importance_oracle(sentences, references)
    raise DataError(f"unknown importance variant {variant!r}")
