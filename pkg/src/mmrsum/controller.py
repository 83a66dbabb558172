"""Selection-guided decoding: score sentences, keep the top K, mask the rest,
and refresh redundancy every time a sentence boundary is emitted.

The guide is a pure state machine over the emitted prefix, so beam hypotheses
fork it freely and a finished sequence can be replayed to reconstruct the
exact per-step selections for the trace.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import torch

from mmrsum.corpus import MegaDocument
from mmrsum.errors import DataError
from mmrsum.neural import (
    PERIOD,
    AbstractorParams,
    AttentionMask,
    GenerationResult,
    encode,
    generate,
)
from mmrsum.salience import ImportanceModel, compute_importance, redundancy
from mmrsum.textproc import SentenceSpan, as_tokens

MASK_VARIANTS = ("mute", "salience")


@dataclass(frozen=True)
class MmrConfig:
    """Controller defaults: K=7 selected sentences, balance 0.6, muting mask,
    decode budget 100..120 tokens, greedy decoding."""

    k: int = 7
    lam: float = 0.6
    mask: str = "mute"
    min_len: int = 100
    max_len: int = 120
    beam: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0,1]")
        if self.mask not in MASK_VARIANTS:
            raise ValueError(f"unknown mask variant {self.mask!r}")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError(f"bad length bounds {self.min_len}..{self.max_len}")
        if self.beam < 1:
            raise ValueError("beam must be at least 1")

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "lambda": self.lam,
            "mask": self.mask,
            "min_len": self.min_len,
            "max_len": self.max_len,
            "beam": self.beam,
        }


def mmr_scores(
    importance: Sequence[float], redundancy_scores: Sequence[float], lam: float
) -> np.ndarray:
    """lam * importance - (1 - lam) * redundancy, elementwise."""
    i = np.asarray(importance, dtype=float)
    r = np.asarray(redundancy_scores, dtype=float)
    if i.shape != r.shape:
        raise ValueError(f"importance/redundancy length mismatch: {i.shape} vs {r.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0,1]")
    return lam * i - (1.0 - lam) * r


def select_top_k(scores: Sequence[float], k: int) -> tuple[int, ...]:
    """Indices of the k largest scores, descending, ties to the smaller index."""
    if k < 1:
        raise ValueError("k must be at least 1")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return tuple(order[: min(k, len(scores))])


def build_mask(
    selected: Sequence[int],
    ownership: Sequence[int],
    variant: str,
    mmr_values: Sequence[float],
) -> AttentionMask:
    """Positionwise multipliers from the selected sentence set.

    mute: 1 on positions of selected sentences, 0 elsewhere. salience: the
    owning sentence's score clamped at 0; if clamping leaves nothing
    positive, fall back to mute so decoding can continue.
    """
    if not selected:
        raise DataError("cannot build a mask from an empty selection")
    if variant not in MASK_VARIANTS:
        raise ValueError(f"unknown mask variant {variant!r}")
    chosen = set(selected)
    if variant == "salience":
        mult = [
            max(float(mmr_values[o]), 0.0) if o in chosen else 0.0 for o in ownership
        ]
        if any(m > 0 for m in mult):
            return AttentionMask(
                "salience", torch.tensor(mult, dtype=torch.float64)
            )
    mult = [1.0 if o in chosen else 0.0 for o in ownership]
    return AttentionMask("mute", torch.tensor(mult, dtype=torch.float64))


# ---------------------------------------------------------------------------
# The guide: MMR state over the emitted prefix
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GuideState:
    """Everything the controller knows after a given emitted prefix."""

    tokens: tuple[str, ...]
    redundancy: tuple[float, ...]
    mmr: tuple[float, ...]


@dataclass(frozen=True)
class MmrGuide:
    """Immutable mask provider: selection from current MMR, redundancy
    refresh at every period symbol."""

    sentences: tuple[SentenceSpan, ...]
    ownership: tuple[int, ...]
    importance: tuple[float, ...]
    lam: float
    k: int
    mask_variant: str

    def initial_state(self) -> GuideState:
        n = len(self.sentences)
        return GuideState(
            tokens=(),
            redundancy=(0.0,) * n,
            mmr=tuple(mmr_scores(self.importance, (0.0,) * n, self.lam)),
        )

    def selected(self, state: GuideState) -> tuple[int, ...]:
        return select_top_k(state.mmr, self.k)

    def mask_for(self, state: GuideState) -> AttentionMask:
        return build_mask(
            self.selected(state), self.ownership, self.mask_variant, state.mmr
        )

    def advance(self, state: GuideState, emitted_surface: str) -> GuideState:
        tokens = state.tokens + (emitted_surface,)
        if emitted_surface != PERIOD:
            return dataclasses.replace(state, tokens=tokens)
        return self.refreshed(tokens)

    def refreshed(self, tokens: tuple[str, ...]) -> GuideState:
        """Recompute redundancy and MMR against the given summary prefix."""
        partial = as_tokens(tokens)
        red = tuple(redundancy(s, partial) for s in self.sentences)
        return GuideState(
            tokens=tokens,
            redundancy=red,
            mmr=tuple(mmr_scores(self.importance, red, self.lam)),
        )


# ---------------------------------------------------------------------------
# Results and traces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SummaryDraft:
    tokens: tuple[str, ...]
    max_len: int

    def __post_init__(self):
        if len(self.tokens) > self.max_len:
            raise ValueError("summary exceeds its budget")

    @property
    def token_count(self) -> int:
        return len(self.tokens)

    @property
    def completed_sentences(self) -> tuple[tuple[str, ...], ...]:
        out: list[tuple[str, ...]] = []
        current: list[str] = []
        for tok in self.tokens:
            current.append(tok)
            if tok == PERIOD:
                out.append(tuple(current))
                current = []
        return tuple(out)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class TraceStep:
    t: int
    token: str
    selected: tuple[int, ...]
    mmr: tuple[float, ...]
    redundancy: tuple[float, ...]
    attention: tuple[float, ...]
    mask: tuple[float, ...]


@dataclass(frozen=True)
class SummarizeResult:
    topic_id: str
    draft: SummaryDraft
    steps: tuple[TraceStep, ...]
    importance: tuple[float, ...]
    config: MmrConfig
    forced_final_update: bool
    final_state: GuideState

    def trace_payload(self) -> dict:
        return {
            "topic": self.topic_id,
            "config": self.config.as_dict(),
            "importance": list(self.importance),
            "forced_final_update": self.forced_final_update,
            "final_mmr": list(self.final_state.mmr),
            "final_redundancy": list(self.final_state.redundancy),
            "summary": list(self.draft.tokens),
            "steps": [
                {
                    "t": s.t,
                    "token": s.token,
                    "selected": list(s.selected),
                    "mmr": list(s.mmr),
                    "redundancy": list(s.redundancy),
                    "attention": list(s.attention),
                    "mask": list(s.mask),
                }
                for s in self.steps
            ],
        }


def write_trace(result: SummarizeResult, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(result.trace_payload(), sort_keys=True) + "\n", encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# Abstractors
# ---------------------------------------------------------------------------

class GuidedAbstractor(Protocol):
    """A decoder that accepts the guide and returns tokens plus per-step
    guide-consistent traces."""

    def run(
        self, mega_doc: MegaDocument, guide: MmrGuide, config: MmrConfig
    ) -> tuple[tuple[str, ...], tuple[TraceStep, ...]]: ...


def _replay_trace(
    guide: MmrGuide,
    tokens: Sequence[str],
    attentions: Sequence[Sequence[float]],
) -> tuple[TraceStep, ...]:
    """Rebuild per-step guide snapshots by folding the emitted prefix."""
    steps: list[TraceStep] = []
    state = guide.initial_state()
    for t, (surface, alpha) in enumerate(zip(tokens, attentions), start=1):
        mask = guide.mask_for(state)
        steps.append(
            TraceStep(
                t=t,
                token=surface,
                selected=guide.selected(state),
                mmr=state.mmr,
                redundancy=state.redundancy,
                attention=tuple(float(a) for a in alpha),
                mask=tuple(float(m) for m in mask.multipliers),
            )
        )
        state = guide.advance(state, surface)
    return tuple(steps)


@dataclass(frozen=True)
class PointerGeneratorAbstractor:
    """The trained encoder-decoder, steered through its attention mask."""

    params: AbstractorParams

    def run(
        self, mega_doc: MegaDocument, guide: MmrGuide, config: MmrConfig
    ) -> tuple[tuple[str, ...], tuple[TraceStep, ...]]:
        enc = encode(mega_doc.tokens, self.params, ownership=mega_doc.ownership)
        result: GenerationResult = generate(
            enc,
            self.params,
            guide,
            min_len=config.min_len,
            max_len=config.max_len,
            beam_size=config.beam,
        )
        attentions = [step.attention.numpy() for step in result.steps]
        return result.tokens, _replay_trace(guide, result.tokens, attentions)


@dataclass(frozen=True)
class CopyAbstractor:
    """Stub decoder: copies the current top-scored sentence verbatim, one
    token per step, with one-hot attention on the copied position. Used to
    check the controller against plain iterative sentence extraction."""

    def run(
        self, mega_doc: MegaDocument, guide: MmrGuide, config: MmrConfig
    ) -> tuple[tuple[str, ...], tuple[TraceStep, ...]]:
        starts: list[int] = []
        total = 0
        for s in mega_doc.sentences:
            starts.append(total)
            total += len(s.tokens)

        tokens: list[str] = []
        steps: list[TraceStep] = []
        state = guide.initial_state()
        sent_id: int | None = None
        offset = 0
        while len(tokens) < config.max_len:
            if sent_id is None:
                sent_id = guide.selected(state)[0]
                offset = 0
            sentence = mega_doc.sentences[sent_id]
            surface = sentence.tokens[offset].surface
            alpha = [0.0] * total
            alpha[starts[sent_id] + offset] = 1.0
            mask = guide.mask_for(state)
            tokens.append(surface)
            steps.append(
                TraceStep(
                    t=len(tokens),
                    token=surface,
                    selected=guide.selected(state),
                    mmr=state.mmr,
                    redundancy=state.redundancy,
                    attention=tuple(alpha),
                    mask=tuple(float(m) for m in mask.multipliers),
                )
            )
            state = guide.advance(state, surface)
            offset += 1
            if offset >= len(sentence.tokens):
                sent_id = None
        return tuple(tokens), tuple(steps)


def pg_mmr_summarize(
    mega_doc: MegaDocument,
    abstractor: GuidedAbstractor,
    importance_variant: str = "cosine",
    config: MmrConfig = MmrConfig(),
    references: Sequence[Sequence] = (),
    importance_model: ImportanceModel | None = None,
) -> SummarizeResult:
    """Score sentences, then decode under per-step top-K attention masks.

    Importance is computed once up front by the chosen variant; redundancy
    and the combined scores refresh after every emitted period symbol. The
    final state reflects one forced refresh when the summary does not end
    at a sentence boundary.
    """
    if not mega_doc.sentences:
        raise DataError(f"topic {mega_doc.topic_id!r} has no sentences")
    importance = compute_importance(
        importance_variant,
        mega_doc.sentences,
        references=references,
        model=importance_model,
        abstractor_params=getattr(abstractor, "params", None),
    )
    guide = MmrGuide(
        sentences=mega_doc.sentences,
        ownership=tuple(mega_doc.ownership),
        importance=tuple(float(x) for x in importance),
        lam=config.lam,
        k=config.k,
        mask_variant=config.mask,
    )
    tokens, steps = abstractor.run(mega_doc, guide, config)

    ended_on_boundary = bool(tokens) and tokens[-1] == PERIOD
    final_state = guide.refreshed(tuple(tokens))
    return SummarizeResult(
        topic_id=mega_doc.topic_id,
        draft=SummaryDraft(tokens=tuple(tokens), max_len=config.max_len),
        steps=steps,
        importance=guide.importance,
        config=config,
        forced_final_update=not ended_on_boundary,
        final_state=final_state,
    )
