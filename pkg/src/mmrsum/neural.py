"""Desk-scale pointer-generator encoder-decoder with injectable attention masks.

The architecture is written out tensor by tensor: a bidirectional recurrent
encoder, a unidirectional recurrent decoder, additive attention with a
cumulative-attention input, a two-layer vocabulary projection, and a copy
switch mixing vocabulary and copy probabilities over a per-input extended
vocabulary. Autograd supplies training gradients; tests check them against
central finite differences.

All tensors are float64 and all randomness flows from one seeded numpy
generator, so every run is bit-reproducible on a single thread.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
import torch

from mmrsum.errors import DataError, NumericalError
from mmrsum.textproc import SentenceSpan, Token

UNK = "<unk>"
START = "<s>"
STOP = "</s>"
PERIOD = "."

_INIT_SCALE = 0.08
_NEG_INF = -1e30
_PROB_FLOOR = 1e-12


def _single_thread() -> None:
    # bit-reproducibility requires a fixed reduction order
    torch.set_num_threads(1)


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Vocabulary:
    """Closed word list with reserved control symbols at fixed ids."""

    words: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    UNK_ID = 0
    START_ID = 1
    STOP_ID = 2

    def __post_init__(self):
        if self.words[:3] != (UNK, START, STOP):
            raise ValueError("vocabulary must start with the reserved symbols")
        if len(set(self.words)) != len(self.words):
            raise ValueError("duplicate vocabulary entries")
        object.__setattr__(self, "index", {w: i for i, w in enumerate(self.words)})

    def __len__(self) -> int:
        return len(self.words)

    def id_of(self, surface: str) -> int:
        return self.index.get(surface, self.UNK_ID)

    @classmethod
    def build(
        cls, token_seqs: Sequence[Sequence[Token]], max_size: int = 5000
    ) -> Vocabulary:
        """Frequency-ranked vocabulary (ties alphabetical), capped at max_size.

        The period symbol is always included so sentence boundaries stay
        expressible.
        """
        if max_size < 5:
            raise ValueError("max_size too small for the reserved symbols")
        counts: dict[str, int] = {}
        for seq in token_seqs:
            for tok in seq:
                counts[tok.surface] = counts.get(tok.surface, 0) + 1
        ranked = sorted(counts, key=lambda w: (-counts[w], w))
        words = [UNK, START, STOP, PERIOD]
        for w in ranked:
            if len(words) >= max_size:
                break
            if w not in (UNK, START, STOP, PERIOD):
                words.append(w)
        return cls(words=tuple(words))


def extended_ids(
    tokens: Sequence[Token], vocab: Vocabulary
) -> tuple[list[int], list[int], list[str]]:
    """Per-position (vocab id, copy-extended id) plus the OOV word list.

    Extended ids place each out-of-vocabulary source word at
    len(vocab) + its first-occurrence rank, reset per input.
    """
    ids: list[int] = []
    ext: list[int] = []
    oov: list[str] = []
    oov_index: dict[str, int] = {}
    for tok in tokens:
        i = vocab.id_of(tok.surface)
        ids.append(i)
        if i != Vocabulary.UNK_ID:
            ext.append(i)
        else:
            if tok.surface not in oov_index:
                oov_index[tok.surface] = len(oov)
                oov.append(tok.surface)
            ext.append(len(vocab) + oov_index[tok.surface])
    return ids, ext, oov


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LstmWeights:
    """One recurrent cell; gate layout along dim 0 is [input|forget|cell|output]."""

    W_x: torch.Tensor
    W_h: torch.Tensor
    b: torch.Tensor


@dataclass(frozen=True)
class HyperParams:
    embed_dim: int = 32
    hidden_dim: int = 64
    max_vocab: int = 5000
    learning_rate: float = 1e-3
    epochs: int = 10
    grad_clip: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim % 2:
            raise ValueError("hidden_dim must be even (split across directions)")
        if self.embed_dim < 1 or self.hidden_dim < 2:
            raise ValueError("dimensions must be positive")
        if self.epochs < 1 or self.learning_rate <= 0:
            raise ValueError("bad training schedule")


@dataclass(frozen=True)
class AbstractorParams:
    """Every weight of the abstractor, grouped as the four trainable families:
    sequence model (embeddings + recurrent cells), attention, output layers,
    and the copy switch."""

    vocab: Vocabulary
    embed_dim: int
    hidden_dim: int
    embedding: torch.Tensor
    enc_fwd: LstmWeights
    enc_bwd: LstmWeights
    dec: LstmWeights
    attn_v: torch.Tensor
    attn_W: torch.Tensor
    attn_b: torch.Tensor
    out_W1: torch.Tensor
    out_b1: torch.Tensor
    out_W2: torch.Tensor
    out_b2: torch.Tensor
    switch_w: torch.Tensor
    switch_b: torch.Tensor

    def tensors(self) -> dict[str, torch.Tensor]:
        out: dict[str, torch.Tensor] = {"embedding": self.embedding}
        for name in ("enc_fwd", "enc_bwd", "dec"):
            cell: LstmWeights = getattr(self, name)
            out[f"{name}.W_x"] = cell.W_x
            out[f"{name}.W_h"] = cell.W_h
            out[f"{name}.b"] = cell.b
        for name in (
            "attn_v", "attn_W", "attn_b",
            "out_W1", "out_b1", "out_W2", "out_b2",
            "switch_w", "switch_b",
        ):
            out[name] = getattr(self, name)
        return out

    def param_groups(self) -> dict[str, list[torch.Tensor]]:
        """The four-family decomposition used by the gradient checks."""
        t = self.tensors()
        return {
            "seq2seq": [
                t["embedding"],
                t["enc_fwd.W_x"], t["enc_fwd.W_h"], t["enc_fwd.b"],
                t["enc_bwd.W_x"], t["enc_bwd.W_h"], t["enc_bwd.b"],
                t["dec.W_x"], t["dec.W_h"], t["dec.b"],
            ],
            "switch": [t["switch_w"], t["switch_b"]],
            "output": [t["out_W1"], t["out_b1"], t["out_W2"], t["out_b2"]],
            "attention": [t["attn_v"], t["attn_W"], t["attn_b"]],
        }

    def require_grad(self, on: bool) -> None:
        for tensor in self.tensors().values():
            tensor.requires_grad_(on)

    def detached(self) -> AbstractorParams:
        def det(x: torch.Tensor) -> torch.Tensor:
            return x.detach().clone()

        return AbstractorParams(
            vocab=self.vocab,
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            embedding=det(self.embedding),
            enc_fwd=LstmWeights(*(det(x) for x in (self.enc_fwd.W_x, self.enc_fwd.W_h, self.enc_fwd.b))),
            enc_bwd=LstmWeights(*(det(x) for x in (self.enc_bwd.W_x, self.enc_bwd.W_h, self.enc_bwd.b))),
            dec=LstmWeights(*(det(x) for x in (self.dec.W_x, self.dec.W_h, self.dec.b))),
            attn_v=det(self.attn_v),
            attn_W=det(self.attn_W),
            attn_b=det(self.attn_b),
            out_W1=det(self.out_W1),
            out_b1=det(self.out_b1),
            out_W2=det(self.out_W2),
            out_b2=det(self.out_b2),
            switch_w=det(self.switch_w),
            switch_b=det(self.switch_b),
        )


def init_params(vocab: Vocabulary, hyper: HyperParams) -> AbstractorParams:
    """Uniform(-0.08, 0.08) init from one seeded generator; forget-gate bias +1."""
    rng = np.random.RandomState(hyper.seed)
    E, H = hyper.embed_dim, hyper.hidden_dim
    H2 = H // 2
    V = len(vocab)

    def t(*shape: int) -> torch.Tensor:
        arr = rng.uniform(-_INIT_SCALE, _INIT_SCALE, size=shape)
        return torch.tensor(arr, dtype=torch.float64)

    def cell(input_dim: int, hidden: int) -> LstmWeights:
        w = LstmWeights(W_x=t(4 * hidden, input_dim), W_h=t(4 * hidden, hidden), b=t(4 * hidden))
        with torch.no_grad():
            w.b[hidden : 2 * hidden] += 1.0
        return w

    return AbstractorParams(
        vocab=vocab,
        embed_dim=E,
        hidden_dim=H,
        embedding=t(V, E),
        enc_fwd=cell(E, H2),
        enc_bwd=cell(E, H2),
        dec=cell(E, H),
        attn_v=t(H),
        attn_W=t(H, 2 * H + 1),
        attn_b=t(H),
        out_W1=t(H, 2 * H),
        out_b1=t(H),
        out_W2=t(V, H),
        out_b2=t(V),
        switch_w=t(2 * H + E),
        switch_b=t(1).reshape(()),
    )


def lstm_cell(
    w: LstmWeights, x: torch.Tensor, h: torch.Tensor, c: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    z = w.W_x @ x + w.W_h @ h + w.b
    n = h.shape[0]
    i = torch.sigmoid(z[:n])
    f = torch.sigmoid(z[n : 2 * n])
    g = torch.tanh(z[2 * n : 3 * n])
    o = torch.sigmoid(z[3 * n :])
    c_new = f * c + i * g
    return o * torch.tanh(c_new), c_new


# ---------------------------------------------------------------------------
# Encoder
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EncoderStates:
    """Per-position encoder hidden states plus everything a decode needs to
    copy from and trace back to the source."""

    states: torch.Tensor
    dec_h0: torch.Tensor
    dec_c0: torch.Tensor
    surfaces: tuple[str, ...]
    ext_ids: tuple[int, ...]
    oov_words: tuple[str, ...]
    ownership: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.surfaces)


def encode(
    tokens: Sequence[Token],
    params: AbstractorParams,
    ownership: Sequence[int] | None = None,
) -> EncoderStates:
    """Run both encoder directions; state i is [forward_i || backward_i].

    ``ownership`` tags each position with its owning sentence index (all
    zero when absent, e.g. single-document training articles).
    """
    _single_thread()
    if not tokens:
        raise DataError("cannot encode an empty token sequence")
    if ownership is not None and len(ownership) != len(tokens):
        raise DataError("ownership length does not match token count")

    ids, ext, oov = extended_ids(tokens, params.vocab)
    H2 = params.hidden_dim // 2
    embs = params.embedding[ids]

    def run(cell: LstmWeights, order: range):
        h = torch.zeros(H2, dtype=torch.float64)
        c = torch.zeros(H2, dtype=torch.float64)
        out: list[torch.Tensor] = [h] * len(tokens)
        for i in order:
            h, c = lstm_cell(cell, embs[i], h, c)
            out[i] = h
        return out, h, c

    fwd, fwd_h, fwd_c = run(params.enc_fwd, range(len(tokens)))
    bwd, bwd_h, bwd_c = run(params.enc_bwd, range(len(tokens) - 1, -1, -1))
    states = torch.stack([torch.cat([f, b]) for f, b in zip(fwd, bwd)])

    return EncoderStates(
        states=states,
        dec_h0=torch.cat([fwd_h, bwd_h]),
        dec_c0=torch.cat([fwd_c, bwd_c]),
        surfaces=tuple(t.surface for t in tokens),
        ext_ids=tuple(ext),
        oov_words=tuple(oov),
        ownership=tuple(ownership) if ownership is not None else (0,) * len(tokens),
    )


def sentence_embedding(s: SentenceSpan, params: AbstractorParams) -> np.ndarray:
    """Encode the sentence alone; the embedding is the concatenation of the
    forward pass's last state and the backward pass's state at position 0."""
    with torch.no_grad():
        enc = encode(s.tokens, params)
    return enc.dec_h0.numpy().copy()


# ---------------------------------------------------------------------------
# Attention and one decode step
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttentionMask:
    """Per-position attention multipliers.

    MUTE carries 0/1 switches; SALIENCE carries clamped sentence scores.
    An all-ones mask is the identity and short-circuits to unmasked math.
    """

    mode: str
    multipliers: torch.Tensor

    def __post_init__(self):
        if self.mode not in ("mute", "salience"):
            raise ValueError(f"unknown mask mode {self.mode!r}")
        m = self.multipliers
        if not bool(torch.isfinite(m).all()):
            raise ValueError("mask multipliers must be finite")
        if bool((m < 0).any()):
            raise ValueError("mask multipliers must be non-negative")
        if not bool((m > 0).any()):
            raise ValueError("mask must keep at least one position")
        if self.mode == "mute" and not bool(((m == 0) | (m == 1)).all()):
            raise ValueError("mute mask multipliers must be 0 or 1")

    @property
    def is_identity(self) -> bool:
        return bool((self.multipliers == 1.0).all())


@dataclass(frozen=True)
class DecoderState:
    """Decoder recurrence at step t; cum_attn is the positionwise sum of the
    attention emitted at steps 1..t-1."""

    h: torch.Tensor
    c: torch.Tensor
    y_prev: torch.Tensor
    cum_attn: torch.Tensor
    t: int


@dataclass(frozen=True)
class StepOutput:
    energies: torch.Tensor
    attention: torch.Tensor
    context: torch.Tensor
    p_vcb: torch.Tensor
    p_gen: torch.Tensor
    dist: torch.Tensor
    chosen: int


def initial_decoder_state(enc: EncoderStates, params: AbstractorParams) -> DecoderState:
    return DecoderState(
        h=enc.dec_h0,
        c=enc.dec_c0,
        y_prev=params.embedding[Vocabulary.START_ID],
        cum_attn=torch.zeros(enc.n, dtype=torch.float64),
        t=0,
    )


def attention_step(
    dec: DecoderState,
    enc: EncoderStates,
    mask: AttentionMask | None,
    params: AbstractorParams,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Additive attention over encoder states with the cumulative-attention
    feature, then optional mask-multiply-and-renormalize.

    The identity mask (or none) returns the softmax output untouched, so an
    unmasked decode and an all-ones-masked decode are bit-identical.
    """
    n = enc.n
    inputs = torch.cat(
        [dec.h.expand(n, -1), enc.states, dec.cum_attn.reshape(n, 1)], dim=1
    )
    energies = torch.tanh(inputs @ params.attn_W.T + params.attn_b) @ params.attn_v
    alpha = torch.softmax(energies, dim=0)
    if mask is None or mask.is_identity:
        return energies, alpha
    masked = alpha * mask.multipliers
    total = masked.sum()
    if not bool(total > 0):
        raise NumericalError("attention mask drove every position to zero mass")
    return energies, masked / total


def decode_step(
    dec: DecoderState,
    enc: EncoderStates,
    mask: AttentionMask | None,
    params: AbstractorParams,
    p_gen_override: float | None = None,
    suppress_ids: tuple[int, ...] = (),
) -> tuple[StepOutput, DecoderState]:
    """Advance the decoder recurrence one step and mix the two word routes.

    P(w) = p_gen * P_vcb(w) + (1 - p_gen) * sum of attention over source
    positions holding w, laid out over vocabulary + per-input OOV ids.
    ``suppress_ids`` pins vocabulary logits to -1e30 (used for the STOP
    symbol before the minimum length). The returned state carries the
    updated cumulative attention but no next-input embedding; ``advance``
    sets that once the emitted token is known.
    """
    h, c = lstm_cell(params.dec, dec.y_prev, dec.h, dec.c)
    stepped = DecoderState(h=h, c=c, y_prev=dec.y_prev, cum_attn=dec.cum_attn, t=dec.t)
    energies, alpha = attention_step(stepped, enc, mask, params)

    context = alpha @ enc.states
    hidden = torch.cat([h, context])
    logits = params.out_W2 @ (params.out_W1 @ hidden + params.out_b1) + params.out_b2
    if suppress_ids:
        logits = logits.index_fill(
            0, torch.tensor(suppress_ids, dtype=torch.long), _NEG_INF
        )
    p_vcb = torch.softmax(logits, dim=0)

    if p_gen_override is None:
        z = params.switch_w @ torch.cat([h, context, dec.y_prev]) + params.switch_b
        p_gen = torch.sigmoid(z)
    else:
        p_gen = torch.tensor(float(p_gen_override), dtype=torch.float64)

    pad = torch.zeros(len(enc.oov_words), dtype=torch.float64)
    dist = torch.cat([p_gen * p_vcb, pad])
    dist = dist.index_add(
        0, torch.tensor(enc.ext_ids, dtype=torch.long), (1.0 - p_gen) * alpha
    )

    out = StepOutput(
        energies=energies,
        attention=alpha,
        context=context,
        p_vcb=p_vcb,
        p_gen=p_gen,
        dist=dist,
        chosen=int(torch.argmax(dist).item()),
    )
    after = DecoderState(
        h=h, c=c, y_prev=dec.y_prev, cum_attn=dec.cum_attn + alpha, t=dec.t
    )
    return out, after


def advance(
    state: DecoderState, emitted_ext_id: int, params: AbstractorParams
) -> DecoderState:
    """Feed the emitted token back in; copied OOV words feed the UNK embedding."""
    V = len(params.vocab)
    vid = emitted_ext_id if emitted_ext_id < V else Vocabulary.UNK_ID
    return DecoderState(
        h=state.h,
        c=state.c,
        y_prev=params.embedding[vid],
        cum_attn=state.cum_attn,
        t=state.t + 1,
    )


def surface_of(ext_id: int, enc: EncoderStates, vocab: Vocabulary) -> str:
    return vocab.words[ext_id] if ext_id < len(vocab) else enc.oov_words[ext_id - len(vocab)]


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainResult:
    params: AbstractorParams
    epoch_losses: tuple[float, ...]


def _pair_loss(
    article: Sequence[Token],
    summary: Sequence[Token],
    params: AbstractorParams,
) -> tuple[torch.Tensor, int]:
    """Teacher-forced mean negative log-likelihood over summary + STOP."""
    enc = encode(article, params)
    oov_rank = {w: i for i, w in enumerate(enc.oov_words)}
    V = len(params.vocab)
    targets: list[int] = []
    for tok in summary:
        i = params.vocab.id_of(tok.surface)
        if i == Vocabulary.UNK_ID and tok.surface in oov_rank:
            targets.append(V + oov_rank[tok.surface])
        else:
            targets.append(i)
    targets.append(Vocabulary.STOP_ID)

    state = initial_decoder_state(enc, params)
    nll = torch.zeros((), dtype=torch.float64)
    for target in targets:
        out, state = decode_step(state, enc, None, params)
        nll = nll - torch.log(out.dist[target].clamp_min(_PROB_FLOOR))
        state = advance(state, target, params)
    return nll, len(targets)


def train_sds(
    pairs: Sequence[tuple[Sequence[Token], Sequence[Token]]],
    hyper: HyperParams,
    vocab: Vocabulary | None = None,
) -> TrainResult:
    """Train on (article, summary) pairs, one pair per optimizer step.

    Deterministic for a fixed seed: init, shuffles, and updates all flow
    from numpy RandomState(seed) on one thread.
    """
    _single_thread()
    if not pairs:
        raise DataError("no training pairs")
    for article, summary in pairs:
        if not article or not summary:
            raise DataError("empty article or summary in training pairs")
    if vocab is None:
        vocab = Vocabulary.build(
            [a for a, _ in pairs] + [s for _, s in pairs], hyper.max_vocab
        )
    params = init_params(vocab, hyper)
    params.require_grad(True)
    tensors = list(params.tensors().values())
    opt = torch.optim.Adam(tensors, lr=hyper.learning_rate)
    rng = np.random.RandomState(hyper.seed)

    epoch_losses: list[float] = []
    for _epoch in range(hyper.epochs):
        order = rng.permutation(len(pairs))
        total_nll = 0.0
        total_tokens = 0
        for pair_index in order:
            article, summary = pairs[int(pair_index)]
            opt.zero_grad()
            nll, n_tok = _pair_loss(article, summary, params)
            loss = nll / n_tok
            if not bool(torch.isfinite(loss)):
                raise NumericalError(f"non-finite loss at pair {int(pair_index)}")
            loss.backward()
            torch.nn.utils.clip_grad_norm_(tensors, hyper.grad_clip)
            opt.step()
            total_nll += float(nll.item())
            total_tokens += n_tok
        epoch_losses.append(total_nll / total_tokens)

    final = params.detached()
    return TrainResult(params=final, epoch_losses=tuple(epoch_losses))


def greedy_token_accuracy(
    params: AbstractorParams,
    pairs: Sequence[tuple[Sequence[Token], Sequence[Token]]],
) -> float:
    """Free-running greedy decode scored positionwise against the reference.

    Each pair is decoded for exactly len(summary) tokens (STOP suppressed),
    then surfaces are compared position by position.
    """
    if not pairs:
        raise DataError("no pairs to score")
    hits = 0
    total = 0
    with torch.no_grad():
        for article, summary in pairs:
            want = [t.surface for t in summary]
            enc = encode(article, params)
            result = generate(
                enc, params, None, min_len=len(want), max_len=len(want), beam_size=1
            )
            for got, expect in zip(result.tokens, want):
                hits += got == expect
            total += len(want)
    return hits / total


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

class MaskProvider(Protocol):
    """Per-hypothesis mask source queried at every decode step.

    States are treated as immutable values: ``advance`` returns a new state,
    so beam hypotheses can fork them freely.
    """

    def initial_state(self) -> object: ...

    def mask_for(self, state: object) -> AttentionMask | None: ...

    def advance(self, state: object, emitted_surface: str) -> object: ...


@dataclass(frozen=True)
class GenerationResult:
    tokens: tuple[str, ...]
    ext_ids: tuple[int, ...]
    logprob: float
    steps: tuple[StepOutput, ...]


@dataclass(frozen=True)
class _Hypothesis:
    tokens: tuple[str, ...]
    ext_ids: tuple[int, ...]
    logprob: float
    dec: DecoderState
    guide: object
    steps: tuple[StepOutput, ...]
    done: bool
    greedy_lineage: bool


def generate(
    enc: EncoderStates,
    params: AbstractorParams,
    mask_provider: MaskProvider | None,
    min_len: int,
    max_len: int,
    beam_size: int = 1,
) -> GenerationResult:
    """Greedy or beam decoding with externally supplied attention masks.

    STOP is suppressed (vocabulary logit pinned to -1e30) until min_len
    tokens are out; emission halts at max_len. Beam search never prunes the
    greedy lineage, so the returned sequence log-probability is at least
    the greedy one. Ties break toward smaller extended ids.
    """
    _single_thread()
    if not 1 <= min_len <= max_len:
        raise ValueError(f"bad length bounds {min_len}..{max_len}")
    if beam_size < 1:
        raise ValueError("beam_size must be at least 1")

    init = _Hypothesis(
        tokens=(),
        ext_ids=(),
        logprob=0.0,
        dec=initial_decoder_state(enc, params),
        guide=mask_provider.initial_state() if mask_provider else None,
        steps=(),
        done=False,
        greedy_lineage=True,
    )
    live = [init]
    finished: list[_Hypothesis] = []

    with torch.no_grad():
        while live:
            candidates: list[tuple[float, int, int, _Hypothesis, StepOutput]] = []
            for parent_idx, hyp in enumerate(live):
                mask = mask_provider.mask_for(hyp.guide) if mask_provider else None
                suppress = (
                    (Vocabulary.STOP_ID,) if len(hyp.tokens) < min_len else ()
                )
                out, after = decode_step(
                    hyp.dec, enc, mask, params, suppress_ids=suppress
                )
                probs = out.dist
                k = min(beam_size + 1, probs.shape[0])
                top = torch.topk(probs, k)
                for ext_id, p in zip(top.indices.tolist(), top.values.tolist()):
                    if p <= 0.0:
                        continue
                    candidates.append(
                        (
                            hyp.logprob + math.log(p),
                            parent_idx,
                            int(ext_id),
                            dataclasses.replace(hyp, dec=after),
                            dataclasses.replace(out, chosen=int(ext_id)),
                        )
                    )
            if not candidates:
                break
            candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
            chosen = candidates[:beam_size]
            # keep the greedy lineage alive: its argmax extension always survives
            greedy_parent = next(
                (i for i, h in enumerate(live) if h.greedy_lineage), None
            )
            greedy_ext_id: int | None = None
            if greedy_parent is not None:
                greedy_ext = [c for c in candidates if c[1] == greedy_parent]
                best_greedy = min(greedy_ext, key=lambda c: (-c[0], c[2]))
                greedy_ext_id = best_greedy[2]
                if not any(c is best_greedy for c in chosen):
                    chosen = chosen[: beam_size - 1] + [best_greedy]

            next_live: list[_Hypothesis] = []
            for logprob, parent_idx, ext_id, parent, step in chosen:
                lineage = parent_idx == greedy_parent and ext_id == greedy_ext_id
                if ext_id == Vocabulary.STOP_ID:
                    finished.append(
                        dataclasses.replace(
                            parent,
                            logprob=logprob,
                            steps=parent.steps + (step,),
                            done=True,
                            greedy_lineage=lineage,
                        )
                    )
                    continue
                surface = surface_of(ext_id, enc, params.vocab)
                guide = (
                    mask_provider.advance(parent.guide, surface)
                    if mask_provider
                    else None
                )
                grown = _Hypothesis(
                    tokens=parent.tokens + (surface,),
                    ext_ids=parent.ext_ids + (ext_id,),
                    logprob=logprob,
                    dec=advance(parent.dec, ext_id, params),
                    guide=guide,
                    steps=parent.steps + (step,),
                    done=False,
                    greedy_lineage=lineage,
                )
                if len(grown.tokens) >= max_len:
                    finished.append(dataclasses.replace(grown, done=True))
                else:
                    next_live.append(grown)
            live = next_live

    if not finished:
        raise NumericalError("decoding produced no finished hypothesis")
    best = max(finished, key=lambda h: h.logprob)
    return GenerationResult(
        tokens=best.tokens,
        ext_ids=best.ext_ids,
        logprob=best.logprob,
        steps=best.steps,
    )
