"""Language-model interface and a trainable add-lambda smoothed n-gram model.

The n-gram model publishes *shifted log-count* logits,
``log((count + lam) / lam)``: softmax at temperature 1 reproduces the smoothed
conditional distribution exactly (the per-context shift cancels), and the
logits stay non-negative so the repetition penalty, which divides logits,
suppresses repeated tokens instead of boosting them. Consumers obtain
probabilities through ``Distribution.probabilities()`` so that in-process and
remotely served models follow bit-identical code paths.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .core import Distribution, InvalidArgumentError, TokenSequence, Vocabulary


class LanguageModel:
    """Behavioral interface: deterministic next-token logits over a fixed
    vocabulary. Implementations must be safe for concurrent reads."""

    def vocabulary(self) -> Vocabulary:
        raise NotImplementedError

    def next_logits(self, context: Sequence[int]) -> Distribution:
        raise NotImplementedError

    def next_logits_batch(self, contexts: Sequence[Sequence[int]]) -> list[Distribution]:
        return [self.next_logits(c) for c in contexts]


def _context_tokens(context) -> tuple[int, ...]:
    if isinstance(context, TokenSequence):
        return context.tokens
    return tuple(context)


class NGramModel(LanguageModel):
    """Order-n model with add-lambda smoothing and no backoff.

    ``P(w | ctx) = (count(ctx, w) + lam) / (count(ctx, .) + lam * |emit|)``
    where the emit vocabulary excludes bos. Contexts shorter than ``order - 1``
    are padded on the left with bos. Immutable after training.
    """

    def __init__(self, order: int, vocab: Vocabulary, lam: float,
                 counts: dict[tuple[int, ...], np.ndarray]):
        if order < 1:
            raise InvalidArgumentError("order must be >= 1")
        if not lam > 0:
            raise InvalidArgumentError("lambda must be > 0")
        self._order = order
        self._vocab = vocab
        self._lam = float(lam)
        self._counts = {ctx: np.asarray(c, dtype=np.int64) for ctx, c in counts.items()}
        self._dist_cache: dict[tuple[int, ...], Distribution] = {}
        emit = np.zeros(vocab.size, dtype=bool)
        emit[list(vocab.emit_ids)] = True
        self._emit_mask = emit

    @property
    def order(self) -> int:
        return self._order

    @property
    def lam(self) -> float:
        return self._lam

    @property
    def counts(self) -> dict[tuple[int, ...], np.ndarray]:
        return {ctx: c.copy() for ctx, c in self._counts.items()}

    def vocabulary(self) -> Vocabulary:
        return self._vocab

    def _context_key(self, context: Sequence[int]) -> tuple[int, ...]:
        need = self._order - 1
        ctx = tuple(context)[-need:] if need else ()
        if len(ctx) < need:
            ctx = (self._vocab.bos_id,) * (need - len(ctx)) + ctx
        return ctx

    def next_logits(self, context) -> Distribution:
        key = self._context_key(_context_tokens(context))
        cached = self._dist_cache.get(key)
        if cached is not None:
            return cached
        counts = self._counts.get(key)
        logits = np.full(self._vocab.size, -np.inf, dtype=np.float64)
        if counts is None:
            logits[self._emit_mask] = 0.0
        else:
            logits[self._emit_mask] = (np.log(counts[self._emit_mask] + self._lam)
                                       - math.log(self._lam))
        dist = Distribution(logits=logits)
        dist = Distribution(logits=dist.logits, probs=dist.probabilities())
        self._dist_cache[key] = dist
        return dist


def make_uniform_model(vocab: Vocabulary) -> NGramModel:
    """Untrained order-1 model: uniform over the emit vocabulary."""
    return NGramModel(order=1, vocab=vocab, lam=1.0, counts={})


def train_ngram(corpus: Iterable[Sequence[int]], order: int, lam: float,
                vocab: Vocabulary) -> NGramModel:
    """Count-based training. Documents contain content token ids only; each
    is padded internally with ``order - 1`` bos tokens and one eos terminator.
    """
    docs = list(corpus)
    if not docs:
        raise InvalidArgumentError("corpus must be non-empty")
    if order < 1:
        raise InvalidArgumentError("order must be >= 1")
    counts: dict[tuple[int, ...], np.ndarray] = {}
    pad = (vocab.bos_id,) * (order - 1)
    for doc in docs:
        for t in doc:
            if t == vocab.bos_id or t == vocab.eos_id:
                raise InvalidArgumentError("documents must not contain bos/eos")
        seq = pad + tuple(doc) + (vocab.eos_id,)
        for i in range(order - 1, len(seq)):
            ctx = seq[i - order + 1:i]
            row = counts.get(ctx)
            if row is None:
                row = np.zeros(vocab.size, dtype=np.int64)
                counts[ctx] = row
            row[seq[i]] += 1
    return NGramModel(order=order, vocab=vocab, lam=lam, counts=counts)


def sequence_log_likelihood(model: LanguageModel, seq: TokenSequence,
                            include_prompt: bool = False) -> float:
    """Chain-rule log-likelihood of a sequence under the model.

    Sums the log conditional probabilities of the generated tokens (and of the
    prompt tokens too when ``include_prompt`` is set). A terminal eos token is
    part of the sequence and contributes its factor; a sequence that is
    terminal by length cap has no eos factor.
    """
    if len(seq) == 0:
        raise InvalidArgumentError("sequence must be non-empty")
    start = 0 if include_prompt else seq.prompt_len
    total = 0.0
    for i in range(start, len(seq.tokens)):
        probs = model.next_logits(seq.tokens[:i]).probabilities()
        total += float(np.log(probs[seq.tokens[i]]))
    return total


def mean_token_likelihood(model: LanguageModel, seq: TokenSequence) -> float:
    """Geometric mean per-generated-token probability; 1.0 when nothing has
    been generated yet."""
    n = seq.num_generated
    if n == 0:
        return 1.0
    return math.exp(sequence_log_likelihood(model, seq) / n)
