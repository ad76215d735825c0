"""Constraint scoring: class-probability models and the mixed
constraint/likelihood score used by tree search and re-ranking.

Discriminators score the generated part of a sequence only, so a
constraint-violating prompt cannot dominate the signal. On an empty
generation they fall back to their class priors.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .core import ConstraintSpec, InvalidArgumentError, TokenSequence, Vocabulary
from .lm import LanguageModel, sequence_log_likelihood


class Discriminator:
    """Behavioral interface: p(class | sequence), defined for partial
    sequences. Class probabilities for a fixed sequence sum to 1."""

    def num_classes(self) -> int:
        raise NotImplementedError

    def vocabulary(self) -> Vocabulary:
        raise NotImplementedError

    def class_probs(self, seq: TokenSequence) -> np.ndarray:
        raise NotImplementedError

    def class_prob(self, seq: TokenSequence, class_id: int) -> float:
        if not 0 <= class_id < self.num_classes():
            raise InvalidArgumentError(f"class_id {class_id} out of range")
        return float(self.class_probs(seq)[class_id])

    def class_prob_batch(self, seqs: Sequence[TokenSequence], class_id: int) -> list[float]:
        return [self.class_prob(s, class_id) for s in seqs]

    def predicted_class(self, seq: TokenSequence) -> int:
        return int(np.argmax(self.class_probs(seq)))


def _scored_tokens(seq: TokenSequence, vocab: Vocabulary) -> tuple[int, ...]:
    # generated content only: prompt, eos and bos never carry class signal
    return tuple(t for t in seq.generated if t not in (vocab.eos_id, vocab.bos_id))


def _log_normalize(scores: np.ndarray) -> np.ndarray:
    top = np.max(scores)
    expd = np.exp(scores - top)
    return expd / expd.sum()


class NaiveBayesModel(Discriminator):
    """Multinomial naive Bayes over content tokens with add-lambda smoothing."""

    def __init__(self, vocab: Vocabulary, lam: float, doc_counts: np.ndarray,
                 token_counts: np.ndarray):
        if not lam > 0:
            raise InvalidArgumentError("lambda must be > 0")
        doc_counts = np.asarray(doc_counts, dtype=np.int64)
        token_counts = np.asarray(token_counts, dtype=np.int64)
        if doc_counts.ndim != 1 or doc_counts.shape[0] < 2:
            raise InvalidArgumentError("need at least 2 classes")
        if np.any(doc_counts < 1):
            raise InvalidArgumentError("every class needs at least one document")
        if token_counts.shape != (doc_counts.shape[0], vocab.size):
            raise InvalidArgumentError("token_counts must be (classes, vocab size)")
        if np.any(token_counts < 0):
            raise InvalidArgumentError("token counts must be non-negative")
        self._vocab = vocab
        self._lam = float(lam)
        self._doc_counts = doc_counts
        self._token_counts = token_counts
        content = list(vocab.content_ids)
        denom = token_counts[:, content].sum(axis=1) + lam * len(content)
        self._log_prior = np.log(doc_counts / doc_counts.sum())
        self._log_cond = np.full((doc_counts.shape[0], vocab.size), -np.inf)
        self._log_cond[:, content] = np.log(
            (token_counts[:, content] + lam) / denom[:, None])

    @property
    def lam(self) -> float:
        return self._lam

    @property
    def doc_counts(self) -> np.ndarray:
        return self._doc_counts.copy()

    @property
    def token_counts(self) -> np.ndarray:
        return self._token_counts.copy()

    @property
    def priors(self) -> np.ndarray:
        return np.exp(self._log_prior)

    def num_classes(self) -> int:
        return self._doc_counts.shape[0]

    def vocabulary(self) -> Vocabulary:
        return self._vocab

    def class_probs(self, seq: TokenSequence) -> np.ndarray:
        scores = self._log_prior.copy()
        for t in _scored_tokens(seq, self._vocab):
            scores += self._log_cond[:, t]
        return _log_normalize(scores)


def train_naive_bayes(labeled_corpus: Sequence[tuple[Sequence[int], int]],
                      lam: float, vocab: Vocabulary,
                      num_classes: int | None = None) -> NaiveBayesModel:
    """Fit class priors (document frequencies) and per-class token counts."""
    if not labeled_corpus:
        raise InvalidArgumentError("labeled corpus must be non-empty")
    labels = [label for _, label in labeled_corpus]
    n_classes = num_classes if num_classes is not None else max(labels) + 1
    if n_classes < 2:
        raise InvalidArgumentError("need at least 2 classes")
    doc_counts = np.zeros(n_classes, dtype=np.int64)
    token_counts = np.zeros((n_classes, vocab.size), dtype=np.int64)
    for doc, label in labeled_corpus:
        if not 0 <= label < n_classes:
            raise InvalidArgumentError(f"label {label} out of range")
        doc_counts[label] += 1
        for t in doc:
            token_counts[label, t] += 1
    if np.any(doc_counts == 0):
        missing = int(np.flatnonzero(doc_counts == 0)[0])
        raise InvalidArgumentError(f"class {missing} has no documents")
    return NaiveBayesModel(vocab, lam, doc_counts, token_counts)


class KeywordDiscriminator(Discriminator):
    """Heuristic scorer: each occurrence of a class keyword adds ``beta`` to
    that class's logit; probabilities are the softmax of the hit logits."""

    def __init__(self, vocab: Vocabulary, keyword_ids: Sequence[Sequence[int]],
                 beta: float = 1.0):
        if len(keyword_ids) < 2:
            raise InvalidArgumentError("need at least 2 classes")
        if not beta > 0:
            raise InvalidArgumentError("beta must be > 0")
        for ids in keyword_ids:
            for t in ids:
                if not 0 <= t < vocab.size or t in (vocab.eos_id, vocab.bos_id):
                    raise InvalidArgumentError(f"invalid keyword id {t}")
        self._vocab = vocab
        self._keyword_ids = tuple(frozenset(ids) for ids in keyword_ids)
        self._beta = float(beta)

    @property
    def beta(self) -> float:
        return self._beta

    @property
    def keyword_ids(self) -> tuple[frozenset[int], ...]:
        return self._keyword_ids

    def num_classes(self) -> int:
        return len(self._keyword_ids)

    def vocabulary(self) -> Vocabulary:
        return self._vocab

    def class_probs(self, seq: TokenSequence) -> np.ndarray:
        toks = _scored_tokens(seq, self._vocab)
        scores = np.array([self._beta * sum(t in kws for t in toks)
                           for kws in self._keyword_ids], dtype=np.float64)
        return _log_normalize(scores)


def constraint_score_log(seq: TokenSequence, lm: LanguageModel, d: Discriminator,
                         spec: ConstraintSpec, *, class_prob: float | None = None,
                         loglik: float | None = None) -> float:
    """log of ``p_D(c|x)^alpha * L(x)^(1-alpha)`` where L is the
    length-normalized likelihood (or the raw sequence likelihood when
    ``spec.normalize_likelihood`` is off).

    ``class_prob``/``loglik`` short-circuit the model calls when the caller
    already holds them (re-ranking pools).
    """
    if len(seq) == 0:
        raise InvalidArgumentError("sequence must be non-empty")
    if class_prob is None:
        class_prob = d.class_prob(seq, spec.class_id)
    if spec.alpha == 1.0:
        return math.log(class_prob) if class_prob > 0 else -math.inf
    if loglik is None:
        loglik = sequence_log_likelihood(lm, seq)
    if spec.normalize_likelihood:
        n = seq.num_generated
        log_lik_part = loglik / n if n else 0.0
    else:
        log_lik_part = loglik
    if spec.alpha == 0.0:
        return log_lik_part
    log_cp = math.log(class_prob) if class_prob > 0 else -math.inf
    return spec.alpha * log_cp + (1.0 - spec.alpha) * log_lik_part


def constraint_score(seq: TokenSequence, lm: LanguageModel, d: Discriminator,
                     spec: ConstraintSpec) -> float:
    """Mixed constraint/likelihood score in [0, 1]. At ``alpha = 1`` this is
    exactly the discriminator probability of the target class."""
    if spec.alpha == 1.0:
        return d.class_prob(seq, spec.class_id)
    return math.exp(constraint_score_log(seq, lm, d, spec))
