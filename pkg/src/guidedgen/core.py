"""Shared vocabulary, sequence and distribution types plus the two
probability transforms (temperature softmax, repetition penalty) that every
decoder builds on.

All types here are immutable after construction and safe to share across
concurrent decoding jobs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class InvalidArgumentError(ValueError):
    """Raised when an operation receives arguments outside its contract."""


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token inventory with dedicated end- and begin-of-sequence ids.

    The begin-of-sequence token is a context-only padding symbol: it is never
    emitted and never appears inside a ``TokenSequence``. By convention
    (``from_content``) content tokens come first, then eos, then bos, so that
    lowest-index tie-breaking prefers content tokens.
    """

    tokens: tuple[str, ...]
    eos_id: int
    bos_id: int

    def __post_init__(self):
        if len(self.tokens) < 2:
            raise InvalidArgumentError("vocabulary needs at least 2 tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise InvalidArgumentError("vocabulary tokens must be unique")
        for name, idx in (("eos_id", self.eos_id), ("bos_id", self.bos_id)):
            if not 0 <= idx < len(self.tokens):
                raise InvalidArgumentError(f"{name} out of range: {idx}")
        if self.eos_id == self.bos_id:
            raise InvalidArgumentError("eos_id and bos_id must differ")

    @classmethod
    def from_content(cls, content_tokens: Sequence[str],
                     eos_token: str = "</s>", bos_token: str = "<s>") -> "Vocabulary":
        """Build the standard layout: content tokens, then eos, then bos."""
        toks = tuple(content_tokens) + (eos_token, bos_token)
        return cls(tokens=toks, eos_id=len(toks) - 2, bos_id=len(toks) - 1)

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def emit_ids(self) -> tuple[int, ...]:
        """Every id that may be emitted (everything but bos)."""
        return tuple(i for i in range(self.size) if i != self.bos_id)

    @property
    def content_ids(self) -> tuple[int, ...]:
        """Emittable ids excluding eos."""
        return tuple(i for i in range(self.size) if i not in (self.bos_id, self.eos_id))

    def id_of(self, token: str) -> int:
        try:
            return self.tokens.index(token)
        except ValueError:
            raise InvalidArgumentError(f"unknown token: {token!r}") from None

    def encode(self, words: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.id_of(w) for w in words)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]


@dataclass(frozen=True)
class TokenSequence:
    """A prompt plus generated continuation, the unit every decoder works on.

    ``tokens`` holds the prompt followed by generated ids. ``terminal`` means
    the sequence is finished, either because the last token is eos or because
    the generation length cap was hit.
    """

    tokens: tuple[int, ...]
    prompt_len: int
    terminal: bool = False

    def __post_init__(self):
        if not 0 <= self.prompt_len <= len(self.tokens):
            raise InvalidArgumentError(
                f"prompt_len {self.prompt_len} out of range for {len(self.tokens)} tokens")

    @classmethod
    def from_prompt(cls, prompt_ids: Iterable[int]) -> "TokenSequence":
        ids = tuple(prompt_ids)
        return cls(tokens=ids, prompt_len=len(ids))

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def generated(self) -> tuple[int, ...]:
        return self.tokens[self.prompt_len:]

    @property
    def num_generated(self) -> int:
        return len(self.tokens) - self.prompt_len

    def extended(self, token: int, *, terminal: bool = False) -> "TokenSequence":
        return TokenSequence(self.tokens + (token,), self.prompt_len, terminal)

    def validate(self, vocab: Vocabulary) -> None:
        for t in self.tokens:
            if not 0 <= t < vocab.size:
                raise InvalidArgumentError(f"token id {t} out of range")
            if t == vocab.bos_id:
                raise InvalidArgumentError("bos token may not appear in a sequence")
        if any(t == vocab.eos_id for t in self.tokens[:-1]):
            raise InvalidArgumentError("eos may only appear as the final token")
        if self.tokens and self.tokens[-1] == vocab.eos_id:
            if not self.terminal or self.num_generated < 1:
                raise InvalidArgumentError("eos must terminate a generated sequence")


@dataclass(frozen=True)
class Distribution:
    """Logits over a vocabulary, with optionally materialized probabilities.

    ``logits`` may contain ``-inf`` entries as a mask convention (used for the
    bos position, which is never emitted); masked entries get probability 0.
    """

    logits: np.ndarray
    probs: np.ndarray | None = None

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        logits.flags.writeable = False
        object.__setattr__(self, "logits", logits)
        if self.probs is not None:
            probs = np.asarray(self.probs, dtype=np.float64)
            if probs.shape != logits.shape:
                raise InvalidArgumentError("probs and logits must have the same length")
            if np.any(probs < 0) or abs(float(probs.sum()) - 1.0) > 1e-9:
                raise InvalidArgumentError("probs must be non-negative and sum to 1")
            probs.flags.writeable = False
            object.__setattr__(self, "probs", probs)

    def probabilities(self) -> np.ndarray:
        """Probabilities at temperature 1, derived from the logits if needed."""
        if self.probs is not None:
            return self.probs
        return softmax_with_temperature(self.logits, 1.0)


@dataclass(frozen=True)
class GenerationParams:
    """Knobs shared by every decoding method."""

    temperature: float = 1.0
    repetition_penalty: float = 1.0
    top_k: int | None = None
    top_p: float | None = None
    max_new_tokens: int = 20
    seed: int = 0

    def __post_init__(self):
        if not (self.temperature > 0 and math.isfinite(self.temperature)):
            raise InvalidArgumentError("temperature must be a positive finite real")
        if self.repetition_penalty < 1:
            raise InvalidArgumentError("repetition_penalty must be >= 1")
        if self.top_k is not None and self.top_k < 1:
            raise InvalidArgumentError("top_k must be >= 1")
        if self.top_p is not None and not 0 < self.top_p <= 1:
            raise InvalidArgumentError("top_p must be in (0, 1]")
        if self.max_new_tokens < 1:
            raise InvalidArgumentError("max_new_tokens must be >= 1")
        if self.seed < 0:
            raise InvalidArgumentError("seed must be non-negative")


@dataclass(frozen=True)
class ConstraintSpec:
    """Target class plus the exponent mixing constraint strength against
    likelihood. ``normalize_likelihood`` selects the length-normalized
    likelihood inside the mixed score (default); the raw product form is kept
    for fidelity experiments on fixed-length sequences.
    """

    class_id: int
    alpha: float = 1.0
    normalize_likelihood: bool = True

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise InvalidArgumentError("alpha must lie in [0, 1]")
        if self.class_id < 0:
            raise InvalidArgumentError("class_id must be non-negative")


@dataclass(frozen=True)
class GenerationRecord:
    """One decoded sample with enough provenance to evaluate and replay it."""

    method: str
    params: dict
    sequence: TokenSequence
    loglik: float = 0.0
    class_prob: float | None = None
    seed: int = 0
    duration_ms: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.loglik > 0:
            raise InvalidArgumentError("log-likelihood must be <= 0")
        if self.class_prob is not None and not 0 <= self.class_prob <= 1:
            raise InvalidArgumentError("class_prob must lie in [0, 1]")

    @property
    def prompt(self) -> tuple[int, ...]:
        return self.sequence.tokens[:self.sequence.prompt_len]


def _check_logits(arr: np.ndarray) -> None:
    # -inf is allowed as a mask (bos sentinel); NaN and +inf are rejected.
    if np.any(np.isnan(arr)) or np.any(arr == np.inf):
        raise InvalidArgumentError("logits must not contain NaN or +inf")


def softmax_with_temperature(logits, temperature: float) -> np.ndarray:
    """Temperature softmax, computed stably via max-subtraction.

    Entries equal to ``-inf`` are treated as masked and receive probability 0.
    """
    if not temperature > 0:
        raise InvalidArgumentError("temperature must be > 0")
    arr = np.asarray(logits, dtype=np.float64)
    _check_logits(arr)
    scaled = arr / temperature
    top = np.max(scaled)
    if top == -np.inf:
        raise InvalidArgumentError("all logits are masked")
    expd = np.exp(scaled - top)
    return expd / expd.sum()


def apply_repetition_penalty(logits, context, penalty: float,
                             temperature: float) -> np.ndarray:
    """Penalized sampling distribution: token ``i`` is softmaxed at effective
    temperature ``temperature * penalty`` if it already occurs anywhere in the
    context (prompt included), plain ``temperature`` otherwise.

    The penalty divides the logit, so it suppresses tokens with positive
    logits and boosts tokens with negative ones; language models in this
    package therefore publish non-negative logits (shifted log-counts).
    """
    if penalty < 1:
        raise InvalidArgumentError("penalty must be >= 1")
    if not temperature > 0:
        raise InvalidArgumentError("temperature must be > 0")
    arr = np.asarray(logits, dtype=np.float64)
    _check_logits(arr)
    context_tokens = context.tokens if isinstance(context, TokenSequence) else tuple(context)
    scale = np.full(arr.shape, temperature, dtype=np.float64)
    seen = {t for t in context_tokens if 0 <= t < arr.shape[0]}
    if seen:
        scale[list(seen)] *= penalty
    return softmax_with_temperature(arr / scale, 1.0)


def argmax_lowest_index(values) -> int:
    """Index of the maximum; exact ties resolve to the lowest index."""
    arr = np.asarray(values)
    return int(np.argmax(arr))


def sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Draw an index from a probability vector using one uniform draw.

    Sampling is restricted to the strictly-positive support, so masked
    entries can never be chosen regardless of rounding.
    """
    support = np.flatnonzero(probs > 0)
    if support.size == 0:
        raise InvalidArgumentError("cannot sample from an all-zero distribution")
    cum = np.cumsum(probs[support])
    r = rng.random() * cum[-1]
    idx = int(np.searchsorted(cum, r, side="right"))
    return int(support[min(idx, support.size - 1)])
