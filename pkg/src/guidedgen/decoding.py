"""Baseline decoders: greedy, ancestral sampling with top-k / nucleus
filtering, length-synchronized beam search, and beam sampling.

All decoders draw step distributions from the same penalized-softmax path
(``apply_repetition_penalty``), tie-break deterministically on the lowest
token index, and take every stochastic draw from the caller's generator in
a fixed order, so a fixed seed reproduces the output exactly.
"""

from __future__ import annotations

import time
from typing import Sequence

import numpy as np

from .core import (GenerationParams, GenerationRecord, InvalidArgumentError,
                   TokenSequence, apply_repetition_penalty, argmax_lowest_index,
                   sample_index)
from .lm import LanguageModel, sequence_log_likelihood


def step_distribution(lm: LanguageModel, seq: TokenSequence,
                      gen: GenerationParams) -> np.ndarray:
    """Penalized next-token probabilities for the given context."""
    dist = lm.next_logits(seq.tokens)
    return apply_repetition_penalty(dist.logits, seq, gen.repetition_penalty,
                                    gen.temperature)


def base_params(method: str, gen: GenerationParams, **extra) -> dict:
    params = {"method": method, "temperature": gen.temperature,
              "repetition_penalty": gen.repetition_penalty, "top_k": gen.top_k,
              "top_p": gen.top_p, "max_new_tokens": gen.max_new_tokens}
    params.update(extra)
    return params


def finish_record(method: str, lm: LanguageModel, seq: TokenSequence,
                  gen: GenerationParams, started: float, *, seed: int = 0,
                  **extra) -> GenerationRecord:
    return GenerationRecord(
        method=method,
        params=base_params(method, gen, **extra),
        sequence=seq,
        loglik=sequence_log_likelihood(lm, seq),
        seed=seed,
        duration_ms=(time.perf_counter() - started) * 1000.0,
    )


def _append(seq: TokenSequence, token: int, eos_id: int,
            max_new_tokens: int) -> TokenSequence:
    terminal = token == eos_id or seq.num_generated + 1 >= max_new_tokens
    return seq.extended(token, terminal=terminal)


def greedy_decode(prompt: Sequence[int], lm: LanguageModel,
                  gen: GenerationParams) -> GenerationRecord:
    """Argmax of the penalized distribution at every step."""
    started = time.perf_counter()
    eos = lm.vocabulary().eos_id
    seq = TokenSequence.from_prompt(prompt)
    while not seq.terminal:
        probs = step_distribution(lm, seq, gen)
        seq = _append(seq, argmax_lowest_index(probs), eos, gen.max_new_tokens)
    return finish_record("greedy", lm, seq, gen, started)


def topk_sample(probs: np.ndarray, k: int, rng: np.random.Generator) -> int:
    """Sample after zeroing all but the k largest entries (ties kept by
    lowest index) and renormalizing."""
    return sample_index(topk_filter(probs, k), rng)


def nucleus_sample(probs: np.ndarray, p: float, rng: np.random.Generator) -> int:
    """Sample from the smallest probability-sorted prefix whose cumulative
    mass reaches p, renormalized."""
    return sample_index(nucleus_filter(probs, p), rng)


def topk_filter(probs: np.ndarray, k: int) -> np.ndarray:
    if k < 1:
        raise InvalidArgumentError("top_k must be >= 1")
    probs = np.asarray(probs, dtype=np.float64)
    if k >= probs.shape[0]:
        return probs
    order = np.lexsort((np.arange(probs.shape[0]), -probs))
    kept = np.zeros_like(probs)
    kept[order[:k]] = probs[order[:k]]
    total = kept.sum()
    if total <= 0:
        raise InvalidArgumentError("top-k filter removed all probability mass")
    return kept / total


def nucleus_filter(probs: np.ndarray, p: float) -> np.ndarray:
    if not 0 < p <= 1:
        raise InvalidArgumentError("top_p must be in (0, 1]")
    probs = np.asarray(probs, dtype=np.float64)
    order = np.lexsort((np.arange(probs.shape[0]), -probs))
    cum = np.cumsum(probs[order])
    cut = int(np.searchsorted(cum, p, side="left")) + 1
    kept = np.zeros_like(probs)
    kept[order[:cut]] = probs[order[:cut]]
    return kept / kept.sum()


def sampling_step(probs: np.ndarray, gen: GenerationParams,
                  rng: np.random.Generator) -> int:
    """One ancestral-sampling draw honoring top-k then top-p filtering."""
    if gen.top_k is not None:
        probs = topk_filter(probs, gen.top_k)
    if gen.top_p is not None:
        probs = nucleus_filter(probs, gen.top_p)
    return sample_index(probs, rng)


def sample_decode(prompt: Sequence[int], lm: LanguageModel, gen: GenerationParams,
                  rng: np.random.Generator, *, seed: int = 0,
                  ban_eos: bool = False) -> GenerationRecord:
    """Ancestral sampling. ``ban_eos`` masks the eos token so every sample
    runs to the length cap (fixed-length experiments)."""
    started = time.perf_counter()
    vocab = lm.vocabulary()
    seq = TokenSequence.from_prompt(prompt)
    while not seq.terminal:
        probs = step_distribution(lm, seq, gen)
        if ban_eos:
            probs = probs.copy()
            probs[vocab.eos_id] = 0.0
            probs = probs / probs.sum()
        token = sampling_step(probs, gen, rng)
        seq = _append(seq, token, vocab.eos_id, gen.max_new_tokens)
    return finish_record("sampling", lm, seq, gen, started, seed=seed,
                         ban_eos=ban_eos)


def beam_search(prompt: Sequence[int], lm: LanguageModel, gen: GenerationParams,
                beam_width: int) -> list[GenerationRecord]:
    """Length-synchronized beam search over penalized step distributions.

    Finished beams are frozen and compete with expansions on joint (penalized)
    log-probability; returns the beams best-first.
    """
    if beam_width < 1:
        raise InvalidArgumentError("beam width must be >= 1")
    started = time.perf_counter()
    eos = lm.vocabulary().eos_id
    beams: list[tuple[TokenSequence, float]] = [(TokenSequence.from_prompt(prompt), 0.0)]
    while any(not seq.terminal for seq, _ in beams):
        live = [(seq, score) for seq, score in beams if not seq.terminal]
        candidates = [(seq, score) for seq, score in beams if seq.terminal]
        dists = lm.next_logits_batch([seq.tokens for seq, _ in live])
        for (seq, score), dist in zip(live, dists):
            probs = apply_repetition_penalty(dist.logits, seq,
                                             gen.repetition_penalty, gen.temperature)
            for t in np.flatnonzero(probs > 0):
                candidates.append((_append(seq, int(t), eos, gen.max_new_tokens),
                                   score + float(np.log(probs[t]))))
        candidates.sort(key=lambda c: (-c[1], c[0].tokens))
        beams = candidates[:beam_width]
    return [finish_record("beam", lm, seq, gen, started, beam_width=beam_width,
                          beam_score=score)
            for seq, score in beams]


def beam_sample(prompt: Sequence[int], lm: LanguageModel, gen: GenerationParams,
                k: int, rng: np.random.Generator, *, seed: int = 0) -> list[GenerationRecord]:
    """Beam sampling: each live beam samples k continuations (without
    replacement within the beam), the at-most-k^2 candidates are pruned back
    to the k most probable, until every beam is finished.

    The candidate pool can only fall short of k when the vocabulary itself
    cannot supply k distinct continuations.
    """
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    started = time.perf_counter()
    eos = lm.vocabulary().eos_id
    beams: list[tuple[TokenSequence, float]] = [(TokenSequence.from_prompt(prompt), 0.0)]
    while any(not seq.terminal for seq, _ in beams):
        live = [(seq, score) for seq, score in beams if not seq.terminal]
        candidates = [(seq, score) for seq, score in beams if seq.terminal]
        dists = lm.next_logits_batch([seq.tokens for seq, _ in live])
        for (seq, score), dist in zip(live, dists):
            probs = apply_repetition_penalty(dist.logits, seq,
                                             gen.repetition_penalty, gen.temperature)
            remaining = probs.copy()
            draws = min(k, int(np.count_nonzero(remaining > 0)))
            for _ in range(draws):
                t = sample_index(remaining, rng)
                candidates.append((_append(seq, t, eos, gen.max_new_tokens),
                                   score + float(np.log(probs[t]))))
                remaining[t] = 0.0
        assert len(candidates) <= k * k
        candidates.sort(key=lambda c: (-c[1], c[0].tokens))
        beams = candidates[:k]
    return [finish_record("beam_sample", lm, seq, gen, started, seed=seed, k=k,
                          beam_score=score)
            for seq, score in beams]
