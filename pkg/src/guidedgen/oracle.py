"""Exhaustive search over every terminal continuation of a prompt: the
ground truth the tree search is checked against on tiny instances."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

from .core import (ConstraintSpec, InvalidArgumentError, TokenSequence,
                   Vocabulary)
from .discriminator import Discriminator, constraint_score
from .lm import LanguageModel

ENUMERATION_GUARD = 10 ** 6


@dataclass(frozen=True)
class OracleResult:
    best_sequence: TokenSequence
    best_score: float
    table: tuple[tuple[TokenSequence, float], ...]


def enumerate_terminal_sequences(vocab: Vocabulary, prompt: Sequence[int],
                                 max_len: int) -> Iterator[TokenSequence]:
    """Every terminal sequence reachable from the prompt in lexicographic
    token order: a sequence ends with eos or at exactly ``max_len`` generated
    tokens (the cap counts as terminal). Iterative depth-first walk."""
    if max_len < 1:
        raise InvalidArgumentError("max_len must be >= 1")
    emit = vocab.emit_ids
    root = TokenSequence.from_prompt(prompt)
    stack = [root.extended(t, terminal=(t == vocab.eos_id or max_len == 1))
             for t in reversed(emit)]
    while stack:
        seq = stack.pop()
        if seq.terminal:
            yield seq
            continue
        depth = seq.num_generated
        stack.extend(seq.extended(t, terminal=(t == vocab.eos_id
                                               or depth + 1 >= max_len))
                     for t in reversed(emit))


def exhaustive_oracle(lm: LanguageModel, d: Discriminator, spec: ConstraintSpec,
                      prompt: Sequence[int], max_len: int) -> OracleResult:
    """Score every terminal sequence with the constraint score and return the
    argmax (ties go to the lexicographically smallest token tuple) along with
    the full score table in enumeration order."""
    vocab = lm.vocabulary()
    if len(vocab.emit_ids) ** max_len > ENUMERATION_GUARD:
        raise InvalidArgumentError(
            f"instance too large to enumerate: {len(vocab.emit_ids)}^{max_len}")
    table = []
    best_seq, best_score = None, -1.0
    for seq in enumerate_terminal_sequences(vocab, prompt, max_len):
        score = constraint_score(seq, lm, d, spec)
        table.append((seq, score))
        if score > best_score or (score == best_score
                                  and seq.tokens < best_seq.tokens):
            best_seq, best_score = seq, score
    return OracleResult(best_sequence=best_seq, best_score=best_score,
                        table=tuple(table))


def optimal_first_tokens(result: OracleResult, tol: float = 1e-9) -> set[int]:
    """First generated tokens of every sequence scoring within ``tol`` of the
    optimum."""
    prompt_len = result.best_sequence.prompt_len
    return {seq.tokens[prompt_len] for seq, score in result.table
            if score >= result.best_score - tol}
