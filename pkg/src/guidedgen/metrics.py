"""Evaluation metrics: oracle accuracy, pooled oracle perplexity, and
Self-BLEU (mean BLEU of each sample against the rest of the pool)."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .core import GenerationRecord, InvalidArgumentError
from .discriminator import Discriminator
from .lm import LanguageModel, sequence_log_likelihood


@dataclass(frozen=True)
class MetricReport:
    method: str
    accuracy: float
    self_bleu: float
    oracle_perplexity: float
    n: int
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.accuracy <= 1:
            raise InvalidArgumentError("accuracy must lie in [0, 1]")
        if not 0 <= self.self_bleu <= 1:
            raise InvalidArgumentError("self_bleu must lie in [0, 1]")
        if self.oracle_perplexity < 1:
            raise InvalidArgumentError("perplexity must be >= 1")
        if self.n < 2:
            raise InvalidArgumentError("need at least 2 samples")


def _targets_list(records: Sequence[GenerationRecord], targets) -> list[int]:
    if isinstance(targets, int):
        return [targets] * len(records)
    targets = list(targets)
    if len(targets) != len(records):
        raise InvalidArgumentError("one target class per record required")
    return targets


def accuracy(records: Sequence[GenerationRecord], oracle_d: Discriminator,
             targets) -> float:
    """Fraction of records whose oracle-argmax class equals the target."""
    if not records:
        raise InvalidArgumentError("no records to score")
    wanted = _targets_list(records, targets)
    hits = sum(oracle_d.predicted_class(r.sequence) == t
               for r, t in zip(records, wanted))
    return hits / len(records)


def oracle_perplexity(records: Sequence[GenerationRecord],
                      oracle_lm: LanguageModel) -> float:
    """exp of the negative mean per-token log-likelihood, pooled over all
    generated tokens of all records (prompts excluded)."""
    if not records:
        raise InvalidArgumentError("no records to score")
    total_ll = 0.0
    total_tokens = 0
    for r in records:
        total_ll += sequence_log_likelihood(oracle_lm, r.sequence)
        total_tokens += r.sequence.num_generated
    if total_tokens == 0:
        raise InvalidArgumentError("records contain no generated tokens")
    return math.exp(-total_ll / total_tokens)


def _ngram_counts(tokens: Sequence[int], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_score(candidate: Sequence[int], references: Sequence[Sequence[int]],
               max_n: int = 5) -> float:
    """BLEU with uniform weights over n = 1..max_n, multi-reference clipped
    precisions and the standard brevity penalty. No smoothing: any zero
    precision zeroes the score."""
    if not references:
        raise InvalidArgumentError("need at least one reference")
    if not candidate:
        return 0.0
    log_prec_sum = 0.0
    for n in range(1, max_n + 1):
        cand = _ngram_counts(candidate, n)
        total = sum(cand.values())
        if total == 0:
            return 0.0
        max_ref: Counter = Counter()
        for ref in references:
            for gram, cnt in _ngram_counts(ref, n).items():
                if cnt > max_ref[gram]:
                    max_ref[gram] = cnt
        clipped = sum(min(cnt, max_ref[gram]) for gram, cnt in cand.items())
        if clipped == 0:
            return 0.0
        log_prec_sum += math.log(clipped / total) / max_n
    c = len(candidate)
    r = min((abs(len(ref) - c), len(ref)) for ref in references)[1]
    brevity = 1.0 if c > r else math.exp(1.0 - r / c)
    return brevity * math.exp(log_prec_sum)


def _content_tokens(record: GenerationRecord, eos_id: int) -> tuple[int, ...]:
    return tuple(t for t in record.sequence.generated if t != eos_id)


def self_bleu(records: Sequence[GenerationRecord], eos_id: int,
              max_n: int = 5) -> float:
    """Mean BLEU of each record's generated tokens against all other records
    as references. High values mean low diversity."""
    if len(records) < 2:
        raise InvalidArgumentError("self-BLEU needs at least 2 records")
    token_lists = [_content_tokens(r, eos_id) for r in records]
    scores = []
    for i, cand in enumerate(token_lists):
        refs = token_lists[:i] + token_lists[i + 1:]
        scores.append(bleu_score(cand, refs, max_n=max_n))
    return sum(scores) / len(scores)


def compute_report(records: Sequence[GenerationRecord], oracle_lm: LanguageModel,
                   oracle_d: Discriminator, targets, *, method: str,
                   params: dict | None = None, seed: int = 0) -> MetricReport:
    return MetricReport(
        method=method,
        accuracy=accuracy(records, oracle_d, targets),
        self_bleu=self_bleu(records, oracle_lm.vocabulary().eos_id),
        oracle_perplexity=oracle_perplexity(records, oracle_lm),
        n=len(records),
        seed=seed,
        params=dict(params or {}),
    )
