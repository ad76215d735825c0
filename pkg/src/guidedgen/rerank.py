"""Generate-then-re-rank pipelines: a proposal pool from one decoder, then a
final choice by discriminator score (argmax / first-true / sampling)."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (ConstraintSpec, GenerationParams, GenerationRecord,
                   InvalidArgumentError, sample_index)
from .decoding import beam_sample, beam_search, sample_decode
from .discriminator import Discriminator, constraint_score_log
from .lm import LanguageModel

POOL_METHODS = ("beam", "sampling", "beam_sampling")
SELECT_RULES = ("argmax", "first_true", "sampling")

# pool sizes used when the caller does not override them; beam sampling is
# smaller because its candidate set grows quadratically
DEFAULT_POOL_SIZES = {"beam": 50, "sampling": 50, "beam_sampling": 10}


@dataclass(frozen=True)
class ProposalPool:
    records: tuple[GenerationRecord, ...]
    generator: str

    def __post_init__(self):
        if not self.records:
            raise InvalidArgumentError("pool must contain at least one record")
        prompts = {r.prompt for r in self.records}
        if len(prompts) != 1:
            raise InvalidArgumentError("all pool records must share one prompt")

    @property
    def size(self) -> int:
        return len(self.records)


def generate_pool(prompt: Sequence[int], lm: LanguageModel, method: str,
                  size: int, gen: GenerationParams, rng: np.random.Generator,
                  *, ban_eos: bool = False) -> ProposalPool:
    if size < 1:
        raise InvalidArgumentError("pool size must be >= 1")
    if method == "beam":
        records = beam_search(prompt, lm, gen, size)
    elif method == "sampling":
        records = [sample_decode(prompt, lm, gen, rng, ban_eos=ban_eos)
                   for _ in range(size)]
    elif method == "beam_sampling":
        records = beam_sample(prompt, lm, gen, size, rng)
    else:
        raise InvalidArgumentError(f"unknown pool method: {method}")
    return ProposalPool(records=tuple(records), generator=method)


def _pool_log_scores(pool: ProposalPool, d: Discriminator, spec: ConstraintSpec,
                     lm: LanguageModel | None) -> tuple[list[float], list[float]]:
    probs = d.class_prob_batch([r.sequence for r in pool.records], spec.class_id)
    scores = [constraint_score_log(r.sequence, lm, d, spec,
                                   class_prob=p, loglik=r.loglik)
              for r, p in zip(pool.records, probs)]
    return scores, probs


def select(pool: ProposalPool, d: Discriminator, spec: ConstraintSpec, rule: str,
           rng: np.random.Generator | None = None,
           lm: LanguageModel | None = None) -> GenerationRecord:
    """Pick one pool record. ``argmax`` takes the best mixed score (the plain
    class probability at alpha = 1); ``first_true`` takes the most likely
    record classified as the target (argmax fallback); ``sampling`` draws a
    record with probability proportional to its score.

    Ties are broken by a canonical sort on (-score, loglik, tokens), so the
    choice is invariant under pool permutations.
    """
    scores, probs = _pool_log_scores(pool, d, spec, lm)
    indexed = list(range(pool.size))
    if rule == "argmax":
        best = min(indexed, key=lambda i: (-scores[i], pool.records[i].loglik,
                                           pool.records[i].sequence.tokens))
        chosen = best
    elif rule == "first_true":
        by_lik = sorted(indexed, key=lambda i: (-pool.records[i].loglik,
                                                pool.records[i].sequence.tokens))
        chosen = None
        for i in by_lik:
            if _predicted_true(d, pool.records[i], probs[i], spec):
                chosen = i
                break
        if chosen is None:
            return select(pool, d, spec, "argmax", rng, lm)
    elif rule == "sampling":
        if rng is None:
            raise InvalidArgumentError("sampling rule needs an rng")
        arr = np.asarray(scores, dtype=np.float64)
        top = np.max(arr)
        weights = np.exp(arr - top) if top > -np.inf else np.ones(pool.size)
        chosen = sample_index(weights / weights.sum(), rng)
    else:
        raise InvalidArgumentError(f"unknown selection rule: {rule}")
    record = pool.records[chosen]
    return dataclasses.replace(record, class_prob=probs[chosen])


def _predicted_true(d: Discriminator, record: GenerationRecord, prob: float,
                    spec: ConstraintSpec) -> bool:
    if d.num_classes() == 2:
        return prob > 0.5
    return d.predicted_class(record.sequence) == spec.class_id


def rerank_generate(prompt: Sequence[int], lm: LanguageModel, d: Discriminator,
                    spec: ConstraintSpec, pool_method: str, rule: str,
                    gen: GenerationParams, rng: np.random.Generator,
                    pool_size: int | None = None, *, seed: int = 0,
                    ban_eos: bool = False) -> GenerationRecord:
    """Full pipeline: generate a pool, select one record, and stamp the
    combined method name and parameters onto the result."""
    started = time.perf_counter()
    size = pool_size if pool_size is not None else DEFAULT_POOL_SIZES[pool_method]
    pool = generate_pool(prompt, lm, pool_method, size, gen, rng, ban_eos=ban_eos)
    record = select(pool, d, spec, rule, rng, lm)
    params = dict(record.params)
    params.update(method=f"rerank_{pool_method}_{rule}", pool_method=pool_method,
                  pool_size=size, select_rule=rule, class_id=spec.class_id,
                  alpha=spec.alpha, normalize_likelihood=spec.normalize_likelihood)
    return dataclasses.replace(
        record, method=params["method"], params=params, seed=seed,
        duration_ms=(time.perf_counter() - started) * 1000.0)
