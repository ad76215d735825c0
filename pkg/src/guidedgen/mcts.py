"""Discriminator-guided Monte Carlo tree search decoding.

Each emitted token is chosen by running a budget of select / expand /
simulate / backpropagate iterations:

* selection walks from the root through expanded nodes, maximizing the
  polynomial upper confidence bound (mean value plus an exploration term
  scaled by the language-model prior),
* expansion creates children for every emittable token with priors drawn
  from the penalized step distribution,
* simulation samples one child from those priors and, depending on the
  roll-out mode, walks 0, a fixed number, or an unbounded number of extra
  tokens toward a terminal state,
* the constraint score of the reached sequence is backpropagated as a sum
  (read back as a mean) along the path, sampled child included.

After the budget the most-played root child is committed (highest mean
score is available as an option) and, with tree reuse on, its subtree
carries over to the next decoding step.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (ConstraintSpec, GenerationParams, GenerationRecord,
                   InvalidArgumentError, TokenSequence, apply_repetition_penalty,
                   sample_index)
from .decoding import base_params, step_distribution
from .discriminator import Discriminator, constraint_score
from .lm import LanguageModel, sequence_log_likelihood


@dataclass
class SearchNode:
    """One tree node: the token that leads to it, its prior under the
    (penalized) LM distribution, and running visit/value statistics.
    ``children is None`` marks an unexpanded node."""

    token: int
    prior: float
    terminal: bool
    visit_count: int = 0
    value_sum: float = 0.0
    value_max: float = 0.0
    children: "list[SearchNode] | None" = None

    @property
    def mean_value(self) -> float:
        return self.value_sum / self.visit_count if self.visit_count else 0.0


@dataclass(frozen=True)
class MctsParams:
    c_puct: float = 3.0
    iterations_per_token: int = 50
    rollout_mode: str = "none"          # none | fixed | full
    rollout_tokens: int | None = None   # only for rollout_mode == "fixed"
    aggregation: str = "mean"           # mean | max
    commitment: str = "most_played"     # most_played | highest_score
    expansion_width: int | None = None  # None = expand every emit token
    tree_reuse: bool = True

    def __post_init__(self):
        if self.c_puct < 0:
            raise InvalidArgumentError("c_puct must be >= 0")
        if self.iterations_per_token < 1:
            raise InvalidArgumentError("iterations_per_token must be >= 1")
        if self.rollout_mode not in ("none", "fixed", "full"):
            raise InvalidArgumentError(f"unknown rollout_mode: {self.rollout_mode}")
        if self.rollout_mode == "fixed":
            if self.rollout_tokens is None or self.rollout_tokens < 1:
                raise InvalidArgumentError("fixed rollout needs rollout_tokens >= 1")
        if self.aggregation not in ("mean", "max"):
            raise InvalidArgumentError(f"unknown aggregation: {self.aggregation}")
        if self.commitment not in ("most_played", "highest_score"):
            raise InvalidArgumentError(f"unknown commitment: {self.commitment}")
        if self.expansion_width is not None and self.expansion_width < 1:
            raise InvalidArgumentError("expansion_width must be >= 1")


@dataclass
class SearchTree:
    """A root node paired with the token sequence it represents. Owned by
    exactly one decoding job; never mutated concurrently."""

    root: SearchNode
    sequence: TokenSequence

    @classmethod
    def for_sequence(cls, seq: TokenSequence) -> "SearchTree":
        token = seq.tokens[-1] if seq.tokens else -1
        return cls(root=SearchNode(token=token, prior=1.0, terminal=seq.terminal),
                   sequence=seq)


def puct(node: SearchNode, parent_visits: int, c_puct: float,
         aggregation: str = "mean") -> float:
    """Upper confidence score: exploitation (mean backpropagated value, or the
    max under ``aggregation="max"``; 0 for unvisited nodes) plus
    ``c_puct * prior * sqrt(parent_visits) / (1 + visits)``."""
    if node.visit_count == 0:
        exploit = 0.0
    elif aggregation == "max":
        exploit = node.value_max
    else:
        exploit = node.value_sum / node.visit_count
    return exploit + c_puct * node.prior * math.sqrt(parent_visits) / (1 + node.visit_count)


def _select_child(parent: SearchNode, mcts: MctsParams) -> SearchNode:
    best, best_score = None, -math.inf
    for child in parent.children:
        score = puct(child, parent.visit_count, mcts.c_puct, mcts.aggregation)
        if score > best_score:
            best, best_score = child, score
    return best


def _expand(node: SearchNode, seq: TokenSequence, lm: LanguageModel,
            gen: GenerationParams, mcts: MctsParams) -> None:
    vocab = lm.vocabulary()
    dist = lm.next_logits(seq.tokens)
    probs = apply_repetition_penalty(dist.logits, seq, gen.repetition_penalty,
                                     gen.temperature)
    ids = list(vocab.emit_ids)
    if mcts.expansion_width is not None and mcts.expansion_width < len(ids):
        ranked = sorted(ids, key=lambda t: (-probs[t], t))[:mcts.expansion_width]
        ids = sorted(ranked)
        total = float(sum(probs[t] for t in ids))
        if total <= 0:
            raise InvalidArgumentError("expansion kept no probability mass")
        scale = 1.0 / total
    else:
        scale = 1.0
    node.children = [
        SearchNode(token=t, prior=float(probs[t]) * scale,
                   terminal=(t == vocab.eos_id
                             or seq.num_generated + 1 >= gen.max_new_tokens))
        for t in ids
    ]


def _commit_key(node: SearchNode, commitment: str):
    if commitment == "most_played":
        return node.visit_count
    return node.mean_value if node.visit_count else -1.0


def mcts_decode_token(tree: SearchTree, lm: LanguageModel, d: Discriminator,
                      spec: ConstraintSpec, gen: GenerationParams,
                      mcts: MctsParams, rng: np.random.Generator
                      ) -> tuple[int, SearchTree]:
    """Run one per-token search budget and commit a child of the root.

    Returns the committed token id and the tree for the extended context
    (the committed subtree when tree reuse is on, a fresh root otherwise).
    """
    if tree.sequence.terminal:
        raise InvalidArgumentError("root sequence is already terminal")
    if mcts.iterations_per_token < 1:
        raise InvalidArgumentError("iteration budget must be >= 1")
    eos = lm.vocabulary().eos_id
    for _ in range(mcts.iterations_per_token):
        node, seq, path = tree.root, tree.sequence, [tree.root]
        while node.children is not None and not node.terminal:
            node = _select_child(node, mcts)
            seq = seq.extended(node.token, terminal=node.terminal)
            path.append(node)
        if not node.terminal and node.children is None:
            _expand(node, seq, lm, gen, mcts)
        eval_seq = seq
        if not node.terminal and mcts.rollout_mode != "none":
            priors = np.array([c.prior for c in node.children])
            child = node.children[sample_index(priors, rng)]
            path.append(child)
            eval_seq = seq.extended(child.token, terminal=child.terminal)
            budget = math.inf if mcts.rollout_mode == "full" else mcts.rollout_tokens - 1
            while not eval_seq.terminal and budget > 0:
                probs = step_distribution(lm, eval_seq, gen)
                token = sample_index(probs, rng)
                terminal = (token == eos
                            or eval_seq.num_generated + 1 >= gen.max_new_tokens)
                eval_seq = eval_seq.extended(token, terminal=terminal)
                budget -= 1
        value = constraint_score(eval_seq, lm, d, spec)
        for n in path:
            n.visit_count += 1
            n.value_sum += value
            n.value_max = max(n.value_max, value)
    committed = max(tree.root.children,
                    key=lambda c: _commit_key(c, mcts.commitment))
    # max() keeps the first of equals, i.e. the lowest token index
    new_seq = tree.sequence.extended(committed.token, terminal=committed.terminal)
    if mcts.tree_reuse:
        new_tree = SearchTree(root=committed, sequence=new_seq)
    else:
        new_tree = SearchTree.for_sequence(new_seq)
    return committed.token, new_tree


def mcts_generate(prompt: Sequence[int], lm: LanguageModel, d: Discriminator,
                  spec: ConstraintSpec, gen: GenerationParams, mcts: MctsParams,
                  rng: np.random.Generator, *, seed: int = 0) -> GenerationRecord:
    """Decode a full sequence token by token under the search budget."""
    if not len(tuple(prompt)):
        raise InvalidArgumentError("prompt must be non-empty")
    started = time.perf_counter()
    tree = SearchTree.for_sequence(TokenSequence.from_prompt(prompt))
    while not tree.sequence.terminal:
        _, tree = mcts_decode_token(tree, lm, d, spec, gen, mcts, rng)
    seq = tree.sequence
    params = base_params("mcts", gen, c_puct=mcts.c_puct,
                         iterations=mcts.iterations_per_token,
                         rollout_mode=mcts.rollout_mode,
                         rollout_tokens=mcts.rollout_tokens,
                         aggregation=mcts.aggregation,
                         commitment=mcts.commitment,
                         expansion_width=mcts.expansion_width,
                         tree_reuse=mcts.tree_reuse,
                         class_id=spec.class_id, alpha=spec.alpha,
                         normalize_likelihood=spec.normalize_likelihood)
    return GenerationRecord(
        method="mcts", params=params, sequence=seq,
        loglik=sequence_log_likelihood(lm, seq),
        class_prob=d.class_prob(seq, spec.class_id),
        seed=seed, duration_ms=(time.perf_counter() - started) * 1000.0)
