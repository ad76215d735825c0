"""Experiment harness: builds a self-contained evaluation world from a
labeled corpus (generation models on part 1, oracle models on part 2, prompts
from the part-2 test set), generates record pools for any decoding method,
and runs parameter sweeps that emit one metric report per grid point.
"""

from __future__ import annotations

import dataclasses
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ConstraintSpec, GenerationParams, GenerationRecord, InvalidArgumentError
from .decoding import greedy_decode, sample_decode
from .discriminator import Discriminator, train_naive_bayes
from .lm import LanguageModel, train_ngram
from .mcts import MctsParams, mcts_generate
from .metrics import MetricReport, compute_report
from .rerank import rerank_generate
from .synthesis import LabeledCorpus, corpus_vocabulary, encode_corpus, make_split

# parameter grids mirroring the reported experiments
TAU_GRID = (1.0, 1.1, 1.2)
CPUCT_GRID = (1.0, 3.0, 5.0, 8.0)
ROLLOUT_GRID = (0, 3, 5, 10, 20)

CSV_PARAM_COLUMNS = ("temperature", "repetition_penalty", "top_k", "top_p",
                     "max_new_tokens", "class_id", "alpha", "c_puct",
                     "iterations", "rollout", "pool_method", "pool_size",
                     "select_rule")


@dataclass(frozen=True)
class EvalWorld:
    """Everything one experiment needs: generator LM + guiding discriminator
    (part-1 data), oracle LM + oracle discriminator (part-2 data), and a fixed
    prompt/target list drawn from the part-2 test documents."""

    vocab: object
    gen_lm: LanguageModel
    guide: Discriminator
    oracle_lm: LanguageModel
    oracle_d: Discriminator
    prompts: tuple[tuple[int, ...], ...]
    targets: tuple[int, ...]


def build_world(corpus: LabeledCorpus, *, seed: int = 0, order: int = 2,
                lam: float = 1.0, prompt_tokens: int = 4,
                num_prompts: int = 100) -> EvalWorld:
    vocab = corpus_vocabulary(corpus)
    split = make_split(corpus, seed)
    part1 = encode_corpus(corpus, vocab, split.p1_train)
    part2 = encode_corpus(corpus, vocab, split.p2_train)
    gen_lm = train_ngram([doc for doc, _ in part1], order, lam, vocab)
    guide = train_naive_bayes(part1, lam, vocab, num_classes=corpus.num_classes)
    oracle_lm = train_ngram([doc for doc, _ in part2], order, lam, vocab)
    oracle_d = train_naive_bayes(part2, lam, vocab, num_classes=corpus.num_classes)
    prompts = []
    for i in split.p2_test:
        doc = corpus.documents[i]
        if len(doc) >= prompt_tokens:
            prompts.append(vocab.encode(doc[:prompt_tokens]))
        if len(prompts) == num_prompts:
            break
    if len(prompts) < 2:
        raise InvalidArgumentError("not enough part-2 test documents for prompts")
    targets = tuple(i % corpus.num_classes for i in range(len(prompts)))
    return EvalWorld(vocab=vocab, gen_lm=gen_lm, guide=guide,
                     oracle_lm=oracle_lm, oracle_d=oracle_d,
                     prompts=tuple(prompts), targets=targets)


def _one_record(world: EvalWorld, method: str, index: int, prompt, target,
                gen: GenerationParams, mcts: MctsParams, spec: ConstraintSpec,
                pool_method: str | None, select_rule: str | None,
                pool_size: int | None, seed: int, ban_eos: bool) -> GenerationRecord:
    rng = np.random.default_rng([seed, index])
    spec_i = dataclasses.replace(spec, class_id=target)
    if method == "mcts":
        return mcts_generate(prompt, world.gen_lm, world.guide, spec_i, gen,
                             mcts, rng, seed=seed)
    if method == "greedy":
        record = greedy_decode(prompt, world.gen_lm, gen)
    elif method == "sampling":
        record = sample_decode(prompt, world.gen_lm, gen, rng, seed=seed,
                               ban_eos=ban_eos)
    elif method == "rerank":
        return rerank_generate(prompt, world.gen_lm, world.guide, spec_i,
                               pool_method, select_rule, gen, rng,
                               pool_size=pool_size, seed=seed, ban_eos=ban_eos)
    else:
        raise InvalidArgumentError(f"unknown method: {method}")
    cp = world.guide.class_prob(record.sequence, spec_i.class_id)
    params = dict(record.params, class_id=spec_i.class_id)
    return dataclasses.replace(record, class_prob=cp, params=params, seed=seed)


def generate_records(world: EvalWorld, method: str, *,
                     gen: GenerationParams, mcts: MctsParams | None = None,
                     spec: ConstraintSpec | None = None,
                     pool_method: str | None = None,
                     select_rule: str | None = None,
                     pool_size: int | None = None, seed: int = 0,
                     jobs: int = 1, ban_eos: bool = False) -> list[GenerationRecord]:
    """Decode one record per world prompt. Each record draws from its own
    generator seeded with (seed, prompt index), so parallel and serial runs
    produce identical outputs."""
    mcts = mcts or MctsParams()
    spec = spec or ConstraintSpec(class_id=0)
    args = [(world, method, i, prompt, target, gen, mcts, spec, pool_method,
             select_rule, pool_size, seed, ban_eos)
            for i, (prompt, target) in enumerate(zip(world.prompts, world.targets))]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_one_record_star, args))
    return [_one_record(*a) for a in args]


def _one_record_star(args):
    return _one_record(*args)


def _rollout_params(mcts: MctsParams, rollout: int | str) -> MctsParams:
    if rollout == "full":
        return dataclasses.replace(mcts, rollout_mode="full", rollout_tokens=None)
    rollout = int(rollout)
    if rollout == 0:
        return dataclasses.replace(mcts, rollout_mode="none", rollout_tokens=None)
    return dataclasses.replace(mcts, rollout_mode="fixed", rollout_tokens=rollout)


def grid_points(grid: dict) -> list[dict]:
    """Expand an axis dict (name -> list of values) into the cartesian
    product, keeping only the axes relevant to each method."""
    methods = grid.get("method", ["mcts"])
    shared = ("temperature", "repetition_penalty", "top_k", "top_p", "alpha")
    per_method = {
        "mcts": shared + ("c_puct", "iterations", "rollout"),
        "rerank": shared + ("pool_method", "select_rule", "pool_size"),
        "sampling": shared,
        "greedy": ("temperature", "repetition_penalty", "alpha"),
    }
    points = []
    for method in methods:
        axes = [a for a in per_method.get(method, shared) if a in grid]
        value_lists = [grid[a] for a in axes]
        for combo in itertools.product(*value_lists):
            point = {"method": method}
            point.update(dict(zip(axes, combo)))
            if point not in points:
                points.append(point)
    return points


def run_sweep(grid: dict, world: EvalWorld, *, seed: int = 0, jobs: int = 1,
              base_gen: GenerationParams | None = None,
              base_mcts: MctsParams | None = None,
              base_spec: ConstraintSpec | None = None) -> list[MetricReport]:
    """Run every grid point against the world's fixed prompt set and return
    one metric report per point, in grid order."""
    base_gen = base_gen or GenerationParams()
    base_mcts = base_mcts or MctsParams()
    base_spec = base_spec or ConstraintSpec(class_id=0)
    reports = []
    for point in grid_points(grid):
        gen_over = {k: point[k] for k in
                    ("temperature", "repetition_penalty", "top_k", "top_p")
                    if k in point}
        gen = dataclasses.replace(base_gen, **gen_over)
        mcts = base_mcts
        if "c_puct" in point:
            mcts = dataclasses.replace(mcts, c_puct=point["c_puct"])
        if "iterations" in point:
            mcts = dataclasses.replace(mcts, iterations_per_token=point["iterations"])
        if "rollout" in point:
            mcts = _rollout_params(mcts, point["rollout"])
        spec = base_spec
        if "alpha" in point:
            spec = dataclasses.replace(spec, alpha=point["alpha"])
        records = generate_records(
            world, point["method"], gen=gen, mcts=mcts, spec=spec,
            pool_method=point.get("pool_method"),
            select_rule=point.get("select_rule"),
            pool_size=point.get("pool_size"), seed=seed, jobs=jobs)
        params = _report_params(point, gen, mcts, spec)
        reports.append(compute_report(records, world.oracle_lm, world.oracle_d,
                                      list(world.targets)[:len(records)],
                                      method=point["method"], params=params,
                                      seed=seed))
    return reports


def _report_params(point: dict, gen: GenerationParams, mcts: MctsParams,
                   spec: ConstraintSpec) -> dict:
    rollout = point.get("rollout")
    if rollout is None and point["method"] == "mcts":
        rollout = {"none": 0, "full": "full"}.get(mcts.rollout_mode, mcts.rollout_tokens)
    return {"temperature": gen.temperature,
            "repetition_penalty": gen.repetition_penalty,
            "top_k": gen.top_k, "top_p": gen.top_p,
            "max_new_tokens": gen.max_new_tokens,
            "class_id": spec.class_id, "alpha": spec.alpha,
            "c_puct": mcts.c_puct if point["method"] == "mcts" else None,
            "iterations": (mcts.iterations_per_token
                           if point["method"] == "mcts" else None),
            "rollout": rollout,
            "pool_method": point.get("pool_method"),
            "pool_size": point.get("pool_size"),
            "select_rule": point.get("select_rule")}


def reports_to_csv(reports: Sequence[MetricReport]) -> str:
    header = ("method",) + CSV_PARAM_COLUMNS + ("accuracy", "self_bleu",
                                                "oracle_perplexity", "n", "seed")
    lines = [",".join(header)]
    for rep in reports:
        row = [rep.method]
        row += ["" if rep.params.get(c) is None else str(rep.params.get(c))
                for c in CSV_PARAM_COLUMNS]
        row += [repr(rep.accuracy), repr(rep.self_bleu),
                repr(rep.oracle_perplexity), str(rep.n), str(rep.seed)]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def reports_to_jsonl(reports: Sequence[MetricReport]) -> str:
    import json
    lines = []
    for rep in reports:
        obj = {"method": rep.method, "params": rep.params,
               "accuracy": rep.accuracy, "self_bleu": rep.self_bleu,
               "oracle_perplexity": rep.oracle_perplexity, "n": rep.n,
               "seed": rep.seed}
        lines.append(json.dumps(obj, separators=(",", ":")))
    return "\n".join(lines) + "\n"
