"""Command-line surface.

Subcommands cover the whole experiment pipeline: ``corpus-synth`` writes a
synthetic labeled corpus, ``train`` fits the n-gram LM or naive-Bayes
classifier, ``generate`` decodes records with any method, ``evaluate`` turns
records into metric rows, ``sweep`` runs a parameter grid from a config file,
and ``oracle-search`` brute-forces tiny instances.

All randomness is controlled by ``--seed``; outputs embed their full
configuration so a ``generate`` run can be replayed from its own header
(``--replay``). Errors exit nonzero with a single ``error: ...`` line.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bridge import BridgeError, connect
from .core import (ConstraintSpec, GenerationParams, InvalidArgumentError,
                   Vocabulary)
from .decoding import beam_sample, beam_search, greedy_decode, sample_decode
from .discriminator import train_naive_bayes
from .lm import train_ngram
from .mcts import MctsParams, mcts_generate
from .metrics import compute_report
from .model_io import load_model, save_model
from .oracle import exhaustive_oracle
from .records import read_header, read_records, write_records
from .rerank import POOL_METHODS, SELECT_RULES, rerank_generate
from .sweep import (build_world, generate_records, reports_to_csv,
                    reports_to_jsonl, run_sweep)
from .synthesis import (corpus_vocabulary, encode_corpus, make_split,
                        read_corpus_tsv, synth_corpus, write_corpus_tsv)

GENERATE_METHODS = ("greedy", "sampling", "mcts", "beam", "beam_sample", "rerank")


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration of one ``generate`` invocation. The field set
    is closed: unknown keys in a config/header are rejected."""

    method: str
    lm: str
    clf: str | None = None
    class_id: int = 0
    alpha: float = 1.0
    normalize_likelihood: bool = True
    temperature: float = 1.0
    repetition_penalty: float = 1.2
    top_k: int | None = None
    top_p: float | None = None
    max_new_tokens: int = 20
    iterations: int = 50
    c_puct: float = 3.0
    rollout: int | str = 0
    aggregation: str = "mean"
    commitment: str = "most_played"
    expansion_width: int | None = None
    tree_reuse: bool = True
    pool_method: str = "sampling"
    select_rule: str = "argmax"
    pool_size: int | None = None
    beam_width: int = 3
    prompts: tuple[str, ...] | None = None
    prompts_file: str | None = None
    prompt_source: str | None = None
    prompt_tokens: int = 4
    num_prompts: int = 100
    split_seed: int = 0
    ban_eos: bool = False
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.method not in GENERATE_METHODS:
            raise InvalidArgumentError(f"unknown method: {self.method}")
        if self.pool_method not in POOL_METHODS:
            raise InvalidArgumentError(f"unknown pool method: {self.pool_method}")
        if self.select_rule not in SELECT_RULES:
            raise InvalidArgumentError(f"unknown selection rule: {self.select_rule}")
        sources = [s for s in (self.prompts, self.prompts_file, self.prompt_source)
                   if s]
        if len(sources) != 1:
            raise InvalidArgumentError(
                "exactly one of --prompt/--prompts-file/--prompt-source is required")
        if self.jobs < 1:
            raise InvalidArgumentError("jobs must be >= 1")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["prompts"] = list(self.prompts) if self.prompts is not None else None
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        if obj.get("prompts") is not None:
            obj = dict(obj, prompts=tuple(obj["prompts"]))
        return cls(**obj)

    def generation_params(self) -> GenerationParams:
        return GenerationParams(temperature=self.temperature,
                                repetition_penalty=self.repetition_penalty,
                                top_k=self.top_k, top_p=self.top_p,
                                max_new_tokens=self.max_new_tokens,
                                seed=self.seed)

    def mcts_params(self) -> MctsParams:
        rollout = self.rollout
        if rollout == "full":
            mode, tokens = "full", None
        elif int(rollout) == 0:
            mode, tokens = "none", None
        else:
            mode, tokens = "fixed", int(rollout)
        return MctsParams(c_puct=self.c_puct,
                          iterations_per_token=self.iterations,
                          rollout_mode=mode, rollout_tokens=tokens,
                          aggregation=self.aggregation,
                          commitment=self.commitment,
                          expansion_width=self.expansion_width,
                          tree_reuse=self.tree_reuse)

    def constraint(self) -> ConstraintSpec:
        return ConstraintSpec(class_id=self.class_id, alpha=self.alpha,
                              normalize_likelihood=self.normalize_likelihood)


def _load_lm(spec: str):
    """A model path, or a remote endpoint (``stdio:``/``tcp:``)."""
    if spec.startswith(("stdio:", "tcp:")):
        return connect(spec)
    return load_model(spec)


def _resolve_prompts(config: RunConfig, vocab: Vocabulary) -> list[tuple[int, ...]]:
    if config.prompts is not None:
        texts = list(config.prompts)
    elif config.prompts_file is not None:
        texts = [line for line in
                 Path(config.prompts_file).read_text(encoding="utf-8").splitlines()
                 if line.strip()]
    else:
        corpus = read_corpus_tsv(config.prompt_source)
        split = make_split(corpus, config.split_seed)
        texts = []
        for i in split.p2_test:
            doc = corpus.documents[i]
            if len(doc) >= config.prompt_tokens:
                texts.append(" ".join(doc[:config.prompt_tokens]))
            if len(texts) == config.num_prompts:
                break
    if not texts:
        raise InvalidArgumentError("no prompts resolved")
    return [vocab.encode(t.split()) for t in texts]


_WORKER = {}


def _generate_worker_init(config_dict: dict):
    config = RunConfig.from_dict(config_dict)
    _WORKER["config"] = config
    _WORKER["lm"] = load_model(config.lm)
    _WORKER["clf"] = load_model(config.clf) if config.clf else None


def _generate_worker(task):
    index, prompt = task
    config = _WORKER["config"]
    return _decode_one(config, _WORKER["lm"], _WORKER["clf"], index, prompt)


def _decode_one(config: RunConfig, lm, clf, index: int, prompt):
    rng = np.random.default_rng([config.seed, index])
    gen = config.generation_params()
    spec = config.constraint()
    if config.method == "mcts":
        if clf is None:
            raise InvalidArgumentError("mcts requires --clf")
        return mcts_generate(prompt, lm, clf, spec, gen, config.mcts_params(),
                             rng, seed=config.seed)
    if config.method == "rerank":
        if clf is None:
            raise InvalidArgumentError("rerank requires --clf")
        return rerank_generate(prompt, lm, clf, spec, config.pool_method,
                               config.select_rule, gen, rng,
                               pool_size=config.pool_size, seed=config.seed,
                               ban_eos=config.ban_eos)
    if config.method == "greedy":
        record = greedy_decode(prompt, lm, gen)
    elif config.method == "sampling":
        record = sample_decode(prompt, lm, gen, rng, seed=config.seed,
                               ban_eos=config.ban_eos)
    elif config.method == "beam":
        record = beam_search(prompt, lm, gen, config.beam_width)[0]
    elif config.method == "beam_sample":
        record = beam_sample(prompt, lm, gen, config.beam_width, rng,
                             seed=config.seed)[0]
    else:
        raise InvalidArgumentError(f"unknown method: {config.method}")
    params = dict(record.params, class_id=config.class_id)
    class_prob = (clf.class_prob(record.sequence, config.class_id)
                  if clf is not None else None)
    return dataclasses.replace(record, params=params, class_prob=class_prob,
                               seed=config.seed)


def run_generate(config: RunConfig, out_path) -> None:
    remote = None
    try:
        lm_handle = _load_lm(config.lm)
        if isinstance(lm_handle, object) and hasattr(lm_handle, "connection"):
            remote = lm_handle
            lm = remote.lm
        else:
            lm = lm_handle
        clf = load_model(config.clf) if config.clf else None
        prompts = _resolve_prompts(config, lm.vocabulary())
        tasks = list(enumerate(prompts))
        if config.jobs > 1 and remote is None:
            with ProcessPoolExecutor(max_workers=config.jobs,
                                     initializer=_generate_worker_init,
                                     initargs=(config.to_dict(),)) as pool:
                records = list(pool.map(_generate_worker, tasks))
        else:
            records = [_decode_one(config, lm, clf, i, p) for i, p in tasks]
        write_records(out_path, config.to_dict(), records, lm.vocabulary())
    finally:
        if remote is not None:
            remote.close()


def _add_generate_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=GENERATE_METHODS)
    p.add_argument("--lm", help="model file, or stdio:/tcp: endpoint")
    p.add_argument("--clf", help="discriminator model file")
    p.add_argument("--class-id", type=int, default=0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--raw-likelihood", action="store_true",
                   help="use the raw sequence likelihood in the mixed score")
    p.add_argument("--temp", type=float, default=1.0)
    p.add_argument("--rep-penalty", type=float, default=1.2)
    p.add_argument("--top-k", type=int)
    p.add_argument("--top-p", type=float)
    p.add_argument("--tokens", type=int, default=20,
                   help="generated-token budget per sample")
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--c-puct", type=float, default=3.0)
    p.add_argument("--rollout", default="0",
                   help="roll-out length in tokens, or 'full'")
    p.add_argument("--aggregation", choices=("mean", "max"), default="mean")
    p.add_argument("--commitment", choices=("most_played", "highest_score"),
                   default="most_played")
    p.add_argument("--expansion-width", type=int)
    p.add_argument("--no-tree-reuse", action="store_true")
    p.add_argument("--pool", choices=POOL_METHODS, default="sampling")
    p.add_argument("--select", choices=SELECT_RULES, default="argmax")
    p.add_argument("--pool-size", type=int)
    p.add_argument("--beam-width", type=int, default=3)
    p.add_argument("--prompt", action="append",
                   help="literal prompt text (repeatable)")
    p.add_argument("--prompts-file", help="one prompt per line")
    p.add_argument("--prompt-source",
                   help="corpus TSV; prompts are the first tokens of part-2 test docs")
    p.add_argument("--prompt-tokens", type=int, default=4)
    p.add_argument("--num-prompts", type=int, default=100)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--ban-eos", action="store_true",
                   help="mask eos during sampling (fixed-length experiments)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)


def _config_from_args(args) -> RunConfig:
    if args.method is None or args.lm is None:
        raise InvalidArgumentError("--method and --lm are required")
    rollout = args.rollout if args.rollout == "full" else int(args.rollout)
    return RunConfig(
        method=args.method, lm=args.lm, clf=args.clf, class_id=args.class_id,
        alpha=args.alpha, normalize_likelihood=not args.raw_likelihood,
        temperature=args.temp, repetition_penalty=args.rep_penalty,
        top_k=args.top_k, top_p=args.top_p, max_new_tokens=args.tokens,
        iterations=args.iterations, c_puct=args.c_puct, rollout=rollout,
        aggregation=args.aggregation, commitment=args.commitment,
        expansion_width=args.expansion_width, tree_reuse=not args.no_tree_reuse,
        pool_method=args.pool, select_rule=args.select, pool_size=args.pool_size,
        beam_width=args.beam_width,
        prompts=tuple(args.prompt) if args.prompt else None,
        prompts_file=args.prompts_file, prompt_source=args.prompt_source,
        prompt_tokens=args.prompt_tokens, num_prompts=args.num_prompts,
        split_seed=args.split_seed, ban_eos=args.ban_eos, seed=args.seed,
        jobs=args.jobs)


def cmd_corpus_synth(args) -> int:
    corpus = synth_corpus(args.classes, args.docs_per_class,
                          (args.len_min, args.len_max), args.skew, args.seed,
                          common_tokens=args.common_tokens,
                          keywords_per_class=args.keywords_per_class,
                          keyword_rate=args.keyword_rate)
    write_corpus_tsv(corpus, args.out)
    print(f"wrote {len(corpus)} documents to {args.out}")
    return 0


def cmd_train(args) -> int:
    corpus = read_corpus_tsv(args.corpus)
    vocab = corpus_vocabulary(corpus)
    if args.part is not None:
        split = make_split(corpus, args.split_seed)
        indices = split.p1_train if args.part == 1 else split.p2_train
    else:
        indices = None
    encoded = encode_corpus(corpus, vocab, indices)
    if args.kind == "lm":
        model = train_ngram([doc for doc, _ in encoded], args.order, args.lam, vocab)
    else:
        model = train_naive_bayes(encoded, args.lam, vocab,
                                  num_classes=corpus.num_classes)
    save_model(model, args.out)
    print(f"wrote {args.kind} model to {args.out}")
    return 0


def cmd_generate(args) -> int:
    if args.replay:
        config = RunConfig.from_dict(read_header(args.replay))
    else:
        config = _config_from_args(args)
    run_generate(config, args.out)
    print(f"wrote records to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    oracle_lm = load_model(args.oracle_lm)
    oracle_clf = load_model(args.oracle_clf)
    config, records = read_records(args.records, oracle_lm.vocabulary())
    if not records:
        raise InvalidArgumentError("records file contains no records")
    if args.target_class is not None:
        targets = [args.target_class] * len(records)
    else:
        try:
            targets = [r.params["class_id"] for r in records]
        except KeyError:
            raise InvalidArgumentError(
                "records lack class_id; pass --target-class") from None
    report = compute_report(records, oracle_lm, oracle_clf, targets,
                            method=config.get("method", records[0].method),
                            params={k: config.get(k) for k in
                                    ("temperature", "repetition_penalty",
                                     "top_k", "top_p", "max_new_tokens",
                                     "class_id", "alpha", "c_puct", "iterations",
                                     "rollout", "pool_method", "pool_size",
                                     "select_rule")},
                            seed=config.get("seed", 0))
    Path(args.out).write_text(reports_to_csv([report]), encoding="utf-8")
    if args.jsonl_out:
        Path(args.jsonl_out).write_text(reports_to_jsonl([report]), encoding="utf-8")
    print(f"accuracy={report.accuracy} self_bleu={report.self_bleu} "
          f"oracle_perplexity={report.oracle_perplexity} n={report.n}")
    return 0


SWEEP_KEYS = {"corpus", "seed", "order", "lam", "prompt_tokens", "num_prompts",
              "max_new_tokens", "temperature", "repetition_penalty", "top_k",
              "top_p", "iterations", "grid", "jobs"}


def cmd_sweep(args) -> int:
    cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    unknown = set(cfg) - SWEEP_KEYS
    if unknown:
        raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
    if "corpus" not in cfg or "grid" not in cfg:
        raise InvalidArgumentError("sweep config needs 'corpus' and 'grid'")
    corpus = read_corpus_tsv(cfg["corpus"])
    world = build_world(corpus, seed=cfg.get("seed", 0),
                        order=cfg.get("order", 2), lam=cfg.get("lam", 1.0),
                        prompt_tokens=cfg.get("prompt_tokens", 4),
                        num_prompts=cfg.get("num_prompts", 100))
    base_gen = GenerationParams(
        temperature=cfg.get("temperature", 1.0),
        repetition_penalty=cfg.get("repetition_penalty", 1.2),
        top_k=cfg.get("top_k"), top_p=cfg.get("top_p"),
        max_new_tokens=cfg.get("max_new_tokens", 20),
        seed=cfg.get("seed", 0))
    base_mcts = MctsParams(iterations_per_token=cfg.get("iterations", 50))
    reports = run_sweep(cfg["grid"], world, seed=cfg.get("seed", 0),
                        jobs=cfg.get("jobs", args.jobs), base_gen=base_gen,
                        base_mcts=base_mcts)
    Path(args.out).write_text(reports_to_csv(reports), encoding="utf-8")
    if args.jsonl_out:
        Path(args.jsonl_out).write_text(reports_to_jsonl(reports), encoding="utf-8")
    print(f"wrote {len(reports)} grid points to {args.out}")
    return 0


def cmd_oracle_search(args) -> int:
    lm = load_model(args.lm)
    clf = load_model(args.clf)
    vocab = lm.vocabulary()
    prompt = vocab.encode(args.prompt.split())
    spec = ConstraintSpec(class_id=args.class_id, alpha=args.alpha,
                          normalize_likelihood=not args.raw_likelihood)
    result = exhaustive_oracle(lm, clf, spec, prompt, args.max_len)
    if args.table_out:
        lines = ["tokens,score"]
        lines += [f"{' '.join(vocab.decode(seq.generated))},{repr(score)}"
                  for seq, score in result.table]
        Path(args.table_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    best_text = " ".join(vocab.decode(result.best_sequence.generated))
    print(f"best={best_text!r} score={result.best_score!r} "
          f"table_size={len(result.table)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="guidedgen")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corpus-synth", help="write a synthetic labeled corpus")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--docs-per-class", type=int, default=200)
    p.add_argument("--len-min", type=int, default=20)
    p.add_argument("--len-max", type=int, default=40)
    p.add_argument("--skew", type=float, default=0.9)
    p.add_argument("--common-tokens", type=int, default=20)
    p.add_argument("--keywords-per-class", type=int, default=3)
    p.add_argument("--keyword-rate", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_corpus_synth)

    p = sub.add_parser("train", help="train an LM or classifier from a corpus")
    p.add_argument("kind", choices=("lm", "clf"))
    p.add_argument("--corpus", required=True)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--part", type=int, choices=(1, 2),
                   help="train on this part's train split only")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="decode records with any method")
    _add_generate_flags(p)
    p.add_argument("--replay", help="re-run the config echoed in a records file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="compute metrics for a records file")
    p.add_argument("--records", required=True)
    p.add_argument("--oracle-lm", required=True)
    p.add_argument("--oracle-clf", required=True)
    p.add_argument("--target-class", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--jsonl-out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="run a parameter grid from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jsonl-out")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-search", help="exhaustive search on a tiny instance")
    p.add_argument("--lm", required=True)
    p.add_argument("--clf", required=True)
    p.add_argument("--class-id", type=int, default=0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--raw-likelihood", action="store_true")
    p.add_argument("--prompt", required=True)
    p.add_argument("--max-len", type=int, required=True)
    p.add_argument("--table-out")
    p.set_defaults(func=cmd_oracle_search)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidArgumentError, BridgeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
