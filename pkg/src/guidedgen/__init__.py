"""Discriminator-guided tree-search decoding with baseline decoders,
re-ranking pipelines, desk-scale models and an evaluation harness."""

from .core import (ConstraintSpec, Distribution, GenerationParams,
                   GenerationRecord, InvalidArgumentError, TokenSequence,
                   Vocabulary, apply_repetition_penalty,
                   softmax_with_temperature)
from .decoding import (beam_sample, beam_search, greedy_decode, nucleus_sample,
                       sample_decode, topk_sample)
from .discriminator import (Discriminator, KeywordDiscriminator,
                            NaiveBayesModel, constraint_score,
                            train_naive_bayes)
from .lm import (LanguageModel, NGramModel, make_uniform_model,
                 sequence_log_likelihood, train_ngram)
from .mcts import MctsParams, SearchNode, SearchTree, mcts_decode_token, mcts_generate, puct
from .metrics import MetricReport, accuracy, oracle_perplexity, self_bleu
from .model_io import load_model, save_model
from .oracle import exhaustive_oracle
from .rerank import ProposalPool, generate_pool, rerank_generate, select
from .synthesis import LabeledCorpus, SplitPlan, make_split, synth_corpus

__all__ = [
    "ConstraintSpec", "Distribution", "GenerationParams", "GenerationRecord",
    "InvalidArgumentError", "TokenSequence", "Vocabulary",
    "apply_repetition_penalty", "softmax_with_temperature",
    "beam_sample", "beam_search", "greedy_decode", "nucleus_sample",
    "sample_decode", "topk_sample",
    "Discriminator", "KeywordDiscriminator", "NaiveBayesModel",
    "constraint_score", "train_naive_bayes",
    "LanguageModel", "NGramModel", "make_uniform_model",
    "sequence_log_likelihood", "train_ngram",
    "MctsParams", "SearchNode", "SearchTree", "mcts_decode_token",
    "mcts_generate", "puct",
    "MetricReport", "accuracy", "oracle_perplexity", "self_bleu",
    "load_model", "save_model", "exhaustive_oracle",
    "ProposalPool", "generate_pool", "rerank_generate", "select",
    "LabeledCorpus", "SplitPlan", "make_split", "synth_corpus",
]

__version__ = "0.1.0"
