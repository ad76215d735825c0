"""Lossless model serialization.

One JSON object per file with a versioned header, the vocabulary, and the
model's raw training statistics (counts are integers, so round-trips are
exact; floats round-trip through JSON's shortest-repr encoding).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import InvalidArgumentError, Vocabulary
from .discriminator import KeywordDiscriminator, NaiveBayesModel
from .lm import NGramModel

FORMAT_NAME = "guidedgen.model"
FORMAT_VERSION = 1


def _vocab_to_json(vocab: Vocabulary) -> dict:
    return {"tokens": list(vocab.tokens), "eos_id": vocab.eos_id, "bos_id": vocab.bos_id}


def _vocab_from_json(obj: dict) -> Vocabulary:
    return Vocabulary(tokens=tuple(obj["tokens"]), eos_id=obj["eos_id"], bos_id=obj["bos_id"])


def model_to_json(model) -> dict:
    if isinstance(model, NGramModel):
        counts = sorted((list(ctx), row.tolist()) for ctx, row in model.counts.items())
        body = {"kind": "ngram", "order": model.order, "lam": model.lam, "counts": counts}
        vocab = model.vocabulary()
    elif isinstance(model, NaiveBayesModel):
        body = {"kind": "naive_bayes", "lam": model.lam,
                "doc_counts": model.doc_counts.tolist(),
                "token_counts": model.token_counts.tolist()}
        vocab = model.vocabulary()
    elif isinstance(model, KeywordDiscriminator):
        body = {"kind": "keyword", "beta": model.beta,
                "keyword_ids": [sorted(ids) for ids in model.keyword_ids]}
        vocab = model.vocabulary()
    else:
        raise InvalidArgumentError(f"cannot serialize {type(model).__name__}")
    return {"format": FORMAT_NAME, "version": FORMAT_VERSION,
            "vocab": _vocab_to_json(vocab), **body}


def model_from_json(obj: dict):
    if obj.get("format") != FORMAT_NAME:
        raise InvalidArgumentError("not a guidedgen model file")
    if obj.get("version") != FORMAT_VERSION:
        raise InvalidArgumentError(f"unsupported model format version: {obj.get('version')}")
    vocab = _vocab_from_json(obj["vocab"])
    kind = obj["kind"]
    if kind == "ngram":
        counts = {tuple(ctx): np.asarray(row, dtype=np.int64) for ctx, row in obj["counts"]}
        return NGramModel(order=obj["order"], vocab=vocab, lam=obj["lam"], counts=counts)
    if kind == "naive_bayes":
        return NaiveBayesModel(vocab, obj["lam"],
                               np.asarray(obj["doc_counts"], dtype=np.int64),
                               np.asarray(obj["token_counts"], dtype=np.int64))
    if kind == "keyword":
        return KeywordDiscriminator(vocab, obj["keyword_ids"], beta=obj["beta"])
    raise InvalidArgumentError(f"unknown model kind: {kind}")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_json(model)) + "\n", encoding="utf-8")


def load_model(path):
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"malformed model file {path}: {exc}") from exc
    return model_from_json(obj)
