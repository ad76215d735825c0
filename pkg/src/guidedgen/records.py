"""JSON-lines persistence for generation records.

The first line is a header object echoing the full run configuration, so any
output file is self-describing and can be replayed; the remaining lines hold
one record each. Apart from the wall-clock ``duration_ms`` field, reruns with
the same configuration are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

from .core import GenerationRecord, InvalidArgumentError, TokenSequence, Vocabulary

HEADER_FORMAT = "guidedgen.records"
HEADER_VERSION = 1


def record_to_json(record: GenerationRecord, vocab: Vocabulary) -> dict:
    seq = record.sequence
    gen_text = " ".join(vocab.tokens[t] for t in seq.generated
                        if t != vocab.eos_id)
    return {
        "method": record.method,
        "params": record.params,
        "prompt": " ".join(vocab.tokens[t] for t in record.prompt),
        "tokens": list(seq.tokens),
        "text": gen_text,
        "loglik": record.loglik,
        "class_prob": record.class_prob,
        "seed": record.seed,
        "duration_ms": record.duration_ms,
    }


def record_from_json(obj: dict, vocab: Vocabulary) -> GenerationRecord:
    prompt_len = len(obj["prompt"].split()) if obj["prompt"] else 0
    tokens = tuple(obj["tokens"])
    max_new = obj["params"].get("max_new_tokens")
    terminal = bool(tokens) and (
        tokens[-1] == vocab.eos_id
        or (max_new is not None and len(tokens) - prompt_len >= max_new))
    return GenerationRecord(
        method=obj["method"], params=obj["params"],
        sequence=TokenSequence(tokens=tokens, prompt_len=prompt_len,
                               terminal=terminal),
        loglik=obj["loglik"], class_prob=obj["class_prob"],
        seed=obj["seed"], duration_ms=obj["duration_ms"])


def write_records(path, config: dict, records: Sequence[GenerationRecord],
                  vocab: Vocabulary) -> None:
    header = {"format": HEADER_FORMAT, "version": HEADER_VERSION,
              "config": config}
    lines = [json.dumps(header, separators=(",", ":"))]
    lines += [json.dumps(record_to_json(r, vocab), separators=(",", ":"))
              for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_records(path, vocab: Vocabulary) -> tuple[dict, list[GenerationRecord]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise InvalidArgumentError(f"{path}: empty records file")
    header = json.loads(lines[0])
    if header.get("format") != HEADER_FORMAT:
        raise InvalidArgumentError(f"{path}: not a guidedgen records file")
    records = [record_from_json(json.loads(line), vocab)
               for line in lines[1:] if line.strip()]
    return header["config"], records


def read_header(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
    if header.get("format") != HEADER_FORMAT:
        raise InvalidArgumentError(f"{path}: not a guidedgen records file")
    return header["config"]


def canonical_lines(path) -> list[str]:
    """File lines with ``duration_ms`` zeroed, for byte-level replay checks."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        if "duration_ms" in obj:
            obj["duration_ms"] = 0
        out.append(json.dumps(obj, separators=(",", ":")))
    return out
