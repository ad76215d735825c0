"""Synthetic labeled corpora, corpus file I/O, and the two-part data-split
protocol (generation models trained on part 1, evaluation oracles on a
disjoint part 2)."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import InvalidArgumentError, Vocabulary


@dataclass(frozen=True)
class LabeledCorpus:
    """Documents as token-string tuples with integer class labels."""

    documents: tuple[tuple[str, ...], ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        if len(self.documents) != len(self.labels):
            raise InvalidArgumentError("documents and labels must align")

    def __len__(self) -> int:
        return len(self.documents)

    @property
    def num_classes(self) -> int:
        return max(self.labels) + 1 if self.labels else 0


def synth_corpus(num_classes: int, docs_per_class: int,
                 doc_len_range: tuple[int, int], keyword_skew: float,
                 seed: int, *, common_tokens: int = 20,
                 keywords_per_class: int = 3,
                 keyword_rate: float = 0.3) -> LabeledCorpus:
    """Per-class unigram worlds over a shared vocabulary.

    Each token slot is a keyword slot with probability ``keyword_rate``; a
    keyword slot draws one of the class's own exclusive keywords with
    probability ``keyword_skew`` and one of another class's otherwise, so each
    keyword is markedly more frequent in its own class. Other slots draw
    uniformly from the shared common tokens. Deterministic for a fixed seed.
    """
    if num_classes < 2:
        raise InvalidArgumentError("need at least 2 classes")
    if docs_per_class < 1:
        raise InvalidArgumentError("docs_per_class must be >= 1")
    lo, hi = doc_len_range
    if not 1 <= lo <= hi:
        raise InvalidArgumentError("invalid document length range")
    if not 0.5 < keyword_skew < 1:
        raise InvalidArgumentError("keyword_skew must lie in (0.5, 1)")
    if not 0 < keyword_rate < 1:
        raise InvalidArgumentError("keyword_rate must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    common = [f"w{i:02d}" for i in range(common_tokens)]
    keywords = [[f"k{c}_{j}" for j in range(keywords_per_class)]
                for c in range(num_classes)]
    docs, labels = [], []
    for c in range(num_classes):
        others = [k for cc in range(num_classes) if cc != c for k in keywords[cc]]
        for _ in range(docs_per_class):
            length = int(rng.integers(lo, hi + 1))
            words = []
            for _ in range(length):
                if rng.random() < keyword_rate:
                    if rng.random() < keyword_skew:
                        words.append(keywords[c][int(rng.integers(len(keywords[c])))])
                    else:
                        words.append(others[int(rng.integers(len(others)))])
                else:
                    words.append(common[int(rng.integers(len(common)))])
            docs.append(tuple(words))
            labels.append(c)
    return LabeledCorpus(documents=tuple(docs), labels=tuple(labels))


def corpus_vocabulary(corpus: LabeledCorpus) -> Vocabulary:
    """Vocabulary over the corpus's distinct tokens in sorted order, with the
    special tokens appended last."""
    seen = sorted({t for doc in corpus.documents for t in doc})
    if not seen:
        raise InvalidArgumentError("corpus has no tokens")
    return Vocabulary.from_content(seen)


def encode_corpus(corpus: LabeledCorpus, vocab: Vocabulary,
                  indices: Sequence[int] | None = None
                  ) -> list[tuple[tuple[int, ...], int]]:
    idx = range(len(corpus)) if indices is None else indices
    return [(vocab.encode(corpus.documents[i]), corpus.labels[i]) for i in idx]


@dataclass(frozen=True)
class SplitPlan:
    """Six pairwise-disjoint document-index sets covering the corpus."""

    p1_train: tuple[int, ...]
    p1_val: tuple[int, ...]
    p1_test: tuple[int, ...]
    p2_train: tuple[int, ...]
    p2_val: tuple[int, ...]
    p2_test: tuple[int, ...]

    def all_sets(self) -> tuple[tuple[int, ...], ...]:
        return (self.p1_train, self.p1_val, self.p1_test,
                self.p2_train, self.p2_val, self.p2_test)

    @property
    def part1(self) -> dict[str, tuple[int, ...]]:
        return {"train": self.p1_train, "val": self.p1_val, "test": self.p1_test}

    @property
    def part2(self) -> dict[str, tuple[int, ...]]:
        return {"train": self.p2_train, "val": self.p2_val, "test": self.p2_test}

    def validate(self, corpus_size: int) -> None:
        combined: list[int] = []
        for s in self.all_sets():
            combined.extend(s)
        if len(combined) != len(set(combined)):
            raise InvalidArgumentError("split sets overlap")
        if set(combined) != set(range(corpus_size)):
            raise InvalidArgumentError("split sets must cover the corpus")


def make_split(corpus: LabeledCorpus, seed: int) -> SplitPlan:
    """Shuffle, halve into two parts, then cut each part 80/10/10 into
    train/val/test. Stratified per class so both parts see every class."""
    if len(corpus) < 12:
        raise InvalidArgumentError("corpus too small to split (need >= 12 docs)")
    rng = np.random.default_rng(seed)
    parts: tuple[list[int], list[int]] = ([], [])
    for c in range(corpus.num_classes):
        members = [i for i, lab in enumerate(corpus.labels) if lab == c]
        order = rng.permutation(len(members))
        shuffled = [members[int(j)] for j in order]
        half = len(shuffled) // 2
        parts[0].extend(shuffled[:half])
        parts[1].extend(shuffled[half:])
    sets = []
    for part in parts:
        m = len(part)
        n_val = max(1, m // 10)
        n_test = max(1, m // 10)
        n_train = m - n_val - n_test
        if n_train < 1:
            raise InvalidArgumentError("degenerate corpus: empty train split")
        sets.append(tuple(part[:n_train]))
        sets.append(tuple(part[n_train:n_train + n_val]))
        sets.append(tuple(part[n_train + n_val:]))
    plan = SplitPlan(*sets)
    plan.validate(len(corpus))
    return plan


def write_corpus_tsv(corpus: LabeledCorpus, path) -> None:
    lines = [f"{label}\t{' '.join(doc)}" for doc, label in
             zip(corpus.documents, corpus.labels)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_corpus_tsv(path) -> LabeledCorpus:
    docs, labels = [], []
    text = Path(path).read_text(encoding="utf-8")
    for ln, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if "\t" not in line:
            raise InvalidArgumentError(f"{path}:{ln}: expected 'label<TAB>text'")
        label_str, doc = line.split("\t", 1)
        try:
            label = int(label_str)
        except ValueError:
            raise InvalidArgumentError(f"{path}:{ln}: bad label {label_str!r}") from None
        docs.append(tuple(doc.split()))
        labels.append(label)
    if not docs:
        raise InvalidArgumentError(f"{path}: empty corpus")
    return LabeledCorpus(documents=tuple(docs), labels=tuple(labels))
