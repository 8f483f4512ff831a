"""Sectioned corpora and extraction of featurized sentence-pair examples.

A corpus is a stream of sections (one document section = an ordered list of
sentences). Two kinds of training pairs are extracted:

* next-sentence pairs: every consecutive sentence pair within a section where
  both sentences are long enough;
* inverse-cloze pairs: one randomly chosen sentence per section, paired with
  the concatenation of up to two preceding and two following sentences.

Sentences are represented as bags of unigram and bigram tokens.
"""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np


class CorpusFormatError(ValueError):
    """A corpus file line could not be parsed into a section record."""


class PairKind(str, Enum):
    NSP = "nsp"
    IC = "ic"


@dataclass
class SectionRecord:
    """One document section: language tag plus ordered sentences."""

    lang: str
    doc_id: str
    sec_id: str
    sentences: list[str]

    def __post_init__(self) -> None:
        if not self.lang:
            raise ValueError("lang must be a nonempty language code")
        if any(not isinstance(s, str) or not s for s in self.sentences):
            raise ValueError("sentences must be nonempty strings")


@dataclass
class ExamplePair:
    """A featurized (query, target) example used for training and evaluation."""

    lang: str
    query_feats: Counter
    target_feats: Counter
    kind: PairKind = PairKind.NSP

    def __post_init__(self) -> None:
        if not self.query_feats or not self.target_feats:
            raise ValueError("feature multisets must be nonempty")


def _strip_edge_punct(run: str) -> str:
    start, end = 0, len(run)
    while start < end and unicodedata.category(run[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(run[end - 1]).startswith("P"):
        end -= 1
    return run[start:end]


def tokenize(sentence: str) -> list[str]:
    """Split on whitespace, strip leading/trailing punctuation, casefold.

    Runs that become empty after stripping (pure punctuation) are dropped.
    """
    tokens = []
    for run in sentence.split():
        core = _strip_edge_punct(run)
        if core:
            tokens.append(core.casefold())
    return tokens


def featurize(sentence: str) -> Counter:
    """Bag of unigrams plus adjacent-token bigrams, multiplicities preserved.

    A bigram is rendered as the two unigrams joined by a single space, which
    cannot collide with any unigram (unigrams contain no whitespace).
    """
    toks = tokenize(sentence)
    feats = Counter(toks)
    for a, b in zip(toks, toks[1:]):
        feats[f"{a} {b}"] += 1
    return feats


def word_count(sentence: str) -> int:
    """Raw whitespace token count, before any normalization."""
    return len(sentence.split())


def extract_nsp_pairs(section: SectionRecord, min_words: int = 4) -> list[ExamplePair]:
    """Extract one pair per consecutive sentence pair where both sides have
    at least ``min_words`` raw whitespace tokens."""
    if min_words < 1:
        raise ValueError("min_words must be >= 1")
    sents = section.sentences
    counts = [word_count(s) for s in sents]
    pairs = []
    for i in range(len(sents) - 1):
        if counts[i] < min_words or counts[i + 1] < min_words:
            continue
        q = featurize(sents[i])
        t = featurize(sents[i + 1])
        if not q or not t:
            # all-punctuation sentences featurize to nothing; skip
            continue
        pairs.append(ExamplePair(section.lang, q, t, PairKind.NSP))
    return pairs


def extract_ic_pairs(
    section: SectionRecord, rng_seed: int, min_words: int = 4
) -> list[ExamplePair]:
    """Sample one inverse-cloze pair from a section (zero or one element).

    A query sentence is drawn uniformly among sentences with at least
    ``min_words`` raw tokens; its context is the concatenation of up to two
    preceding and two following sentences, clamped at the section bounds and
    never including the query sentence itself.
    """
    sents = section.sentences
    if len(sents) < 2:
        return []
    eligible = [i for i, s in enumerate(sents) if word_count(s) >= min_words]
    if not eligible:
        return []
    rng = np.random.default_rng(rng_seed)
    i = eligible[int(rng.integers(len(eligible)))]
    window = [sents[j] for j in range(max(0, i - 2), min(len(sents), i + 3)) if j != i]
    if not window:
        return []
    q = featurize(sents[i])
    t = featurize(" ".join(window))
    if not q or not t:
        return []
    return [ExamplePair(section.lang, q, t, PairKind.IC)]


_REQUIRED_FIELDS = ("lang", "doc_id", "sec_id", "sentences")


def read_corpus(path: str | Path) -> Iterator[SectionRecord]:
    """Yield section records from a JSON Lines corpus file, in file order.

    Each line is an object with fields lang, doc_id, sec_id and sentences
    (array of nonempty strings); unknown fields are ignored. A malformed line
    raises CorpusFormatError naming the line number.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(f"{path}: line {lineno}: invalid JSON: {e}") from e
            if not isinstance(obj, dict):
                raise CorpusFormatError(f"{path}: line {lineno}: expected an object")
            missing = [k for k in _REQUIRED_FIELDS if k not in obj]
            if missing:
                raise CorpusFormatError(
                    f"{path}: line {lineno}: missing fields {', '.join(missing)}"
                )
            if not isinstance(obj["sentences"], list):
                raise CorpusFormatError(f"{path}: line {lineno}: sentences must be an array")
            try:
                yield SectionRecord(
                    lang=obj["lang"],
                    doc_id=str(obj["doc_id"]),
                    sec_id=str(obj["sec_id"]),
                    sentences=list(obj["sentences"]),
                )
            except (ValueError, TypeError) as e:
                raise CorpusFormatError(f"{path}: line {lineno}: {e}") from e


def write_corpus(records: Iterable[SectionRecord], path: str | Path) -> int:
    """Write section records as JSON Lines; returns the record count."""
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(
                json.dumps(
                    {
                        "lang": rec.lang,
                        "doc_id": rec.doc_id,
                        "sec_id": rec.sec_id,
                        "sentences": rec.sentences,
                    },
                    ensure_ascii=False,
                )
            )
            f.write("\n")
            n += 1
    return n


def _feats_to_list(feats: Counter) -> list[str]:
    return sorted(feats.elements())


def write_pairs(pairs: Iterable[ExamplePair], path: str | Path) -> int:
    """Write example pairs as JSON Lines; returns the pair count."""
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for p in pairs:
            f.write(
                json.dumps(
                    {
                        "lang": p.lang,
                        "kind": p.kind.value,
                        "query": _feats_to_list(p.query_feats),
                        "target": _feats_to_list(p.target_feats),
                    },
                    ensure_ascii=False,
                )
            )
            f.write("\n")
            n += 1
    return n


def read_pairs(path: str | Path) -> Iterator[ExamplePair]:
    """Yield example pairs from a JSON Lines pairs file."""
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                yield ExamplePair(
                    lang=obj["lang"],
                    query_feats=Counter(obj["query"]),
                    target_feats=Counter(obj["target"]),
                    kind=PairKind(obj["kind"]),
                )
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as e:
                raise CorpusFormatError(f"{path}: line {lineno}: {e}") from e
