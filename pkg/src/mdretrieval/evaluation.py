"""Sampled recall@k: per-query candidate pools of one true target plus a
fixed number of distractors drawn from training-side targets, ranked by dot
product."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .corpus import ExamplePair
from .encoder import EmbeddingModel, embed_all


class PoolError(ValueError):
    """Not enough distractors available for the configured pool size."""


@dataclass
class EvalConfig:
    ks: tuple[int, ...] = (1, 10, 20)
    n_distractors: int = 5000
    seed: int = 0

    def __post_init__(self) -> None:
        self.ks = tuple(int(k) for k in self.ks)
        if not self.ks or any(k < 1 for k in self.ks):
            raise ValueError("ks must be a nonempty list of cutoffs >= 1")
        if list(self.ks) != sorted(self.ks):
            raise ValueError("ks must be sorted ascending")
        if self.n_distractors < 1:
            raise ValueError("n_distractors must be >= 1")


@dataclass
class EvalReport:
    lang: str
    model_id: str
    recall: dict[int, float]
    n_queries: int
    pool_size: int

    def to_json_dict(self) -> dict:
        return {
            "lang": self.lang,
            "model_id": self.model_id,
            "pool_size": self.pool_size,
            "n_queries": self.n_queries,
            "recall": {str(k): v for k, v in sorted(self.recall.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"


def load_report(path: str | Path) -> EvalReport:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return EvalReport(
        lang=obj["lang"],
        model_id=obj["model_id"],
        recall={int(k): float(v) for k, v in obj["recall"].items()},
        n_queries=int(obj["n_queries"]),
        pool_size=int(obj["pool_size"]),
    )


@dataclass
class Pool:
    """One query's candidate pool: the truth inserted at a recorded position
    among sampled distractor indices."""

    distractor_indices: np.ndarray
    truth_index: int

    @property
    def size(self) -> int:
        return len(self.distractor_indices) + 1

    def candidates(
        self, truth_feats: Counter, distractor_source: Sequence[Counter]
    ) -> Iterator[Counter]:
        """Candidate feature multisets in pool order."""
        for pos in range(self.size):
            if pos == self.truth_index:
                yield truth_feats
            else:
                j = pos if pos < self.truth_index else pos - 1
                yield distractor_source[self.distractor_indices[j]]


def build_pool(
    truth_feats: Counter,
    distractor_source: Sequence[Counter],
    config: EvalConfig,
    rng: np.random.Generator | None = None,
) -> Pool:
    """Sample ``config.n_distractors`` distractors without replacement and
    insert the truth at a seeded position.

    The truth position is drawn rather than fixed so that exact score ties
    between the truth and a distractor are broken by pool order, not by a
    systematic bias toward the truth.
    """
    del truth_feats  # the truth participates by position only
    n = len(distractor_source)
    if n < config.n_distractors:
        raise PoolError(
            f"need {config.n_distractors} distractors, only {n} available"
        )
    if rng is None:
        rng = np.random.default_rng(config.seed)
    idx = rng.choice(n, size=config.n_distractors, replace=False)
    truth_index = int(rng.integers(config.n_distractors + 1))
    return Pool(distractor_indices=idx, truth_index=truth_index)


def recall_at_k(
    model: EmbeddingModel,
    eval_pairs: Sequence[ExamplePair],
    distractor_source: Sequence[Counter],
    config: EvalConfig,
    model_id: str = "model",
) -> EvalReport:
    """Fraction of queries whose true target ranks within the top k.

    Candidates are ranked by descending dot product with the query embedding;
    ties break by ascending pool index. Each query gets a fresh distractor
    pool from its own child seed, so reports are a pure function of
    (model, eval pairs, distractor source, config).
    """
    if not eval_pairs:
        raise ValueError("eval_pairs must be nonempty")
    langs = {p.lang for p in eval_pairs}
    if len(langs) > 1:
        raise ValueError(f"eval_pairs span multiple languages: {sorted(langs)}")
    lang = next(iter(langs))

    dist_emb = embed_all(list(distractor_source), model, tower="target")
    truth_emb = embed_all([p.target_feats for p in eval_pairs], model, tower="target")
    query_emb = embed_all([p.query_feats for p in eval_pairs], model, tower="query")

    children = np.random.SeedSequence(config.seed).spawn(len(eval_pairs))
    hits = {k: 0 for k in config.ks}
    for i in range(len(eval_pairs)):
        rng = np.random.default_rng(children[i])
        pool = build_pool(eval_pairs[i].target_feats, distractor_source, config, rng)
        q = query_emb[i]
        truth_score = float(truth_emb[i] @ q)
        scores = dist_emb[pool.distractor_indices] @ q
        # distractor at sampled slot j has pool index j if j < truth_index else j+1
        better = int(np.count_nonzero(scores > truth_score))
        tied_before = int(
            np.count_nonzero(
                (scores == truth_score)
                & (np.arange(len(scores)) < pool.truth_index)
            )
        )
        rank = better + tied_before
        for k in config.ks:
            if rank < k:
                hits[k] += 1
    n_q = len(eval_pairs)
    return EvalReport(
        lang=lang,
        model_id=model_id,
        recall={k: hits[k] / n_q for k in config.ks},
        n_queries=n_q,
        pool_size=config.n_distractors + 1,
    )
