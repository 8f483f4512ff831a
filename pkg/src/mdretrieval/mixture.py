"""Mixing a target-language example stream with pooled auxiliary examples at a
configurable ratio, holding the total stream length fixed."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import ExamplePair


class MixtureError(ValueError):
    """A required mixture source is empty or a spec field is invalid."""


@dataclass
class MixtureSpec:
    target_lang: str
    ratio: float
    total: int
    seed: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.ratio <= 1.0:
            raise MixtureError(f"ratio must be in [0, 1], got {self.ratio}")
        if self.total < 1:
            raise MixtureError(f"total must be >= 1, got {self.total}")


def _quota(ratio: float, total: int) -> int:
    # round half up so the target quota is exact, not just in expectation
    return int(math.floor(ratio * total + 0.5))


def _draw(pool: Sequence[ExamplePair], n: int, rng: np.random.Generator) -> list[int]:
    if n == 0:
        return []
    if len(pool) >= n:
        return list(rng.choice(len(pool), size=n, replace=False))
    return list(rng.integers(0, len(pool), size=n))


def mix(
    target_pairs: Sequence[ExamplePair],
    aux_pairs: Sequence[ExamplePair],
    spec: MixtureSpec,
) -> list[ExamplePair]:
    """Emit exactly ``spec.total`` examples with an exact target quota.

    The target quota is round(ratio * total). Each source is sampled without
    replacement when it is at least as large as its quota, and uniformly with
    replacement otherwise (oversampling small sources is what lets a 2%
    language fill 90% of a stream). The combined quota is then interleaved by
    one seeded uniform shuffle.
    """
    n_target = _quota(spec.ratio, spec.total)
    n_aux = spec.total - n_target
    if n_target > 0 and not target_pairs:
        raise MixtureError(
            f"target source '{spec.target_lang}' is empty but ratio {spec.ratio} needs "
            f"{n_target} examples"
        )
    if n_aux > 0 and not aux_pairs:
        raise MixtureError(
            f"auxiliary source is empty but ratio {spec.ratio} needs {n_aux} examples"
        )
    rng = np.random.default_rng(spec.seed)
    chosen = [target_pairs[i] for i in _draw(target_pairs, n_target, rng)]
    chosen += [aux_pairs[i] for i in _draw(aux_pairs, n_aux, rng)]
    order = rng.permutation(spec.total)
    return [chosen[i] for i in order]


def native_ratio(pair_counts: Mapping[str, int], target_lang: str) -> float:
    """Fraction of all examples that belong to the target language."""
    total = sum(pair_counts.values())
    if total <= 0:
        raise MixtureError("total pair count must be positive")
    return pair_counts.get(target_lang, 0) / total
