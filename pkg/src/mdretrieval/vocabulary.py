"""N-gram vocabularies: frequency-capped construction, merging, censoring,
and the overlap statistics (Jaccard and asymmetric) used throughout the
transfer analyses."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .corpus import ExamplePair
from .util import sha256_bytes


class VocabFormatError(ValueError):
    """A vocabulary file violates the expected TSV layout or ordering."""


def _rank_key(item: tuple[str, int]) -> tuple[int, bytes]:
    token, freq = item
    return (-freq, token.encode("utf-8"))


class Vocabulary:
    """Token -> (dense id, frequency) mapping with language provenance.

    Ids are dense 0..n-1, assigned by descending frequency with ties broken
    by ascending token byte order, so any two vocabularies built from the
    same counts are identical.
    """

    __slots__ = ("_tokens", "_freqs", "_index", "langs")

    def __init__(self, ranked: Iterable[tuple[str, int]], langs: Iterable[str] = ()):
        self._tokens: list[str] = []
        self._freqs: list[int] = []
        self._index: dict[str, int] = {}
        for token, freq in ranked:
            if not token or token != token.strip():
                raise ValueError(f"bad token {token!r}: empty or padded with whitespace")
            if "\t" in token or "\n" in token:
                raise ValueError(f"bad token {token!r}: contains tab or newline")
            if freq < 1:
                raise ValueError(f"bad frequency {freq} for token {token!r}")
            if token in self._index:
                raise ValueError(f"duplicate token {token!r}")
            self._index[token] = len(self._tokens)
            self._tokens.append(token)
            self._freqs.append(int(freq))
        self.langs: frozenset[str] = frozenset(langs)

    @classmethod
    def from_counts(
        cls,
        counts: Mapping[str, int],
        langs: Iterable[str] = (),
        cap: int | None = None,
    ) -> "Vocabulary":
        if cap is not None and cap < 1:
            raise ValueError("cap must be >= 1")
        ranked = sorted(counts.items(), key=_rank_key)
        if cap is not None:
            ranked = ranked[:cap]
        return cls(ranked, langs)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return (
            self._tokens == other._tokens
            and self._freqs == other._freqs
            and self.langs == other.langs
        )

    def get(self, token: str) -> int | None:
        return self._index.get(token)

    def id_of(self, token: str) -> int:
        return self._index[token]

    def freq_of(self, token: str) -> int:
        return self._freqs[self._index[token]]

    @property
    def tokens(self) -> list[str]:
        """Tokens in id order."""
        return list(self._tokens)

    def token_set(self):
        return self._index.keys()

    def items(self) -> Iterator[tuple[str, int, int]]:
        """Yield (token, id, freq) in id order."""
        for i, (tok, freq) in enumerate(zip(self._tokens, self._freqs)):
            yield tok, i, freq

    def counts(self) -> dict[str, int]:
        return dict(zip(self._tokens, self._freqs))

    def to_tsv(self) -> str:
        lines = ["token\tid\tfreq\tlangs"]
        langs = ",".join(sorted(self.langs))
        for tok, i, freq in self.items():
            lines.append(f"{tok}\t{i}\t{freq}\t{langs}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        """Content digest of the canonical TSV serialization."""
        return sha256_bytes(self.to_tsv().encode("utf-8"))


def build_vocab(pairs: Iterable[ExamplePair], cap: int | None = None) -> Vocabulary:
    """Count every feature occurrence on both sides of the given pairs and
    keep the top-``cap`` tokens (all of them if cap is None)."""
    counts: Counter = Counter()
    langs: set[str] = set()
    for p in pairs:
        counts.update(p.query_feats)
        counts.update(p.target_feats)
        langs.add(p.lang)
    return Vocabulary.from_counts(counts, langs, cap)


def jaccard(va: Vocabulary, vb: Vocabulary) -> float:
    """Set Jaccard index over token keys; defined as 0 for two empty sets."""
    inter = len(va.token_set() & vb.token_set())
    union = len(va) + len(vb) - inter
    if union == 0:
        return 0.0
    return inter / union


def asym_overlap(source: Vocabulary, target: Vocabulary) -> float:
    """Directed overlap |source ∩ target| / |source|."""
    if len(source) == 0:
        raise ValueError("asymmetric overlap is undefined for an empty source vocabulary")
    inter = len(source.token_set() & target.token_set())
    return inter / len(source)


@dataclass
class OverlapStats:
    jaccard: float
    asym_a_to_b: float
    asym_b_to_a: float
    intersection_size: int
    union_size: int


def overlap_stats(va: Vocabulary, vb: Vocabulary) -> OverlapStats:
    inter = len(va.token_set() & vb.token_set())
    union = len(va) + len(vb) - inter
    return OverlapStats(
        jaccard=inter / union if union else 0.0,
        asym_a_to_b=inter / len(va) if len(va) else 0.0,
        asym_b_to_a=inter / len(vb) if len(vb) else 0.0,
        intersection_size=inter,
        union_size=union,
    )


def censor(aux: Vocabulary, target: Vocabulary) -> Vocabulary:
    """Drop from ``aux`` every token that also appears in ``target``.

    Frequencies are preserved and ids are re-densified by the standard
    ordering, so the result has zero overlap with the target.
    """
    counts = {tok: freq for tok, _, freq in aux.items() if tok not in target}
    return Vocabulary.from_counts(counts, aux.langs)


def merge(vocabs: Iterable[Vocabulary], cap: int | None = None) -> Vocabulary:
    """Union of vocabularies with summed frequencies and pooled provenance."""
    counts: Counter = Counter()
    langs: set[str] = set()
    for v in vocabs:
        counts.update(v.counts())
        langs.update(v.langs)
    return Vocabulary.from_counts(counts, langs, cap)


def censor_pairs(
    pairs: Iterable[ExamplePair], vocab: Vocabulary
) -> Iterator[ExamplePair]:
    """Restrict both feature multisets of each pair to ``vocab``; pairs where
    either side becomes empty are dropped."""
    for p in pairs:
        q = Counter({t: c for t, c in p.query_feats.items() if t in vocab})
        t = Counter({t_: c for t_, c in p.target_feats.items() if t_ in vocab})
        if q and t:
            yield ExamplePair(p.lang, q, t, p.kind)


def save_vocab(vocab: Vocabulary, path: str | Path) -> None:
    Path(path).write_text(vocab.to_tsv(), encoding="utf-8")


def load_vocab(path: str | Path) -> Vocabulary:
    """Load a vocabulary TSV, validating id density and the ranking order."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "token\tid\tfreq\tlangs":
        raise VocabFormatError(f"{path}: missing or wrong header")
    ranked: list[tuple[str, int]] = []
    langs: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise VocabFormatError(f"{path}: line {lineno}: expected 4 columns")
        token, id_str, freq_str, langs_str = cols
        try:
            tok_id, freq = int(id_str), int(freq_str)
        except ValueError as e:
            raise VocabFormatError(f"{path}: line {lineno}: {e}") from e
        if tok_id != len(ranked):
            raise VocabFormatError(
                f"{path}: line {lineno}: id {tok_id} breaks dense ascending order"
            )
        ranked.append((token, freq))
        if langs_str:
            langs.update(langs_str.split(","))
    for prev, cur in zip(ranked, ranked[1:]):
        if _rank_key(prev) > _rank_key(cur):
            raise VocabFormatError(
                f"{path}: rows are not sorted by (freq desc, token byte order)"
            )
    try:
        return Vocabulary(ranked, langs)
    except ValueError as e:
        raise VocabFormatError(f"{path}: {e}") from e


def overlap_matrix(
    vocabs: Mapping[str, Vocabulary], kind: str = "jaccard"
) -> tuple[list[str], list[list[float]]]:
    """Pairwise overlap matrix over the given language -> vocabulary mapping.

    kind "jaccard" gives the symmetric index; kind "asym" gives directed
    row->column overlap |V_row ∩ V_col| / |V_row|.
    """
    if kind not in ("jaccard", "asym"):
        raise ValueError(f"unknown overlap kind {kind!r}")
    langs = list(vocabs)
    matrix = []
    for a in langs:
        row = []
        for b in langs:
            if kind == "jaccard":
                row.append(jaccard(vocabs[a], vocabs[b]))
            else:
                row.append(asym_overlap(vocabs[a], vocabs[b]))
        matrix.append(row)
    return langs, matrix


def overlap_matrix_tsv(langs: list[str], matrix: list[list[float]]) -> str:
    lines = ["\t".join([""] + langs)]
    for lang, row in zip(langs, matrix):
        lines.append("\t".join([lang] + [f"{x:.6f}" for x in row]))
    return "\n".join(lines) + "\n"
