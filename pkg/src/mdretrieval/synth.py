"""Synthetic multilingual corpora with an exactly controlled vocabulary
overlap graph.

Each of C cross-lingual concepts is rendered as one surface token per
language. A concept can be assigned to exactly one language pair, in which
case both languages render it with the same token; block allocation of
concepts to pairs makes every requested pairwise overlap count exact. Every
language also gets its own disjoint filler (noise) lexicon.

Documents are topical: a document draws one topic (a fixed subset of
concepts), narrows it to its own per-document concept subset, and each of its
sentences mixes those concept tokens with noise tokens. Consecutive sentences
therefore share the document's concept subset, which same-topic sentences
from other documents only partially share; that is the structure a
bag-of-n-grams dot product can learn for next-sentence retrieval, and it
keeps the true next sentence distinguishable from topical distractors.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .corpus import SectionRecord
from .util import derive_seed
from .vocabulary import Vocabulary

CONCEPT_FRACTION = 0.8  # per token position: concept vs noise draw

_LANG_RE = re.compile(r"^[a-z]+$")


class SynthSpecError(ValueError):
    """Invalid or unrealizable synthetic corpus specification."""


@dataclass
class SynthSpec:
    languages: list[str]
    concepts: int
    topics: int
    concepts_per_topic: int
    overlap: dict[tuple[str, str], float]
    sentences_per_doc: int
    docs_per_language: dict[str, int]
    sentence_len: int
    noise_vocab: int
    seed: int
    concepts_per_doc: int | None = None
    forms_per_concept: int = 1

    def __post_init__(self) -> None:
        self.overlap = {_pair_key(a, b): f for (a, b), f in self.overlap.items()}
        if self.concepts_per_doc is None:
            self.concepts_per_doc = self.concepts_per_topic
        self.validate()

    def validate(self) -> None:
        if not self.languages:
            raise SynthSpecError("at least one language required")
        if len(set(self.languages)) != len(self.languages):
            raise SynthSpecError("language codes must be distinct")
        for lang in self.languages:
            if not _LANG_RE.match(lang):
                raise SynthSpecError(
                    f"language code {lang!r} must be lowercase ASCII letters "
                    "(keeps generated tokens collision free)"
                )
        for name, value in (
            ("concepts", self.concepts),
            ("topics", self.topics),
            ("concepts_per_topic", self.concepts_per_topic),
            ("sentences_per_doc", self.sentences_per_doc),
            ("sentence_len", self.sentence_len),
            ("noise_vocab", self.noise_vocab),
        ):
            if value < 1:
                raise SynthSpecError(f"{name} must be >= 1, got {value}")
        if self.concepts_per_topic > self.concepts:
            raise SynthSpecError("concepts_per_topic cannot exceed concepts")
        assert self.concepts_per_doc is not None
        if not 1 <= self.concepts_per_doc <= self.concepts_per_topic:
            raise SynthSpecError(
                "concepts_per_doc must be in [1, concepts_per_topic], got "
                f"{self.concepts_per_doc}"
            )
        if self.forms_per_concept not in (1, 2):
            raise SynthSpecError(
                f"forms_per_concept must be 1 or 2, got {self.forms_per_concept}"
            )
        if set(self.docs_per_language) != set(self.languages):
            raise SynthSpecError("docs_per_language must cover exactly the languages")
        for lang, n in self.docs_per_language.items():
            if n < 1:
                raise SynthSpecError(f"docs_per_language[{lang}] must be >= 1")
        known = set(self.languages)
        for (a, b), frac in self.overlap.items():
            if a not in known or b not in known:
                raise SynthSpecError(f"overlap names unknown language pair ({a}, {b})")
            if a == b:
                raise SynthSpecError(f"overlap pair ({a}, {b}) must name two languages")
            if not 0.0 <= frac <= 1.0:
                raise SynthSpecError(f"overlap({a},{b}) must be in [0,1], got {frac}")
        blocks = self.overlap_blocks()
        budget = sum(blocks.values())
        if budget > self.concepts:
            offenders = ", ".join(f"({a},{b})={n}" for (a, b), n in sorted(blocks.items()))
            raise SynthSpecError(
                f"overlap pattern unrealizable: shared blocks {offenders} need "
                f"{budget} concepts but only {self.concepts} exist"
            )

    def overlap_blocks(self) -> dict[tuple[str, str], int]:
        """Exact shared-concept count per pair (round half up)."""
        return {
            pair: int(math.floor(frac * self.concepts + 0.5))
            for pair, frac in self.overlap.items()
            if int(math.floor(frac * self.concepts + 0.5)) > 0
        }

    def to_json_dict(self) -> dict:
        return {
            "languages": self.languages,
            "concepts": self.concepts,
            "topics": self.topics,
            "concepts_per_topic": self.concepts_per_topic,
            "concepts_per_doc": self.concepts_per_doc,
            "forms_per_concept": self.forms_per_concept,
            "overlap": {f"{a},{b}": f for (a, b), f in sorted(self.overlap.items())},
            "sentences_per_doc": self.sentences_per_doc,
            "docs_per_language": self.docs_per_language,
            "sentence_len": self.sentence_len,
            "noise_vocab": self.noise_vocab,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "SynthSpec":
        try:
            overlap = {}
            for key, frac in obj.get("overlap", {}).items():
                a, b = key.split(",")
                overlap[(a, b)] = float(frac)
            return cls(
                languages=list(obj["languages"]),
                concepts=int(obj["concepts"]),
                topics=int(obj["topics"]),
                concepts_per_topic=int(obj["concepts_per_topic"]),
                overlap=overlap,
                sentences_per_doc=int(obj["sentences_per_doc"]),
                docs_per_language={k: int(v) for k, v in obj["docs_per_language"].items()},
                sentence_len=int(obj["sentence_len"]),
                noise_vocab=int(obj["noise_vocab"]),
                seed=int(obj["seed"]),
                concepts_per_doc=(
                    int(obj["concepts_per_doc"]) if "concepts_per_doc" in obj else None
                ),
                forms_per_concept=int(obj.get("forms_per_concept", 1)),
            )
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, SynthSpecError):
                raise
            raise SynthSpecError(f"bad synth spec: {e}") from e


def _pair_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


FORM_TAGS = ("a", "b")


def _concept_tokens(spec: SynthSpec) -> dict[str, list[list[str]]]:
    """Surface tokens per (language, form, concept), with exact block sharing.

    Tokens carry only the concept index, a sharing-group tag (pair index or
    language index), and the form tag, so distinct groups can never collide.
    A shared concept shares all of its forms between the two languages.
    """
    blocks = spec.overlap_blocks()
    pair_list = sorted(blocks)
    assignment: dict[int, tuple[str, str]] = {}
    cursor = 0
    for pair in pair_list:
        n = blocks[pair]
        for c in range(cursor, cursor + n):
            assignment[c] = pair
        cursor += n
    lang_idx = {lang: i for i, lang in enumerate(spec.languages)}
    pair_idx = {pair: i for i, pair in enumerate(pair_list)}
    tokens: dict[str, list[list[str]]] = {}
    for lang in spec.languages:
        forms = []
        for form in range(spec.forms_per_concept):
            tag = FORM_TAGS[form]
            row = []
            for c in range(spec.concepts):
                pair = assignment.get(c)
                if pair is not None and lang in pair:
                    row.append(f"c{c:05d}p{pair_idx[pair]:03d}{tag}")
                else:
                    row.append(f"c{c:05d}s{lang_idx[lang]:03d}{tag}")
            forms.append(row)
        tokens[lang] = forms
    return tokens


def _noise_tokens(spec: SynthSpec, lang: str) -> list[str]:
    return [f"n{lang}{j:05d}" for j in range(spec.noise_vocab)]


def gen_lexicons(spec: SynthSpec) -> dict[str, Vocabulary]:
    """One vocabulary per language: its concept tokens (all forms) plus its
    noise tokens.

    Verifies that the realized pairwise sharing matches the requested blocks
    exactly before returning: a shared concept contributes forms_per_concept
    shared tokens.
    """
    spec.validate()
    concept_tokens = _concept_tokens(spec)
    lexicons = {}
    for lang in spec.languages:
        toks = [t for row in concept_tokens[lang] for t in row]
        toks += _noise_tokens(spec, lang)
        lexicons[lang] = Vocabulary.from_counts({t: 1 for t in toks}, langs={lang})
    blocks = spec.overlap_blocks()
    for i, a in enumerate(spec.languages):
        for b in spec.languages[i + 1 :]:
            shared = len(lexicons[a].token_set() & lexicons[b].token_set())
            want = blocks.get(_pair_key(a, b), 0) * spec.forms_per_concept
            if shared != want:
                raise SynthSpecError(
                    f"internal: realized overlap({a},{b})={shared}, requested {want}"
                )
    return lexicons


def _topic_table(spec: SynthSpec) -> np.ndarray:
    rng = np.random.default_rng(derive_seed(spec.seed, "topics"))
    return np.stack(
        [
            rng.choice(spec.concepts, size=spec.concepts_per_topic, replace=False)
            for _ in range(spec.topics)
        ]
    )


def gen_corpus(spec: SynthSpec) -> Iterator[SectionRecord]:
    """Generate one section per document, deterministically from spec.seed.

    Every document uses its own derived seed, so generation order (or a
    parallel implementation) cannot change the output. Each document draws a
    topic, then a concepts_per_doc subset of that topic's concepts; token
    positions are concept draws with probability CONCEPT_FRACTION and noise
    draws otherwise. With forms_per_concept=2, sentences alternate the
    rendered form by sentence parity, so consecutive sentences express the
    same concepts through disjoint surface tokens and retrieval has to rely
    on learned affinity rather than verbatim overlap.
    """
    spec.validate()
    concept_tokens = _concept_tokens(spec)
    topics = _topic_table(spec)
    assert spec.concepts_per_doc is not None
    m_doc = spec.concepts_per_doc
    s_per_doc, s_len = spec.sentences_per_doc, spec.sentence_len
    for lang in spec.languages:
        form_rows = concept_tokens[lang]
        ntoks = _noise_tokens(spec, lang)
        for i in range(spec.docs_per_language[lang]):
            rng = np.random.default_rng(derive_seed(spec.seed, "doc", lang, i))
            topic_row = topics[int(rng.integers(spec.topics))]
            topic_concepts = rng.choice(topic_row, size=m_doc, replace=False)
            is_concept = rng.random((s_per_doc, s_len)) < CONCEPT_FRACTION
            concept_pick = rng.integers(0, m_doc, size=(s_per_doc, s_len))
            noise_pick = rng.integers(0, spec.noise_vocab, size=(s_per_doc, s_len))
            sentences = []
            for s in range(s_per_doc):
                ctoks = form_rows[s % spec.forms_per_concept]
                words = [
                    ctoks[topic_concepts[concept_pick[s, j]]]
                    if is_concept[s, j]
                    else ntoks[noise_pick[s, j]]
                    for j in range(s_len)
                ]
                sentences.append(" ".join(words))
            yield SectionRecord(
                lang=lang, doc_id=f"{lang}-{i:05d}", sec_id="s0", sentences=sentences
            )


def load_synth_spec(path: str | Path) -> SynthSpec:
    return SynthSpec.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_synth_spec(spec: SynthSpec, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(spec.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def fig7_preset() -> SynthSpec:
    """Three-language transitive-transfer world.

    A small target shares concepts with a per-topic-thin pivot, a large dense
    auxiliary shares concepts with the pivot, and target/auxiliary share
    nothing, so any auxiliary influence on the target must flow through the
    pivot. Two surface forms per concept remove verbatim query/target overlap,
    which is what forces retrieval to rely on learned affinities (the channel
    transitive transfer travels through).
    """
    return SynthSpec(
        languages=["tgt", "pvt", "aux"],
        concepts=780,
        topics=260,
        concepts_per_topic=12,
        concepts_per_doc=5,
        forms_per_concept=2,
        overlap={
            ("pvt", "tgt"): 0.40,
            ("aux", "pvt"): 0.60,
            ("aux", "tgt"): 0.0,
        },
        sentences_per_doc=10,
        docs_per_language={"tgt": 180, "pvt": 200, "aux": 1200},
        sentence_len=12,
        noise_vocab=100,
        seed=20260401,
    )


def matrix_preset() -> SynthSpec:
    """Six-language world with one low-resource language at a ~2% share,
    used for the per-language vs combined training matrix."""
    overlap = {
        # among the five high-resource languages
        ("la", "lb"): 0.04,
        ("la", "lc"): 0.04,
        ("la", "ld"): 0.04,
        ("la", "le"): 0.04,
        ("lb", "lc"): 0.04,
        ("lb", "ld"): 0.04,
        ("lb", "le"): 0.04,
        ("lc", "ld"): 0.04,
        ("lc", "le"): 0.04,
        ("ld", "le"): 0.04,
        # the low-resource language overlaps a sliding amount with each
        ("la", "lr"): 0.10,
        ("lb", "lr"): 0.08,
        ("lc", "lr"): 0.05,
        ("ld", "lr"): 0.03,
        ("le", "lr"): 0.0,
    }
    return SynthSpec(
        languages=["la", "lb", "lc", "ld", "le", "lr"],
        concepts=800,
        topics=240,
        concepts_per_topic=12,
        concepts_per_doc=5,
        forms_per_concept=2,
        overlap=overlap,
        sentences_per_doc=10,
        docs_per_language={
            "la": 800,
            "lb": 800,
            "lc": 800,
            "ld": 800,
            "le": 800,
            "lr": 110,
        },
        sentence_len=12,
        noise_vocab=100,
        seed=20260402,
    )


PRESETS = {
    "fig7": fig7_preset,
    "matrix6": matrix_preset,
}
