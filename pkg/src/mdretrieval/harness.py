"""Experiment recipes: per-language vs combined training matrices, mixture
sweeps, and transitive-transfer runs with censored vocabularies.

Every recipe derives all stage seeds from one root seed, writes its artifacts
under a single output directory, and finishes with a manifest (config digest,
seed, content hashes of inputs and outputs) sufficient to re-run it
bit-identically in deterministic mode. A failing stage aborts with the stage
name and removes partial outputs.
"""

from __future__ import annotations

import hashlib
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .analysis import (
    AnalysisError,
    TransferPoint,
    TransferTable,
    transfer_table,
)
from .corpus import (
    ExamplePair,
    PairKind,
    SectionRecord,
    extract_ic_pairs,
    extract_nsp_pairs,
    read_corpus,
)
from .encoder import (
    EmbeddingModel,
    ModelConfig,
    TrainConfig,
    save_checkpoint,
    train,
)
from .evaluation import EvalConfig, EvalReport, recall_at_k
from .mixture import MixtureSpec, mix, native_ratio
from .synth import PRESETS, SynthSpec, gen_corpus
from .util import canonical_json, derive_seed, sha256_bytes, sha256_file
from .vocabulary import (
    Vocabulary,
    asym_overlap,
    build_vocab,
    censor,
    censor_pairs,
    save_vocab,
)

logger = logging.getLogger(__name__)

SPLIT_FRACTIONS = {"train": 0.90, "dev": 0.05, "eval": 0.05}

# Reference results from the full-scale (Wikipedia-sized) experiments this
# workbench miniaturizes. Desk-scale runs reproduce directions, not values.
FULLSCALE_TRANSITIVE_REFERENCE = {
    "single_pivot_pct_change": {"1": "+3.5%", "10": "+4.6%", "20": "+5.3%"},
    "dual_pivot_pct_change": {"1": "+6.6%", "10": "+7.0%", "20": "+5.3%"},
    "note": "full-scale reference deltas; not reproducible at desk scale",
}
FULLSCALE_MIXTURE_REFERENCE = {
    "native_ratio": 0.02,
    "optimum_ratio_band": [0.10, 0.20],
    "relative_improvement_over_native": 0.17,
    "note": "full-scale reference sweep shape; not reproducible at desk scale",
}


class StageError(RuntimeError):
    """A recipe stage failed; the message names the stage."""

    def __init__(self, stage_name: str, cause: BaseException):
        super().__init__(f"stage '{stage_name}' failed: {cause}")
        self.stage_name = stage_name
        self.cause = cause


class CensorVerificationError(RuntimeError):
    """Censored vocabulary still overlaps the target vocabulary."""


@contextmanager
def _stage(name: str):
    logger.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except BaseException as e:
        raise StageError(name, e) from e


class OutputTracker:
    """Records every artifact a run writes so failures can clean them up."""

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self.paths: list[Path] = []

    def path(self, rel: str) -> Path:
        p = self.out_dir / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        self.paths.append(p)
        return p

    def cleanup(self) -> None:
        for p in reversed(self.paths):
            try:
                p.unlink(missing_ok=True)
            except OSError:
                pass
        # prune now-empty directories bottom up
        dirs = sorted({p.parent for p in self.paths}, key=lambda d: len(d.parts), reverse=True)
        for d in dirs:
            try:
                if d != self.out_dir and d.is_dir() and not any(d.iterdir()):
                    d.rmdir()
            except OSError:
                pass

    def manifest_outputs(self) -> dict[str, str]:
        out = {}
        for p in self.paths:
            if p.exists():
                out[p.relative_to(self.out_dir).as_posix()] = sha256_file(p)
        return dict(sorted(out.items()))


def write_manifest(
    tracker: OutputTracker,
    recipe: str,
    config_dict: dict,
    root_seed: int,
    inputs: dict[str, str],
) -> Path:
    manifest = {
        "recipe": recipe,
        "tool_version": __version__,
        "config": config_dict,
        "config_digest": sha256_bytes(canonical_json(config_dict).encode("utf-8")),
        "root_seed": root_seed,
        "inputs": dict(sorted(inputs.items())),
        "outputs": tracker.manifest_outputs(),
    }
    path = tracker.path("manifest.json")
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Splits and extraction


def split_of(doc_id: str, sec_id: str, split_seed: int) -> str:
    """Deterministic 90/5/5 split; a section never migrates between runs.

    Assigning whole sections (not pairs) keeps the consecutive-sentence pairs
    of one section inside a single split.
    """
    digest = hashlib.sha256(f"{split_seed}|{doc_id}|{sec_id}".encode("utf-8")).digest()
    u = int.from_bytes(digest[:8], "little") / 2**64
    if u < 0.90:
        return "train"
    if u < 0.95:
        return "dev"
    return "eval"


def split_sections(
    sections: Iterable[SectionRecord], split_seed: int
) -> dict[str, list[SectionRecord]]:
    out: dict[str, list[SectionRecord]] = {"train": [], "dev": [], "eval": []}
    for sec in sections:
        out[split_of(sec.doc_id, sec.sec_id, split_seed)].append(sec)
    return out


def extract_pairs(
    sections: Iterable[SectionRecord],
    task: PairKind,
    min_words: int = 4,
    seed: int = 0,
) -> list[ExamplePair]:
    """Extract pairs from many sections; inverse-cloze sampling uses a child
    seed per section so results do not depend on iteration order."""
    pairs: list[ExamplePair] = []
    for sec in sections:
        if task is PairKind.NSP:
            pairs.extend(extract_nsp_pairs(sec, min_words))
        else:
            sec_seed = derive_seed(seed, "ic", sec.lang, sec.doc_id, sec.sec_id)
            pairs.extend(extract_ic_pairs(sec, sec_seed, min_words))
    return pairs


# ---------------------------------------------------------------------------
# Experiment configuration


@dataclass
class TransitiveRoles:
    target: str
    pivots: list[str]
    aux: str

    def validate(self, langs: Sequence[str]) -> None:
        names = [self.target, *self.pivots, self.aux]
        if len(set(names)) != len(names):
            raise ValueError(f"transitive roles must be distinct languages: {names}")
        if not self.pivots:
            raise ValueError("at least one pivot language required")
        unknown = [n for n in names if n not in langs]
        if unknown:
            raise ValueError(f"transitive roles name unknown languages: {unknown}")


@dataclass
class ExperimentConfig:
    out_dir: Path
    task: PairKind = PairKind.NSP
    corpora: dict[str, str] | None = None
    synth: SynthSpec | None = None
    vocab_cap: int | None = 200_000
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    mixture: MixtureSpec | None = None
    transitive: TransitiveRoles | None = None
    censor_directives: list[tuple[str, str]] = field(default_factory=list)
    reference_lang: str | None = None
    seed: int = 0
    seeds: list[int] | None = None
    min_words: int = 4
    analysis_k: int = 1

    def __post_init__(self) -> None:
        self.out_dir = Path(self.out_dir)
        if (self.corpora is None) == (self.synth is None):
            raise ValueError("configure exactly one of corpora paths or a synth spec")
        if self.corpora is not None and len(self.corpora) != len(set(self.corpora)):
            raise ValueError("language codes must be distinct")

    @property
    def languages(self) -> list[str]:
        if self.corpora is not None:
            return list(self.corpora)
        assert self.synth is not None
        return list(self.synth.languages)

    def to_json_dict(self) -> dict:
        d: dict = {
            "task": self.task.value,
            "vocab_cap": self.vocab_cap,
            "model": vars(self.model).copy(),
            "train": vars(self.train).copy(),
            "eval": {
                "ks": list(self.eval.ks),
                "n_distractors": self.eval.n_distractors,
                "seed": self.eval.seed,
            },
            "seed": self.seed,
            "min_words": self.min_words,
            "analysis_k": self.analysis_k,
        }
        if self.corpora is not None:
            d["corpora"] = dict(self.corpora)
        if self.synth is not None:
            d["synth"] = self.synth.to_json_dict()
        if self.mixture is not None:
            d["mixture"] = vars(self.mixture).copy()
        if self.transitive is not None:
            d["transitive"] = {
                "target": self.transitive.target,
                "pivots": list(self.transitive.pivots),
                "aux": self.transitive.aux,
            }
        if self.censor_directives:
            d["censor_directives"] = [list(x) for x in self.censor_directives]
        if self.reference_lang is not None:
            d["reference_lang"] = self.reference_lang
        if self.seeds is not None:
            d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_json_dict(cls, obj: dict, out_dir: str | Path) -> "ExperimentConfig":
        synth = None
        if "synth_preset" in obj:
            preset_name = obj["synth_preset"]
            if preset_name not in PRESETS:
                raise ValueError(
                    f"unknown synth preset {preset_name!r}; known: {sorted(PRESETS)}"
                )
            synth = PRESETS[preset_name]()
        elif "synth" in obj:
            synth = SynthSpec.from_json_dict(obj["synth"])
        mixture = None
        if "mixture" in obj:
            m = obj["mixture"]
            mixture = MixtureSpec(
                target_lang=m["target_lang"],
                ratio=float(m.get("ratio", 0.5)),
                total=int(m["total"]),
                seed=int(m.get("seed", 0)),
            )
        transitive = None
        if "transitive" in obj:
            t = obj["transitive"]
            transitive = TransitiveRoles(
                target=t["target"], pivots=list(t["pivots"]), aux=t["aux"]
            )
        return cls(
            out_dir=Path(out_dir),
            task=PairKind(obj.get("task", "nsp")),
            corpora=dict(obj["corpora"]) if "corpora" in obj else None,
            synth=synth,
            vocab_cap=obj.get("vocab_cap", 200_000),
            model=ModelConfig(**obj.get("model", {})),
            train=TrainConfig(**obj.get("train", {})),
            eval=EvalConfig(
                ks=tuple(obj.get("eval", {}).get("ks", (1, 10, 20))),
                n_distractors=obj.get("eval", {}).get("n_distractors", 5000),
                seed=obj.get("eval", {}).get("seed", 0),
            ),
            mixture=mixture,
            transitive=transitive,
            censor_directives=[tuple(x) for x in obj.get("censor_directives", [])],
            reference_lang=obj.get("reference_lang"),
            seed=int(obj.get("seed", 0)),
            seeds=[int(s) for s in obj["seeds"]] if "seeds" in obj else None,
            min_words=int(obj.get("min_words", 4)),
            analysis_k=int(obj.get("analysis_k", 1)),
        )


def load_experiment_config(path: str | Path, out_dir: str | Path) -> ExperimentConfig:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return ExperimentConfig.from_json_dict(obj, out_dir)


def fig7_experiment_config(out_dir: str | Path, seed: int = 0) -> ExperimentConfig:
    """Canned transitive-transfer experiment on the three-language preset,
    with model and training settings sized for a laptop."""
    return ExperimentConfig(
        out_dir=Path(out_dir),
        synth=PRESETS["fig7"](),
        transitive=TransitiveRoles("tgt", ["pvt"], "aux"),
        model=ModelConfig(dim=32),
        train=TrainConfig(batch_size=128, epochs=12, learning_rate=0.1),
        eval=EvalConfig(ks=(1, 10, 20), n_distractors=500),
        seed=seed,
    )


def matrix_experiment_config(out_dir: str | Path, seed: int = 0) -> ExperimentConfig:
    """Canned per-language vs combined experiment on the six-language preset."""
    return ExperimentConfig(
        out_dir=Path(out_dir),
        synth=PRESETS["matrix6"](),
        model=ModelConfig(dim=32),
        train=TrainConfig(batch_size=128, epochs=3, learning_rate=0.1),
        eval=EvalConfig(ks=(1, 10, 20), n_distractors=500),
        seed=seed,
    )


def sweep_experiment_config(out_dir: str | Path, seed: int = 0, total: int = 20000) -> ExperimentConfig:
    """Canned mixture-ratio sweep over the six-language preset's low-resource
    language, with the total stream length held fixed across ratios."""
    return ExperimentConfig(
        out_dir=Path(out_dir),
        synth=PRESETS["matrix6"](),
        mixture=MixtureSpec(target_lang="lr", ratio=0.15, total=total, seed=0),
        model=ModelConfig(dim=32),
        train=TrainConfig(batch_size=128, epochs=4, learning_rate=0.1),
        eval=EvalConfig(ks=(1, 10, 20), n_distractors=500),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# World building (corpus -> per-language split pairs)


SplitPairs = dict[str, dict[str, list[ExamplePair]]]


def build_language_pairs(
    cfg: ExperimentConfig, world_seed: int
) -> tuple[SplitPairs, dict[str, str]]:
    """Load or generate the corpus, split it, and extract pairs per language.

    Synthetic worlds regenerate from a seed derived from ``world_seed``, so
    multi-seed recipes get independent worlds; file corpora stay fixed and
    only the split assignment varies with the seed.
    """
    inputs: dict[str, str] = {}
    sections_by_lang: dict[str, list[SectionRecord]] = {}
    if cfg.synth is not None:
        spec = replace(cfg.synth, seed=derive_seed(world_seed, "synth"))
        inputs["synth_spec"] = sha256_bytes(canonical_json(spec.to_json_dict()).encode())
        for lang in spec.languages:
            sections_by_lang[lang] = []
        for sec in gen_corpus(spec):
            sections_by_lang[sec.lang].append(sec)
    else:
        assert cfg.corpora is not None
        for lang, path in cfg.corpora.items():
            inputs[str(path)] = sha256_file(path)
            sections_by_lang[lang] = [r for r in read_corpus(path) if r.lang == lang]
            if not sections_by_lang[lang]:
                raise ValueError(f"corpus {path} contains no sections for language {lang}")
    split_seed = derive_seed(world_seed, "split")
    extract_seed = derive_seed(world_seed, "extract")
    pairs: SplitPairs = {}
    for lang, sections in sections_by_lang.items():
        by_split = split_sections(sections, split_seed)
        pairs[lang] = {
            split: extract_pairs(secs, cfg.task, cfg.min_words, extract_seed)
            for split, secs in by_split.items()
        }
    return pairs, inputs


def _pooled(pairs: SplitPairs, langs: Sequence[str], split: str) -> list[ExamplePair]:
    return [p for lang in langs for p in pairs[lang][split]]


def _equalized_train_config(cfg: ExperimentConfig, seed: int, stream_len: int, budget: int) -> TrainConfig:
    """Scale epochs so every compared model sees the same number of examples.

    cfg.train.epochs is interpreted as passes over the largest stream in the
    recipe; smaller streams get proportionally more passes. Without this,
    models trained on short streams take far fewer optimizer steps and the
    comparisons measure step counts instead of data value.
    """
    epochs = max(1, round(budget / max(stream_len, 1)))
    return replace(cfg.train, seed=seed, epochs=epochs)


# ---------------------------------------------------------------------------
# Recipe: per-language vs combined matrix


@dataclass
class TransferReport:
    task: str
    analysis_k: int
    languages: list[str]
    per_language_reports: dict[str, EvalReport]
    combined_reports: dict[str, EvalReport]
    train_shares: dict[str, float]
    overlap_with_reference: dict[str, float]
    reference_lang: str
    table: TransferTable | None
    table_error: str | None

    def to_json_dict(self) -> dict:
        return {
            "task": self.task,
            "analysis_k": self.analysis_k,
            "languages": self.languages,
            "per_language_recall": {
                lang: r.to_json_dict() for lang, r in self.per_language_reports.items()
            },
            "combined_recall": {
                lang: r.to_json_dict() for lang, r in self.combined_reports.items()
            },
            "train_shares": self.train_shares,
            "overlap_with_reference": self.overlap_with_reference,
            "reference_lang": self.reference_lang,
            "transfer_table": self.table.to_json_dict() if self.table else None,
            "transfer_table_error": self.table_error,
        }


def run_per_language_vs_combined(cfg: ExperimentConfig) -> TransferReport:
    """Train one model per language plus one pooled model, evaluate every
    language's held-out split under both, and fit the improvement factors."""
    tracker = OutputTracker(cfg.out_dir)
    try:
        with _stage("load"):
            pairs, inputs = build_language_pairs(cfg, cfg.seed)
            langs = list(pairs)
            if len(langs) < 2:
                raise ValueError(f"need at least 2 languages, got {langs}")

        with _stage("vocab"):
            vocabs = {lang: build_vocab(pairs[lang]["train"]) for lang in langs}
            pooled_train = _pooled(pairs, langs, "train")
            combined_vocab = build_vocab(pooled_train, cap=cfg.vocab_cap)
            for lang in langs:
                save_vocab(vocabs[lang], tracker.path(f"vocabs/{lang}.tsv"))
            save_vocab(combined_vocab, tracker.path("vocabs/combined.tsv"))

        with _stage("train"):
            budget = cfg.train.epochs * len(pooled_train)
            per_models: dict[str, EmbeddingModel] = {}
            for lang in langs:
                tc = _equalized_train_config(
                    cfg, derive_seed(cfg.seed, "train", lang), len(pairs[lang]["train"]), budget
                )
                per_models[lang] = train(pairs[lang]["train"], cfg.model, tc, vocabs[lang])
                save_checkpoint(per_models[lang], tracker.path(f"models/per_language/{lang}.ckpt"))
            tc = replace(cfg.train, seed=derive_seed(cfg.seed, "train", "combined"))
            combined_model = train(pooled_train, cfg.model, tc, combined_vocab)
            save_checkpoint(combined_model, tracker.path("models/combined.ckpt"))

        with _stage("eval"):
            per_reports: dict[str, EvalReport] = {}
            combined_reports: dict[str, EvalReport] = {}
            for lang in langs:
                eval_pairs = pairs[lang]["eval"]
                if not eval_pairs:
                    raise ValueError(
                        f"language {lang} has no held-out eval pairs; corpus too small"
                    )
                source = [p.target_feats for p in pairs[lang]["train"]]
                ecfg = replace(cfg.eval, seed=derive_seed(cfg.seed, "eval", lang))
                per_reports[lang] = recall_at_k(
                    per_models[lang], eval_pairs, source, ecfg,
                    model_id=f"per_language:{lang}",
                )
                combined_reports[lang] = recall_at_k(
                    combined_model, eval_pairs, source, ecfg, model_id="combined"
                )
                tracker.path(f"reports/{lang}.per_language.json").write_text(
                    per_reports[lang].to_json(), encoding="utf-8"
                )
                tracker.path(f"reports/{lang}.combined.json").write_text(
                    combined_reports[lang].to_json(), encoding="utf-8"
                )

        with _stage("analyze"):
            counts = {lang: len(pairs[lang]["train"]) for lang in langs}
            shares = {lang: native_ratio(counts, lang) for lang in langs}
            ref = cfg.reference_lang or sorted(langs, key=lambda l: (-counts[l], l))[0]
            overlaps = {lang: asym_overlap(vocabs[lang], vocabs[ref]) for lang in langs}
            k = cfg.analysis_k
            table: TransferTable | None = None
            table_error: str | None = None
            try:
                points = [
                    TransferPoint(
                        lang=lang,
                        per_language_recall=per_reports[lang].recall[k],
                        combined_recall=combined_reports[lang].recall[k],
                        train_share=shares[lang],
                        difficulty=per_reports[lang].recall[min(cfg.eval.ks)],
                        overlap_with_reference=overlaps[lang],
                    )
                    for lang in langs
                ]
                table = transfer_table(points, k)
            except AnalysisError as e:
                table_error = str(e)
            report = TransferReport(
                task=cfg.task.value,
                analysis_k=k,
                languages=langs,
                per_language_reports=per_reports,
                combined_reports=combined_reports,
                train_shares=shares,
                overlap_with_reference=overlaps,
                reference_lang=ref,
                table=table,
                table_error=table_error,
            )
            tracker.path("transfer_table.json").write_text(
                json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n",
                encoding="utf-8",
            )
            if table is not None:
                tracker.path("transfer_table.tsv").write_text(table.to_tsv(), encoding="utf-8")

        with _stage("manifest"):
            write_manifest(tracker, "run-matrix", cfg.to_json_dict(), cfg.seed, inputs)
        return report
    except BaseException:
        tracker.cleanup()
        raise


# ---------------------------------------------------------------------------
# Recipe: transitive transfer with censored auxiliary vocabulary


@dataclass
class TransitiveReport:
    preset: str
    roles: dict
    seeds: list[int]
    ks: list[int]
    overlap_graph: list[dict]
    per_seed: list[dict]
    mean_recalls: dict[str, dict[int, float]]
    mean_delta: dict[int, float]
    mean_abs_control_delta: dict[int, float]
    mean_control_delta: dict[int, float]

    def to_json_dict(self) -> dict:
        return {
            "preset": self.preset,
            "roles": self.roles,
            "seeds": self.seeds,
            "ks": self.ks,
            "overlap_graph": self.overlap_graph,
            "per_seed": self.per_seed,
            "mean_recalls": {
                combo: {str(k): v for k, v in recalls.items()}
                for combo, recalls in self.mean_recalls.items()
            },
            "mean_delta": {str(k): v for k, v in self.mean_delta.items()},
            "mean_abs_control_delta": {
                str(k): v for k, v in self.mean_abs_control_delta.items()
            },
            "mean_control_delta": {str(k): v for k, v in self.mean_control_delta.items()},
            "fullscale_reference": FULLSCALE_TRANSITIVE_REFERENCE,
        }

    def to_tsv(self) -> str:
        lines = ["k\tmean_baseline\tmean_treatment\tmean_delta\tmean_abs_control_delta"]
        for k in self.ks:
            lines.append(
                f"{k}\t{self.mean_recalls['baseline'][k]:.6f}"
                f"\t{self.mean_recalls['treatment'][k]:.6f}"
                f"\t{self.mean_delta[k]:+.6f}"
                f"\t{self.mean_abs_control_delta[k]:.6f}"
            )
        return "\n".join(lines) + "\n"


COMBO_ORDER = ("baseline", "treatment", "control")


def _overlap_graph(vocabs: dict[str, Vocabulary], langs: Sequence[str]) -> list[dict]:
    edges = []
    for src in langs:
        for dst in langs:
            if src == dst:
                continue
            edges.append(
                {
                    "src": src,
                    "dst": dst,
                    "asym_overlap": asym_overlap(vocabs[src], vocabs[dst]),
                }
            )
    return edges


def run_transitive(
    cfg: ExperimentConfig, preset: str = "custom", seeds: Sequence[int] | None = None
) -> TransitiveReport:
    """Measure whether auxiliary data with zero target overlap still helps.

    Per seed: build vocabularies, censor the auxiliary vocabulary against the
    target, verify the censored overlap is exactly zero (training never starts
    otherwise), then train three models on streams of matched composition:

    * baseline: target + pivots;
    * treatment: target + pivots + censored auxiliary (aux keeps its pivot
      overlap, so influence can flow aux -> pivot -> target);
    * control: target + pivots + auxiliary censored against the pivots as
      well, which removes the pivot link while keeping the same amount of
      auxiliary data in the stream.

    All three are evaluated on the target's held-out split against identical
    distractor pools; treatment-minus-baseline measures transfer with the
    transitive channel open, control-minus-baseline measures the same stream
    change with the channel closed.
    """
    if preset not in ("custom", "fig7_synth"):
        raise ValueError(f"unknown preset {preset!r}")
    if preset == "fig7_synth":
        if cfg.synth is None and cfg.corpora is None:
            cfg = replace(cfg, synth=PRESETS["fig7"]())
        if cfg.transitive is None:
            cfg = replace(cfg, transitive=TransitiveRoles("tgt", ["pvt"], "aux"))
    if cfg.transitive is None:
        raise ValueError("transitive roles (target, pivots, aux) are required")
    roles = cfg.transitive
    roles.validate(cfg.languages)
    directives = cfg.censor_directives or [(roles.aux, roles.target)]
    seed_list = list(seeds) if seeds is not None else (cfg.seeds or [cfg.seed])

    tracker = OutputTracker(cfg.out_dir)
    try:
        role_langs = [roles.target, *roles.pivots, roles.aux]
        per_seed: list[dict] = []
        graph: list[dict] = []
        ks = list(cfg.eval.ks)
        all_inputs: dict[str, str] = {}
        for run_idx, run_seed in enumerate(seed_list):
            with _stage(f"load[seed={run_seed}]"):
                pairs, inputs = build_language_pairs(cfg, run_seed)
                all_inputs.update(inputs)

            with _stage(f"vocab[seed={run_seed}]"):
                vocabs = {lang: build_vocab(pairs[lang]["train"]) for lang in role_langs}
                seed_graph = _overlap_graph(vocabs, role_langs)
                if run_idx == 0:
                    graph = seed_graph

            with _stage(f"censor-verify[seed={run_seed}]"):
                censored = dict(vocabs)
                for aux_lang, target_lang in directives:
                    if aux_lang not in censored or target_lang not in censored:
                        raise ValueError(
                            f"censor directive names unknown languages ({aux_lang}, {target_lang})"
                        )
                    censored[aux_lang] = censor(censored[aux_lang], vocabs[target_lang])
                aux_vocab = censored[roles.aux]
                if len(aux_vocab) > 0:
                    residual = asym_overlap(aux_vocab, vocabs[roles.target])
                    if residual != 0.0:
                        raise CensorVerificationError(
                            f"censored auxiliary vocabulary still overlaps target by {residual}"
                        )
                aux_train = list(censor_pairs(pairs[roles.aux]["train"], aux_vocab))
                if not aux_train:
                    raise ValueError(
                        "censoring removed every auxiliary training pair; nothing to add"
                    )
                # pivot link removed: additionally censor aux against every pivot
                unlinked_vocab = aux_vocab
                for pvt in roles.pivots:
                    unlinked_vocab = censor(unlinked_vocab, vocabs[pvt])
                if len(unlinked_vocab) > 0:
                    for lang in (roles.target, *roles.pivots):
                        residual = asym_overlap(unlinked_vocab, vocabs[lang])
                        if residual != 0.0:
                            raise CensorVerificationError(
                                f"unlinked auxiliary vocabulary still overlaps {lang} by {residual}"
                            )
                aux_unlinked_train = list(
                    censor_pairs(pairs[roles.aux]["train"], unlinked_vocab)
                )
                if not aux_unlinked_train:
                    raise ValueError(
                        "removing the pivot link emptied the auxiliary training pairs"
                    )

            with _stage(f"train-eval[seed={run_seed}]"):
                base_train = _pooled(pairs, [roles.target, *roles.pivots], "train")
                combo_pairs = {
                    "baseline": base_train,
                    "treatment": base_train + aux_train,
                    "control": base_train + aux_unlinked_train,
                }
                eval_pairs = pairs[roles.target]["eval"]
                if not eval_pairs:
                    raise ValueError("target language has no held-out eval pairs")
                source = [p.target_feats for p in pairs[roles.target]["train"]]
                ecfg = replace(cfg.eval, seed=derive_seed(run_seed, "eval"))
                budget = cfg.train.epochs * max(len(s) for s in combo_pairs.values())
                recalls: dict[str, dict[int, float]] = {}
                for combo in COMBO_ORDER:
                    stream = combo_pairs[combo]
                    combo_vocab = build_vocab(stream, cap=cfg.vocab_cap)
                    tc = _equalized_train_config(
                        cfg, derive_seed(run_seed, "train"), len(stream), budget
                    )
                    model = train(stream, cfg.model, tc, combo_vocab)
                    rep = recall_at_k(model, eval_pairs, source, ecfg, model_id=combo)
                    recalls[combo] = rep.recall
                per_seed.append(
                    {
                        "seed": run_seed,
                        "recalls": {
                            combo: {str(k): v for k, v in r.items()}
                            for combo, r in recalls.items()
                        },
                        "delta": {
                            str(k): recalls["treatment"][k] - recalls["baseline"][k]
                            for k in ks
                        },
                        "control_delta": {
                            str(k): recalls["control"][k] - recalls["baseline"][k]
                            for k in ks
                        },
                        "relative_delta": {
                            str(k): (
                                (recalls["treatment"][k] - recalls["baseline"][k])
                                / recalls["baseline"][k]
                                if recalls["baseline"][k] > 0
                                else None
                            )
                            for k in ks
                        },
                        "overlap_graph": seed_graph,
                    }
                )

        with _stage("aggregate"):
            n = len(per_seed)
            mean_recalls = {
                combo: {
                    k: sum(s["recalls"][combo][str(k)] for s in per_seed) / n for k in ks
                }
                for combo in COMBO_ORDER
            }
            mean_delta = {k: sum(s["delta"][str(k)] for s in per_seed) / n for k in ks}
            mean_abs_control = {
                k: sum(abs(s["control_delta"][str(k)]) for s in per_seed) / n for k in ks
            }
            mean_control = {
                k: sum(s["control_delta"][str(k)] for s in per_seed) / n for k in ks
            }
            report = TransitiveReport(
                preset=preset,
                roles={
                    "target": roles.target,
                    "pivots": list(roles.pivots),
                    "aux": roles.aux,
                },
                seeds=seed_list,
                ks=ks,
                overlap_graph=graph,
                per_seed=per_seed,
                mean_recalls=mean_recalls,
                mean_delta=mean_delta,
                mean_abs_control_delta=mean_abs_control,
                mean_control_delta=mean_control,
            )
            tracker.path("transitive_report.json").write_text(
                json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n",
                encoding="utf-8",
            )
            tracker.path("transitive_report.tsv").write_text(report.to_tsv(), encoding="utf-8")

        with _stage("manifest"):
            cfg_dict = cfg.to_json_dict()
            cfg_dict["preset"] = preset
            cfg_dict["seeds"] = seed_list
            write_manifest(tracker, "run-transitive", cfg_dict, cfg.seed, all_inputs)
        return report
    except BaseException:
        tracker.cleanup()
        raise


# ---------------------------------------------------------------------------
# Recipe: mixture-ratio sweep


@dataclass
class SweepReport:
    target_lang: str
    total: int
    ratios: list[float]
    seeds: list[int]
    ks: list[int]
    native_share: float
    rows: list[dict]
    mean_recall: dict[float, dict[int, float]]

    def to_json_dict(self) -> dict:
        return {
            "target_lang": self.target_lang,
            "total": self.total,
            "ratios": self.ratios,
            "seeds": self.seeds,
            "ks": self.ks,
            "native_share": self.native_share,
            "rows": self.rows,
            "mean_recall": {
                str(ratio): {str(k): v for k, v in recalls.items()}
                for ratio, recalls in self.mean_recall.items()
            },
            "fullscale_reference": FULLSCALE_MIXTURE_REFERENCE,
        }

    def to_tsv(self) -> str:
        lines = ["ratio\t" + "\t".join(f"mean_recall@{k}" for k in self.ks)]
        for ratio in self.ratios:
            cells = [f"{self.mean_recall[ratio][k]:.6f}" for k in self.ks]
            lines.append(f"{ratio}\t" + "\t".join(cells))
        return "\n".join(lines) + "\n"


def run_mixture_sweep(
    cfg: ExperimentConfig,
    ratios: Sequence[float],
    seeds: Sequence[int] | None = None,
) -> SweepReport:
    """One training and evaluation per mixture ratio, with the stream length
    and every stage seed held identical across ratios."""
    if not ratios:
        raise ValueError("ratios must be nonempty")
    for r in ratios:
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"ratio {r} outside [0, 1]")
    if cfg.mixture is None:
        raise ValueError("a mixture spec (target_lang, total) is required for sweeps")
    target_lang = cfg.mixture.target_lang
    total = cfg.mixture.total
    seed_list = list(seeds) if seeds is not None else (cfg.seeds or [cfg.seed])

    tracker = OutputTracker(cfg.out_dir)
    try:
        rows: list[dict] = []
        ks = list(cfg.eval.ks)
        all_inputs: dict[str, str] = {}
        native_share = 0.0
        for run_seed in seed_list:
            with _stage(f"load[seed={run_seed}]"):
                pairs, inputs = build_language_pairs(cfg, run_seed)
                all_inputs.update(inputs)
                if target_lang not in pairs:
                    raise ValueError(f"target language {target_lang} not in corpus")
                langs = list(pairs)
                counts = {lang: len(pairs[lang]["train"]) for lang in langs}
                native_share = native_ratio(counts, target_lang)

            with _stage(f"sweep[seed={run_seed}]"):
                target_train = pairs[target_lang]["train"]
                aux_train = _pooled(
                    pairs, [l for l in langs if l != target_lang], "train"
                )
                vocab = build_vocab(_pooled(pairs, langs, "train"), cap=cfg.vocab_cap)
                eval_pairs = pairs[target_lang]["eval"]
                if not eval_pairs:
                    raise ValueError("target language has no held-out eval pairs")
                source = [p.target_feats for p in target_train]
                ecfg = replace(cfg.eval, seed=derive_seed(run_seed, "eval"))
                tc = replace(cfg.train, seed=derive_seed(run_seed, "train"))
                mix_seed = derive_seed(run_seed, "mix")
                for ratio in ratios:
                    spec = MixtureSpec(
                        target_lang=target_lang, ratio=ratio, total=total, seed=mix_seed
                    )
                    stream = mix(target_train, aux_train, spec)
                    model = train(stream, cfg.model, tc, vocab)
                    rep = recall_at_k(
                        model, eval_pairs, source, ecfg, model_id=f"mix:{ratio}"
                    )
                    rows.append(
                        {
                            "seed": run_seed,
                            "ratio": ratio,
                            "recall": {str(k): v for k, v in rep.recall.items()},
                        }
                    )

        with _stage("aggregate"):
            mean_recall = {
                ratio: {
                    k: sum(
                        r["recall"][str(k)] for r in rows if r["ratio"] == ratio
                    )
                    / len(seed_list)
                    for k in ks
                }
                for ratio in ratios
            }
            report = SweepReport(
                target_lang=target_lang,
                total=total,
                ratios=list(ratios),
                seeds=seed_list,
                ks=ks,
                native_share=native_share,
                rows=rows,
                mean_recall=mean_recall,
            )
            tracker.path("sweep_report.json").write_text(
                json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n",
                encoding="utf-8",
            )
            tracker.path("sweep_report.tsv").write_text(report.to_tsv(), encoding="utf-8")

        with _stage("manifest"):
            cfg_dict = cfg.to_json_dict()
            cfg_dict["ratios"] = list(ratios)
            cfg_dict["seeds"] = seed_list
            write_manifest(tracker, "run-sweep", cfg_dict, cfg.seed, all_inputs)
        return report
    except BaseException:
        tracker.cleanup()
        raise
