"""Command-line entry points.

Every subcommand writes its artifacts under --out-dir along with a
<command>.manifest.json (recipe commands write manifest.json); exit code is 0
on success and 1 with a stage-named diagnostic on stderr otherwise.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .corpus import PairKind, read_corpus, read_pairs, write_corpus, write_pairs
from .encoder import ModelConfig, TrainConfig, load_checkpoint, save_checkpoint, train
from .evaluation import EvalConfig, load_report, recall_at_k
from .analysis import AnalysisError, TransferPoint, transfer_table
from .harness import (
    ExperimentConfig,
    OutputTracker,
    extract_pairs,
    load_experiment_config,
    run_mixture_sweep,
    run_per_language_vs_combined,
    run_transitive,
    split_sections,
    write_manifest,
)
from .synth import PRESETS, gen_corpus, gen_lexicons, load_synth_spec
from .util import canonical_json, derive_seed, sha256_bytes, sha256_file
from .vocabulary import (
    build_vocab,
    censor,
    load_vocab,
    overlap_matrix,
    overlap_matrix_tsv,
    save_vocab,
)

log = logging.getLogger("mdretrieval")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", default=".", help="directory for artifacts and manifest")
    p.add_argument("--seed", type=int, default=None, help="root seed override")
    p.add_argument(
        "--deterministic",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="strictly sequential updates with bitwise reproducibility",
    )


def _finish(tracker: OutputTracker, command: str, config: dict, seed: int, inputs: dict) -> None:
    path = tracker.out_dir / f"{command}.manifest.json"
    doc = {
        "recipe": command,
        "config": config,
        "config_digest": sha256_bytes(canonical_json(config).encode("utf-8")),
        "root_seed": seed,
        "inputs": dict(sorted(inputs.items())),
        "outputs": tracker.manifest_outputs(),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _cmd_extract(args: argparse.Namespace) -> int:
    tracker = OutputTracker(args.out_dir)
    task = PairKind(args.task)
    seed = args.seed if args.seed is not None else 0
    inputs = {args.corpus: sha256_file(args.corpus)}
    sections = list(read_corpus(args.corpus))
    if args.split:
        sections = split_sections(sections, derive_seed(seed, "split"))[args.split]
    pairs = extract_pairs(
        sections, task, args.min_words, derive_seed(seed, "extract")
    )
    out = tracker.path(args.name)
    n = write_pairs(pairs, out)
    log.info("wrote %d pairs to %s", n, out)
    _finish(
        tracker,
        "extract",
        {
            "corpus": args.corpus,
            "task": task.value,
            "min_words": args.min_words,
            "split": args.split,
            "seed": seed,
        },
        seed,
        inputs,
    )
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    tracker = OutputTracker(args.out_dir)
    if args.preset:
        spec = PRESETS[args.preset]()
    elif args.spec:
        spec = load_synth_spec(args.spec)
    else:
        print("error: synth needs --preset or --spec", file=sys.stderr)
        return 1
    if args.seed is not None:
        from dataclasses import replace

        spec = replace(spec, seed=args.seed)
    corpus_path = tracker.path("corpus.jsonl")
    n = write_corpus(gen_corpus(spec), corpus_path)
    log.info("wrote %d sections to %s", n, corpus_path)
    if args.lexicons:
        for lang, vocab in gen_lexicons(spec).items():
            save_vocab(vocab, tracker.path(f"lexicons/{lang}.tsv"))
    _finish(tracker, "synth", spec.to_json_dict(), spec.seed, {})
    return 0


def _cmd_build_vocab(args: argparse.Namespace) -> int:
    tracker = OutputTracker(args.out_dir)
    inputs = {p: sha256_file(p) for p in args.pairs}
    all_pairs = (pair for path in args.pairs for pair in read_pairs(path))
    vocab = build_vocab(all_pairs, cap=args.cap)
    out = tracker.path(args.name)
    save_vocab(vocab, out)
    log.info("wrote vocabulary of %d tokens to %s", len(vocab), out)
    _finish(
        tracker,
        "build-vocab",
        {"pairs": list(args.pairs), "cap": args.cap},
        args.seed or 0,
        inputs,
    )
    return 0


def _cmd_overlap(args: argparse.Namespace) -> int:
    tracker = OutputTracker(args.out_dir)
    inputs = {p: sha256_file(p) for p in args.vocabs}
    vocabs = {}
    for path in args.vocabs:
        v = load_vocab(path)
        label = ",".join(sorted(v.langs)) or Path(path).stem
        vocabs[label] = v
    for kind in ("jaccard", "asym"):
        langs, matrix = overlap_matrix(vocabs, kind)
        tracker.path(f"{kind}.tsv").write_text(
            overlap_matrix_tsv(langs, matrix), encoding="utf-8"
        )
    _finish(tracker, "overlap", {"vocabs": list(args.vocabs)}, args.seed or 0, inputs)
    return 0


def _cmd_censor(args: argparse.Namespace) -> int:
    tracker = OutputTracker(args.out_dir)
    inputs = {p: sha256_file(p) for p in (args.vocab, args.target)}
    result = censor(load_vocab(args.vocab), load_vocab(args.target))
    out = tracker.path(args.name)
    save_vocab(result, out)
    log.info("censored vocabulary has %d tokens, wrote %s", len(result), out)
    _finish(
        tracker,
        "censor",
        {"vocab": args.vocab, "target": args.target},
        args.seed or 0,
        inputs,
    )
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    tracker = OutputTracker(args.out_dir)
    inputs = {p: sha256_file(p) for p in (*args.pairs, args.vocab)}
    vocab = load_vocab(args.vocab)
    pairs = [pair for path in args.pairs for pair in read_pairs(path)]
    model_cfg = ModelConfig(dim=args.dim, tower_layers=args.tower_layers, pooling=args.pooling)
    train_cfg = TrainConfig(
        batch_size=args.batch_size,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        optimizer=args.optimizer,
        seed=args.seed if args.seed is not None else 0,
        deterministic=args.deterministic,
    )
    model = train(pairs, model_cfg, train_cfg, vocab)
    out = tracker.path(args.name)
    save_checkpoint(model, out)
    log.info("wrote checkpoint %s (final epoch loss %.4f)", out, model.train_log[-1])
    _finish(
        tracker,
        "train",
        {
            "pairs": list(args.pairs),
            "vocab": args.vocab,
            "model": vars(model_cfg).copy(),
            "train": vars(train_cfg).copy(),
        },
        train_cfg.seed,
        inputs,
    )
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    tracker = OutputTracker(args.out_dir)
    inputs = {
        p: sha256_file(p)
        for p in (args.model, args.vocab, args.eval_pairs, args.distractor_pairs)
    }
    vocab = load_vocab(args.vocab)
    model = load_checkpoint(args.model, vocab)
    eval_pairs = list(read_pairs(args.eval_pairs))
    source = [p.target_feats for p in read_pairs(args.distractor_pairs)]
    cfg = EvalConfig(
        ks=tuple(int(k) for k in args.ks.split(",")),
        n_distractors=args.n_distractors,
        seed=args.seed if args.seed is not None else 0,
    )
    report = recall_at_k(model, eval_pairs, source, cfg, model_id=args.model_id)
    out = tracker.path(args.name)
    out.write_text(report.to_json(), encoding="utf-8")
    log.info("recall: %s", report.recall)
    _finish(
        tracker,
        "eval",
        {
            "model": args.model,
            "vocab": args.vocab,
            "eval_pairs": args.eval_pairs,
            "distractor_pairs": args.distractor_pairs,
            "ks": list(cfg.ks),
            "n_distractors": cfg.n_distractors,
            "seed": cfg.seed,
        },
        cfg.seed,
        inputs,
    )
    return 0


def _read_factors_tsv(path: str) -> dict[str, dict[str, float]]:
    rows: dict[str, dict[str, float]] = {}
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty factors file")
    header = lines[0].split("\t")
    if header[0] != "lang":
        raise ValueError(f"{path}: first column must be 'lang'")
    for line in lines[1:]:
        if not line.strip():
            continue
        cols = line.split("\t")
        rows[cols[0]] = {
            name: float(val) for name, val in zip(header[1:], cols[1:])
        }
    return rows


def _cmd_analyze(args: argparse.Namespace) -> int:
    tracker = OutputTracker(args.out_dir)
    report_paths = sorted(Path(args.reports_dir).glob("*.json"))
    inputs = {str(p): sha256_file(p) for p in report_paths}
    inputs[args.factors] = sha256_file(args.factors)
    per_language, combined = {}, {}
    for path in report_paths:
        rep = load_report(path)
        if rep.model_id.startswith("per_language"):
            per_language[rep.lang] = rep
        elif rep.model_id == "combined":
            combined[rep.lang] = rep
    factors = _read_factors_tsv(args.factors)
    points = []
    for lang in sorted(per_language):
        if lang not in combined or lang not in factors:
            continue
        f = factors[lang]
        points.append(
            TransferPoint(
                lang=lang,
                per_language_recall=per_language[lang].recall[args.k],
                combined_recall=combined[lang].recall[args.k],
                train_share=f["train_share"],
                difficulty=f.get("difficulty", per_language[lang].recall[1]),
                overlap_with_reference=f["overlap"],
            )
        )
    try:
        table = transfer_table(points, args.k, exclude=tuple(args.exclude))
    except AnalysisError as e:
        print(f"error in stage analyze: {e}", file=sys.stderr)
        return 1
    tracker.path("transfer_table.json").write_text(
        json.dumps(table.to_json_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    tracker.path("transfer_table.tsv").write_text(table.to_tsv(), encoding="utf-8")
    _finish(
        tracker,
        "analyze",
        {
            "reports_dir": args.reports_dir,
            "factors": args.factors,
            "k": args.k,
            "exclude": list(args.exclude),
        },
        args.seed or 0,
        inputs,
    )
    return 0


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_experiment_config(args.config, args.out_dir)
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    if args.task is not None:
        from dataclasses import replace

        cfg = replace(cfg, task=PairKind(args.task))
    if not args.deterministic:
        from dataclasses import replace

        cfg = replace(cfg, train=replace(cfg.train, deterministic=False))
    return cfg


def _cmd_run_matrix(args: argparse.Namespace) -> int:
    report = run_per_language_vs_combined(_experiment_config(args))
    for lang in report.languages:
        per = report.per_language_reports[lang].recall
        comb = report.combined_reports[lang].recall
        log.info("%s: per-language %s, combined %s", lang, per, comb)
    return 0


def _cmd_run_transitive(args: argparse.Namespace) -> int:
    cfg = _experiment_config(args)
    report = run_transitive(cfg, preset=args.preset, seeds=cfg.seeds)
    for k in report.ks:
        log.info(
            "k=%d: mean delta %+0.4f, mean |control delta| %.4f",
            k,
            report.mean_delta[k],
            report.mean_abs_control_delta[k],
        )
    return 0


def _cmd_run_sweep(args: argparse.Namespace) -> int:
    cfg = _experiment_config(args)
    ratios = [float(r) for r in args.ratios.split(",")]
    report = run_mixture_sweep(cfg, ratios, seeds=cfg.seeds)
    for ratio in report.ratios:
        log.info("ratio %.3f: mean recall %s", ratio, report.mean_recall[ratio])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdretrieval",
        description="multilingual dual-encoder retrieval experiment workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract featurized pairs from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", choices=["nsp", "ic"], default="nsp")
    p.add_argument("--min-words", type=int, default=4)
    p.add_argument("--split", choices=["train", "dev", "eval"], default=None)
    p.add_argument("--name", default="pairs.jsonl")
    _add_common(p)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--spec", default=None, help="synth spec JSON file")
    p.add_argument("--lexicons", action="store_true", help="also write per-language lexicons")
    _add_common(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("build-vocab", help="build a frequency-capped vocabulary")
    p.add_argument("--pairs", nargs="+", required=True)
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--name", default="vocab.tsv")
    _add_common(p)
    p.set_defaults(func=_cmd_build_vocab)

    p = sub.add_parser("overlap", help="pairwise overlap matrices for vocabularies")
    p.add_argument("--vocabs", nargs="+", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_overlap)

    p = sub.add_parser("censor", help="remove target-overlapping tokens from a vocabulary")
    p.add_argument("--vocab", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--name", default="censored.tsv")
    _add_common(p)
    p.set_defaults(func=_cmd_censor)

    p = sub.add_parser("train", help="train a dual encoder on pair files")
    p.add_argument("--pairs", nargs="+", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--tower-layers", type=int, default=0)
    p.add_argument("--pooling", choices=["mean", "sum"], default="mean")
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--optimizer", choices=["adagrad", "sgd"], default="adagrad")
    p.add_argument("--name", default="model.ckpt")
    _add_common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="sampled recall@k for a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--eval-pairs", required=True)
    p.add_argument("--distractor-pairs", required=True)
    p.add_argument("--ks", default="1,10,20")
    p.add_argument("--n-distractors", type=int, default=5000)
    p.add_argument("--model-id", default="model")
    p.add_argument("--name", default="report.json")
    _add_common(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("analyze", help="transfer table from eval reports + factors TSV")
    p.add_argument("--reports-dir", required=True)
    p.add_argument("--factors", required=True, help="TSV: lang, train_share, difficulty, overlap")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--exclude", nargs="*", default=[])
    _add_common(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("run-matrix", help="per-language vs combined experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--task", choices=["nsp", "ic"], default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_run_matrix)

    p = sub.add_parser("run-transitive", help="censored transitive-transfer experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--preset", choices=["custom", "fig7_synth"], default="custom")
    p.add_argument("--task", choices=["nsp", "ic"], default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_run_transitive)

    p = sub.add_parser("run-sweep", help="mixture-ratio sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--ratios", required=True, help="comma-separated ratios in [0,1]")
    p.add_argument("--task", choices=["nsp", "ic"], default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_run_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except harness.StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # single-artifact commands fail without stage context
        print(f"error in stage {args.command}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
