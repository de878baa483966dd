"""Command-line front end.

Subcommands cover each pipeline stage (generate, analyze, train,
select-confusion, evaluate) plus the composed `run` and the figure
renderer `report`. Every command takes --seed (default 0, never
wall-clock) so repeated invocations produce identical outputs. Exit
status: 0 success, 1 internal error, 2 usage error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import SynthConfig, generate_synthetic, load_corpus, save_corpus
from .confusion import ConfusionMap, rank_instances, select_confusion_codes
from .errors import DataError, InvalidConfig
from .evaluation import load_report
from .experiments import (
    ExperimentConfig,
    config_from_dict,
    method_table,
    render_table_tsv,
    run_experiment,
)
from .features import build_vocab, featurize_matrix
from .hierarchy import parse_code
from .models import predict_prob_batch, save_model, train_many_binary
from .noise_analysis import (
    agreement_rate,
    disagreement_distribution,
    replacement_prefix_breakdown,
)

_SYNTH_CFG_KEYS = frozenset(
    (
        "num_codes",
        "num_symptoms",
        "symptom_map",
        "tokens_per_code",
        "vocab_noise_rate",
        "noise_rate",
        "extra_rate",
        "missing_rate",
        "notes_per_split",
        "seed",
    )
)


def _read_json_config(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise InvalidConfig(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise InvalidConfig(f"config file {path} must hold a JSON object")
    return raw


def _synth_config(path: str | None) -> SynthConfig:
    if path is None:
        return SynthConfig()
    raw = _read_json_config(path)
    unknown = set(raw) - _SYNTH_CFG_KEYS
    if unknown:
        raise InvalidConfig(f"unknown generator config keys {sorted(unknown)}")
    kwargs = {k: v for k, v in raw.items() if v is not None}
    if "symptom_map" in kwargs:
        kwargs["symptom_map"] = {k: tuple(v) for k, v in kwargs["symptom_map"].items()}
    if "notes_per_split" in kwargs:
        kwargs["notes_per_split"] = tuple(int(c) for c in kwargs["notes_per_split"])
    return SynthConfig(**kwargs)


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    raw = _read_json_config(args.config) if args.config else {}
    if getattr(args, "corpus", None):
        raw["corpus"] = args.corpus
    if getattr(args, "targets", None):
        raw["targets"] = [t.strip() for t in args.targets.split(",") if t.strip()]
    if getattr(args, "methods", None):
        raw["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if getattr(args, "k", None) is not None:
        raw["k"] = args.k
    if getattr(args, "threshold", None) is not None:
        raw["score_threshold"] = args.threshold
    raw["seed"] = args.seed
    return config_from_dict(raw)


def _cmd_generate(args: argparse.Namespace) -> int:
    config = _synth_config(args.config)
    dataset = generate_synthetic(replace(config, seed=args.seed))
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_corpus(dataset, out)
    print(f"wrote {len(dataset.notes)} notes to {out}")
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    dataset = load_corpus(args.corpus)
    split = None if args.split == "all" else args.split
    notes = dataset.notes if split is None else dataset.split_notes(split)
    distribution = disagreement_distribution(dataset, split)
    originals = {n.note_id: n.original for n in notes}
    validated = {n.note_id: n.validated for n in notes if n.validated is not None}
    agreement = agreement_rate(originals, validated)
    breakdown = replacement_prefix_breakdown(dataset, split)
    payload = {
        "agreement": agreement,
        "category_ratios": {cat.name.lower(): r for cat, r in distribution.items()},
        "prefix_breakdown": {lvl.name.lower(): r for lvl, r in breakdown.ratios.items()},
        "r_chapter_fraction": breakdown.r_chapter_fraction,
        "replacement_pair_count": breakdown.pair_count,
        "split": args.split,
    }
    text = json.dumps(payload, sort_keys=True, indent=2)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "noise_analysis.json").write_text(text + "\n", encoding="utf-8")
        rows = [("agreement", agreement)]
        rows += [(f"category:{cat.name.lower()}", r) for cat, r in distribution.items()]
        rows += [(f"prefix:{lvl.name.lower()}", r) for lvl, r in breakdown.ratios.items()]
        rows.append(("r_chapter_fraction", breakdown.r_chapter_fraction))
        rows.append(("replacement_pair_count", breakdown.pair_count))
        tsv = "metric\tvalue\n" + "\n".join(f"{name}\t{value:.6f}" for name, value in rows) + "\n"
        (out / "noise_analysis.tsv").write_text(tsv, encoding="utf-8")
        print(f"wrote noise_analysis.json and noise_analysis.tsv to {out}")
    else:
        print(text)
    return 0


def _prepare_training(config: ExperimentConfig):
    """Shared setup for the train and select-confusion stages."""
    if config.corpus_path is None:
        raise InvalidConfig("this command needs --corpus or a config with a corpus entry")
    dataset = load_corpus(config.corpus_path)
    train_cfg = replace(config.train, seed=config.seed)
    vocab = build_vocab(
        dataset.train,
        n_range=(config.features.ngram_min, config.features.ngram_max),
        min_count=config.features.min_count,
    )
    X_train = featurize_matrix(dataset.train, vocab)
    if config.targets is not None:
        targets = [parse_code(t) for t in config.targets]
    else:
        counts: dict = {}
        for note in dataset.train:
            for code in note.original:
                counts[code] = counts.get(code, 0) + 1
        ordered = sorted(counts.items(), key=lambda item: (-item[1], item[0].chars))
        targets = [code for code, _ in ordered[: config.top_n]]
    labels = {
        t.render(): np.array([t in n.original for n in dataset.train], dtype=np.float64)
        for t in targets
    }
    models = train_many_binary(X_train, labels, train_cfg, meta={"label_version": "original"})
    return dataset, vocab, targets, models


def _cmd_train(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    dataset, vocab, targets, models = _prepare_training(config)
    out = Path(args.out)
    (out / "models").mkdir(parents=True, exist_ok=True)
    vocab.save(out / "vocabulary.jsonl")
    for target in targets:
        save_model(models[target.render()], out / "models" / f"{target.chars}.json")
    print(f"trained {len(targets)} binary rankers into {out}")
    return 0


def _cmd_select_confusion(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    dataset, vocab, targets, models = _prepare_training(config)
    dev_notes = dataset.dev
    X_dev = featurize_matrix(dev_notes, vocab)
    dev_ids = [n.note_id for n in dev_notes]
    dev_validated = [n.validated for n in dev_notes]
    selections = {}
    for target in targets:
        probs = predict_prob_batch(models[target.render()], X_dev)
        ranked = rank_instances(dev_ids, probs, dev_validated)
        selections[target] = select_confusion_codes(
            ranked, target, config.k, config.score_threshold
        )
    confusion = ConfusionMap.build(selections)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    confusion.save(out)
    n_nonempty = sum(1 for t in targets if confusion.codes_for(t))
    print(f"wrote confusion map for {len(targets)} targets ({n_nonempty} non-empty) to {out}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    result = run_experiment(config, out_dir=None, threads=args.threads)
    out = Path(args.out)
    (out / "reports").mkdir(parents=True, exist_ok=True)
    for method, report in result.reports.items():
        report.save_json(out / "reports" / f"{method}.json")
        report.save_tsv(out / "reports" / f"{method}.tsv")
    (out / "table.tsv").write_text(render_table_tsv(result.table), encoding="utf-8")
    print(f"wrote {len(result.reports)} reports and table.tsv to {out}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    result = run_experiment(config, out_dir=args.out, threads=args.threads)
    from .report import render_figures

    figures = render_figures(result.reports, result.table, args.out)
    print(f"run complete: {len(result.reports)} reports, {len(figures)} figures under {args.out}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    from .report import render_figures

    out = Path(args.out)
    reports_dir = out / "reports"
    if not reports_dir.is_dir():
        raise InvalidConfig(f"no reports directory under {out}; run `run` or `evaluate` first")
    reports = {}
    for path in sorted(reports_dir.glob("*.json")):
        report = load_report(path)
        reports[report.method] = report
    if not reports:
        raise InvalidConfig(f"no report files under {reports_dir}")
    table = method_table(reports, seed=args.seed)
    figures = render_figures(reports, table, out)
    print(f"rendered {len(figures)} figures under {out / 'figures'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codenoise",
        description="Label-noise analysis and confusion-aware ranking experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
        p.add_argument(
            "--threads",
            type=int,
            default=os.cpu_count() or 1,
            help="worker cap (default: available parallelism)",
        )

    p = sub.add_parser("generate", help="write a synthetic corpus as JSON lines")
    p.add_argument("--config", help="generator config (flat JSON)")
    p.add_argument("--out", required=True, help="output corpus path")
    add_common(p)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("analyze", help="label disagreement statistics for one split")
    p.add_argument("--corpus", required=True, help="corpus JSON-lines path")
    p.add_argument(
        "--split", default="dev", choices=("train", "dev", "test", "all"), help="split to analyze"
    )
    p.add_argument("--out", help="directory for noise_analysis.json and .tsv")
    add_common(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("train", help="train per-code binary rankers on original labels")
    p.add_argument("--corpus", help="corpus JSON-lines path")
    p.add_argument("--config", help="experiment config (flat JSON)")
    p.add_argument("--targets", help="comma-separated target codes")
    p.add_argument("--out", required=True, help="output directory for models and vocabulary")
    add_common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("select-confusion", help="mine confusion codes from dev-set errors")
    p.add_argument("--corpus", help="corpus JSON-lines path")
    p.add_argument("--config", help="experiment config (flat JSON)")
    p.add_argument("--targets", help="comma-separated target codes")
    p.add_argument("--k", type=int, help="ranked instances inspected per target")
    p.add_argument("--threshold", type=float, help="minimum reciprocal-rank score kept")
    p.add_argument("--out", required=True, help="output confusion map JSON path")
    add_common(p)
    p.set_defaults(func=_cmd_select_confusion)

    p = sub.add_parser("evaluate", help="train methods and write per-code reports plus the table")
    p.add_argument("--corpus", help="corpus JSON-lines path")
    p.add_argument("--config", help="experiment config (flat JSON)")
    p.add_argument("--targets", help="comma-separated target codes")
    p.add_argument("--methods", help="comma-separated methods (default: all)")
    p.add_argument("--k", type=int, help="ranked instances inspected per target")
    p.add_argument("--threshold", type=float, help="minimum reciprocal-rank score kept")
    p.add_argument("--out", required=True, help="output directory")
    add_common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline: corpus, training, mining, reports, figures")
    p.add_argument("--corpus", help="corpus JSON-lines path (overrides config)")
    p.add_argument("--config", help="experiment config (flat JSON)")
    p.add_argument("--targets", help="comma-separated target codes")
    p.add_argument("--methods", help="comma-separated methods (default: all)")
    p.add_argument("--k", type=int, help="ranked instances inspected per target")
    p.add_argument("--threshold", type=float, help="minimum reciprocal-rank score kept")
    p.add_argument("--out", required=True, help="output directory")
    add_common(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="render figures for an existing results directory")
    p.add_argument("--out", required=True, help="results directory holding reports/")
    add_common(p)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
