"""End-to-end experiment pipeline.

A run loads or generates a corpus, builds features from the train split,
trains the initial one-vs-all binary rankers on original labels, measures
each target's dev-set AP drop between label versions, mines confusion
codes for the noise-prone symptom targets, trains the requested methods,
and evaluates everything on the test split against both label versions.
All stages derive their randomness from the run seed, so identical
configurations produce byte-identical output files.

Output directory layout: manifest.json, confusion_map.json,
reports/<method>.json, reports/<method>.tsv, table.tsv.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .confusion import ConfusionMap, rank_instances, select_confusion_codes
from .corpus import Dataset, Note, SynthConfig, generate_synthetic, label_set, load_corpus
from .errors import EmptyInput, InvalidConfig, NoValidatedLabels
from .evaluation import (
    CodeEval,
    EvalReport,
    build_report,
    fixed_oracle_ap,
    oracle_ap,
    paired_significance,
)
from .features import Vocabulary, build_vocab, featurize_matrix
from .hierarchy import IcdCode, parse_code
from .models import (
    TrainConfig,
    derive_seed,
    fine_tune,
    mlp_predict_batch,
    predict_prob_batch,
    train_many_binary,
    train_mlp_br,
    train_multiclass_lr,
)
from .supervision import (
    mlp_br_labels,
    modified_label_array,
    proposed_score_batch,
    three_class_array,
)

METHOD_NAMES = (
    "vanilla",
    "modified_label",
    "proposed",
    "mlp_br",
    "dev_trained",
    "dev_finetuned",
    "oracle",
    "fixed_oracle",
)

MANIFEST_FORMAT_VERSION = 1


@dataclass(frozen=True)
class FeatureConfig:
    """N-gram featurization settings."""

    ngram_min: int = 1
    ngram_max: int = 2
    min_count: int = 2

    def validate(self) -> None:
        if self.ngram_min < 1 or self.ngram_max < self.ngram_min:
            raise InvalidConfig(f"bad n-gram range ({self.ngram_min}, {self.ngram_max})")
        if self.min_count < 1:
            raise InvalidConfig("min_count must be at least 1")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs. Exactly one corpus source must be set.

    targets picks explicit target codes; otherwise the top_n most frequent
    codes in the train-split original labels become targets. symptom_codes
    marks which codes count as symptoms for a loaded corpus (chapter R is
    assumed when omitted); synthetic runs read the flag from the generator.
    proposed_targets overrides the noise-prone subset (dev delta above
    delta_threshold and symptom flag) that the confusion-aware methods
    train on.
    """

    synth: SynthConfig | None = SynthConfig()
    corpus_path: str | None = None
    top_n: int = 100
    targets: tuple[str, ...] | None = None
    features: FeatureConfig = FeatureConfig()
    train: TrainConfig = TrainConfig()
    k: int = 50
    score_threshold: float = 0.1
    methods: tuple[str, ...] = METHOD_NAMES
    seed: int = 0
    symptom_codes: tuple[str, ...] | None = None
    proposed_targets: tuple[str, ...] | None = None
    delta_threshold: float = 0.2
    oracle_repeats: int = 1000

    def validate(self) -> None:
        if (self.synth is None) == (self.corpus_path is None):
            raise InvalidConfig("exactly one of synth and corpus_path must be set")
        if self.synth is not None:
            self.synth.validate()
        self.features.validate()
        self.train.validate()
        if self.top_n < 1:
            raise InvalidConfig("top_n must be at least 1")
        if self.k < 1:
            raise InvalidConfig("k must be at least 1")
        if self.oracle_repeats < 1:
            raise InvalidConfig("oracle_repeats must be at least 1")
        unknown = [m for m in self.methods if m not in METHOD_NAMES]
        if unknown:
            raise InvalidConfig(f"unknown methods {unknown}; known: {list(METHOD_NAMES)}")
        if not self.methods:
            raise InvalidConfig("methods must not be empty")


_SYNTH_KEYS = (
    "num_codes",
    "num_symptoms",
    "symptom_map",
    "tokens_per_code",
    "vocab_noise_rate",
    "noise_rate",
    "extra_rate",
    "missing_rate",
    "notes_per_split",
)
_FEATURE_KEYS = ("ngram_min", "ngram_max", "min_count")
_TRAIN_KEYS = ("learning_rate", "epochs", "l2_strength", "batch_size", "hidden_size")
_TOP_KEYS = (
    "corpus",
    "top_n",
    "targets",
    "k",
    "score_threshold",
    "methods",
    "seed",
    "symptom_codes",
    "proposed_targets",
    "delta_threshold",
    "oracle_repeats",
)
_ALL_KEYS = frozenset(_SYNTH_KEYS + _FEATURE_KEYS + _TRAIN_KEYS + _TOP_KEYS)


def config_to_dict(config: ExperimentConfig) -> dict:
    """Flat key-value form of a configuration; inverse of config_from_dict."""
    out: dict = {}
    if config.corpus_path is not None:
        out["corpus"] = config.corpus_path
    else:
        synth = config.synth
        out.update(
            num_codes=synth.num_codes,
            num_symptoms=synth.num_symptoms,
            symptom_map=(
                None
                if synth.symptom_map is None
                else {k: sorted(v) for k, v in sorted(synth.symptom_map.items())}
            ),
            tokens_per_code=synth.tokens_per_code,
            vocab_noise_rate=synth.vocab_noise_rate,
            noise_rate=synth.noise_rate,
            extra_rate=synth.extra_rate,
            missing_rate=synth.missing_rate,
            notes_per_split=list(synth.notes_per_split),
        )
    out.update(
        top_n=config.top_n,
        targets=None if config.targets is None else list(config.targets),
        ngram_min=config.features.ngram_min,
        ngram_max=config.features.ngram_max,
        min_count=config.features.min_count,
        learning_rate=config.train.learning_rate,
        epochs=config.train.epochs,
        l2_strength=config.train.l2_strength,
        batch_size=config.train.batch_size,
        hidden_size=config.train.hidden_size,
        k=config.k,
        score_threshold=config.score_threshold,
        methods=list(config.methods),
        seed=config.seed,
        symptom_codes=None if config.symptom_codes is None else list(config.symptom_codes),
        proposed_targets=(
            None if config.proposed_targets is None else list(config.proposed_targets)
        ),
        delta_threshold=config.delta_threshold,
        oracle_repeats=config.oracle_repeats,
    )
    return out


def config_from_dict(raw: Mapping) -> ExperimentConfig:
    """Parse a flat key-value document into an ExperimentConfig."""
    unknown = set(raw) - _ALL_KEYS
    if unknown:
        raise InvalidConfig(f"unknown config keys {sorted(unknown)}")
    corpus = raw.get("corpus")
    if corpus is not None:
        synth = None
    else:
        synth_kwargs: dict = {}
        for key in _SYNTH_KEYS:
            if key in raw and raw[key] is not None:
                synth_kwargs[key] = raw[key]
        if "symptom_map" in synth_kwargs:
            synth_kwargs["symptom_map"] = {
                k: tuple(v) for k, v in synth_kwargs["symptom_map"].items()
            }
        if "notes_per_split" in synth_kwargs:
            counts = synth_kwargs["notes_per_split"]
            if len(counts) != 3:
                raise InvalidConfig("notes_per_split must have three entries")
            synth_kwargs["notes_per_split"] = tuple(int(c) for c in counts)
        synth = SynthConfig(**synth_kwargs)
    features = FeatureConfig(
        **{k: int(raw[k]) for k in _FEATURE_KEYS if k in raw and raw[k] is not None}
    )
    train_kwargs: dict = {}
    for key in _TRAIN_KEYS:
        if key in raw and raw[key] is not None:
            value = raw[key]
            train_kwargs[key] = int(value) if key in ("epochs", "batch_size", "hidden_size") else float(value)
    train = TrainConfig(**train_kwargs)
    config = ExperimentConfig(
        synth=synth,
        corpus_path=corpus,
        top_n=int(raw.get("top_n", 100)),
        targets=None if raw.get("targets") is None else tuple(raw["targets"]),
        features=features,
        train=train,
        k=int(raw.get("k", 50)),
        score_threshold=float(raw.get("score_threshold", 0.1)),
        methods=tuple(raw.get("methods", METHOD_NAMES)),
        seed=int(raw.get("seed", 0)),
        symptom_codes=(
            None if raw.get("symptom_codes") is None else tuple(raw["symptom_codes"])
        ),
        proposed_targets=(
            None if raw.get("proposed_targets") is None else tuple(raw["proposed_targets"])
        ),
        delta_threshold=float(raw.get("delta_threshold", 0.2)),
        oracle_repeats=int(raw.get("oracle_repeats", 1000)),
    )
    config.validate()
    return config


def config_hash(config: ExperimentConfig) -> str:
    blob = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TableRow:
    """One line of the method comparison table."""

    method: str
    n_codes: int
    map_original: float
    map_validated: float
    p_vs_proposed: float | None


@dataclass
class ExperimentResult:
    """Everything a run produced, in memory.

    scores holds each non-oracle method's raw test-set score vector per
    code, in test-note order; oracle methods rank via randomized tie
    shuffles and carry no deterministic score vector.
    """

    reports: dict[str, EvalReport]
    confusion_map: ConfusionMap
    table: list[TableRow]
    manifest: dict
    noisy_targets: list[str] = field(default_factory=list)
    scores: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)


def _top_targets(train_notes: Sequence[Note], top_n: int) -> list[IcdCode]:
    counts: dict[IcdCode, int] = {}
    for note in train_notes:
        for code in note.original:
            counts[code] = counts.get(code, 0) + 1
    if not counts:
        raise EmptyInput("train split contains no original labels")
    ordered = sorted(counts.items(), key=lambda item: (-item[1], item[0].chars))
    return [code for code, _ in ordered[:top_n]]


def _marks(notes: Sequence[Note], targets: Sequence[IcdCode], which: str) -> dict[str, np.ndarray]:
    out = {}
    for target in targets:
        key = target.render()
        if which == "original":
            out[key] = np.array([target in n.original for n in notes], dtype=bool)
        else:
            out[key] = np.array(
                [n.validated is not None and target in n.validated for n in notes], dtype=bool
            )
    return out


def _require_validated(notes: Sequence[Note], split: str) -> None:
    for note in notes:
        if note.validated is None:
            raise NoValidatedLabels(f"{split} note {note.note_id!r} has no validated labels")


def run_experiment(
    config: ExperimentConfig, out_dir: str | Path | None = None, threads: int = 1
) -> ExperimentResult:
    """Execute the full pipeline; write output files when out_dir is given.

    The run seed overrides the seeds inside the generator and trainer
    configurations, so one value reproduces the whole run.
    """
    config.validate()
    if threads < 1:
        raise InvalidConfig("threads must be at least 1")

    if config.corpus_path is not None:
        dataset = load_corpus(config.corpus_path)
    else:
        dataset = generate_synthetic(replace(config.synth, seed=config.seed))
    train_cfg = replace(config.train, seed=config.seed)

    train_notes = dataset.train
    dev_notes = dataset.dev
    test_notes = dataset.test
    if not train_notes:
        raise EmptyInput("corpus has no train notes")
    if not dev_notes or not test_notes:
        raise EmptyInput("corpus needs dev and test notes")
    _require_validated(dev_notes, "dev")
    _require_validated(test_notes, "test")

    if config.targets is not None:
        targets = [parse_code(t) for t in config.targets]
    else:
        targets = _top_targets(train_notes, config.top_n)
    target_keys = [t.render() for t in targets]

    if dataset.provenance.get("kind") == "synthetic":
        symptom_set = label_set(dataset.provenance.get("symptom_codes", []))
        related_by_symptom = {
            sym: label_set(rels)
            for sym, rels in dataset.provenance.get("symptom_map", {}).items()
        }
    else:
        if config.symptom_codes is not None:
            symptom_set = label_set(config.symptom_codes)
        else:
            symptom_set = frozenset(t for t in targets if t.chars[0] == "R")
        related_by_symptom = {}

    vocab = build_vocab(
        train_notes,
        n_range=(config.features.ngram_min, config.features.ngram_max),
        min_count=config.features.min_count,
    )
    X_train = featurize_matrix(train_notes, vocab)
    X_dev = featurize_matrix(dev_notes, vocab)
    X_test = featurize_matrix(test_notes, vocab)

    train_originals = [n.original for n in train_notes]
    y_train = {t.render(): np.array([t in o for o in train_originals], dtype=np.float64) for t in targets}
    dev_orig_marks = _marks(dev_notes, targets, "original")
    dev_val_marks = _marks(dev_notes, targets, "validated")
    test_orig_marks = _marks(test_notes, targets, "original")
    test_val_marks = _marks(test_notes, targets, "validated")

    vanilla_models = train_many_binary(
        X_train, y_train, train_cfg, meta={"label_version": "original"}
    )
    vanilla_dev_scores = {
        key: predict_prob_batch(vanilla_models[key], X_dev) for key in target_keys
    }
    vanilla_test_scores = {
        key: predict_prob_batch(vanilla_models[key], X_test) for key in target_keys
    }

    dev_report = build_report("vanilla_dev", config.seed, vanilla_dev_scores, dev_orig_marks, dev_val_marks)
    dev_delta = {c.code: c.delta for c in dev_report.per_code}

    if config.proposed_targets is not None:
        noisy = [parse_code(t) for t in config.proposed_targets]
    else:
        noisy = [
            t
            for t in targets
            if dev_delta[t.render()] > config.delta_threshold and t in symptom_set
        ]
    noisy_keys = [t.render() for t in noisy]

    dev_ids = [n.note_id for n in dev_notes]
    dev_validated = [n.validated for n in dev_notes]
    selections: dict[IcdCode, list] = {}
    for t in noisy:
        ranked = rank_instances(dev_ids, vanilla_dev_scores[t.render()], dev_validated)
        selections[t] = select_confusion_codes(ranked, t, config.k, config.score_threshold)
    confusion_map = ConfusionMap.build(selections)

    reports: dict[str, EvalReport] = {}
    all_scores: dict[str, dict[str, np.ndarray]] = {}

    def relevant_subset(keys: Sequence[str]) -> tuple[dict, dict]:
        return (
            {k: test_orig_marks[k] for k in keys},
            {k: test_val_marks[k] for k in keys},
        )

    for method in config.methods:
        if method == "vanilla":
            orig, val = relevant_subset(target_keys)
            all_scores[method] = dict(vanilla_test_scores)
            reports[method] = build_report(method, config.seed, dict(vanilla_test_scores), orig, val)
        elif method == "modified_label":
            labels = {
                t.render(): modified_label_array(train_originals, t, confusion_map.codes_for(t))
                for t in noisy
            }
            models = train_many_binary(X_train, labels, train_cfg, meta={"label_version": "modified"})
            scores = {key: predict_prob_batch(models[key], X_test) for key in noisy_keys}
            orig, val = relevant_subset(noisy_keys)
            all_scores[method] = scores
            reports[method] = build_report(method, config.seed, scores, orig, val)
        elif method == "proposed":
            def train_proposed(t: IcdCode) -> tuple[str, np.ndarray]:
                classes = three_class_array(train_originals, t, confusion_map.codes_for(t))
                cfg = replace(train_cfg, seed=derive_seed(train_cfg.seed, t.render()))
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    model = train_multiclass_lr(X_train, classes, cfg, n_classes=3)
                return t.render(), proposed_score_batch(model, X_test)

            scores = dict(_map_targets(train_proposed, noisy, threads))
            orig, val = relevant_subset(noisy_keys)
            all_scores[method] = scores
            reports[method] = build_report(method, config.seed, scores, orig, val)
        elif method == "mlp_br":
            def train_mlp(t: IcdCode) -> tuple[str, np.ndarray]:
                codes = confusion_map.codes_for(t)
                Y = mlp_br_labels(train_originals, t, codes)
                cfg = replace(train_cfg, seed=derive_seed(train_cfg.seed, t.render()))
                model = train_mlp_br(X_train, Y, cfg)
                return t.render(), mlp_predict_batch(model, X_test)[:, 0]

            scores = dict(_map_targets(train_mlp, noisy, threads))
            orig, val = relevant_subset(noisy_keys)
            all_scores[method] = scores
            reports[method] = build_report(method, config.seed, scores, orig, val)
        elif method == "dev_trained":
            labels = {
                t.render(): dev_val_marks[t.render()].astype(np.float64) for t in noisy
            }
            models = train_many_binary(X_dev, labels, train_cfg, meta={"label_version": "validated"})
            scores = {key: predict_prob_batch(models[key], X_test) for key in noisy_keys}
            orig, val = relevant_subset(noisy_keys)
            all_scores[method] = scores
            reports[method] = build_report(method, config.seed, scores, orig, val)
        elif method == "dev_finetuned":
            scores = {}
            for t in noisy:
                key = t.render()
                tuned = fine_tune(
                    vanilla_models[key], X_dev, dev_val_marks[key].astype(np.float64), train_cfg
                )
                scores[key] = predict_prob_batch(tuned, X_test)
            orig, val = relevant_subset(noisy_keys)
            all_scores[method] = scores
            reports[method] = build_report(method, config.seed, scores, orig, val)
        elif method == "oracle":
            reports[method] = _oracle_report(
                method, config, noisy, test_notes, test_orig_marks, test_val_marks, None
            )
        elif method == "fixed_oracle":
            related = {}
            for t in noisy:
                if t.render() in related_by_symptom or t.raw in related_by_symptom:
                    related[t.render()] = related_by_symptom.get(
                        t.render(), related_by_symptom.get(t.raw, frozenset())
                    )
                else:
                    related[t.render()] = frozenset(confusion_map.codes_for(t))
            reports[method] = _oracle_report(
                method, config, noisy, test_notes, test_orig_marks, test_val_marks, related
            )

    table = method_table(reports, seed=config.seed)

    manifest = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "config": config_to_dict(config),
        "config_hash": config_hash(config),
        "seed": config.seed,
        "corpus_provenance": {
            k: v for k, v in dataset.provenance.items() if k != "symptom_map"
        },
        "vocabulary_size": vocab.size,
        "targets": target_keys,
        "noisy_targets": noisy_keys,
        "symptom_codes": sorted(c.render() for c in symptom_set),
        "files": ["confusion_map.json", "table.tsv"]
        + [f"reports/{m}.json" for m in sorted(reports)]
        + [f"reports/{m}.tsv" for m in sorted(reports)],
    }

    result = ExperimentResult(
        reports=reports,
        confusion_map=confusion_map,
        table=table,
        manifest=manifest,
        noisy_targets=noisy_keys,
        scores=all_scores,
    )
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def _map_targets(fn, targets: Sequence[IcdCode], threads: int):
    if threads > 1 and len(targets) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, targets))
    return [fn(t) for t in targets]


def _oracle_report(
    method: str,
    config: ExperimentConfig,
    noisy: Sequence[IcdCode],
    test_notes: Sequence[Note],
    test_orig_marks: Mapping[str, np.ndarray],
    test_val_marks: Mapping[str, np.ndarray],
    related: Mapping[str, frozenset] | None,
) -> EvalReport:
    test_originals = [n.original for n in test_notes]
    per_code = []
    for t in sorted(noisy, key=lambda c: c.chars):
        key = t.render()
        seed = derive_seed(config.seed, f"{method}:{key}")
        if related is None:
            ap_o = oracle_ap(test_originals, test_orig_marks[key], t, config.oracle_repeats, seed)
            ap_v = oracle_ap(test_originals, test_val_marks[key], t, config.oracle_repeats, seed)
        else:
            rel = related.get(key, frozenset())
            ap_o = fixed_oracle_ap(
                test_originals, test_orig_marks[key], t, rel, config.oracle_repeats, seed
            )
            ap_v = fixed_oracle_ap(
                test_originals, test_val_marks[key], t, rel, config.oracle_repeats, seed
            )
        per_code.append(
            CodeEval(
                code=key,
                ap_original=float(ap_o),
                ap_validated=float(ap_v),
                n_relevant_original=int(test_orig_marks[key].sum()),
                n_relevant_validated=int(test_val_marks[key].sum()),
            )
        )
    return EvalReport(method=method, seed=config.seed, per_code=tuple(per_code))


def method_table(
    reports: Mapping[str, EvalReport], seed: int = 0, permutations: int = 100_000
) -> list[TableRow]:
    """Comparison rows over the codes every non-empty report shares.

    MAPs are recomputed on the common code set so methods stay comparable;
    each non-proposed row carries a paired sign-flip p-value against the
    proposed method's validated APs when that method is present.
    """
    non_empty = {m: r for m, r in reports.items() if r.per_code}
    common: set[str] | None = None
    for report in non_empty.values():
        codes = set(report.codes())
        common = codes if common is None else (common & codes)
    common = common or set()
    ordered_codes = sorted(common)

    def restricted(report: EvalReport) -> list[CodeEval]:
        by_code = {c.code: c for c in report.per_code}
        return [by_code[code] for code in ordered_codes]

    proposed_vals: list[float] | None = None
    if "proposed" in non_empty and ordered_codes:
        proposed_vals = [c.ap_validated for c in restricted(non_empty["proposed"])]

    rows = []
    for method in METHOD_NAMES:
        if method not in reports:
            continue
        report = reports[method]
        if method in non_empty and ordered_codes:
            cells = restricted(report)
            map_o = float(np.mean([c.ap_original for c in cells]))
            map_v = float(np.mean([c.ap_validated for c in cells]))
            n_codes = len(cells)
        else:
            map_o = math.nan
            map_v = math.nan
            n_codes = 0
        p_value = None
        if (
            proposed_vals is not None
            and method != "proposed"
            and method in non_empty
            and len(ordered_codes) >= 2
        ):
            method_vals = [c.ap_validated for c in restricted(report)]
            p_value = paired_significance(
                proposed_vals, method_vals, permutations=permutations, seed=seed
            )
        rows.append(
            TableRow(
                method=method,
                n_codes=n_codes,
                map_original=map_o,
                map_validated=map_v,
                p_vs_proposed=p_value,
            )
        )
    return rows


def render_table_tsv(rows: Sequence[TableRow]) -> str:
    """Percent-formatted table mirroring the Original | Validated layout."""
    lines = ["method\tn_codes\tMAP_original\tMAP_validated\tp_vs_proposed"]
    for row in rows:
        map_o = "-" if math.isnan(row.map_original) else f"{100.0 * row.map_original:.1f}"
        map_v = "-" if math.isnan(row.map_validated) else f"{100.0 * row.map_validated:.1f}"
        p = "-" if row.p_vs_proposed is None else f"{row.p_vs_proposed:.3f}"
        lines.append(f"{row.method}\t{row.n_codes}\t{map_o}\t{map_v}\t{p}")
    return "\n".join(lines) + "\n"


def write_outputs(result: ExperimentResult, out_dir: str | Path) -> None:
    """Write manifest, confusion map, per-method reports, and the table."""
    out = Path(out_dir)
    (out / "reports").mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(
        json.dumps(result.manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    result.confusion_map.save(out / "confusion_map.json")
    for method, report in result.reports.items():
        report.save_json(out / "reports" / f"{method}.json")
        report.save_tsv(out / "reports" / f"{method}.tsv")
    (out / "table.tsv").write_text(render_table_tsv(result.table), encoding="utf-8")


def run_from_manifest(
    manifest_path: str | Path, out_dir: str | Path | None = None, threads: int = 1
) -> ExperimentResult:
    """Re-execute a run from its manifest; reproduces all reports."""
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    config = config_from_dict(manifest["config"])
    return run_experiment(config, out_dir=out_dir, threads=threads)
