"""Synthetic corpora and end-to-end experiment runs.

The generator plants motifs into background sequences and guarantees
per-class forbidden motifs are absent: sequences are resampled a
bounded number of times, then repaired by rewriting one position per
surviving occurrence with a symbol that appears in no forbidden motif
(so repairs cannot create new occurrences). A post-generation scan
enforces the guarantee.

An experiment plan runs one or more mining arms over the same corpus,
builds a catalog and feature matrix per arm, trains the requested
classifiers on a split shared by every arm, and writes metrics plus an
arm-versus-arm comparison (accuracy tables, mean relative accuracy
gain, pattern-length histograms) into a run directory.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, UnsatisfiableSpecError
from .features import (
    CAP_MAX,
    CAP_MIN,
    MIN_LENGTH,
    FeatureMatrix,
    featurize,
    select_patterns,
    write_catalog,
    write_matrix,
)
from .learn import DataSplit, ModelSpec, kfold, save_model, split, substream, train
from .metrics import aai, build_report
from .miner import (
    DEFAULT_DECAY,
    DEFAULT_RATIO,
    MODES,
    MiningConfig,
    MiningResult,
    ThresholdSchedule,
    mine,
    write_patterns,
)
from .pattern import Gap, Pattern, occurrences_all
from .seqio import Corpus, EncodedSequence, SymbolTable, read_encoded, write_encoded

IMPLEMENTED_CLASSIFIERS = ("logistic", "knn", "gaussian_nb", "decision_tree", "random_forest")
UNIMPLEMENTED_CLASSIFIERS = ("svm", "mlp", "gbm")

CLASSIFIER_ALIASES = {
    "lr": "logistic",
    "nb": "gaussian_nb",
    "dt": "decision_tree",
    "rf": "random_forest",
}


def canonical_classifier(name: str) -> str:
    name = name.strip().lower()
    name = CLASSIFIER_ALIASES.get(name, name)
    if name not in IMPLEMENTED_CLASSIFIERS + UNIMPLEMENTED_CLASSIFIERS:
        raise DataError(f"unknown classifier {name!r}")
    return name


def normalize_mode(mode: str) -> str:
    mode = mode.strip().lower().replace("-", "_")
    if mode not in MODES:
        raise DataError(f"unknown mining mode {mode!r}")
    return mode


# ---------------------------------------------------------------------------
# Synthetic corpora
# ---------------------------------------------------------------------------


@dataclass
class ClassSpec:
    """One synthetic class: planted motifs (with rates) and forbidden motifs."""

    label: str
    planted: list[tuple[str, float]] = field(default_factory=list)
    forbidden: list[str] = field(default_factory=list)


@dataclass
class SynthSpec:
    """Recipe for a deterministic labeled corpus.

    ``plant_gap``/``forbid_gap`` set the gap window used when verifying
    planted-motif presence and forbidden-motif absence (insertion itself
    is contiguous, which satisfies any window). Planting rates above 1
    mean that many insertions per sequence (fractional part is a
    Bernoulli extra).
    """

    classes: list[ClassSpec]
    sequences_per_class: int
    length_range: tuple[int, int]
    background: dict[str, float]
    seed: int = 0
    plant_gap: int = 2
    forbid_gap: int = 2
    max_retries: int = 3
    repair: bool = True

    def __post_init__(self):
        lo, hi = self.length_range
        if not (0 < lo <= hi):
            raise DataError(f"bad length range [{lo},{hi}]")
        if self.sequences_per_class < 1:
            raise DataError("sequences_per_class must be >= 1")
        labels = [c.label for c in self.classes]
        if len(set(labels)) != len(labels):
            raise DataError("class labels must be unique")
        total = sum(self.background.values())
        if not self.background or abs(total - 1.0) > 1e-9:
            raise DataError("background probabilities must sum to 1")

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthSpec":
        classes = [
            ClassSpec(
                label=c["label"],
                planted=[(m, float(r)) for m, r in c.get("planted", [])],
                forbidden=list(c.get("forbidden", [])),
            )
            for c in raw["classes"]
        ]
        return cls(
            classes=classes,
            sequences_per_class=int(raw["sequences_per_class"]),
            length_range=tuple(raw["length_range"]),
            background=dict(raw["background"]),
            seed=int(raw.get("seed", 0)),
            plant_gap=int(raw.get("plant_gap", 2)),
            forbid_gap=int(raw.get("forbid_gap", 2)),
            max_retries=int(raw.get("max_retries", 3)),
            repair=bool(raw.get("repair", True)),
        )

    def to_dict(self) -> dict:
        return {
            "classes": [
                {"label": c.label, "planted": [[m, r] for m, r in c.planted],
                 "forbidden": list(c.forbidden)}
                for c in self.classes
            ],
            "sequences_per_class": self.sequences_per_class,
            "length_range": list(self.length_range),
            "background": dict(self.background),
            "seed": self.seed,
            "plant_gap": self.plant_gap,
            "forbid_gap": self.forbid_gap,
            "max_retries": self.max_retries,
            "repair": self.repair,
        }


def _motif_codes(motif: str, table: SymbolTable) -> list[int]:
    if not motif:
        raise DataError("empty motif")
    return [table.encode_char(ch) for ch in motif.upper()]


def _find_occurrence(tokens, codes, max_gap) -> bool:
    pat = Pattern(tuple(codes), Gap(0, max_gap))
    return bool(occurrences_all(tokens, pat))


def generate(spec: SynthSpec) -> Corpus:
    """Materialize the corpus described by ``spec``, deterministically."""
    table = SymbolTable.default()
    codes = sorted(table.encode_char(ch) for ch in spec.background)
    probs = np.asarray(
        [spec.background[table.decode(c)] for c in codes], dtype=np.float64
    )
    lo, hi = spec.length_range
    sequences: list[EncodedSequence] = []
    for cls in spec.classes:
        forbidden = [_motif_codes(m, table) for m in cls.forbidden]
        planted = [(_motif_codes(m, table), rate) for m, rate in cls.planted]
        forbidden_symbols = {c for m in forbidden for c in m}
        safe = [c for c in codes if c not in forbidden_symbols]
        for m, _ in planted:
            if len(m) > lo:
                raise DataError(
                    f"class {cls.label!r}: motif longer than the minimum length {lo}"
                )
        for si in range(spec.sequences_per_class):
            rng = substream(spec.seed, "synth", cls.label, si)
            tokens = None
            for _attempt in range(spec.max_retries + 1):
                n = int(rng.integers(lo, hi + 1))
                draw = rng.choice(len(codes), size=n, p=probs)
                cand = [codes[i] for i in draw]
                for motif, rate in planted:
                    copies = int(rate) + (1 if rng.random() < rate - int(rate) else 0)
                    for _ in range(copies):
                        at = int(rng.integers(0, n - len(motif) + 1))
                        cand[at : at + len(motif)] = motif
                if not any(_find_occurrence(cand, m, spec.forbid_gap) for m in forbidden):
                    tokens = cand
                    break
            if tokens is None:
                if not spec.repair:
                    raise UnsatisfiableSpecError(
                        f"class {cls.label!r}: forbidden motifs persist after "
                        f"{spec.max_retries} resamples and repair is disabled"
                    )
                if not safe:
                    raise UnsatisfiableSpecError(
                        f"class {cls.label!r}: forbidden motifs cover the whole "
                        "alphabet; repair cannot terminate"
                    )
                tokens = cand
                for motif in forbidden:
                    pat = Pattern(tuple(motif), Gap(0, spec.forbid_gap))
                    for occ in occurrences_all(tokens, pat):
                        idx = [p - 1 for p in occ]
                        # Occurrences can overlap; skip any broken by an
                        # earlier rewrite before touching the text again.
                        if any(tokens[i] != s for i, s in zip(idx, motif)):
                            continue
                        tokens[idx[len(idx) // 2]] = safe[int(rng.integers(0, len(safe)))]
                for motif in forbidden:
                    if _find_occurrence(tokens, motif, spec.forbid_gap):
                        raise UnsatisfiableSpecError(
                            f"class {cls.label!r}: repair failed to clear a motif"
                        )
            sequences.append(
                EncodedSequence(f"{cls.label}-{si:04d}", cls.label, tokens)
            )
    return Corpus(sequences)


# ---------------------------------------------------------------------------
# Experiment plans
# ---------------------------------------------------------------------------


@dataclass
class MiningArm:
    """One mining configuration to run and compare."""

    name: str
    mode: str
    gap: Gap
    minsup: float
    relative: bool = False
    ratio: float = DEFAULT_RATIO
    decay: tuple[float, ...] = DEFAULT_DECAY
    max_level: int | None = None
    max_patterns: int | None = None

    def __post_init__(self):
        self.mode = normalize_mode(self.mode)
        if self.minsup <= 0:
            raise DataError("minsup must be positive")

    def config_for(self, n_sequences: int) -> MiningConfig:
        base = self.minsup * n_sequences if self.relative else self.minsup
        if self.mode == "gonpm":
            schedule = ThresholdSchedule("single_drop", base, ratio=self.ratio)
        elif self.mode == "gonpm_plus":
            schedule = ThresholdSchedule("decay", base, factors=tuple(self.decay))
        else:
            schedule = ThresholdSchedule("fixed", base)
        return MiningConfig(
            mode=self.mode,
            gap=self.gap,
            schedule=schedule,
            max_level=self.max_level,
            max_patterns=self.max_patterns,
        )

    @classmethod
    def from_dict(cls, raw: dict) -> "MiningArm":
        gap = raw.get("gap", [0, 2])
        return cls(
            name=raw["name"],
            mode=raw["mode"],
            gap=Gap(int(gap[0]), int(gap[1])),
            minsup=float(raw["minsup"]),
            relative=bool(raw.get("relative", False)),
            ratio=float(raw.get("ratio", DEFAULT_RATIO)),
            decay=tuple(raw.get("decay", DEFAULT_DECAY)),
            max_level=raw.get("max_level"),
            max_patterns=raw.get("max_patterns"),
        )

    def summary(self) -> dict:
        out = {
            "name": self.name,
            "mode": self.mode,
            "gap": [self.gap.min_gap, self.gap.max_gap],
            "minsup": self.minsup,
            "relative": self.relative,
            "max_level": self.max_level,
            "max_patterns": self.max_patterns,
        }
        if self.mode == "gonpm":
            out["ratio"] = self.ratio
        if self.mode == "gonpm_plus":
            out["decay"] = list(self.decay)
        return out


@dataclass
class ExperimentPlan:
    """Corpus source, mining arms, feature and evaluation settings."""

    arms: list[MiningArm]
    synth: SynthSpec | None = None
    data: list[str] | None = None
    classifiers: list[str] = field(default_factory=lambda: ["logistic"])
    min_length: int = MIN_LENGTH
    cap_min: int = CAP_MIN
    cap_max: int = CAP_MAX
    allow_undersized: bool = False
    normalize: str | None = None
    train_fraction: float = 0.8
    cv: int | None = None
    seed: int = 42
    aai_pairs: list[tuple[str, str]] | None = None

    def __post_init__(self):
        if not self.arms:
            raise DataError("plan needs at least one mining arm")
        names = [a.name for a in self.arms]
        if len(set(names)) != len(names):
            raise DataError("mining arm names must be unique")
        if (self.synth is None) == (self.data is None):
            raise DataError("plan needs exactly one corpus source (synth or data)")
        self.classifiers = [canonical_classifier(c) for c in self.classifiers]
        if not (0.0 < self.train_fraction < 1.0):
            raise DataError("train fraction must be in (0, 1)")
        if self.aai_pairs is None:
            self.aai_pairs = [
                (a.name, b.name) for a in self.arms for b in self.arms if a is not b
            ]
        else:
            for new, base in self.aai_pairs:
                if new not in names or base not in names:
                    raise DataError(f"aai pair ({new}, {base}) names an unknown arm")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentPlan":
        features = raw.get("features", {})
        return cls(
            arms=[MiningArm.from_dict(a) for a in raw["mining"]],
            synth=SynthSpec.from_dict(raw["synth"]) if "synth" in raw else None,
            data=list(raw["data"]) if "data" in raw else None,
            classifiers=list(raw.get("classifiers", ["logistic"])),
            min_length=int(features.get("min_length", MIN_LENGTH)),
            cap_min=int(features.get("cap_min", CAP_MIN)),
            cap_max=int(features.get("cap_max", CAP_MAX)),
            allow_undersized=bool(features.get("allow_undersized", False)),
            normalize=features.get("normalize"),
            train_fraction=float(raw.get("split", 0.8)),
            cv=raw.get("cv"),
            seed=int(raw.get("seed", 42)),
            aai_pairs=[tuple(p) for p in raw["aai_pairs"]] if "aai_pairs" in raw else None,
        )

    @classmethod
    def from_json_file(cls, path: str) -> "ExperimentPlan":
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: invalid JSON plan: {exc}") from None
        try:
            return cls.from_dict(raw)
        except KeyError as exc:
            raise DataError(f"{path}: plan is missing key {exc}") from None


def split_digest(s: DataSplit) -> str:
    text = (
        "train:" + ",".join(map(str, s.train_rows.tolist()))
        + "|test:" + ",".join(map(str, s.test_rows.tolist()))
    )
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _dump_json(obj, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_snapshot(values: dict, path: str) -> None:
    """Flat key=value snapshot of the effective configuration."""
    with open(path, "w") as fh:
        for key in sorted(values):
            fh.write(f"{key}={values[key]}\n")


class _RunLog:
    def __init__(self, path: str, echo: bool = True):
        self.fh = open(path, "w")
        self.echo = echo

    def line(self, text: str) -> None:
        self.fh.write(text + "\n")
        self.fh.flush()
        if self.echo:
            print(text, file=sys.stderr)

    def close(self) -> None:
        self.fh.close()


def _mined_length_histogram(results: dict[str, MiningResult]) -> dict[str, int]:
    hist: dict[int, int] = {}
    for res in results.values():
        for level in res.levels:
            if len(level):
                hist[level.level] = hist.get(level.level, 0) + len(level)
    return {str(k): v for k, v in sorted(hist.items())}


def _evaluate_arm(
    plan: ExperimentPlan,
    matrix: FeatureMatrix,
    the_split: DataSplit,
    arm_dir: str,
    log: _RunLog,
    arm_name: str,
) -> dict[str, dict]:
    """Train, save, and score every requested classifier for one arm."""
    os.makedirs(os.path.join(arm_dir, "models"), exist_ok=True)
    os.makedirs(os.path.join(arm_dir, "metrics"), exist_ok=True)
    X_test = matrix.values[the_split.test_rows]
    y_test = [matrix.labels[i] for i in the_split.test_rows]
    reports: dict[str, dict] = {}
    for name in plan.classifiers:
        metrics_path = os.path.join(arm_dir, "metrics", f"{name}.json")
        if name in UNIMPLEMENTED_CLASSIFIERS:
            report = {"classifier": name, "status": "not implemented"}
            _dump_json(report, metrics_path)
            reports[name] = report
            log.line(f"[{arm_name}] {name}: not implemented")
            continue
        # support counts sit on very different scales per pattern
        spec = ModelSpec(name, seed=plan.seed, standardize=True)
        model = train(spec, matrix, the_split.train_rows)
        save_model(model, os.path.join(arm_dir, "models", f"{name}.json"))
        proba = model.predict_proba(X_test)
        predicted = model.predict(X_test)
        run_meta = {
            "arm": arm_name,
            "seed": plan.seed,
            "train_fraction": plan.train_fraction,
            "split_digest": split_digest(the_split),
        }
        report = build_report(name, model.classes, y_test, proba, predicted, run=run_meta)
        if plan.cv:
            accs = []
            for fold in kfold(matrix, plan.cv, plan.seed):
                fold_model = train(spec, matrix, fold.train_rows)
                fold_pred = fold_model.predict(matrix.values[fold.test_rows])
                truth = [matrix.labels[i] for i in fold.test_rows]
                accs.append(
                    float(np.mean([t == p for t, p in zip(truth, fold_pred)]))
                )
            report["cv"] = {
                "folds": plan.cv,
                "accuracies": accs,
                "mean": float(np.mean(accs)),
                "std": float(np.std(accs)),
            }
        _dump_json(report, metrics_path)
        reports[name] = report
        log.line(
            f"[{arm_name}] {name}: accuracy={report['accuracy']:.4f} "
            f"f1_weighted={report['f1_weighted']:.4f}"
        )
    return reports


def run_experiment(plan: ExperimentPlan, out_dir: str, threads: int = 1) -> dict:
    """Execute a plan into ``out_dir`` and return the comparison summary.

    Single-arm plans use a flat layout (patterns/, catalog.txt,
    matrix.csv, models/, metrics/); multi-arm plans nest those under
    arms/<name>/. The split is computed once from the labels and shared
    verbatim by every arm.
    """
    os.makedirs(out_dir, exist_ok=True)
    log = _RunLog(os.path.join(out_dir, "log.txt"))
    try:
        if plan.synth is not None:
            corpus = generate(plan.synth)
            log.line(f"generated synthetic corpus: {len(corpus)} sequences")
        else:
            parts = [read_encoded(path) for path in plan.data]
            corpus = Corpus([s for part in parts for s in part.sequences])
            log.line(f"loaded corpus: {len(corpus)} sequences from {len(plan.data)} files")
        write_encoded(corpus, os.path.join(out_dir, "corpus.encoded"))

        by_label = corpus.by_label()
        flat = len(plan.arms) == 1
        arm_summaries = []
        accuracy_table: dict[str, dict[str, float]] = {}

        labels_only = FeatureMatrix(
            ids=[s.id for s in corpus],
            labels=[s.label for s in corpus],
            columns=[],
            values=np.zeros((len(corpus), 0), dtype=np.int64),
        )
        the_split = split(labels_only, 1.0 - plan.train_fraction, plan.seed)
        log.line(
            f"split: {len(the_split.train_rows)} train / {len(the_split.test_rows)} test "
            f"(digest {split_digest(the_split)})"
        )

        for arm in plan.arms:
            arm_dir = out_dir if flat else os.path.join(out_dir, "arms", arm.name)
            os.makedirs(os.path.join(arm_dir, "patterns"), exist_ok=True)
            results: dict[str, MiningResult] = {}
            for label in sorted(by_label):
                seqs = by_label[label]
                config = arm.config_for(len(seqs))
                res = mine([s.tokens for s in seqs], config, threads=threads)
                results[label] = res
                write_patterns(
                    res.all_entries(),
                    os.path.join(arm_dir, "patterns", f"{label}.txt"),
                    label,
                )
                log.line(
                    f"[{arm.name}] mined {label}: "
                    + " ".join(f"L{lv.level}={len(lv)}" for lv in res.levels)
                    + f" ({sum(s['seconds'] for s in res.stats):.2f}s)"
                )
            catalog = select_patterns(
                results,
                min_length=plan.min_length,
                cap_min=plan.cap_min,
                cap_max=plan.cap_max,
                allow_undersized=plan.allow_undersized,
            )
            write_catalog(catalog, os.path.join(arm_dir, "catalog.txt"))
            log.line(f"[{arm.name}] catalog: {len(catalog)} patterns")
            matrix = featurize(corpus, catalog, threads=threads, normalize=plan.normalize)
            write_matrix(matrix, os.path.join(arm_dir, "matrix.csv"))
            reports = _evaluate_arm(plan, matrix, the_split, arm_dir, log, arm.name)
            accuracy_table[arm.name] = {
                name: rep["accuracy"]
                for name, rep in reports.items()
                if "accuracy" in rep
            }
            arm_summaries.append(
                {
                    "arm": arm.summary(),
                    "catalog_size": len(catalog),
                    "catalog_length_histogram": {
                        str(k): v for k, v in catalog.length_histogram().items()
                    },
                    "mined_length_histogram": _mined_length_histogram(results),
                    "split_digest": split_digest(the_split),
                    "metrics": {
                        name: {
                            key: rep[key]
                            for key in (
                                "accuracy", "precision_weighted", "recall_weighted",
                                "f1_weighted", "precision_macro", "recall_macro",
                                "f1_macro", "auc_ovr_macro", "auprc_macro", "status", "cv",
                            )
                            if key in rep
                        }
                        for name, rep in reports.items()
                    },
                }
            )

        aai_blocks = []
        for new_name, base_name in plan.aai_pairs:
            gains = {}
            pairs = []
            for clf in plan.classifiers:
                a = accuracy_table.get(new_name, {}).get(clf)
                b = accuracy_table.get(base_name, {}).get(clf)
                if a is None or b is None or b <= 0:
                    continue
                gains[clf] = (a - b) / b * 100.0
                pairs.append((a, b))
            block = {
                "new": new_name,
                "base": base_name,
                "per_classifier_gain_pct": gains,
            }
            if pairs:
                block["aai"] = aai([p[0] for p in pairs], [p[1] for p in pairs])
            else:
                block["aai"] = None
                block["note"] = "no comparable classifier accuracies"
            aai_blocks.append(block)
        if not aai_blocks:
            aai_blocks = [{"note": "single-arm plan; nothing to compare"}]

        comparison = {
            "seed": plan.seed,
            "classifiers": plan.classifiers,
            "arms": arm_summaries,
            "aai": aai_blocks,
        }
        _dump_json(comparison, os.path.join(out_dir, "comparison.json"))

        snapshot = {
            "seed": plan.seed,
            "threads": threads,
            "train_fraction": plan.train_fraction,
            "cv": plan.cv,
            "classifiers": ",".join(plan.classifiers),
            "min_length": plan.min_length,
            "cap_min": plan.cap_min,
            "cap_max": plan.cap_max,
            "allow_undersized": plan.allow_undersized,
            "normalize": plan.normalize,
            "arms": ",".join(a.name for a in plan.arms),
        }
        for arm in plan.arms:
            for key, value in arm.summary().items():
                snapshot[f"arm.{arm.name}.{key}"] = value
        write_snapshot(snapshot, os.path.join(out_dir, "config.snapshot"))

        try:
            from . import plots

            figure_dir = os.path.join(out_dir, "figures")
            plots.render_comparison(comparison, figure_dir)
            log.line(f"figures written to {figure_dir}")
        except Exception as exc:  # pragma: no cover - plotting must not kill a run
            log.line(f"figure rendering skipped: {exc}")

        return comparison
    finally:
        log.close()
