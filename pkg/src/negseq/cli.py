"""Command-line interface.

Subcommands cover the full pipeline: ``encode`` and ``fetch`` for data
ingestion, ``mine`` for pattern discovery, ``featurize`` for catalog
and matrix construction, ``train-eval`` for classification, ``synth``
for corpus generation, ``run`` for a whole experiment plan, and
``report`` for cross-run comparison with figures.

Values resolve flag > config file > built-in default. The config file
holds ``key=value`` lines; global keys are ``seed`` and ``threads``,
subcommand keys are written ``<command>.<option>``. Exit codes: 0
success, 1 usage error, 2 data error, 3 internal error. Diagnostics go
to stderr; data only ever goes to files.
"""

from __future__ import annotations

import json
import os
import sys
import traceback

import click
from click.core import ParameterSource

from . import __version__
from .errors import DataError
from .harness import (
    ExperimentPlan,
    SynthSpec,
    UNIMPLEMENTED_CLASSIFIERS,
    canonical_classifier,
    normalize_mode,
    run_experiment,
    write_snapshot,
)
from .learn import ModelSpec, save_model, split, train
from .metrics import build_report
from .miner import (
    DEFAULT_DECAY,
    DEFAULT_RATIO,
    MiningConfig,
    ThresholdSchedule,
    mine,
    read_patterns,
    write_patterns,
)
from .pattern import Gap
from .seqio import (
    SymbolTable,
    encode_records,
    fetch_accessions,
    merge_corpora,
    parse_fasta,
    read_encoded,
    write_encoded,
)
from .features import (
    CAP_MAX,
    CAP_MIN,
    MIN_LENGTH,
    featurize,
    read_matrix,
    select_patterns,
    write_catalog,
    write_matrix,
)


def note(text: str) -> None:
    click.echo(text, err=True)


def _parse_config_file(path: str) -> dict:
    values: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise click.UsageError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def _build_default_map(cfg: dict, group: click.Group) -> dict:
    default_map: dict = {}
    for key, value in cfg.items():
        if key in ("seed", "threads"):
            continue
        if "." not in key:
            raise click.UsageError(f"unknown config key {key!r}")
        cmd_name, opt = key.split(".", 1)
        command = group.commands.get(cmd_name)
        if command is None:
            raise click.UsageError(f"config names unknown command {cmd_name!r}")
        param_names = {p.name for p in command.params}
        opt_norm = opt.replace("-", "_")
        if opt_norm not in param_names:
            raise click.UsageError(f"unknown config key {key!r}")
        param = next(p for p in command.params if p.name == opt_norm)
        parsed = value
        if isinstance(param, click.Option):
            if param.is_flag:
                parsed = value.lower() in ("1", "true", "yes", "on")
            elif param.multiple:
                parsed = tuple(v.strip() for v in value.split(","))
        default_map.setdefault(cmd_name, {})[opt_norm] = parsed
    return default_map


class _Gap(click.ParamType):
    name = "M,N"

    def convert(self, value, param, ctx):
        if isinstance(value, Gap):
            return value
        try:
            lo, hi = (int(x) for x in str(value).split(","))
            return Gap(lo, hi)
        except (ValueError, DataError):
            self.fail(f"gap must be 'M,N' with 0 <= M <= N, got {value!r}", param, ctx)


GAP = _Gap()


@click.group(name="negseq")
@click.version_option(version=__version__, prog_name="negseq")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="key=value config file (flags take precedence).")
@click.option("--seed", type=int, default=42, show_default=True,
              help="Seed for every random choice in the invocation.")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Worker threads for support evaluation.")
@click.pass_context
def cli(ctx, config_path, seed, threads):
    cfg = _parse_config_file(config_path) if config_path else {}
    ctx.default_map = _build_default_map(cfg, cli)
    if ctx.get_parameter_source("seed") == ParameterSource.DEFAULT and "seed" in cfg:
        seed = int(cfg["seed"])
    if ctx.get_parameter_source("threads") == ParameterSource.DEFAULT and "threads" in cfg:
        threads = int(cfg["threads"])
    if threads < 1:
        raise click.UsageError("--threads must be >= 1")
    ctx.obj = {"seed": seed, "threads": threads}


@cli.command()
@click.option("--fasta", "fasta_paths", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False), help="Input FASTA (repeatable).")
@click.option("--label", "labels", multiple=True, required=True,
              help="Class label, one per --fasta (or one for all).")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Encoded corpus output; manifest lands at <out>.manifest.tsv.")
@click.option("--map-u-to-t", is_flag=True, help="Encode U with the same code as T.")
@click.pass_obj
def encode(obj, fasta_paths, labels, out_path, map_u_to_t):
    """Encode FASTA files into the integer corpus format."""
    if len(labels) not in (1, len(fasta_paths)):
        raise click.UsageError("--label count must be 1 or match --fasta count")
    if len(labels) == 1:
        labels = labels * len(fasta_paths)
    table = SymbolTable.default(map_u_to_t=map_u_to_t)
    corpora = []
    for path, label in zip(fasta_paths, labels):
        with open(path) as fh:
            records = parse_fasta(fh.read(), table)
        corpora.append(encode_records(records, label, table))
    corpus = merge_corpora(corpora)
    write_encoded(corpus, out_path)
    note(f"encoded {len(corpus)} sequences into {out_path}")


@cli.command()
@click.option("--accessions", default=None, help="Comma-separated accession list.")
@click.option("--accession-file", type=click.Path(exists=True, dir_okay=False),
              default=None, help="File with one accession per line.")
@click.option("--endpoint", required=True,
              help="URL returning FASTA; '{accession}' placeholder or base URL.")
@click.option("--cache", "cache_dir", required=True, type=click.Path(file_okay=False),
              help="Directory for per-accession FASTA cache.")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Combined FASTA output.")
@click.pass_obj
def fetch(obj, accessions, accession_file, endpoint, cache_dir, out_path):
    """Fetch accessions as FASTA, with an on-disk cache."""
    if (accessions is None) == (accession_file is None):
        raise click.UsageError("need exactly one of --accessions / --accession-file")
    if accessions is not None:
        acc_list = [a.strip() for a in accessions.split(",") if a.strip()]
    else:
        with open(accession_file) as fh:
            acc_list = [line.strip() for line in fh if line.strip()]
    if not acc_list:
        raise click.UsageError("no accessions given")
    records, failures = fetch_accessions(acc_list, endpoint, cache_dir)
    with open(out_path, "w") as fh:
        for rec in records:
            desc = f" {rec.description}" if rec.description else ""
            fh.write(f">{rec.id}{desc}\n")
            for i in range(0, len(rec.residues), 70):
                fh.write(rec.residues[i : i + 70] + "\n")
    for acc, why in failures.items():
        note(f"warning: {acc} failed: {why}")
    note(f"wrote {len(records)} records to {out_path} "
         f"({len(failures)} accession(s) failed)")


def _mining_config(mode, minsup, relative, gap, ratio, decay, max_level,
                   max_patterns, n_sequences) -> MiningConfig:
    mode = normalize_mode(mode)
    if ratio is not None and mode != "gonpm":
        raise click.UsageError("--ratio is only valid with --mode gonpm")
    if decay is not None and mode != "gonpm_plus":
        raise click.UsageError("--decay is only valid with --mode gonpm-plus")
    if minsup <= 0:
        raise click.UsageError("--minsup must be positive")
    base = minsup * n_sequences if relative else minsup
    if mode == "gonpm":
        schedule = ThresholdSchedule("single_drop", base, ratio=ratio or DEFAULT_RATIO)
    elif mode == "gonpm_plus":
        factors = tuple(float(f) for f in decay) if decay else DEFAULT_DECAY
        schedule = ThresholdSchedule("decay", base, factors=factors)
    else:
        schedule = ThresholdSchedule("fixed", base)
    return MiningConfig(mode=mode, gap=gap, schedule=schedule,
                        max_level=max_level, max_patterns=max_patterns)


@cli.command("mine")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Encoded corpus (manifest expected alongside).")
@click.option("--mode", required=True,
              type=click.Choice(["onp-miner", "gonpm", "gonpm-plus", "positive-only"]),
              help="Threshold schedule and whether absent symbols are mined.")
@click.option("--minsup", type=float, required=True,
              help="Support threshold (absolute, or per sequence with --relative).")
@click.option("--relative", is_flag=True,
              help="Interpret --minsup per sequence; multiplied by corpus size.")
@click.option("--gap", type=GAP, default="0,2", show_default=True,
              help="Gap window M,N between adjacent pattern symbols.")
@click.option("--ratio", type=float, default=None,
              help="Threshold divisor from length 3 on (gonpm only).")
@click.option("--decay", default=None,
              help="Comma-separated threshold factors for lengths 2.. (gonpm-plus only).")
@click.option("--max-level", type=int, default=None, help="Stop after this pattern length.")
@click.option("--max-patterns", type=int, default=None,
              help="Cap on total patterns kept across levels.")
@click.option("--label", default=None,
              help="Class label written to the pattern file (default: corpus label).")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Pattern file; token companion lands at <out>.enc.")
@click.pass_obj
def mine_cmd(obj, in_path, mode, minsup, relative, gap, ratio, decay,
             max_level, max_patterns, label, out_path):
    """Mine frequent patterns from an encoded corpus."""
    decay_tuple = None
    if decay is not None:
        try:
            decay_tuple = tuple(float(x) for x in str(decay).split(","))
        except ValueError:
            raise click.UsageError(f"--decay must be comma-separated floats, got {decay!r}")
    corpus = read_encoded(in_path)
    config = _mining_config(mode, minsup, relative, gap, ratio, decay_tuple,
                            max_level, max_patterns, len(corpus))
    if label is None:
        distinct = corpus.labels
        label = distinct[0] if len(distinct) == 1 else "all"
    result = mine([s.tokens for s in corpus], config, threads=obj["threads"])
    write_patterns(result.all_entries(), out_path, label)
    for stats in result.stats:
        note(f"level {stats['level']}: {stats['candidates']} candidates, "
             f"{stats['pruned']} pruned, {stats['kept']} kept "
             f"({stats['seconds']:.3f}s)")
    note(f"wrote {result.total()} patterns to {out_path}")


@cli.command()
@click.option("--patterns", "pattern_paths", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Pattern files from `mine` (repeatable; classes read from #CLASS).")
@click.option("--in", "in_paths", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Encoded corpora to score (repeatable).")
@click.option("--min-length", type=int, default=MIN_LENGTH, show_default=True,
              help="Shortest pattern admitted to the catalog.")
@click.option("--cap-min", type=int, default=CAP_MIN, show_default=True,
              help="Fewest per-class patterns tolerated.")
@click.option("--cap-max", type=int, default=CAP_MAX, show_default=True,
              help="Most per-class patterns kept.")
@click.option("--allow-undersized", is_flag=True,
              help="Accept classes below --cap-min instead of failing.")
@click.option("--normalize", type=click.Choice(["length"]), default=None,
              help="Divide counts by sequence length.")
@click.option("--catalog-out", type=click.Path(), default=None,
              help="Also write the catalog file here.")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Feature matrix CSV.")
@click.pass_obj
def featurize_cmd(obj, pattern_paths, in_paths, min_length, cap_min, cap_max,
                  allow_undersized, normalize, catalog_out, out_path):
    """Build the pattern catalog and score sequences into a matrix."""
    per_class: dict[str, list] = {}
    for path in pattern_paths:
        for pat, sup, cls in read_patterns(path):
            per_class.setdefault(cls, []).append((pat, sup))
    catalog = select_patterns(per_class, min_length=min_length, cap_min=cap_min,
                              cap_max=cap_max, allow_undersized=allow_undersized)
    corpus = merge_corpora([read_encoded(p) for p in in_paths])
    matrix = featurize(corpus, catalog, threads=obj["threads"], normalize=normalize)
    write_matrix(matrix, out_path)
    if catalog_out:
        write_catalog(catalog, catalog_out)
    note(f"catalog: {len(catalog)} patterns; matrix: "
         f"{len(matrix.ids)} x {len(matrix.columns)} -> {out_path}")


@cli.command("train-eval")
@click.option("--matrix", "matrix_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Feature matrix CSV.")
@click.option("--classifiers", default="logistic", show_default=True,
              help="Comma-separated: logistic/lr, knn, gaussian_nb/nb, "
                   "decision_tree/dt, random_forest/rf, svm, mlp, gbm.")
@click.option("--split", "train_fraction", type=float, default=0.8, show_default=True,
              help="Training fraction of the stratified split.")
@click.option("--cv", type=int, default=None, help="Also run k-fold cross-validation.")
@click.option("--standardize", is_flag=True, help="Z-score features before training.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Run directory for models/, metrics/, config.snapshot.")
@click.pass_obj
def train_eval(obj, matrix_path, classifiers, train_fraction, cv, standardize, out_dir):
    """Train classifiers on a feature matrix and write metrics."""
    if not (0.0 < train_fraction < 1.0):
        raise click.UsageError("--split must be strictly between 0 and 1")
    names = [canonical_classifier(c) for c in classifiers.split(",") if c.strip()]
    if not names:
        raise click.UsageError("--classifiers named nothing")
    matrix = read_matrix(matrix_path)
    seed = obj["seed"]
    the_split = split(matrix, 1.0 - train_fraction, seed)
    os.makedirs(os.path.join(out_dir, "models"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "metrics"), exist_ok=True)
    X_test = matrix.values[the_split.test_rows]
    y_test = [matrix.labels[i] for i in the_split.test_rows]
    for name in names:
        metrics_path = os.path.join(out_dir, "metrics", f"{name}.json")
        if name in UNIMPLEMENTED_CLASSIFIERS:
            payload = {"classifier": name, "status": "not implemented"}
            with open(metrics_path, "w") as fh:
                json.dump(payload, fh, sort_keys=True, indent=2)
                fh.write("\n")
            note(f"{name}: not implemented")
            continue
        model = train(ModelSpec(name, seed=seed, standardize=standardize),
                      matrix, the_split.train_rows)
        save_model(model, os.path.join(out_dir, "models", f"{name}.json"))
        proba = model.predict_proba(X_test)
        predicted = model.predict(X_test)
        report = build_report(
            name, model.classes, y_test, proba, predicted,
            run={"seed": seed, "train_fraction": train_fraction,
                 "matrix": os.path.basename(matrix_path)},
        )
        if cv:
            from .learn import kfold
            import numpy as np

            accs = []
            for fold in kfold(matrix, cv, seed):
                m = train(ModelSpec(name, seed=seed, standardize=standardize),
                          matrix, fold.train_rows)
                pred = m.predict(matrix.values[fold.test_rows])
                truth = [matrix.labels[i] for i in fold.test_rows]
                accs.append(float(np.mean([t == p for t, p in zip(truth, pred)])))
            report["cv"] = {"folds": cv, "accuracies": accs,
                            "mean": float(np.mean(accs)), "std": float(np.std(accs))}
        with open(metrics_path, "w") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")
        note(f"{name}: accuracy={report['accuracy']:.4f}")
    write_snapshot(
        {"seed": seed, "threads": obj["threads"], "matrix": matrix_path,
         "classifiers": ",".join(names), "split": train_fraction,
         "cv": cv, "standardize": standardize},
        os.path.join(out_dir, "config.snapshot"),
    )


@cli.command()
@click.option("--spec", "spec_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="SynthSpec JSON.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Directory for corpus.encoded (+ manifest) and config.snapshot.")
@click.pass_context
def synth(ctx, spec_path, out_dir):
    """Generate a synthetic corpus from a spec file."""
    from .harness import generate

    with open(spec_path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{spec_path}: invalid JSON: {exc}") from None
    spec = SynthSpec.from_dict(raw)
    root = ctx.find_root()
    if root.get_parameter_source("seed") == ParameterSource.COMMANDLINE:
        spec.seed = ctx.obj["seed"]
    corpus = generate(spec)
    os.makedirs(out_dir, exist_ok=True)
    write_encoded(corpus, os.path.join(out_dir, "corpus.encoded"))
    write_snapshot(
        {"spec": spec_path, "seed": spec.seed, "sequences": len(corpus),
         "classes": ",".join(corpus.labels)},
        os.path.join(out_dir, "config.snapshot"),
    )
    note(f"generated {len(corpus)} sequences into {out_dir}/corpus.encoded")


@cli.command()
@click.option("--plan", "plan_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Experiment plan JSON.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Run directory.")
@click.pass_context
def run(ctx, plan_path, out_dir):
    """Execute a full experiment plan: mine, featurize, train, compare."""
    plan = ExperimentPlan.from_json_file(plan_path)
    root = ctx.find_root()
    if root.get_parameter_source("seed") == ParameterSource.COMMANDLINE:
        plan.seed = ctx.obj["seed"]
        if plan.synth is not None:
            plan.synth.seed = ctx.obj["seed"]
    run_experiment(plan, out_dir, threads=ctx.obj["threads"])
    note(f"run complete: {out_dir}")


@cli.command()
@click.option("--runs", "run_dirs", multiple=True, required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Run directories produced by `run` (repeatable).")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Merged comparison JSON; figures land beside it.")
@click.option("--no-figures", is_flag=True, help="Skip figure rendering.")
@click.pass_obj
def report(obj, run_dirs, out_path, no_figures):
    """Merge run comparisons and render comparison figures."""
    from .metrics import aai as _aai

    arms = []
    classifiers: list[str] = []
    for run_dir in run_dirs:
        comp_path = os.path.join(run_dir, "comparison.json")
        if not os.path.exists(comp_path):
            raise DataError(f"{run_dir}: no comparison.json (not a run directory?)")
        with open(comp_path) as fh:
            comp = json.load(fh)
        tag = os.path.basename(os.path.normpath(run_dir))
        for arm in comp.get("arms", []):
            arm = dict(arm)
            if len(run_dirs) > 1:
                arm["arm"] = dict(arm["arm"])
                arm["arm"]["name"] = f"{tag}/{arm['arm']['name']}"
            arms.append(arm)
        for c in comp.get("classifiers", []):
            if c not in classifiers:
                classifiers.append(c)
    aai_blocks = []
    for a in arms:
        for b in arms:
            if a is b:
                continue
            gains = {}
            pairs = []
            for clf in classifiers:
                acc_a = a["metrics"].get(clf, {}).get("accuracy")
                acc_b = b["metrics"].get(clf, {}).get("accuracy")
                if acc_a is None or acc_b is None or acc_b <= 0:
                    continue
                gains[clf] = (acc_a - acc_b) / acc_b * 100.0
                pairs.append((acc_a, acc_b))
            if not pairs:
                continue
            aai_blocks.append({
                "new": a["arm"]["name"], "base": b["arm"]["name"],
                "per_classifier_gain_pct": gains,
                "aai": _aai([p[0] for p in pairs], [p[1] for p in pairs]),
            })
    merged = {"classifiers": classifiers, "arms": arms, "aai": aai_blocks}
    out_dir = os.path.dirname(os.path.abspath(out_path))
    os.makedirs(out_dir, exist_ok=True)
    with open(out_path, "w") as fh:
        json.dump(merged, fh, sort_keys=True, indent=2)
        fh.write("\n")
    if not no_figures:
        from . import plots

        written = plots.render_comparison(merged, out_dir)
        for path in written:
            note(f"figure: {path}")
    note(f"comparison written to {out_path}")


def main(argv=None) -> int:
    """Entry point with explicit exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 2
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except (DataError, OSError) as exc:
        note(f"error: {exc}")
        return 2
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
