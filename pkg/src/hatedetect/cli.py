"""Command-line entry point wiring the modules into the full workflow.

Every subcommand writes its artifacts under --out together with a
run.json capturing the resolved configuration and seeds, so any output
is reproducible from its own manifest. Exit codes: 0 success, 1 usage
error, 2 runtime failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .classifiers import (
    FineTunedEncoderClassifier,
    FrozenEncoderGruClassifier,
    Predictor,
    RecurrentTextClassifier,
    load_predictor,
)
from .corpus import (
    LABELS_1A,
    LABELS_1B,
    LABELS_1B_FINE,
    Dataset,
    SplitSpec,
    Task,
    class_stats,
    load_tsv,
    save_tsv,
    stratified_split,
    write_split_manifest,
)
from .evaluate import confusion_matrix, confusion_to_csv, f1_scores
from .models import ModelFamily
from .preprocess import PreprocessConfig, preprocess as run_preprocess
from .pretrained import StubEncoder
from .search import BUILTIN_GRIDS, ResultsTable, run_grid
from .train import TrainConfig, load_checkpoint
from .validation import ValidationError

TASK_CHOICES = ("1a", "1b-flat", "1b-conditional")
FAMILY_CHOICES = tuple(f.value for f in ModelFamily)


def _classes_for(task: str) -> tuple[str, ...]:
    return {"1a": LABELS_1A, "1b-flat": LABELS_1B, "1b-conditional": LABELS_1B_FINE}[task]


def _corpus_task(task: str) -> Task:
    return Task.TASK_1A if task == "1a" else Task.TASK_1B


def _restrict_to_fine(ds: Dataset) -> Dataset:
    kept = tuple(it for it in ds.items if it.label_1b in LABELS_1B_FINE)
    return Dataset(items=kept, task=ds.task, provenance=ds.provenance + " [fine-only]")


def _parse_encoder(spec: str):
    """"hub" -> real weights at predict/fit time; "stub:<width>[:<seed>]" -> test double."""
    if spec == "hub":
        return None
    if spec.startswith("stub:"):
        parts = spec.split(":")
        width = int(parts[1])
        seed = int(parts[2]) if len(parts) > 2 else 0
        return StubEncoder(width=width, seed=seed)
    raise click.UsageError(f"--encoder must be 'hub' or 'stub:<width>[:<seed>]', got {spec!r}")


def _write_run_json(out_dir: Path, command: str, config: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"tool": "hatedetect", "version": __version__, "command": command, "config": config}
    (out_dir / "run.json").write_text(json.dumps(payload, indent=2, default=str) + "\n", encoding="utf-8")


def _apply_config_file(ctx, config_path: str | None, values: dict) -> dict:
    """Precedence: explicit CLI flag > config-file value > built-in default."""
    if not config_path:
        return values
    overrides = json.loads(Path(config_path).read_text(encoding="utf-8"))
    unknown = sorted(set(overrides) - set(values))
    if unknown:
        raise click.UsageError(f"config file sets unknown option(s): {', '.join(unknown)}")
    resolved = dict(values)
    for key, value in overrides.items():
        if ctx.get_parameter_source(key) == click.core.ParameterSource.DEFAULT:
            resolved[key] = value
    return resolved


@click.group()
@click.version_option(version=__version__, prog_name="hatedetect")
def cli():
    """Hate-speech classification experiments: ingest, train, search, evaluate."""


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--task", type=click.Choice(["1a", "1b"]), default="1a", show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def ingest(in_path, task, out_dir):
    """Load and validate a TSV dataset; report class statistics."""
    ds = load_tsv(in_path, _corpus_task(task))
    stats = class_stats(ds)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_tsv(ds, out / "dataset.tsv")
    (out / "stats.json").write_text(
        json.dumps({"total": stats.total, "counts": stats.counts}, indent=2) + "\n",
        encoding="utf-8",
    )
    _write_run_json(out, "ingest", {"in": in_path, "task": task})
    click.echo(f"{stats.total} items: " + ", ".join(f"{k}={v}" for k, v in stats.counts.items()))


@cli.command("preprocess")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--no-mentions", is_flag=True, help="keep @handles as-is")
@click.option("--no-links", is_flag=True, help="keep URLs as-is")
@click.option("--no-emojis", is_flag=True, help="keep emoji characters as-is")
@click.option("--no-whitespace", is_flag=True, help="keep whitespace runs as-is")
@click.option("--lowercase", is_flag=True, help="lowercase after replacements")
def preprocess_cmd(in_path, out_path, no_mentions, no_links, no_emojis, no_whitespace, lowercase):
    """Normalize the text column of a TSV, preserving ids and labels."""
    cfg = PreprocessConfig(
        replace_mentions=not no_mentions,
        replace_links=not no_links,
        replace_emojis=not no_emojis,
        collapse_whitespace=not no_whitespace,
        lowercase=lowercase,
    )
    ds = load_tsv(in_path, Task.TASK_1A, require_labels=False)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for item in ds:
            fh.write(
                "\t".join(
                    [item.id, run_preprocess(item.text, cfg), item.label_1a or "", item.label_1b or ""]
                )
                + "\n"
            )
    _write_run_json(out.parent, "preprocess", {"in": in_path, "out": out_path, **cfg.to_dict()})
    click.echo(f"wrote {len(ds)} normalized rows to {out}")


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--task", type=click.Choice(["1a", "1b"]), default="1a", show_default=True)
@click.option("--ratios", default="0.7,0.1,0.2", show_default=True)
@click.option("--seed", default=42, show_default=True)
@click.option("--stratify/--no-stratify", default=True, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def split(in_path, task, ratios, seed, stratify, out_dir):
    """Produce seeded train/val/test TSVs plus a reconstruction manifest."""
    try:
        triple = tuple(float(x) for x in ratios.split(","))
    except ValueError:
        raise click.UsageError(f"--ratios must be three comma-separated numbers, got {ratios!r}")
    ds = load_tsv(in_path, _corpus_task(task))
    spec = SplitSpec(ratios=triple, seed=seed, stratified=stratify)
    train_ds, val_ds, test_ds = stratified_split(ds, spec)
    out = Path(out_dir)
    save_tsv(train_ds, out / "train.tsv")
    save_tsv(val_ds, out / "val.tsv")
    save_tsv(test_ds, out / "test.tsv")
    write_split_manifest(out / "split_manifest.json", spec, train_ds, val_ds, test_ds)
    _write_run_json(out, "split", {"in": in_path, "task": task, "ratios": list(triple),
                                   "seed": seed, "stratified": stratify})
    click.echo(f"split {len(ds)} -> {len(train_ds)}/{len(val_ds)}/{len(test_ds)}")


def _train_options(fn):
    options = [
        click.option("--family", type=click.Choice(FAMILY_CHOICES), required=True),
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     default=None, help="JSON file supplying defaults for unset options"),
        click.option("--task", type=click.Choice(TASK_CHOICES), default="1a", show_default=True),
        click.option("--embedding-dim", type=int, default=None),
        click.option("--hidden-dim", type=int, default=None),
        click.option("--dropout", type=float, default=None),
        click.option("--num-layers", type=int, default=1, show_default=True),
        click.option("--variant", type=click.Choice(["base", "large"]), default="base", show_default=True),
        click.option("--vectors", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="pretrained word-vector file (word_lstm only)"),
        click.option("--max-len", type=int, default=None),
        click.option("--encoder", default="hub", show_default=True,
                     help="'hub' or 'stub:<width>[:<seed>]'"),
        click.option("--cache-dir", type=click.Path(file_okay=False), default=None),
        click.option("--preprocess/--no-preprocess", "use_preprocess", default=True, show_default=True),
        click.option("--batch-size", type=int, default=32, show_default=True),
        click.option("--lr", type=float, default=None, help="default 1e-3 (2e-5 for fine-tuning)"),
        click.option("--max-epochs", type=int, default=None, help="default 50 (3 for fine-tuning)"),
        click.option("--patience", type=int, default=None, help="default 5 (2 for fine-tuning)"),
        click.option("--seed", type=int, default=42, show_default=True),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _build_estimator(family, task, embedding_dim, hidden_dim, dropout, num_layers, variant,
                     vectors, max_len, encoder, cache_dir, use_preprocess, batch_size,
                     lr, max_epochs, patience, seed):
    classes = _classes_for(task)
    fam = ModelFamily(family)
    common = dict(classes=classes, preprocess=use_preprocess, batch_size=batch_size, seed=seed)
    if fam is ModelFamily.BERT_FINETUNE:
        return FineTunedEncoderClassifier(
            variant=variant,
            lr=lr if lr is not None else 2e-5,
            max_epochs=max_epochs if max_epochs is not None else 3,
            patience=patience if patience is not None else 2,
            **common,
        )
    common.update(
        lr=lr if lr is not None else 1e-3,
        max_epochs=max_epochs if max_epochs is not None else 50,
        patience=patience if patience is not None else 5,
    )
    if fam is ModelFamily.BERT_FEATURE_GRU:
        return FrozenEncoderGruClassifier(
            variant=variant,
            hidden_dim=hidden_dim if hidden_dim is not None else 32,
            dropout=dropout if dropout is not None else 0.25,
            num_layers=num_layers,
            encoder=_parse_encoder(encoder),
            cache_dir=cache_dir,
            **common,
        )
    level = "char" if fam is ModelFamily.CHAR_LSTM else "word"
    if vectors is not None and fam is not ModelFamily.WORD_LSTM:
        raise click.UsageError("--vectors applies to word_lstm only")
    defaults = {"char": (50, 16, 0.5), "word": (100, 32, 0.25)}[level]
    return RecurrentTextClassifier(
        level=level,
        embedding_dim=embedding_dim if embedding_dim is not None else defaults[0],
        hidden_dim=hidden_dim if hidden_dim is not None else defaults[1],
        dropout=dropout if dropout is not None else defaults[2],
        num_layers=num_layers,
        pretrained_embeddings_path=vectors,
        max_len=max_len,
        **common,
    )


@cli.command()
@click.option("--train", "train_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--val", "val_path", type=click.Path(exists=True, dir_okay=False), default=None)
@_train_options
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.pass_context
def train(ctx, train_path, val_path, out_dir, **opts):
    """Train one model and write its checkpoint, history and run manifest."""
    opts = _apply_config_file(ctx, opts.pop("config_path"), opts)
    task = opts["task"]
    ds = load_tsv(train_path, _corpus_task(task))
    if task == "1b-conditional":
        ds = _restrict_to_fine(ds)
    validation = None
    if val_path:
        val_ds = load_tsv(val_path, _corpus_task(task))
        if task == "1b-conditional":
            val_ds = _restrict_to_fine(val_ds)
        validation = (val_ds.texts, val_ds.labels())

    estimator = _build_estimator(**opts)
    estimator.fit(ds.texts, ds.labels(), validation=validation)

    out = Path(out_dir)
    estimator.save(out / "checkpoint")
    (out / "history.csv").write_text(estimator.history_.to_csv(), encoding="utf-8")
    (out / "history.json").write_text(
        json.dumps(estimator.history_.summary(), indent=2) + "\n", encoding="utf-8"
    )
    _write_run_json(out, "train", {"train": train_path, "val": val_path, **opts})
    best = estimator.history_.summary()
    click.echo(
        f"best epoch {best['best_epoch']}: val macro-F1 {best['best_val_macro_f1']:.4f} "
        f"(checkpoint: {out / 'checkpoint'})"
    )


@cli.command()
@click.option("--family", type=click.Choice(FAMILY_CHOICES), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON file supplying defaults for unset options")
@click.option("--task", type=click.Choice(TASK_CHOICES), default="1a", show_default=True)
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--ratios", default="0.7,0.1,0.2", show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--variant", type=click.Choice(["base", "large"]), default="base", show_default=True)
@click.option("--preprocessed", type=click.Choice(["both", "yes", "no"]), default="both", show_default=True)
@click.option("--encoder", default="hub", show_default=True)
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
@click.option("--vectors", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--max-len", type=int, default=None)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--lr", type=float, default=None, help="default 1e-3 (2e-5 for fine-tuning)")
@click.option("--max-epochs", type=int, default=None, help="default 50 (3 for fine-tuning)")
@click.option("--patience", type=int, default=None, help="default 5 (2 for fine-tuning)")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.pass_context
def gridsearch(ctx, family, config_path, out_dir, **opts):
    """Run a family's full hyperparameter grid over one shared seeded split."""
    opts = _apply_config_file(ctx, config_path, opts)
    finetune = ModelFamily(family) is ModelFamily.BERT_FINETUNE
    for key, recurrent_default, finetune_default in (
        ("lr", 1e-3, 2e-5), ("max_epochs", 50, 3), ("patience", 5, 2),
    ):
        if opts[key] is None:
            opts[key] = finetune_default if finetune else recurrent_default
    task = opts["task"]
    try:
        triple = tuple(float(x) for x in opts["ratios"].split(","))
    except ValueError:
        raise click.UsageError(
            f"--ratios must be three comma-separated numbers, got {opts['ratios']!r}"
        )
    fam = ModelFamily(family)
    ds = load_tsv(opts["data_path"], _corpus_task(task))
    if task == "1b-conditional":
        ds = _restrict_to_fine(ds)
    splits = stratified_split(ds, SplitSpec(ratios=triple, seed=opts["seed"]))

    flags = {"both": (True, False), "yes": (True,), "no": (False,)}[opts["preprocessed"]]
    grid_builder = BUILTIN_GRIDS[fam]
    space = grid_builder(preprocessed=flags) if fam in (
        ModelFamily.CHAR_LSTM, ModelFamily.WORD_LSTM
    ) else grid_builder(variant=opts["variant"], preprocessed=flags)

    cfg = TrainConfig(batch_size=opts["batch_size"], lr=opts["lr"], max_epochs=opts["max_epochs"],
                      early_stop_patience=opts["patience"], seed=opts["seed"])
    table = run_grid(
        space,
        splits,
        cfg,
        out_dir,
        classes=_classes_for(task),
        encoder=_parse_encoder(opts["encoder"]),
        cache_dir=opts["cache_dir"],
        vectors_path=opts["vectors"],
        max_len=opts["max_len"],
    )
    _write_run_json(Path(out_dir), "gridsearch", {"family": family, "out": out_dir, **opts})
    ok = sum(1 for r in table.rows if r["status"] == "ok")
    click.echo(f"{len(table.rows)} rows ({ok} ok) -> {Path(out_dir) / 'results.csv'}")


def _task_from_classes(classes: tuple[str, ...]) -> Task:
    return Task.TASK_1A if set(classes) <= set(LABELS_1A) else Task.TASK_1B


@cli.command()
@click.option("--checkpoint", "checkpoint_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--encoder", default="hub", show_default=True)
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def evaluate(checkpoint_dir, data_path, encoder, cache_dir, out_dir):
    """Score a checkpoint on a labeled TSV; write report and confusion matrix."""
    tm = load_checkpoint(checkpoint_dir)
    task = _task_from_classes(tm.classes)
    ds = load_tsv(data_path, task)
    if set(tm.classes) == set(LABELS_1B_FINE):
        ds = _restrict_to_fine(ds)

    predictor = Predictor(tm, encoder=_parse_encoder(encoder), cache_dir=cache_dir)
    index = {c: i for i, c in enumerate(tm.classes)}
    y_true = [index[lab] for lab in ds.labels()]
    y_pred = predictor.predict_indices(ds.texts).tolist()
    cm = confusion_matrix(y_true, y_pred, len(tm.classes))
    report = f1_scores(cm, class_names=tm.classes)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / "report.txt").write_text(report.to_text() + "\n", encoding="utf-8")
    (out / "confusion.csv").write_text(confusion_to_csv(cm, tm.classes), encoding="utf-8")
    _write_run_json(out, "evaluate", {"checkpoint": checkpoint_dir, "data": data_path})
    click.echo(report.to_text())


@cli.command()
@click.option("--checkpoint", "checkpoint_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gate-checkpoint", type=click.Path(exists=True, file_okay=False), default=None,
              help="binary checkpoint that routes NOT-predicted rows to NONE (conditional 1B)")
@click.option("--encoder", default="hub", show_default=True)
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def predict(checkpoint_dir, in_path, gate_checkpoint, encoder, cache_dir, out_path):
    """Label an unlabeled TSV with a trained checkpoint; one CSV row per input."""
    enc_obj = _parse_encoder(encoder)
    predictor = load_predictor(checkpoint_dir, encoder=enc_obj, cache_dir=cache_dir)
    ds = load_tsv(in_path, Task.TASK_1A, require_labels=False)
    labels = predictor.predict(ds.texts)

    if gate_checkpoint:
        gate = load_predictor(gate_checkpoint, encoder=enc_obj, cache_dir=cache_dir)
        if set(gate.classes) != set(LABELS_1A):
            raise ValidationError(f"--gate-checkpoint must be a 1A model, found classes {gate.classes}")
        coarse = gate.predict(ds.texts)
        labels = [fine if c == "HOF" else "NONE" for fine, c in zip(labels, coarse)]

    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        fh.write("id,label\n")
        for item, label in zip(ds.items, labels):
            fh.write(f"{item.id},{label}\n")
    _write_run_json(out.parent, "predict", {
        "checkpoint": checkpoint_dir, "in": in_path, "gate_checkpoint": gate_checkpoint,
    })
    click.echo(f"wrote {len(labels)} predictions to {out}")


@cli.command()
@click.option("--results", "results_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--headline", is_flag=True, help="only the curated headline configurations")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def report(results_path, headline, out_path):
    """Render a results CSV as a markdown table grouped by model family."""
    table = ResultsTable.from_csv(Path(results_path).read_text(encoding="utf-8"))
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(table.to_markdown(headline_only=headline), encoding="utf-8")
    _write_run_json(out.parent, "report", {"results": results_path, "headline": headline})
    click.echo(f"wrote {out}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.UsageError as exc:
        exc.show()
        return 1
    except Exception as exc:  # never a bare stack trace
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
