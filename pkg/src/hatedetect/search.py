"""Exhaustive hyperparameter grids with a crash-resumable runner.

Every grid point trains once per preprocessing flag on one shared split
(so F1 differences reflect hyperparameters, not partition noise). Each
completed run is appended to a row log immediately; re-running a grid
skips rows already in the log, which makes the runner resumable after a
crash and idempotent when complete.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

from .classifiers import (
    FineTunedEncoderClassifier,
    FrozenEncoderGruClassifier,
    RecurrentTextClassifier,
)
from .corpus import Dataset
from .models import (
    GRID_DROPOUTS,
    GRID_EMBEDDING_DIMS,
    GRID_HIDDEN_DIMS,
    HyperParams,
    ModelFamily,
)
from .train import TrainConfig
from .validation import ValidationError

ROWS_LOG = "rows.jsonl"
RESULTS_CSV = "results.csv"
RESULTS_MD = "results.md"

# axis name -> HyperParams field; declared order fixes enumeration order
_AXIS_FIELDS = ("embedding_dim", "hidden_dim", "dropout", "encoder_variant", "pretrained_embeddings", "num_layers")

FAMILY_TITLES = {
    ModelFamily.CHAR_LSTM: "Char_LSTM",
    ModelFamily.WORD_LSTM: "Word_LSTM",
    ModelFamily.BERT_FEATURE_GRU: "BERT feature extraction",
    ModelFamily.BERT_FINETUNE: "BERT fine-tuning",
}

FAMILY_COLUMNS = {
    ModelFamily.CHAR_LSTM: ("embedding_dim", "hidden_dim", "dropout"),
    ModelFamily.WORD_LSTM: ("embedding_dim", "hidden_dim", "dropout"),
    ModelFamily.BERT_FEATURE_GRU: ("encoder_variant", "hidden_dim", "dropout"),
    ModelFamily.BERT_FINETUNE: ("encoder_variant",),
}

COLUMN_TITLES = {
    "embedding_dim": "Embedding dimension",
    "hidden_dim": "Hidden dimension",
    "dropout": "dropout",
    "encoder_variant": "Bert model",
}

# the selected best/ablation configurations reported for each family,
# exposed as a table filter for side-by-side comparison
HEADLINE_CONFIGS = {
    ModelFamily.CHAR_LSTM: [
        {"preprocessed": True, "embedding_dim": 50, "hidden_dim": 256, "dropout": 0.5},
        {"preprocessed": True, "embedding_dim": 50, "hidden_dim": 128, "dropout": 0.75},
        {"preprocessed": True, "embedding_dim": 100, "hidden_dim": 64, "dropout": 0.5},
        {"preprocessed": True, "embedding_dim": 200, "hidden_dim": 16, "dropout": 0.5},
        {"preprocessed": False, "embedding_dim": 200, "hidden_dim": 16, "dropout": 0.75},
        {"preprocessed": False, "embedding_dim": 100, "hidden_dim": 128, "dropout": 0.75},
    ],
    ModelFamily.WORD_LSTM: [
        {"preprocessed": True, "embedding_dim": 100, "hidden_dim": 512, "dropout": 0.25},
        {"preprocessed": True, "embedding_dim": 300, "hidden_dim": 256, "dropout": 0.25},
        {"preprocessed": True, "embedding_dim": 300, "hidden_dim": 256, "dropout": 0.75},
        {"preprocessed": False, "embedding_dim": 300, "hidden_dim": 256, "dropout": 0.25},
    ],
    ModelFamily.BERT_FEATURE_GRU: [
        {"preprocessed": True, "encoder_variant": "base", "hidden_dim": 256, "dropout": 0.25},
        {"preprocessed": True, "encoder_variant": "base", "hidden_dim": 128, "dropout": 0.25},
        {"preprocessed": True, "encoder_variant": "large", "hidden_dim": 256, "dropout": 0.5},
        {"preprocessed": True, "encoder_variant": "large", "hidden_dim": 128, "dropout": 0.25},
        {"preprocessed": False, "encoder_variant": "base", "hidden_dim": 128, "dropout": 0.25},
    ],
    ModelFamily.BERT_FINETUNE: [
        {"preprocessed": True, "encoder_variant": "base"},
        {"preprocessed": False, "encoder_variant": "base"},
    ],
}


@dataclass(frozen=True)
class GridSpace:
    family: ModelFamily
    axes: dict
    preprocessed: tuple[bool, ...] = (True, False)

    def __post_init__(self):
        if not self.axes:
            raise ValidationError("grid axes must be non-empty")
        for name, values in self.axes.items():
            if name not in _AXIS_FIELDS:
                raise ValidationError(f"unknown grid axis {name!r}; expected one of {_AXIS_FIELDS}")
            if not values:
                raise ValidationError(f"grid axis {name!r} has no values")
        if not self.preprocessed:
            raise ValidationError("preprocessed flag list must be non-empty")

    def size(self) -> int:
        n = 1
        for values in self.axes.values():
            n *= len(values)
        return n


def char_grid(preprocessed: tuple[bool, ...] = (True, False)) -> GridSpace:
    return GridSpace(
        family=ModelFamily.CHAR_LSTM,
        axes={
            "embedding_dim": list(GRID_EMBEDDING_DIMS[ModelFamily.CHAR_LSTM]),
            "hidden_dim": list(GRID_HIDDEN_DIMS[ModelFamily.CHAR_LSTM]),
            "dropout": list(GRID_DROPOUTS),
        },
        preprocessed=preprocessed,
    )


def word_grid(preprocessed: tuple[bool, ...] = (True, False)) -> GridSpace:
    return GridSpace(
        family=ModelFamily.WORD_LSTM,
        axes={
            "embedding_dim": list(GRID_EMBEDDING_DIMS[ModelFamily.WORD_LSTM]),
            "hidden_dim": list(GRID_HIDDEN_DIMS[ModelFamily.WORD_LSTM]),
            "dropout": list(GRID_DROPOUTS),
        },
        preprocessed=preprocessed,
    )


def feature_gru_grid(variant: str = "base", preprocessed: tuple[bool, ...] = (True, False)) -> GridSpace:
    return GridSpace(
        family=ModelFamily.BERT_FEATURE_GRU,
        axes={
            "encoder_variant": [variant],
            "hidden_dim": list(GRID_HIDDEN_DIMS[ModelFamily.BERT_FEATURE_GRU]),
            "dropout": list(GRID_DROPOUTS),
        },
        preprocessed=preprocessed,
    )


def finetune_grid(variant: str = "base", preprocessed: tuple[bool, ...] = (True, False)) -> GridSpace:
    return GridSpace(
        family=ModelFamily.BERT_FINETUNE,
        axes={"encoder_variant": [variant]},
        preprocessed=preprocessed,
    )


BUILTIN_GRIDS = {
    ModelFamily.CHAR_LSTM: char_grid,
    ModelFamily.WORD_LSTM: word_grid,
    ModelFamily.BERT_FEATURE_GRU: feature_gru_grid,
    ModelFamily.BERT_FINETUNE: finetune_grid,
}


def enumerate_grid(space: GridSpace) -> list[HyperParams]:
    """Cartesian product: axes in declared order, values in listed order."""
    names = list(space.axes)
    combos = product(*(space.axes[name] for name in names))
    points = []
    for combo in combos:
        kwargs = dict(zip(names, combo))
        if space.family is ModelFamily.BERT_FINETUNE:
            # fine-tuning has no recurrent head; hidden/dropout are inert here
            kwargs.setdefault("hidden_dim", 1)
            kwargs.setdefault("dropout", 0.0)
        points.append(HyperParams(family=space.family, **kwargs))
    return points


def row_key(family: ModelFamily, hp: HyperParams, preprocessed: bool, seed: int) -> str:
    payload = json.dumps(
        {"family": family.value, "hp": hp.to_dict(), "preprocessed": preprocessed, "seed": seed},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _from_csv_value(column: str, raw: str):
    if raw == "":
        return None
    if column in ("preprocessed", "pretrained_embeddings"):
        return raw == "True"
    if column in ("embedding_dim", "hidden_dim", "num_layers", "num_params", "seed"):
        return int(raw)
    if column in ("dropout", "val_f1", "test_f1"):
        return float(raw)
    return raw


@dataclass
class ResultsTable:
    rows: list[dict] = field(default_factory=list)

    @classmethod
    def from_csv(cls, text: str) -> "ResultsTable":
        reader = csv.DictReader(io.StringIO(text))
        rows = [
            {column: _from_csv_value(column, raw) for column, raw in row.items()}
            for row in reader
        ]
        return cls(rows=rows)

    def completed(self) -> list[dict]:
        return [r for r in self.rows if r["status"] == "ok"]

    def best_keys(self) -> set[str]:
        """Best completed row per family: highest test F1, fewer params on ties."""
        best: dict[str, dict] = {}
        for row in self.completed():
            cur = best.get(row["family"])
            if cur is None:
                best[row["family"]] = row
                continue
            better = row["test_f1"] > cur["test_f1"] or (
                row["test_f1"] == cur["test_f1"]
                and (row.get("num_params") or 0) < (cur.get("num_params") or 0)
            )
            if better:
                best[row["family"]] = row
        return {r["row_key"] for r in best.values()}

    def sorted_rows(self) -> list[dict]:
        order = {fam.value: i for i, fam in enumerate(FAMILY_TITLES)}
        return sorted(
            self.rows,
            key=lambda r: (
                order.get(r["family"], 99),
                not r["preprocessed"],
                str(r.get("encoder_variant")),
                r.get("embedding_dim") or 0,
                r.get("hidden_dim") or 0,
                r.get("dropout") or 0,
            ),
        )

    def headline_rows(self) -> list[dict]:
        out = []
        for row in self.rows:
            wanted = HEADLINE_CONFIGS.get(ModelFamily(row["family"]), [])
            for config in wanted:
                if all(row.get(k) == v for k, v in config.items()):
                    out.append(row)
                    break
        return out

    def to_csv(self) -> str:
        columns = [
            "family", "preprocessed", "embedding_dim", "hidden_dim", "dropout",
            "encoder_variant", "pretrained_embeddings", "num_layers", "num_params",
            "seed", "val_f1", "test_f1", "status", "error", "checkpoint", "row_key",
        ]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in self.sorted_rows():
            writer.writerow(row)
        return buf.getvalue()

    def to_markdown(self, headline_only: bool = False) -> str:
        rows = self.headline_rows() if headline_only else self.sorted_rows()
        best = self.best_keys()
        by_family: dict[str, list[dict]] = {}
        for row in rows:
            by_family.setdefault(row["family"], []).append(row)

        blocks = []
        for family, fam_rows in by_family.items():
            fam = ModelFamily(family)
            hp_cols = FAMILY_COLUMNS[fam]
            header = ["Model name", "Pre-processed"] + [COLUMN_TITLES[c] for c in hp_cols] + ["val F1", "F1"]
            lines = [
                "| " + " | ".join(header) + " |",
                "|" + "|".join(["---"] * len(header)) + "|",
            ]
            for row in fam_rows:
                if row["status"] != "ok":
                    f1_cell = f"failed: {row.get('error', '')}"
                    val_cell = ""
                else:
                    f1 = f"{row['test_f1']:.2f}"
                    f1_cell = f"**{f1}**" if row["row_key"] in best else f1
                    val_cell = f"{row['val_f1']:.2f}"
                cells = [FAMILY_TITLES[fam], "yes" if row["preprocessed"] else "no"]
                cells += [str(row.get(c, "")) for c in hp_cols]
                cells += [val_cell, f1_cell]
                lines.append("| " + " | ".join(cells) + " |")
            blocks.append("\n".join(lines))
        return "\n\n".join(blocks) + "\n"


def _estimator_for(
    family: ModelFamily,
    hp: HyperParams,
    preprocessed: bool,
    cfg: TrainConfig,
    classes: tuple[str, ...],
    encoder,
    backbone,
    cache_dir,
    vectors_path,
    max_len,
):
    common = dict(
        classes=classes,
        preprocess=preprocessed,
        batch_size=cfg.batch_size,
        max_epochs=cfg.max_epochs,
        patience=cfg.early_stop_patience,
        seed=cfg.seed,
    )
    if family in (ModelFamily.CHAR_LSTM, ModelFamily.WORD_LSTM):
        path = None
        if hp.pretrained_embeddings:
            if vectors_path is None:
                raise ValidationError(
                    "grid point asks for pretrained embeddings but no vectors_path was given"
                )
            path = str(vectors_path)
        return RecurrentTextClassifier(
            level="char" if family is ModelFamily.CHAR_LSTM else "word",
            embedding_dim=hp.embedding_dim,
            hidden_dim=hp.hidden_dim,
            dropout=hp.dropout,
            num_layers=hp.num_layers,
            pretrained_embeddings_path=path,
            max_len=max_len,
            lr=cfg.lr,
            **common,
        )
    if family is ModelFamily.BERT_FEATURE_GRU:
        return FrozenEncoderGruClassifier(
            variant=hp.encoder_variant or "base",
            hidden_dim=hp.hidden_dim,
            dropout=hp.dropout,
            num_layers=hp.num_layers,
            encoder=encoder,
            cache_dir=str(cache_dir) if cache_dir else None,
            lr=cfg.lr,
            **common,
        )
    return FineTunedEncoderClassifier(
        variant=hp.encoder_variant or "base", backbone=backbone, lr=cfg.lr, **common
    )


def _execute_point(
    hp: HyperParams,
    preprocessed: bool,
    splits: tuple[Dataset, Dataset, Dataset],
    cfg: TrainConfig,
    classes: tuple[str, ...],
    checkpoint_dir: Path,
    encoder=None,
    backbone=None,
    cache_dir=None,
    vectors_path=None,
    max_len=None,
) -> dict:
    train_ds, val_ds, test_ds = splits
    estimator = _estimator_for(
        hp.family, hp, preprocessed, cfg, classes, encoder, backbone, cache_dir, vectors_path, max_len
    )
    estimator.fit(
        train_ds.texts, train_ds.labels(), validation=(val_ds.texts, val_ds.labels())
    )
    val_f1 = max(e.val_macro_f1 for e in estimator.history_.epochs)
    test_f1 = estimator.evaluate(test_ds.texts, test_ds.labels()).macro_f1
    estimator.save(checkpoint_dir)
    trainable = sum(p.numel() for p in estimator.trained_.model.parameters() if p.requires_grad)
    return {"val_f1": val_f1, "test_f1": test_f1, "num_params": int(trainable)}


def _load_rows(log_path: Path) -> dict[str, dict]:
    rows: dict[str, dict] = {}
    if log_path.exists():
        with log_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    row = json.loads(line)
                    rows[row["row_key"]] = row
    return rows


def run_grid(
    space: GridSpace,
    splits: tuple[Dataset, Dataset, Dataset],
    cfg: TrainConfig,
    out_dir: str | Path,
    classes: tuple[str, ...] | None = None,
    encoder=None,
    backbone=None,
    cache_dir: str | Path | None = None,
    vectors_path: str | Path | None = None,
    max_len: int | None = None,
    train_point=None,
) -> ResultsTable:
    """Train every (grid point x preprocessed flag) once, resumably.

    Completed rows found in the on-disk log are never recomputed. Failed
    points are recorded with status="failed" and the grid keeps going.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / ROWS_LOG
    done = _load_rows(log_path)
    if classes is None:
        classes = splits[0].task.labels
    if train_point is None:
        train_point = _execute_point

    points = enumerate_grid(space)
    for hp in points:
        for flag in space.preprocessed:
            key = row_key(space.family, hp, flag, cfg.seed)
            if key in done:
                continue
            row = {
                "row_key": key,
                "family": space.family.value,
                "preprocessed": flag,
                "embedding_dim": hp.embedding_dim,
                "hidden_dim": hp.hidden_dim,
                "dropout": hp.dropout,
                "encoder_variant": hp.encoder_variant,
                "pretrained_embeddings": hp.pretrained_embeddings,
                "num_layers": hp.num_layers,
                "seed": cfg.seed,
                "checkpoint": str(out_dir / "checkpoints" / key[:16]),
                "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
            }
            try:
                outcome = train_point(
                    hp,
                    flag,
                    splits,
                    cfg,
                    classes,
                    Path(row["checkpoint"]),
                    encoder=encoder,
                    backbone=backbone,
                    cache_dir=cache_dir,
                    vectors_path=vectors_path,
                    max_len=max_len,
                )
                row.update(outcome)
                row["status"] = "ok"
                row["error"] = None
            except Exception as exc:  # record and continue; the grid must finish
                row.update({"val_f1": None, "test_f1": None, "num_params": None})
                row["status"] = "failed"
                row["error"] = f"{type(exc).__name__}: {exc}"
            with log_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
                fh.flush()
            done[key] = row

    table = ResultsTable(rows=list(done.values()))
    (out_dir / RESULTS_CSV).write_text(table.to_csv(), encoding="utf-8")
    (out_dir / RESULTS_MD).write_text(table.to_markdown(), encoding="utf-8")
    return table
