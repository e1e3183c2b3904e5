"""Seeded training loop with validation-based selection and checkpoints.

Model selection tracks validation macro-F1 (first occurrence wins ties);
the returned weights always come from the best epoch, never a later one.
Histories are reproducible bit-for-bit given the same config seed and
data order.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import evaluate as metrics
from .models import (
    FeatureGruClassifier,
    ModelFamily,
    ModelSpec,
    RecurrentClassifier,
    RECURRENT_FAMILIES,
)
from .validation import ValidationError, check_positive_int
from .vocab import Vocab

CHECKPOINT_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
WEIGHTS_NAME = "weights.pt"
VOCAB_NAME = "vocab.json"


class TrainingDiverged(RuntimeError):
    def __init__(self, lr: float, epoch: int, batch_index: int):
        super().__init__(
            f"loss became non-finite at epoch {epoch}, batch {batch_index} (lr={lr}); "
            "lower the learning rate or inspect the inputs"
        )
        self.lr = lr
        self.epoch = epoch
        self.batch_index = batch_index


class CheckpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    lr: float = 1e-3
    max_epochs: int = 50
    early_stop_patience: int = 5
    seed: int = 0
    grad_clip: float = 5.0

    def __post_init__(self):
        check_positive_int(self.batch_size, "batch_size")
        check_positive_int(self.max_epochs, "max_epochs")
        check_positive_int(self.early_stop_patience, "early_stop_patience")
        if self.early_stop_patience >= self.max_epochs:
            raise ValidationError("early_stop_patience must be smaller than max_epochs")

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "lr": self.lr,
            "max_epochs": self.max_epochs,
            "early_stop_patience": self.early_stop_patience,
            "seed": self.seed,
            "grad_clip": self.grad_clip,
        }


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_macro_f1: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats]
    best_epoch: int
    wall_time: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["epoch", "train_loss", "val_loss", "val_macro_f1"])
        for row in self.epochs:
            writer.writerow([row.epoch, row.train_loss, row.val_loss, row.val_macro_f1])
        return buf.getvalue()

    def summary(self) -> dict:
        best = self.epochs[self.best_epoch - 1]
        return {
            "epochs_run": len(self.epochs),
            "best_epoch": self.best_epoch,
            "best_val_macro_f1": best.val_macro_f1,
            "wall_time_seconds": self.wall_time,
        }


@dataclass
class EncodedDataset:
    """Model-ready split: id/feature tensors (or raw texts) plus labels."""

    inputs: torch.Tensor | list[str]
    lengths: torch.Tensor | None
    labels: torch.Tensor

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, idx: list[int]) -> tuple:
        if isinstance(self.inputs, list):
            inputs = [self.inputs[i] for i in idx]
        else:
            inputs = self.inputs[idx]
        lengths = self.lengths[idx] if self.lengths is not None else None
        return inputs, lengths, self.labels[idx]


@dataclass
class TrainedModel:
    """Trained weights plus everything `predict` needs to rebuild the pipeline."""

    model: nn.Module
    family: ModelFamily
    classes: tuple[str, ...]
    model_spec: ModelSpec | None = None
    vocab: Vocab | None = None
    preprocess_config: dict | None = None
    encoder_info: dict | None = None
    feature_mode: str | None = None
    max_len: int | None = None
    seed: int = 0
    train_config: dict = field(default_factory=dict)


def _forward(model: nn.Module, inputs, lengths) -> torch.Tensor:
    if lengths is None:
        return model(inputs)
    return model(inputs, lengths)


def _loss_fn(labels: torch.Tensor):
    if labels.dtype == torch.float32 or labels.dtype == torch.float64:
        bce = nn.BCEWithLogitsLoss()
        return lambda logits, y: bce(logits.squeeze(-1), y)
    ce = nn.CrossEntropyLoss()
    return lambda logits, y: ce(logits, y)


def predictions_from_logits(logits: torch.Tensor, binary: bool) -> np.ndarray:
    if binary:
        return (torch.sigmoid(logits.squeeze(-1)) >= 0.5).long().numpy()
    # numpy argmax guarantees the lowest index on ties
    return logits.detach().numpy().argmax(axis=1)


def _eval_split(model: nn.Module, data: EncodedDataset, loss_fn, batch_size: int, num_classes: int):
    model.eval()
    binary = num_classes == 1
    total_loss = 0.0
    preds: list[np.ndarray] = []
    with torch.no_grad():
        for start in range(0, len(data), batch_size):
            idx = list(range(start, min(start + batch_size, len(data))))
            inputs, lengths, labels = data.take(idx)
            logits = _forward(model, inputs, lengths)
            total_loss += loss_fn(logits, labels).item() * len(idx)
            preds.append(predictions_from_logits(logits, binary))
    y_pred = np.concatenate(preds) if preds else np.array([], dtype=int)
    y_true = data.labels.long().numpy() if binary else data.labels.numpy()
    k = 2 if binary else num_classes
    cm = metrics.confusion_matrix(y_true.tolist(), y_pred.tolist(), k)
    report = metrics.f1_scores(cm)
    return total_loss / len(data), report.macro_f1


def train(
    model: nn.Module,
    train_data: EncodedDataset,
    val_data: EncodedDataset,
    cfg: TrainConfig,
    num_classes: int | None = None,
) -> tuple[nn.Module, TrainHistory]:
    """Run the seeded loop; return the best-epoch weights and the history."""
    if len(train_data) == 0:
        raise ValidationError("training set is empty")
    if len(val_data) == 0:
        raise ValidationError("validation set is empty; model selection needs one")
    if num_classes is None:
        num_classes = 1 if train_data.labels.dtype.is_floating_point else int(train_data.labels.max()) + 1

    loss_fn = _loss_fn(train_data.labels)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    history: list[EpochStats] = []
    best_f1 = -1.0
    best_state: dict | None = None
    best_epoch = 0
    stale = 0
    started = time.perf_counter()

    n = len(train_data)
    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed)
        for epoch in range(1, cfg.max_epochs + 1):
            model.train()
            order = list(range(n))
            random.Random(cfg.seed * 1_000_003 + epoch).shuffle(order)
            running = 0.0
            for batch_index, start in enumerate(range(0, n, cfg.batch_size)):
                idx = order[start : start + cfg.batch_size]
                inputs, lengths, labels = train_data.take(idx)
                logits = _forward(model, inputs, lengths)
                loss = loss_fn(logits, labels)
                if not torch.isfinite(loss):
                    raise TrainingDiverged(cfg.lr, epoch, batch_index)
                optimizer.zero_grad()
                loss.backward()
                if cfg.grad_clip > 0:
                    nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
                optimizer.step()
                running += loss.item() * len(idx)

            train_loss = running / n
            val_loss, val_f1 = _eval_split(model, val_data, loss_fn, cfg.batch_size, num_classes)
            history.append(EpochStats(epoch, train_loss, val_loss, val_f1))

            if val_f1 > best_f1:
                best_f1 = val_f1
                best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
                stale = 0
            else:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    break

    model.load_state_dict(best_state)
    return model, TrainHistory(
        epochs=history, best_epoch=best_epoch, wall_time=time.perf_counter() - started
    )


def save_checkpoint(tm: TrainedModel, directory: str | Path) -> Path:
    """Write manifest + weights (+ vocab) so `predict` needs only the directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "family": tm.family.value,
        "classes": list(tm.classes),
        "model_spec": tm.model_spec.to_dict() if tm.model_spec else None,
        "preprocess_config": tm.preprocess_config,
        "encoder_info": tm.encoder_info,
        "feature_mode": tm.feature_mode,
        "max_len": tm.max_len,
        "seed": tm.seed,
        "train_config": tm.train_config,
        "has_vocab": tm.vocab is not None,
    }
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    torch.save(tm.model.state_dict(), directory / WEIGHTS_NAME)
    if tm.vocab is not None:
        tm.vocab.save(directory / VOCAB_NAME)
    return directory


def load_checkpoint(directory: str | Path, finetune_backbone: nn.Module | None = None) -> TrainedModel:
    """Rebuild the architecture from the manifest and restore exact weights."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.exists():
        raise CheckpointError(f"no checkpoint manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format {manifest.get('format_version')} not supported "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    weights_path = directory / WEIGHTS_NAME
    if not weights_path.exists():
        raise CheckpointError(f"missing weight blob {weights_path}")

    family = ModelFamily(manifest["family"])
    spec = ModelSpec.from_dict(manifest["model_spec"]) if manifest["model_spec"] else None
    vocab = Vocab.load(directory / VOCAB_NAME) if manifest.get("has_vocab") else None

    if family in RECURRENT_FAMILIES:
        model: nn.Module = RecurrentClassifier(spec)
    elif family is ModelFamily.BERT_FEATURE_GRU:
        model = FeatureGruClassifier(spec)
    else:
        from .pretrained import FineTuneClassifier, resolve_backbone

        info = manifest.get("encoder_info") or {}
        backbone = finetune_backbone or resolve_backbone(info)
        model = FineTuneClassifier(backbone, num_classes=len(manifest["classes"]) if len(manifest["classes"]) > 2 else 1)

    try:
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"could not restore weights from {weights_path}: {exc}") from exc

    return TrainedModel(
        model=model.eval(),
        family=family,
        classes=tuple(manifest["classes"]),
        model_spec=spec,
        vocab=vocab,
        preprocess_config=manifest.get("preprocess_config"),
        encoder_info=manifest.get("encoder_info"),
        feature_mode=manifest.get("feature_mode"),
        max_len=manifest.get("max_len"),
        seed=manifest.get("seed", 0),
        train_config=manifest.get("train_config", {}),
    )
