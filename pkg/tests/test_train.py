from __future__ import annotations

import copy
import importlib
import json

import pytest
import torch

# the package re-exports a `train` function, so fetch the module itself
train_mod = importlib.import_module("hatedetect.train")
from hatedetect.models import HyperParams, ModelFamily, ModelSpec, build_model
from hatedetect.train import (
    CheckpointError,
    EncodedDataset,
    TrainConfig,
    TrainedModel,
    TrainingDiverged,
    load_checkpoint,
    save_checkpoint,
    train,
)
from hatedetect.validation import ValidationError
from hatedetect.vocab import Vocab, VocabLevel


def tiny_spec(num_classes=1, dropout=0.25):
    hp = HyperParams(
        family=ModelFamily.CHAR_LSTM,
        embedding_dim=4,
        hidden_dim=3,
        dropout=dropout,
        num_classes=num_classes,
    )
    return ModelSpec(hyperparams=hp, vocab_size=10)


def tiny_data(n=16, t=6, seed=0, binary=True):
    g = torch.Generator().manual_seed(seed)
    ids = torch.randint(2, 10, (n, t), generator=g)
    lengths = torch.randint(1, t + 1, (n,), generator=g)
    for i in range(n):
        ids[i, lengths[i] :] = 0
    if binary:
        labels = (torch.arange(n) % 2).float()
    else:
        labels = torch.arange(n) % 3
    return EncodedDataset(inputs=ids, lengths=lengths, labels=labels)


class TestTrainLoop:
    def test_history_is_bit_identical_across_runs(self):
        cfg = TrainConfig(batch_size=4, max_epochs=5, early_stop_patience=4, seed=7)
        data = tiny_data()
        val = tiny_data(seed=1)
        model_a, hist_a = train(build_model(tiny_spec(), seed=3), data, val, cfg)
        model_b, hist_b = train(build_model(tiny_spec(), seed=3), data, val, cfg)
        for ea, eb in zip(hist_a.epochs, hist_b.epochs):
            assert ea.train_loss == eb.train_loss
            assert ea.val_loss == eb.val_loss
            assert ea.val_macro_f1 == eb.val_macro_f1
        assert hist_a.best_epoch == hist_b.best_epoch
        for pa, pb in zip(model_a.parameters(), model_b.parameters()):
            assert torch.equal(pa, pb)

    def test_strictly_decreasing_f1_stops_after_patience(self, monkeypatch):
        series = iter([0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2])
        monkeypatch.setattr(
            train_mod, "_eval_split", lambda *a, **k: (0.5, next(series))
        )
        cfg = TrainConfig(batch_size=4, max_epochs=20, early_stop_patience=5, seed=0)
        _, history = train(build_model(tiny_spec(), seed=0), tiny_data(), tiny_data(seed=1), cfg)
        assert len(history.epochs) == 6  # epoch 1 best, then 5 stale epochs
        assert history.best_epoch == 1

    def test_returned_weights_come_from_best_epoch(self, monkeypatch):
        snapshots = []
        real_eval = train_mod._eval_split
        series = iter([0.9, 0.5, 0.4, 0.3, 0.2, 0.1])

        def spy(model, *args, **kwargs):
            snapshots.append(copy.deepcopy(model.state_dict()))
            real_eval(model, *args, **kwargs)
            return (0.5, next(series))

        monkeypatch.setattr(train_mod, "_eval_split", spy)
        cfg = TrainConfig(batch_size=4, max_epochs=20, early_stop_patience=5, seed=0)
        model, history = train(
            build_model(tiny_spec(), seed=0), tiny_data(), tiny_data(seed=1), cfg
        )
        assert history.best_epoch == 1
        best = snapshots[0]
        for key, value in model.state_dict().items():
            assert torch.equal(value, best[key])

    def test_zero_lr_step_changes_nothing(self):
        model = build_model(tiny_spec(dropout=0.0), seed=2)
        before = copy.deepcopy(model.state_dict())
        cfg = TrainConfig(batch_size=32, lr=0.0, max_epochs=2, early_stop_patience=1, seed=0)
        model, _ = train(model, tiny_data(n=32), tiny_data(seed=1), cfg)
        for key, value in model.state_dict().items():
            assert torch.equal(value, before[key])

    def test_duplicated_batch_loss_equals_single_loss(self):
        model = build_model(tiny_spec(dropout=0.0), seed=2).eval()
        loss_fn = torch.nn.BCEWithLogitsLoss()
        ids = torch.tensor([[2, 3, 4, 0]])
        lengths = torch.tensor([3])
        label = torch.tensor([1.0])
        single = loss_fn(model(ids, lengths).squeeze(-1), label)
        dup = loss_fn(
            model(ids.repeat(4, 1), lengths.repeat(4)).squeeze(-1), label.repeat(4)
        )
        assert torch.equal(single, dup)

    def test_divergence_reports_context(self):
        class ExplodingModel(torch.nn.Module):
            def __init__(self):
                super().__init__()
                self.w = torch.nn.Parameter(torch.ones(1))

            def forward(self, ids, lengths):
                return torch.full((ids.shape[0], 1), float("inf")) * self.w

        with pytest.raises(TrainingDiverged) as excinfo:
            train(
                ExplodingModel(),
                tiny_data(),
                tiny_data(seed=1),
                TrainConfig(batch_size=4, max_epochs=2, early_stop_patience=1, seed=0),
            )
        assert excinfo.value.epoch == 1
        assert excinfo.value.batch_index == 0
        assert "lr" in str(excinfo.value)

    def test_empty_sets_rejected(self):
        cfg = TrainConfig(max_epochs=2, early_stop_patience=1)
        model = build_model(tiny_spec(), seed=0)
        empty = EncodedDataset(
            inputs=torch.zeros(0, 4, dtype=torch.long),
            lengths=torch.zeros(0, dtype=torch.long),
            labels=torch.zeros(0),
        )
        with pytest.raises(ValidationError, match="training"):
            train(model, empty, tiny_data(), cfg)
        with pytest.raises(ValidationError, match="validation"):
            train(model, tiny_data(), empty, cfg)

    def test_multiclass_loss_path(self):
        model = build_model(tiny_spec(num_classes=3), seed=1)
        cfg = TrainConfig(batch_size=4, max_epochs=3, early_stop_patience=2, seed=0)
        model, history = train(model, tiny_data(binary=False), tiny_data(seed=1, binary=False), cfg)
        assert len(history.epochs) >= 1
        assert all(0.0 <= e.val_macro_f1 <= 1.0 for e in history.epochs)

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            TrainConfig(early_stop_patience=50, max_epochs=50)
        with pytest.raises(ValidationError):
            TrainConfig(batch_size=0)


class TestHistory:
    def test_csv_render(self):
        cfg = TrainConfig(batch_size=8, max_epochs=3, early_stop_patience=2, seed=0)
        _, history = train(build_model(tiny_spec(), seed=0), tiny_data(), tiny_data(seed=1), cfg)
        lines = history.to_csv().strip().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss,val_macro_f1"
        assert len(lines) == len(history.epochs) + 1
        summary = history.summary()
        assert summary["best_epoch"] == history.best_epoch
        assert summary["epochs_run"] == len(history.epochs)


class TestCheckpoint:
    def _trained(self, tmp_path):
        model = build_model(tiny_spec(), seed=4)
        vocab = Vocab(
            level=VocabLevel.CHAR,
            token_to_id={"<pad>": 0, "<unk>": 1, "a": 2, "b": 3, "c": 4, "d": 5,
                         "e": 6, "f": 7, "g": 8, "h": 9},
            min_freq=1,
        )
        tm = TrainedModel(
            model=model,
            family=ModelFamily.CHAR_LSTM,
            classes=("NOT", "HOF"),
            model_spec=tiny_spec(),
            vocab=vocab,
            preprocess_config={"replace_mentions": True, "replace_links": True,
                               "replace_emojis": True, "collapse_whitespace": True,
                               "lowercase": False, "emoji_table_version": "emoji_names.json"},
            max_len=6,
            seed=4,
        )
        return tm, save_checkpoint(tm, tmp_path / "ckpt")

    def test_roundtrip_logits_bit_exact(self, tmp_path):
        tm, directory = self._trained(tmp_path)
        restored = load_checkpoint(directory)
        ids = torch.randint(2, 10, (5, 6), generator=torch.Generator().manual_seed(0))
        lengths = torch.tensor([6, 3, 2, 5, 1])
        tm.model.eval()
        assert torch.equal(tm.model(ids, lengths), restored.model(ids, lengths))

    def test_manifest_records_pipeline(self, tmp_path):
        tm, directory = self._trained(tmp_path)
        manifest = json.loads((directory / "manifest.json").read_text())
        assert manifest["preprocess_config"]["replace_mentions"] is True
        assert manifest["classes"] == ["NOT", "HOF"]
        restored = load_checkpoint(directory)
        assert restored.preprocess_config == tm.preprocess_config
        assert restored.vocab.token_to_id == tm.vocab.token_to_id
        assert restored.max_len == 6

    def test_missing_weights_named(self, tmp_path):
        _, directory = self._trained(tmp_path)
        (directory / "weights.pt").unlink()
        with pytest.raises(CheckpointError, match="weights.pt"):
            load_checkpoint(directory)

    def test_version_mismatch_rejected(self, tmp_path):
        _, directory = self._trained(tmp_path)
        manifest = json.loads((directory / "manifest.json").read_text())
        manifest["format_version"] = 99
        (directory / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(CheckpointError, match="format"):
            load_checkpoint(directory)

    def test_missing_manifest_rejected(self, tmp_path):
        with pytest.raises(CheckpointError, match="manifest"):
            load_checkpoint(tmp_path / "nowhere")

    def test_corrupted_weights_rejected(self, tmp_path):
        _, directory = self._trained(tmp_path)
        (directory / "weights.pt").write_bytes(b"garbage")
        with pytest.raises(CheckpointError, match="restore"):
            load_checkpoint(directory)
