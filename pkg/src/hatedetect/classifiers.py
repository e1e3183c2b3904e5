"""Scikit-learn style classifiers wrapping the four model families.

Every classifier follows the estimator contract (constructor params stored
verbatim, fit/predict/predict_proba, get_params/set_params), so grid
search, cloning and pipelines compose the usual way. Fitted classifiers
serialize to checkpoint directories that carry the full inference
pipeline: preprocessing config, vocabulary or encoder binding, weights.
"""

from __future__ import annotations

import random
from pathlib import Path

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin

from . import pretrained as enc
from .evaluate import EvalReport, confusion_matrix, f1_scores
from .models import (
    HyperParams,
    ModelFamily,
    ModelSpec,
    build_model,
)
from .preprocess import PreprocessConfig, preprocess
from .train import (
    EncodedDataset,
    TrainConfig,
    TrainedModel,
    load_checkpoint,
    predictions_from_logits,
    save_checkpoint,
    train,
)
from .validation import ValidationError, check_fitted, check_text_list
from .vocab import (
    DEFAULT_MAX_LEN,
    DEFAULT_MIN_FREQ,
    VocabLevel,
    build_vocab,
    encode,
    load_pretrained_embeddings,
)


def head_width(classes: tuple[str, ...]) -> int:
    """Output units: a single sigmoid logit for binary, one per class otherwise."""
    if len(classes) < 2:
        raise ValidationError(f"need at least 2 classes, got {classes}")
    return 1 if len(classes) == 2 else len(classes)


def _resolve_classes(y: list, declared) -> tuple[str, ...]:
    if declared is not None:
        classes = tuple(str(c) for c in declared)
    else:
        classes = tuple(sorted({str(label) for label in y}))
    if len(classes) < 2:
        raise ValidationError(f"training labels span {classes}; need at least 2 classes")
    return classes


def _label_tensor(y: list, classes: tuple[str, ...]) -> torch.Tensor:
    index = {c: i for i, c in enumerate(classes)}
    try:
        ids = [index[str(label)] for label in y]
    except KeyError as exc:
        raise ValidationError(f"label {exc.args[0]!r} not among classes {classes}") from None
    if len(classes) == 2:
        return torch.tensor(ids, dtype=torch.float32)
    return torch.tensor(ids, dtype=torch.long)


def _holdout(X: list[str], y: list, fraction: float, seed: int) -> tuple[list, list, list, list]:
    """Seeded tail holdout used when fit() is given no explicit validation set."""
    n = len(X)
    n_val = max(1, int(n * fraction))
    if n_val >= n:
        raise ValidationError(f"{n} examples are too few to hold out a validation set")
    order = list(range(n))
    random.Random(seed).shuffle(order)
    val_idx = set(order[:n_val])
    X_tr = [X[i] for i in range(n) if i not in val_idx]
    y_tr = [y[i] for i in range(n) if i not in val_idx]
    X_val = [X[i] for i in range(n) if i in val_idx]
    y_val = [y[i] for i in range(n) if i in val_idx]
    return X_tr, y_tr, X_val, y_val


class _TextClassifierBase(BaseEstimator, ClassifierMixin):
    """Shared fit/predict plumbing; subclasses provide encoding and model."""

    def _preprocess_config(self) -> PreprocessConfig | None:
        if not self.preprocess:
            return None
        return PreprocessConfig(lowercase=self.lowercase)

    def _normalize(self, texts: list[str]) -> list[str]:
        cfg = self._preprocess_config()
        if cfg is None:
            return texts
        return [preprocess(t, cfg) for t in texts]

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            lr=self.lr,
            max_epochs=self.max_epochs,
            early_stop_patience=self.patience,
            seed=self.seed,
        )

    def fit(self, X, y, validation=None):
        X = check_text_list(X)
        y = list(y)
        if len(X) != len(y):
            raise ValidationError(f"{len(X)} texts but {len(y)} labels")
        if len(X) == 0:
            raise ValidationError("cannot fit on an empty dataset")
        classes = _resolve_classes(y, getattr(self, "classes", None))

        if validation is None:
            X, y, X_val, y_val = _holdout(X, y, 0.1, self.seed)
        else:
            X_val, y_val = check_text_list(validation[0]), list(validation[1])
            if len(X_val) != len(y_val):
                raise ValidationError(f"{len(X_val)} validation texts but {len(y_val)} labels")

        X_norm = self._normalize(X)
        X_val_norm = self._normalize(X_val)
        self._bind(X_norm, classes)

        train_data = EncodedDataset(
            *self._encode_texts(X_norm), labels=_label_tensor(y, classes)
        )
        val_data = EncodedDataset(
            *self._encode_texts(X_val_norm), labels=_label_tensor(y_val, classes)
        )

        model = self._build(classes)
        model, history = train(model, train_data, val_data, self._train_config(),
                               num_classes=head_width(classes))

        self.classes_ = np.asarray(classes, dtype=object)
        self.history_ = history
        self.trained_ = self._trained_model(model, classes)
        return self

    # subclass hooks -----------------------------------------------------
    def _bind(self, train_texts: list[str], classes: tuple[str, ...]) -> None:
        raise NotImplementedError

    def _encode_texts(self, texts: list[str]) -> tuple:
        raise NotImplementedError

    def _build(self, classes: tuple[str, ...]) -> torch.nn.Module:
        raise NotImplementedError

    def _trained_model(self, model, classes: tuple[str, ...]) -> TrainedModel:
        raise NotImplementedError

    # inference ----------------------------------------------------------
    def _logits(self, X) -> torch.Tensor:
        check_fitted(self, "trained_")
        texts = self._normalize(check_text_list(X))
        if not texts:
            return torch.empty(0, 1)
        inputs, lengths = self._encode_texts(texts)
        model = self.trained_.model
        model.eval()
        outputs = []
        bs = self.batch_size
        with torch.no_grad():
            for start in range(0, len(texts), bs):
                if isinstance(inputs, list):
                    chunk = inputs[start : start + bs]
                    outputs.append(model(chunk))
                else:
                    chunk = inputs[start : start + bs]
                    outputs.append(model(chunk, lengths[start : start + bs]))
        return torch.cat(outputs) if outputs else torch.empty(0, 1)

    def predict(self, X) -> np.ndarray:
        logits = self._logits(X)
        idx = predictions_from_logits(logits, binary=len(self.classes_) == 2)
        return self.classes_[idx]

    def predict_proba(self, X) -> np.ndarray:
        logits = self._logits(X)
        if len(self.classes_) == 2:
            pos = torch.sigmoid(logits.squeeze(-1)).numpy()
            return np.stack([1 - pos, pos], axis=1)
        return torch.softmax(logits, dim=1).numpy()

    def evaluate(self, X, y) -> EvalReport:
        """Compare predictions against labels with the macro/weighted F1 report."""
        check_fitted(self, "trained_")
        classes = tuple(self.classes_)
        index = {c: i for i, c in enumerate(classes)}
        y_true = [index[str(label)] for label in y]
        y_pred = [index[str(label)] for label in self.predict(X)]
        cm = confusion_matrix(y_true, y_pred, len(classes))
        return f1_scores(cm, class_names=classes)

    def save(self, directory: str | Path) -> Path:
        check_fitted(self, "trained_")
        return save_checkpoint(self.trained_, directory)


class RecurrentTextClassifier(_TextClassifierBase):
    """Char- or word-level LSTM classifier over raw texts.

    ``level="char"`` reads texts as character sequences, ``level="word"``
    as whitespace tokens; word models can start from pretrained vectors
    given a vector file path.
    """

    def __init__(
        self,
        level: str = "char",
        embedding_dim: int = 50,
        hidden_dim: int = 16,
        dropout: float = 0.5,
        num_layers: int = 1,
        pretrained_embeddings_path: str | None = None,
        min_freq: int | None = None,
        max_len: int | None = None,
        classes: tuple | None = None,
        preprocess: bool = True,
        lowercase: bool = False,
        batch_size: int = 32,
        lr: float = 1e-3,
        max_epochs: int = 50,
        patience: int = 5,
        seed: int = 0,
        grid_constrained: bool = False,
    ):
        self.level = level
        self.embedding_dim = embedding_dim
        self.hidden_dim = hidden_dim
        self.dropout = dropout
        self.num_layers = num_layers
        self.pretrained_embeddings_path = pretrained_embeddings_path
        self.min_freq = min_freq
        self.max_len = max_len
        self.classes = classes
        self.preprocess = preprocess
        self.lowercase = lowercase
        self.batch_size = batch_size
        self.lr = lr
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed
        self.grid_constrained = grid_constrained

    @property
    def _family(self) -> ModelFamily:
        if self.level == "char":
            return ModelFamily.CHAR_LSTM
        if self.level == "word":
            return ModelFamily.WORD_LSTM
        raise ValidationError(f"level must be 'char' or 'word', got {self.level!r}")

    def _bind(self, train_texts: list[str], classes: tuple[str, ...]) -> None:
        level = VocabLevel.CHAR if self.level == "char" else VocabLevel.WORD
        min_freq = self.min_freq if self.min_freq is not None else DEFAULT_MIN_FREQ[level]
        self.vocab_ = build_vocab(train_texts, level, min_freq)
        self.max_len_ = self.max_len if self.max_len is not None else DEFAULT_MAX_LEN[level]

    def _encode_texts(self, texts: list[str]) -> tuple:
        seqs = [encode(t, self.vocab_, self.max_len_) for t in texts]
        ids = torch.tensor([s.ids for s in seqs], dtype=torch.long)
        lengths = torch.tensor([s.true_length for s in seqs], dtype=torch.long)
        return ids, lengths

    def _build(self, classes: tuple[str, ...]):
        if self.pretrained_embeddings_path is not None and self.level != "word":
            raise ValidationError("pretrained embeddings are a word-level option")
        hp = HyperParams(
            family=self._family,
            embedding_dim=self.embedding_dim,
            hidden_dim=self.hidden_dim,
            dropout=self.dropout,
            num_layers=self.num_layers,
            pretrained_embeddings=self.pretrained_embeddings_path is not None,
            num_classes=head_width(classes),
        )
        spec = ModelSpec(hyperparams=hp, vocab_size=len(self.vocab_))
        emb = None
        if self.pretrained_embeddings_path is not None:
            emb = load_pretrained_embeddings(
                self.pretrained_embeddings_path, self.vocab_, self.embedding_dim, seed=self.seed
            )
            self.embedding_coverage_ = emb.coverage
        self.model_spec_ = spec
        return build_model(spec, emb=emb, seed=self.seed, grid_constrained=self.grid_constrained)

    def _trained_model(self, model, classes: tuple[str, ...]) -> TrainedModel:
        cfg = self._preprocess_config()
        return TrainedModel(
            model=model,
            family=self._family,
            classes=classes,
            model_spec=self.model_spec_,
            vocab=self.vocab_,
            preprocess_config=cfg.to_dict() if cfg else None,
            max_len=self.max_len_,
            seed=self.seed,
            train_config=self._train_config().to_dict(),
        )


class FrozenEncoderGruClassifier(_TextClassifierBase):
    """GRU head trained on features from a frozen pretrained encoder.

    The encoder only runs forward (its weights are never touched); token
    vectors are cached on disk so repeated fits over the same texts skip
    the encoder entirely.
    """

    def __init__(
        self,
        variant: str = "base",
        hidden_dim: int = 32,
        dropout: float = 0.25,
        num_layers: int = 1,
        mode: str = "sequence",
        encoder=None,
        cache_dir: str | None = None,
        classes: tuple | None = None,
        preprocess: bool = True,
        lowercase: bool = False,
        batch_size: int = 32,
        lr: float = 1e-3,
        max_epochs: int = 50,
        patience: int = 5,
        seed: int = 0,
    ):
        self.variant = variant
        self.hidden_dim = hidden_dim
        self.dropout = dropout
        self.num_layers = num_layers
        self.mode = mode
        self.encoder = encoder
        self.cache_dir = cache_dir
        self.classes = classes
        self.preprocess = preprocess
        self.lowercase = lowercase
        self.batch_size = batch_size
        self.lr = lr
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed

    def _resolved_encoder(self):
        if self.encoder is not None:
            return self.encoder
        return enc.HubEncoder.load(enc.get_variant(self.variant))

    def _effective_variant(self) -> enc.EncoderVariant:
        encoder = self._encoder_
        if isinstance(encoder, enc.HubEncoder):
            return encoder.variant
        # stub encoders carry their own width; keep the variant name for bookkeeping
        base = enc.get_variant(self.variant) if self.variant in enc.VARIANTS else None
        max_tokens = base.max_tokens if base else 128
        return enc.EncoderVariant(name=self.variant, hidden_width=encoder.width, max_tokens=max_tokens)

    def _bind(self, train_texts: list[str], classes: tuple[str, ...]) -> None:
        self._encoder_ = self._resolved_encoder()
        self.variant_ = self._effective_variant()

    def _encode_texts(self, texts: list[str]) -> tuple:
        feats = enc.encode_features(
            texts, self.variant_, cache_dir=self.cache_dir, encoder=self._encoder_, mode=self.mode
        )
        width = self.variant_.hidden_width
        arrays = [
            f.vectors if f.vectors.ndim == 2 else f.vectors.reshape(1, width) for f in feats
        ]
        max_t = max(a.shape[0] for a in arrays)
        batch = np.zeros((len(arrays), max_t, width), dtype=np.float32)
        lengths = torch.zeros(len(arrays), dtype=torch.long)
        for i, a in enumerate(arrays):
            batch[i, : a.shape[0]] = a
            lengths[i] = a.shape[0]
        return torch.from_numpy(batch), lengths

    def _build(self, classes: tuple[str, ...]):
        hp = HyperParams(
            family=ModelFamily.BERT_FEATURE_GRU,
            hidden_dim=self.hidden_dim,
            dropout=self.dropout,
            num_layers=self.num_layers,
            encoder_variant=self.variant_.name,
            num_classes=head_width(classes),
        )
        spec = ModelSpec(hyperparams=hp, input_width=self.variant_.hidden_width)
        self.model_spec_ = spec
        return build_model(spec, seed=self.seed)

    def _trained_model(self, model, classes: tuple[str, ...]) -> TrainedModel:
        cfg = self._preprocess_config()
        return TrainedModel(
            model=model,
            family=ModelFamily.BERT_FEATURE_GRU,
            classes=classes,
            model_spec=self.model_spec_,
            preprocess_config=cfg.to_dict() if cfg else None,
            encoder_info=enc.encoder_info(self._encoder_),
            feature_mode=self.mode,
            seed=self.seed,
            train_config=self._train_config().to_dict(),
        )


class FineTunedEncoderClassifier(_TextClassifierBase):
    """End-to-end fine-tuning: every encoder weight trains with the head.

    Defaults follow the encoder authors' recommended schedule (lr 2e-5,
    3 epochs, batch 32).
    """

    def __init__(
        self,
        variant: str = "base",
        backbone=None,
        classes: tuple | None = None,
        preprocess: bool = True,
        lowercase: bool = False,
        batch_size: int = 32,
        lr: float = 2e-5,
        max_epochs: int = 3,
        patience: int = 2,
        seed: int = 0,
    ):
        self.variant = variant
        self.backbone = backbone
        self.classes = classes
        self.preprocess = preprocess
        self.lowercase = lowercase
        self.batch_size = batch_size
        self.lr = lr
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed

    def _bind(self, train_texts: list[str], classes: tuple[str, ...]) -> None:
        self._backbone_ = self.backbone
        if self._backbone_ is None:
            self._backbone_ = enc.HubFineTuneBackbone.load(enc.get_variant(self.variant))

    def _encode_texts(self, texts: list[str]) -> tuple:
        return list(texts), None

    def _build(self, classes: tuple[str, ...]):
        variant = (
            enc.get_variant(self.variant)
            if self.variant in enc.VARIANTS
            else enc.EncoderVariant(name=self.variant, hidden_width=self._backbone_.width)
        )
        if self._backbone_.width != variant.hidden_width:
            variant = enc.EncoderVariant(name=self.variant, hidden_width=self._backbone_.width)
        return enc.build_finetune_classifier(
            variant, head_width(classes), backbone=self._backbone_, seed=self.seed
        )

    def _trained_model(self, model, classes: tuple[str, ...]) -> TrainedModel:
        cfg = self._preprocess_config()
        return TrainedModel(
            model=model,
            family=ModelFamily.BERT_FINETUNE,
            classes=classes,
            preprocess_config=cfg.to_dict() if cfg else None,
            encoder_info=enc.encoder_info(self._backbone_),
            seed=self.seed,
            train_config=self._train_config().to_dict(),
        )


class Predictor:
    """Inference pipeline rebuilt from a TrainedModel (usually a checkpoint)."""

    def __init__(self, tm: TrainedModel, encoder=None, cache_dir: str | None = None, batch_size: int = 64):
        self.tm = tm
        self.cache_dir = cache_dir
        self.batch_size = batch_size
        self._encoder = encoder
        if tm.family is ModelFamily.BERT_FEATURE_GRU and self._encoder is None:
            self._encoder = enc.resolve_encoder(tm.encoder_info or {})

    @property
    def classes(self) -> tuple[str, ...]:
        return self.tm.classes

    def _normalize(self, texts: list[str]) -> list[str]:
        if self.tm.preprocess_config is None:
            return texts
        cfg = PreprocessConfig.from_dict(self.tm.preprocess_config)
        return [preprocess(t, cfg) for t in texts]

    def _encode(self, texts: list[str]) -> tuple:
        tm = self.tm
        if tm.family in (ModelFamily.CHAR_LSTM, ModelFamily.WORD_LSTM):
            seqs = [encode(t, tm.vocab, tm.max_len) for t in texts]
            ids = torch.tensor([s.ids for s in seqs], dtype=torch.long)
            lengths = torch.tensor([s.true_length for s in seqs], dtype=torch.long)
            return ids, lengths
        if tm.family is ModelFamily.BERT_FEATURE_GRU:
            width = tm.model_spec.input_width
            info = tm.encoder_info or {}
            variant = enc.EncoderVariant(
                name=info.get("variant", info.get("kind", "custom")), hidden_width=width
            )
            feats = enc.encode_features(
                texts, variant, cache_dir=self.cache_dir, encoder=self._encoder,
                mode=tm.feature_mode or "sequence",
            )
            arrays = [f.vectors if f.vectors.ndim == 2 else f.vectors.reshape(1, width) for f in feats]
            max_t = max(a.shape[0] for a in arrays)
            batch = np.zeros((len(arrays), max_t, width), dtype=np.float32)
            lengths = torch.zeros(len(arrays), dtype=torch.long)
            for i, a in enumerate(arrays):
                batch[i, : a.shape[0]] = a
                lengths[i] = a.shape[0]
            return torch.from_numpy(batch), lengths
        return list(texts), None

    def logits(self, X) -> torch.Tensor:
        texts = self._normalize(check_text_list(X))
        if not texts:
            return torch.empty(0, 1)
        inputs, lengths = self._encode(texts)
        model = self.tm.model
        model.eval()
        outputs = []
        with torch.no_grad():
            for start in range(0, len(texts), self.batch_size):
                if lengths is None:
                    outputs.append(model(inputs[start : start + self.batch_size]))
                else:
                    outputs.append(
                        model(inputs[start : start + self.batch_size], lengths[start : start + self.batch_size])
                    )
        return torch.cat(outputs)

    def predict_indices(self, X) -> np.ndarray:
        if len(X) == 0:
            return np.array([], dtype=int)
        return predictions_from_logits(self.logits(X), binary=len(self.tm.classes) == 2)

    def predict(self, X) -> list[str]:
        return [self.tm.classes[i] for i in self.predict_indices(X)]


def load_predictor(
    directory: str | Path, encoder=None, backbone=None, cache_dir: str | None = None
) -> Predictor:
    tm = load_checkpoint(directory, finetune_backbone=backbone)
    return Predictor(tm, encoder=encoder, cache_dir=cache_dir)


def evaluate_model(tm: TrainedModel, ds, encoder=None, cache_dir: str | None = None) -> EvalReport:
    """Score a trained model on a labeled Dataset (macro/weighted F1 report)."""
    try:
        labels = ds.labels(required=True)
    except ValidationError as exc:
        raise ValidationError(f"{exc}; evaluation needs labels, use `predict` for unlabeled data") from None
    predictor = Predictor(tm, encoder=encoder, cache_dir=cache_dir)
    classes = tm.classes
    index = {c: i for i, c in enumerate(classes)}
    unknown = sorted({lab for lab in labels if lab not in index})
    if unknown:
        raise ValidationError(
            f"dataset labels {unknown} are outside the model's classes {classes}; "
            "check the task/taxonomy pairing"
        )
    y_true = [index[lab] for lab in labels]
    y_pred = predictor.predict_indices(ds.texts).tolist()
    cm = confusion_matrix(y_true, y_pred, len(classes))
    return f1_scores(cm, class_names=classes)
