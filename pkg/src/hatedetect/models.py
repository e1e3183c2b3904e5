"""Recurrent classifier architectures and their construction contracts.

Both model families share the same skeleton: an input stage (embedding
lookup or precomputed feature vectors), a stack of recurrent layers whose
final hidden state at the true sequence length is pooled, dropout, and a
fully-connected head. The recurrent cells use a single combined bias per
gate block, so parameter counts follow the closed forms in param_count
exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import torch
from torch import nn

from .validation import ValidationError, check_positive_int
from .vocab import PAD_ID


class ModelFamily(Enum):
    CHAR_LSTM = "char_lstm"
    WORD_LSTM = "word_lstm"
    BERT_FEATURE_GRU = "bert_feature_gru"
    BERT_FINETUNE = "bert_finetune"


# hyperparameter value lists per family, used in grid-constrained mode
GRID_EMBEDDING_DIMS = {
    ModelFamily.CHAR_LSTM: (50, 100, 200),
    ModelFamily.WORD_LSTM: (100, 300),
}
GRID_HIDDEN_DIMS = {
    ModelFamily.CHAR_LSTM: (16, 32, 64, 128),
    ModelFamily.WORD_LSTM: (32, 64, 128, 256, 512),
    ModelFamily.BERT_FEATURE_GRU: (32, 64, 128, 256, 512),
}
GRID_DROPOUTS = (0.25, 0.5, 0.75)

RECURRENT_FAMILIES = (ModelFamily.CHAR_LSTM, ModelFamily.WORD_LSTM)


@dataclass(frozen=True)
class HyperParams:
    """One grid point: architecture knobs for a single training run."""

    family: ModelFamily
    hidden_dim: int
    dropout: float
    embedding_dim: int | None = None
    encoder_variant: str | None = None
    pretrained_embeddings: bool = False
    num_classes: int = 1
    num_layers: int = 1

    def __post_init__(self):
        check_positive_int(self.hidden_dim, "hidden_dim")
        check_positive_int(self.num_classes, "num_classes")
        check_positive_int(self.num_layers, "num_layers")
        if not 0.0 <= self.dropout <= 1.0:
            raise ValidationError(f"dropout must be in [0, 1], got {self.dropout}")
        if self.family in RECURRENT_FAMILIES:
            if self.embedding_dim is None:
                raise ValidationError(f"{self.family.value} requires embedding_dim")
            check_positive_int(self.embedding_dim, "embedding_dim")
        if self.pretrained_embeddings and self.family is not ModelFamily.WORD_LSTM:
            raise ValidationError("pretrained_embeddings is a word-model option")

    def validate_grid(self) -> None:
        """Raise unless every knob sits on its declared grid."""
        if self.family in GRID_EMBEDDING_DIMS and self.embedding_dim not in GRID_EMBEDDING_DIMS[self.family]:
            raise ValidationError(
                f"embedding_dim {self.embedding_dim} off the {self.family.value} grid "
                f"{GRID_EMBEDDING_DIMS[self.family]}"
            )
        if self.family in GRID_HIDDEN_DIMS and self.hidden_dim not in GRID_HIDDEN_DIMS[self.family]:
            raise ValidationError(
                f"hidden_dim {self.hidden_dim} off the {self.family.value} grid "
                f"{GRID_HIDDEN_DIMS[self.family]}"
            )
        if self.dropout not in GRID_DROPOUTS:
            raise ValidationError(f"dropout {self.dropout} off the grid {GRID_DROPOUTS}")

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "hidden_dim": self.hidden_dim,
            "dropout": self.dropout,
            "embedding_dim": self.embedding_dim,
            "encoder_variant": self.encoder_variant,
            "pretrained_embeddings": self.pretrained_embeddings,
            "num_classes": self.num_classes,
            "num_layers": self.num_layers,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "HyperParams":
        payload = dict(payload)
        payload["family"] = ModelFamily(payload["family"])
        return cls(**payload)


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description: hyperparameters plus input binding."""

    hyperparams: HyperParams
    vocab_size: int | None = None  # recurrent families
    input_width: int | None = None  # feature family: encoder hidden width

    def __post_init__(self):
        hp = self.hyperparams
        if hp.family in RECURRENT_FAMILIES:
            if self.vocab_size is None or self.vocab_size < 2:
                raise ValidationError("recurrent families need vocab_size >= 2 (pad + unk)")
        elif hp.family is ModelFamily.BERT_FEATURE_GRU:
            if self.input_width is None:
                raise ValidationError("feature family needs input_width (encoder hidden width)")
            check_positive_int(self.input_width, "input_width")

    def to_dict(self) -> dict:
        return {
            "hyperparams": self.hyperparams.to_dict(),
            "vocab_size": self.vocab_size,
            "input_width": self.input_width,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelSpec":
        return cls(
            hyperparams=HyperParams.from_dict(payload["hyperparams"]),
            vocab_size=payload.get("vocab_size"),
            input_width=payload.get("input_width"),
        )


class SingleBiasLSTM(nn.Module):
    """One LSTM layer with a single combined bias per gate block.

    Parameters: weight_ih (4H, in), weight_hh (4H, H), bias (4H), i.e.
    4*((in + H) * H + H) trainable scalars.
    """

    def __init__(self, input_dim: int, hidden_dim: int):
        super().__init__()
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.weight_ih = nn.Parameter(torch.empty(4 * hidden_dim, input_dim))
        self.weight_hh = nn.Parameter(torch.empty(4 * hidden_dim, hidden_dim))
        self.bias = nn.Parameter(torch.empty(4 * hidden_dim))
        self.reset_parameters()

    def reset_parameters(self) -> None:
        k = 1.0 / math.sqrt(self.hidden_dim)
        for p in self.parameters():
            nn.init.uniform_(p, -k, k)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: (batch, time, input_dim) -> hidden states (batch, time, hidden_dim)."""
        batch, steps, _ = x.shape
        x_proj = x @ self.weight_ih.T + self.bias
        h = x.new_zeros(batch, self.hidden_dim)
        c = x.new_zeros(batch, self.hidden_dim)
        outputs = []
        for t in range(steps):
            gates = x_proj[:, t] + h @ self.weight_hh.T
            i, f, g, o = gates.chunk(4, dim=1)
            c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
            h = torch.sigmoid(o) * torch.tanh(c)
            outputs.append(h)
        return torch.stack(outputs, dim=1)


class SingleBiasGRU(nn.Module):
    """One GRU layer with a single combined bias per gate block.

    Parameters: weight_ih (3H, in), weight_hh (3H, H), bias (3H), i.e.
    3*((in + H) * H + H) trainable scalars.
    """

    def __init__(self, input_dim: int, hidden_dim: int):
        super().__init__()
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.weight_ih = nn.Parameter(torch.empty(3 * hidden_dim, input_dim))
        self.weight_hh = nn.Parameter(torch.empty(3 * hidden_dim, hidden_dim))
        self.bias = nn.Parameter(torch.empty(3 * hidden_dim))
        self.reset_parameters()

    def reset_parameters(self) -> None:
        k = 1.0 / math.sqrt(self.hidden_dim)
        for p in self.parameters():
            nn.init.uniform_(p, -k, k)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch, steps, _ = x.shape
        hd = self.hidden_dim
        x_proj = x @ self.weight_ih.T + self.bias
        w_rz = self.weight_hh[: 2 * hd]
        w_n = self.weight_hh[2 * hd :]
        h = x.new_zeros(batch, hd)
        outputs = []
        for t in range(steps):
            x_t = x_proj[:, t]
            rz = torch.sigmoid(x_t[:, : 2 * hd] + h @ w_rz.T)
            r, z = rz.chunk(2, dim=1)
            n = torch.tanh(x_t[:, 2 * hd :] + (r * h) @ w_n.T)
            h = (1.0 - z) * n + z * h
            outputs.append(h)
        return torch.stack(outputs, dim=1)


def _recurrent_stack(kind: str, input_dim: int, hidden_dim: int, num_layers: int) -> nn.ModuleList:
    layer_cls = SingleBiasLSTM if kind == "lstm" else SingleBiasGRU
    layers = []
    for i in range(num_layers):
        layers.append(layer_cls(input_dim if i == 0 else hidden_dim, hidden_dim))
    return nn.ModuleList(layers)


def _final_states(outputs: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
    """Pick the hidden state at each sequence's true length (zeros for empty)."""
    batch, steps, _ = outputs.shape
    if lengths.numel() and int(lengths.max()) > steps:
        raise ValidationError(
            f"length {int(lengths.max())} exceeds the padded sequence length {steps}"
        )
    idx = (lengths - 1).clamp(min=0)
    final = outputs[torch.arange(batch), idx]
    return torch.where(lengths.unsqueeze(1) > 0, final, torch.zeros_like(final))


class RecurrentClassifier(nn.Module):
    """Embedding -> LSTM stack -> dropout -> linear head."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        hp = spec.hyperparams
        if hp.family not in RECURRENT_FAMILIES:
            raise ValidationError(f"RecurrentClassifier does not build {hp.family.value}")
        self.spec = spec
        self.embedding = nn.Embedding(spec.vocab_size, hp.embedding_dim, padding_idx=PAD_ID)
        self.recurrent = _recurrent_stack("lstm", hp.embedding_dim, hp.hidden_dim, hp.num_layers)
        self.dropout = nn.Dropout(hp.dropout)
        self.head = nn.Linear(hp.hidden_dim, hp.num_classes)
        with torch.no_grad():
            self.embedding.weight[PAD_ID].zero_()

    def forward(self, ids: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        if ids.numel() and int(ids.max()) >= self.spec.vocab_size:
            raise ValidationError(
                f"token id {int(ids.max())} out of range for vocab size {self.spec.vocab_size}"
            )
        x = self.embedding(ids)
        for layer in self.recurrent:
            x = layer(x)
        final = _final_states(x, lengths)
        return self.head(self.dropout(final))


class FeatureGruClassifier(nn.Module):
    """Precomputed token vectors -> GRU stack -> dropout -> linear head."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        hp = spec.hyperparams
        if hp.family is not ModelFamily.BERT_FEATURE_GRU:
            raise ValidationError(f"FeatureGruClassifier does not build {hp.family.value}")
        self.spec = spec
        self.recurrent = _recurrent_stack("gru", spec.input_width, hp.hidden_dim, hp.num_layers)
        self.dropout = nn.Dropout(hp.dropout)
        self.head = nn.Linear(hp.hidden_dim, hp.num_classes)

    def forward(self, features: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        if features.shape[-1] != self.spec.input_width:
            raise ValidationError(
                f"feature width {features.shape[-1]} does not match "
                f"expected encoder width {self.spec.input_width}"
            )
        x = features
        for layer in self.recurrent:
            x = layer(x)
        final = _final_states(x, lengths)
        return self.head(self.dropout(final))


def param_count(spec: ModelSpec) -> int:
    """Closed-form trainable parameter count for the recurrent families.

    LSTM families: V*E + 4*((E+H)*H + H) + (H*C + C); the feature-GRU head
    drops the embedding term and uses gate factor 3 with the encoder width
    as input. Extra layers add the same gate term with H-wide input.
    """
    hp = spec.hyperparams
    h = hp.hidden_dim
    c = hp.num_classes
    head = h * c + c
    if hp.family in RECURRENT_FAMILIES:
        e = hp.embedding_dim
        total = spec.vocab_size * e
        for i in range(hp.num_layers):
            d = e if i == 0 else h
            total += 4 * ((d + h) * h + h)
        return total + head
    if hp.family is ModelFamily.BERT_FEATURE_GRU:
        total = 0
        for i in range(hp.num_layers):
            d = spec.input_width if i == 0 else h
            total += 3 * ((d + h) * h + h)
        return total + head
    raise ValidationError(f"param_count is defined for recurrent families, not {hp.family.value}")


def build_model(
    spec: ModelSpec,
    emb=None,
    seed: int = 0,
    grid_constrained: bool = False,
) -> nn.Module:
    """Construct a seeded, reproducible model for a spec.

    ``emb`` (an EmbeddingMatrix) must be given exactly when the spec says
    pretrained_embeddings; its shape must match (vocab_size, embedding_dim).
    """
    hp = spec.hyperparams
    if grid_constrained:
        hp.validate_grid()
    if hp.pretrained_embeddings and emb is None:
        raise ValidationError("spec asks for pretrained embeddings but none were provided")
    if not hp.pretrained_embeddings and emb is not None:
        raise ValidationError("embeddings provided but spec has pretrained_embeddings=False")

    with torch.random.fork_rng():
        torch.manual_seed(seed)
        if hp.family in RECURRENT_FAMILIES:
            model: nn.Module = RecurrentClassifier(spec)
        elif hp.family is ModelFamily.BERT_FEATURE_GRU:
            model = FeatureGruClassifier(spec)
        else:
            raise ValidationError(
                "build_model covers the recurrent families; use "
                "pretrained.build_finetune_classifier for fine-tuning"
            )

    if emb is not None:
        if emb.rows.shape != (spec.vocab_size, hp.embedding_dim):
            raise ValidationError(
                f"embedding matrix shape {emb.rows.shape} does not match "
                f"(vocab_size={spec.vocab_size}, embedding_dim={hp.embedding_dim})"
            )
        with torch.no_grad():
            model.embedding.weight.copy_(torch.from_numpy(emb.rows))
    return model
