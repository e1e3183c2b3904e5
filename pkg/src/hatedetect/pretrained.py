"""Pretrained encoder wrappers: frozen feature extraction and fine-tuning.

Two usage modes mirror the two transfer-learning setups: a frozen encoder
turns texts into token-vector sequences (cached on disk, consumed by the
GRU head), or the whole encoder is fine-tuned behind a classification
head. A deterministic stub encoder with the same interface keeps every
downstream code path testable without network access or large weights.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .validation import ValidationError, check_positive_int, check_text_list

ENCODER_DIR_ENV = "HATEDETECT_ENCODER_DIR"
FEATURE_CACHE_ENV = "HATEDETECT_FEATURE_CACHE"

START_TOKEN = "[CLS]"
END_TOKEN = "[SEP]"

FINETUNE_DEFAULTS = {"lr": 2e-5, "max_epochs": 3, "batch_size": 32}


@dataclass(frozen=True)
class EncoderVariant:
    """Encoder size axis: standard hidden widths for base/large models."""

    name: str  # "base" | "large"
    hidden_width: int
    max_tokens: int = 128

    def __post_init__(self):
        check_positive_int(self.hidden_width, "hidden_width")
        check_positive_int(self.max_tokens, "max_tokens")


VARIANTS = {
    "base": EncoderVariant(name="base", hidden_width=768),
    "large": EncoderVariant(name="large", hidden_width=1024),
}

_HUB_MODEL_IDS = {"base": "bert-base-uncased", "large": "bert-large-uncased"}


def get_variant(name: str) -> EncoderVariant:
    if name not in VARIANTS:
        raise ValidationError(f"unknown encoder variant {name!r}; expected one of {tuple(VARIANTS)}")
    return VARIANTS[name]


@dataclass(frozen=True)
class FeatureMatrix:
    """Token-level (tokens x width) or pooled (width,) vectors for one text."""

    vectors: np.ndarray
    cache_key: str


class EncoderUnavailableError(RuntimeError):
    pass


class StubEncoder:
    """Deterministic fake encoder: token vectors from a seeded hash.

    Same interface as the real encoder wrapper (text in, float32 token
    vectors of the configured width out), so every downstream pipeline
    runs without network access or pretrained weights.
    """

    def __init__(self, width: int, seed: int = 0):
        check_positive_int(width, "width")
        self.width = width
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def _vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            digest = hashlib.sha256(f"{self.seed}|{self.width}|{token}".encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
            vec = rng.standard_normal(self.width).astype(np.float32)
            self._cache[token] = vec
        return vec

    def encode(self, texts: list[str], max_tokens: int) -> list[np.ndarray]:
        out = []
        for text in check_text_list(texts, "texts"):
            tokens = [START_TOKEN] + text.split() + [END_TOKEN]
            tokens = tokens[:max_tokens]
            out.append(np.stack([self._vector(tok) for tok in tokens]))
        return out

    def fingerprint(self) -> str:
        return hashlib.sha256(f"stub|{self.width}|{self.seed}".encode("utf-8")).hexdigest()


def encoder_stub(width: int, seed: int = 0) -> StubEncoder:
    return StubEncoder(width=width, seed=seed)


class HubEncoder:
    """Frozen transformer encoder loaded from local weights or the model hub."""

    def __init__(self, variant: EncoderVariant, model, tokenizer):
        self.variant = variant
        self.width = variant.hidden_width
        self._model = model.eval()
        self._tokenizer = tokenizer
        for p in self._model.parameters():
            p.requires_grad_(False)
        self._fingerprint: str | None = None

    @classmethod
    def load(cls, variant: EncoderVariant, weights_dir: str | None = None) -> "HubEncoder":
        source = weights_dir or os.environ.get(ENCODER_DIR_ENV) or _HUB_MODEL_IDS.get(variant.name)
        try:
            from transformers import AutoModel, AutoTokenizer

            local_only = bool(weights_dir or os.environ.get(ENCODER_DIR_ENV))
            tokenizer = AutoTokenizer.from_pretrained(source, local_files_only=local_only)
            model = AutoModel.from_pretrained(source, local_files_only=local_only)
        except Exception as exc:
            raise EncoderUnavailableError(
                f"could not load encoder weights for variant {variant.name!r} from {source!r}: "
                f"{exc}. Install the 'encoders' extra, then either allow hub downloads or set "
                f"{ENCODER_DIR_ENV} to a directory with the saved model and tokenizer."
            ) from exc
        encoder = cls(variant, model, tokenizer)
        hidden = getattr(model.config, "hidden_size", variant.hidden_width)
        if hidden != variant.hidden_width:
            raise ValidationError(
                f"loaded encoder reports hidden width {hidden}, expected {variant.hidden_width}"
            )
        return encoder

    def encode(self, texts: list[str], max_tokens: int, batch_size: int = 32) -> list[np.ndarray]:
        out = []
        texts = list(texts)
        for start in range(0, len(texts), batch_size):
            enc = self._tokenizer(
                texts[start : start + batch_size],
                padding=True,
                truncation=True,
                max_length=max_tokens,
                return_tensors="pt",
            )
            with torch.no_grad():
                hidden = self._model(**enc).last_hidden_state
            for row, m in zip(hidden, enc["attention_mask"]):
                out.append(row[: int(m.sum())].to(torch.float32).cpu().numpy())
        return out

    def fingerprint(self) -> str:
        if self._fingerprint is None:
            self._fingerprint = module_checksum(self._model)
        return self._fingerprint


def module_checksum(module: nn.Module) -> str:
    """Stable digest of a module's weights, for frozen-encoder assertions."""
    digest = hashlib.sha256()
    for key in sorted(module.state_dict()):
        tensor = module.state_dict()[key]
        digest.update(key.encode("utf-8"))
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


class FeatureCache:
    """Disk cache of encoder outputs: one raw-float32 blob + JSON sidecar per text.

    Writers publish atomically (temp file then rename), so a single writer
    can run alongside any number of readers.
    """

    def __init__(self, cache_dir: str | Path):
        self.root = Path(cache_dir)

    def _paths(self, variant: EncoderVariant, key: str) -> tuple[Path, Path]:
        base = self.root / variant.name / key
        return base.with_suffix(".bin"), base.with_suffix(".json")

    def get(self, variant: EncoderVariant, key: str) -> np.ndarray | None:
        blob, sidecar = self._paths(variant, key)
        if not blob.exists() or not sidecar.exists():
            return None
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
        data = np.frombuffer(blob.read_bytes(), dtype=np.float32)
        return data.reshape(meta["shape"]).copy()

    def put(self, variant: EncoderVariant, key: str, vectors: np.ndarray, encoder_checksum: str) -> None:
        blob, sidecar = self._paths(variant, key)
        blob.parent.mkdir(parents=True, exist_ok=True)
        meta = {
            "shape": list(vectors.shape),
            "width": int(vectors.shape[-1]),
            "token_count": int(vectors.shape[0]) if vectors.ndim == 2 else 1,
            "encoder_checksum": encoder_checksum,
        }
        tmp_blob = blob.with_suffix(".bin.tmp")
        tmp_blob.write_bytes(np.ascontiguousarray(vectors, dtype=np.float32).tobytes())
        os.replace(tmp_blob, blob)
        tmp_sidecar = sidecar.with_suffix(".json.tmp")
        tmp_sidecar.write_text(json.dumps(meta), encoding="utf-8")
        os.replace(tmp_sidecar, sidecar)


def feature_cache_key(text: str, variant: EncoderVariant, mode: str) -> str:
    raw = f"{variant.name}|{variant.max_tokens}|{mode}|{text}"
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()


def encode_features(
    texts: list[str],
    variant: EncoderVariant,
    cache_dir: str | Path | None = None,
    encoder=None,
    mode: str = "sequence",
) -> list[FeatureMatrix]:
    """Run the frozen encoder over texts, returning last-layer token states.

    ``mode="sequence"`` keeps the per-token vectors (truncated at the
    variant's max_tokens); ``mode="pooled"`` mean-pools them into one
    vector per text. Results are cached under cache_dir keyed by
    (text, variant, mode); cache hits skip the encoder entirely.
    """
    if mode not in ("sequence", "pooled"):
        raise ValidationError(f"mode must be 'sequence' or 'pooled', got {mode!r}")
    texts = check_text_list(texts, "texts")
    if encoder is not None and encoder.width != variant.hidden_width:
        raise ValidationError(
            f"encoder width {encoder.width} does not match variant width {variant.hidden_width}"
        )
    if cache_dir is None:
        cache_dir = os.environ.get(FEATURE_CACHE_ENV)
    cache = FeatureCache(cache_dir) if cache_dir else None

    keys = [feature_cache_key(text, variant, mode) for text in texts]
    results: list[np.ndarray | None] = [None] * len(texts)
    misses: list[int] = []
    for i, key in enumerate(keys):
        cached = cache.get(variant, key) if cache else None
        if cached is not None:
            results[i] = cached
        else:
            misses.append(i)

    if misses:
        # resolve the encoder lazily: a fully-cached corpus never needs weights
        if encoder is None:
            encoder = HubEncoder.load(variant)
        encoded = encoder.encode([texts[i] for i in misses], variant.max_tokens)
        checksum = encoder.fingerprint()
        for i, vectors in zip(misses, encoded):
            vectors = np.ascontiguousarray(vectors, dtype=np.float32)
            if mode == "pooled":
                vectors = vectors.mean(axis=0)
            if not np.isfinite(vectors).all():
                raise ValidationError(f"encoder produced non-finite features for text index {i}")
            if cache:
                cache.put(variant, keys[i], vectors, checksum)
            results[i] = vectors

    return [FeatureMatrix(vectors=vec, cache_key=key) for vec, key in zip(results, keys)]


class FineTuneClassifier(nn.Module):
    """Trainable encoder backbone plus a pooled classification head.

    The backbone is any module exposing ``width`` and mapping a list of
    strings to pooled (batch, width) representations; all its weights stay
    trainable.
    """

    def __init__(self, backbone: nn.Module, num_classes: int):
        super().__init__()
        self.backbone = backbone
        self.head = nn.Linear(backbone.width, num_classes)
        self.num_classes = num_classes

    def forward(self, texts: list[str], lengths=None) -> torch.Tensor:
        return self.head(self.backbone(texts))


class HubFineTuneBackbone(nn.Module):
    """Real-transformer backbone: tokenizes and returns the start-token state."""

    def __init__(self, variant: EncoderVariant, model, tokenizer):
        super().__init__()
        self.variant = variant
        self.width = variant.hidden_width
        self.model = model
        self._tokenizer = tokenizer

    @classmethod
    def load(cls, variant: EncoderVariant, weights_dir: str | None = None) -> "HubFineTuneBackbone":
        frozen = HubEncoder.load(variant, weights_dir=weights_dir)
        model = frozen._model
        for p in model.parameters():
            p.requires_grad_(True)
        return cls(variant, model.train(), frozen._tokenizer)

    def forward(self, texts: list[str]) -> torch.Tensor:
        enc = self._tokenizer(
            list(texts),
            padding=True,
            truncation=True,
            max_length=self.variant.max_tokens,
            return_tensors="pt",
        )
        return self.model(**enc).last_hidden_state[:, 0]


def encoder_info(encoder) -> dict:
    """Serializable description of an encoder, stored in checkpoints."""
    if isinstance(encoder, StubEncoder):
        return {"kind": "stub", "width": encoder.width, "seed": encoder.seed}
    if isinstance(encoder, (HubEncoder, HubFineTuneBackbone)):
        return {"kind": "hub", "variant": encoder.variant.name}
    return {"kind": "custom", "width": getattr(encoder, "width", None)}


def resolve_encoder(info: dict):
    """Rebuild a feature-extraction encoder from its checkpoint description."""
    kind = info.get("kind")
    if kind == "stub":
        return StubEncoder(width=info["width"], seed=info["seed"])
    if kind == "hub":
        return HubEncoder.load(get_variant(info["variant"]))
    raise ValidationError(
        f"cannot rebuild encoder from {info!r}; pass the encoder object explicitly"
    )


def resolve_backbone(info: dict) -> nn.Module:
    """Rebuild a trainable fine-tune backbone from its checkpoint description."""
    if info.get("kind") == "hub":
        return HubFineTuneBackbone.load(get_variant(info["variant"]))
    raise EncoderUnavailableError(
        f"cannot reconstruct a trainable backbone from {info!r}; "
        "pass one explicitly when loading this checkpoint"
    )


def build_finetune_classifier(
    variant: EncoderVariant,
    num_classes: int,
    backbone: nn.Module | None = None,
    seed: int = 0,
) -> FineTuneClassifier:
    """Encoder with a trainable head; recommended schedule in FINETUNE_DEFAULTS."""
    check_positive_int(num_classes, "num_classes")
    if backbone is None:
        backbone = HubFineTuneBackbone.load(variant)
    if backbone.width != variant.hidden_width:
        raise ValidationError(
            f"backbone width {backbone.width} does not match variant width {variant.hidden_width}"
        )
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return FineTuneClassifier(backbone, num_classes)
