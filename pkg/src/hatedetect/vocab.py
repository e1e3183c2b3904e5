"""Character/word vocabularies, fixed-length id encoding, word vectors."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .validation import ValidationError, check_positive_int, check_text_list

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


class VocabLevel(Enum):
    CHAR = "char"
    WORD = "word"


# defaults: platform character limit for tweets, generous word budget
DEFAULT_MAX_LEN = {VocabLevel.CHAR: 280, VocabLevel.WORD: 64}
DEFAULT_MIN_FREQ = {VocabLevel.CHAR: 1, VocabLevel.WORD: 2}


def tokenize(text: str, level: VocabLevel) -> list[str]:
    if level is VocabLevel.CHAR:
        return list(text)
    return text.split()


@dataclass(frozen=True)
class Vocab:
    level: VocabLevel
    token_to_id: dict[str, int]
    min_freq: int

    def __post_init__(self):
        if self.token_to_id.get(PAD_TOKEN) != PAD_ID or self.token_to_id.get(UNK_TOKEN) != UNK_ID:
            raise ValidationError("vocab must map <pad> to 0 and <unk> to 1")

    def __len__(self) -> int:
        return len(self.token_to_id)

    @property
    def id_to_token(self) -> list[str]:
        out = [""] * len(self.token_to_id)
        for token, idx in self.token_to_id.items():
            out[idx] = token
        return out

    def to_json(self) -> str:
        ordered = self.id_to_token
        return json.dumps(
            {"level": self.level.value, "min_freq": self.min_freq, "tokens": ordered}
        )

    @classmethod
    def from_json(cls, payload: str) -> "Vocab":
        data = json.loads(payload)
        return cls(
            level=VocabLevel(data["level"]),
            token_to_id={tok: i for i, tok in enumerate(data["tokens"])},
            min_freq=data["min_freq"],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class IdSequence:
    ids: tuple[int, ...]
    true_length: int


@dataclass(frozen=True)
class EmbeddingMatrix:
    rows: np.ndarray  # (vocab size, dim), float32; pad row all-zero
    source: str  # "random" | "pretrained"
    coverage: float = 1.0


def build_vocab(texts: list[str], level: VocabLevel, min_freq: int = 1) -> Vocab:
    """Count tokens and keep those with frequency >= min_freq.

    Ids are assigned by frequency (descending) with lexicographic
    tie-break, so the mapping is independent of corpus order.
    """
    texts = check_text_list(texts, "texts")
    if not texts:
        raise ValidationError("cannot build a vocabulary from an empty corpus")
    check_positive_int(min_freq, "min_freq")

    counts: Counter[str] = Counter()
    for text in texts:
        counts.update(tokenize(text, level))
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_freq),
        key=lambda tok: (-counts[tok], tok),
    )
    token_to_id = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
    for i, tok in enumerate(kept, start=2):
        token_to_id[tok] = i
    return Vocab(level=level, token_to_id=token_to_id, min_freq=min_freq)


def encode(text: str, v: Vocab, max_len: int) -> IdSequence:
    """Map text to a fixed-length id list: unk for OOV, tail truncation, right pad."""
    check_positive_int(max_len, "max_len")
    tokens = tokenize(text, v.level)[:max_len]
    ids = [v.token_to_id.get(tok, UNK_ID) for tok in tokens]
    true_length = len(ids)
    ids.extend([PAD_ID] * (max_len - true_length))
    return IdSequence(ids=tuple(ids), true_length=true_length)


def decode(ids: list[int] | tuple[int, ...], v: Vocab) -> list[str]:
    lookup = v.id_to_token
    return [lookup[i] for i in ids if i != PAD_ID]


def random_embeddings(v: Vocab, dim: int, seed: int = 0) -> EmbeddingMatrix:
    rng = np.random.default_rng(seed)
    rows = rng.normal(0.0, 0.1, size=(len(v), dim)).astype(np.float32)
    rows[PAD_ID] = 0.0
    return EmbeddingMatrix(rows=rows, source="random", coverage=0.0)


def load_pretrained_embeddings(
    path: str | Path, v: Vocab, dim: int, seed: int = 0
) -> EmbeddingMatrix:
    """Load word vectors from a plain-text file of ``token v1 .. vdim`` lines.

    Vocab tokens found in the file keep the file vector; missing tokens get
    a small seeded Gaussian so they stay trainable and distinct from pad.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"pretrained vector file not found: {path}")
    check_positive_int(dim, "dim")

    vectors: dict[str, np.ndarray] = {}
    wanted = set(v.token_to_id) - {PAD_TOKEN, UNK_TOKEN}
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise ValidationError(
                    f"{path} line {line_no}: vector has {len(values)} dims, expected {dim}"
                )
            if token in wanted:
                vectors[token] = np.asarray([float(x) for x in values], dtype=np.float32)

    rng = np.random.default_rng(seed)
    rows = np.empty((len(v), dim), dtype=np.float32)
    found = 0
    for token, idx in sorted(v.token_to_id.items(), key=lambda kv: kv[1]):
        if token in vectors:
            rows[idx] = vectors[token]
            found += 1
        else:
            rows[idx] = rng.normal(0.0, 0.1, size=dim).astype(np.float32)
    rows[PAD_ID] = 0.0
    denom = max(len(v) - 2, 1)
    return EmbeddingMatrix(rows=rows, source="pretrained", coverage=found / denom)
