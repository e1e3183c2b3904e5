from __future__ import annotations

import random

import pytest
import torch
from torch import nn

from hatedetect.corpus import Dataset, LabeledText, Task
from hatedetect.pretrained import StubEncoder, module_checksum

POSITIVE_WORDS = ["awful", "trash", "vile", "garbage", "disgusting", "idiot"]
NEGATIVE_WORDS = ["lovely", "sunny", "kind", "gentle", "pleasant", "cheerful"]


def separable_texts(n: int = 64, seed: int = 0, words_per_text: int = 4) -> tuple[list[str], list[str]]:
    """Binary corpus whose classes use disjoint word sets, so it is memorizable."""
    rng = random.Random(seed)
    texts, labels = [], []
    for i in range(n):
        hof = i % 2 == 1
        pool = POSITIVE_WORDS if hof else NEGATIVE_WORDS
        texts.append(" ".join(rng.choice(pool) for _ in range(words_per_text)))
        labels.append("HOF" if hof else "NOT")
    return texts, labels


def make_dataset(
    n: int = 60,
    seed: int = 0,
    task: Task = Task.TASK_1A,
    hof_fraction: float = 0.5,
) -> Dataset:
    rng = random.Random(seed)
    fine_labels = ["HATE", "OFFN", "PRFN"]
    items = []
    n_hof = round(n * hof_fraction)
    for i in range(n):
        hof = i < n_hof
        pool = POSITIVE_WORDS if hof else NEGATIVE_WORDS
        text = " ".join(rng.choice(pool) for _ in range(4)) + f" #{i}"
        items.append(
            LabeledText(
                id=f"t{i}",
                text=text,
                label_1a="HOF" if hof else "NOT",
                label_1b=rng.choice(fine_labels) if hof else "NONE",
            )
        )
    return Dataset(items=tuple(items), task=task, provenance="synthetic")


def write_tsv(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write("\t".join(row) + "\n")


class LinearTorchEncoder(nn.Module):
    """Feature-extraction double with real torch weights, for freeze checks."""

    def __init__(self, width: int = 8, seed: int = 0):
        super().__init__()
        self.width = width
        self._stub = StubEncoder(width, seed)
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.proj = nn.Linear(width, width)

    def encode(self, texts, max_tokens):
        out = []
        with torch.no_grad():
            for arr in self._stub.encode(texts, max_tokens):
                out.append(self.proj(torch.from_numpy(arr)).numpy())
        return out

    def fingerprint(self) -> str:
        return module_checksum(self)


class TinyBackbone(nn.Module):
    """Trainable fine-tune backbone double: hash features through a linear map."""

    def __init__(self, width: int = 8, seed: int = 0):
        super().__init__()
        self.width = width
        self._stub = StubEncoder(width, seed)
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.proj = nn.Linear(width, width)

    def forward(self, texts):
        pooled = torch.stack(
            [torch.from_numpy(self._stub.encode([t], 32)[0].mean(axis=0)) for t in texts]
        )
        return torch.tanh(self.proj(pooled))


@pytest.fixture
def separable_corpus():
    return separable_texts()


@pytest.fixture
def labeled_dataset():
    return make_dataset()
