"""Corpus ingestion, label taxonomy, class statistics and seeded splits.

Datasets are UTF-8 TSV files with columns (id, text, label_1a, label_1b);
label columns are optional and parsed case-insensitively. Splits are
stratified, seeded and reconstructible from a JSON manifest.
"""

from __future__ import annotations

import json
import random
import warnings
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .validation import ValidationError, check_ratios

# Class order is the fixed taxonomy declaration used everywhere downstream
# (confusion-matrix axes, argmax tie-breaks, sigmoid positive class).
LABELS_1A = ("NOT", "HOF")
LABELS_1B = ("HATE", "OFFN", "PRFN", "NONE")
LABELS_1B_FINE = ("HATE", "OFFN", "PRFN")

# 1B fine labels imply the coarse HOF class; NONE implies NOT.
_COARSE_OF = {"HATE": "HOF", "OFFN": "HOF", "PRFN": "HOF", "NONE": "NOT"}

_HEADER_ID_NAMES = {"id", "tweet_id", "text_id", "_id"}


class Task(Enum):
    TASK_1A = "1a"
    TASK_1B = "1b"

    @property
    def labels(self) -> tuple[str, ...]:
        return LABELS_1A if self is Task.TASK_1A else LABELS_1B


class CorpusError(ValidationError):
    """Raised for malformed dataset files or inconsistent labels."""


@dataclass(frozen=True)
class LabeledText:
    """One tweet: opaque id, raw text, optional coarse and fine labels."""

    id: str
    text: str
    label_1a: str | None = None
    label_1b: str | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise CorpusError(f"item {self.id!r}: text is empty after stripping whitespace")
        if self.label_1a is not None and self.label_1a not in LABELS_1A:
            raise CorpusError(f"item {self.id!r}: unknown 1A label {self.label_1a!r}")
        if self.label_1b is not None and self.label_1b not in LABELS_1B:
            raise CorpusError(f"item {self.id!r}: unknown 1B label {self.label_1b!r}")
        if self.label_1a is not None and self.label_1b is not None:
            expected = _COARSE_OF[self.label_1b]
            if self.label_1a != expected:
                # real shared-task data may carry annotation noise
                warnings.warn(
                    f"item {self.id!r}: label_1b={self.label_1b} implies "
                    f"label_1a={expected} but found {self.label_1a}",
                    stacklevel=2,
                )

    def label_for(self, task: Task) -> str | None:
        return self.label_1a if task is Task.TASK_1A else self.label_1b


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of labeled texts with ingestion provenance."""

    items: tuple[LabeledText, ...]
    task: Task
    provenance: str = ""

    def __post_init__(self):
        seen: set[str] = set()
        for item in self.items:
            if item.id in seen:
                raise CorpusError(f"duplicate id {item.id!r}")
            seen.add(item.id)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def texts(self) -> list[str]:
        return [item.text for item in self.items]

    def labels(self, required: bool = True) -> list[str | None]:
        out = [item.label_for(self.task) for item in self.items]
        if required and any(lab is None for lab in out):
            missing = next(item.id for item in self.items if item.label_for(self.task) is None)
            raise CorpusError(f"item {missing!r} lacks a {self.task.value} label")
        return out

    def subset(self, ids: Iterable[str]) -> "Dataset":
        wanted = set(ids)
        return replace(self, items=tuple(it for it in self.items if it.id in wanted))


@dataclass(frozen=True)
class SplitSpec:
    """Seeded three-way split: ratios sum to 1, stratified by default."""

    ratios: tuple[float, float, float] = (0.70, 0.10, 0.20)
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        object.__setattr__(self, "ratios", check_ratios(self.ratios))


@dataclass
class LabelHistogram:
    counts: dict[str, int]
    total: int

    def __getitem__(self, label: str) -> int:
        return self.counts[label]


def _parse_label(raw: str, allowed: tuple[str, ...], line_no: int) -> str | None:
    value = raw.strip()
    if not value:
        return None
    upper = value.upper()
    if upper not in allowed:
        raise CorpusError(f"line {line_no}: unknown label {value!r} (expected one of {allowed})")
    return upper


def _looks_like_header(fields: list[str]) -> bool:
    # only the id column is a safe header signal: real ids are arbitrary,
    # but a text cell could legitimately spell any column name
    return bool(fields) and fields[0].strip().lower() in _HEADER_ID_NAMES


def load_tsv(path: str | Path, task: Task, require_labels: bool = True) -> Dataset:
    """Load a TSV dataset: columns (id, text, label_1a, label_1b).

    Extra columns are ignored with a warning. A leading header row is
    skipped when its first cells carry recognizable column names. With
    ``require_labels=False`` the file may omit label columns entirely
    (prediction-mode input).
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"dataset file not found: {path}")

    items: list[LabeledText] = []
    warned_extra = False
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split("\t")
            if line_no == 1 and _looks_like_header(fields):
                continue
            if len(fields) < 2:
                raise CorpusError(
                    f"line {line_no}: expected at least 2 tab-separated fields, got {len(fields)}"
                )
            if len(fields) > 4 and not warned_extra:
                warnings.warn(f"{path}: ignoring extra columns beyond the 4th (line {line_no})")
                warned_extra = True
            raw_1a = fields[2] if len(fields) > 2 else ""
            raw_1b = fields[3] if len(fields) > 3 else ""
            try:
                item = LabeledText(
                    id=fields[0].strip(),
                    text=fields[1],
                    label_1a=_parse_label(raw_1a, LABELS_1A, line_no),
                    label_1b=_parse_label(raw_1b, LABELS_1B, line_no),
                )
            except CorpusError as exc:
                raise CorpusError(f"line {line_no}: {exc}") from None
            items.append(item)

    ds = Dataset(
        items=tuple(items),
        task=task,
        provenance=f"{path}@{datetime.now(timezone.utc).isoformat(timespec='seconds')}",
    )
    if require_labels:
        ds.labels(required=True)
    return ds


def save_tsv(ds: Dataset, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for item in ds.items:
            fh.write(
                "\t".join([item.id, item.text, item.label_1a or "", item.label_1b or ""]) + "\n"
            )


def class_stats(ds: Dataset) -> LabelHistogram:
    """Per-class counts over the dataset's task labels; counts sum to |ds|."""
    if len(ds) == 0:
        raise CorpusError("cannot compute class statistics of an empty dataset")
    labels = ds.labels(required=True)
    counts = {label: 0 for label in ds.task.labels}
    for lab in labels:
        counts[lab] += 1
    return LabelHistogram(counts=counts, total=len(ds))


def split_sizes(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    """Floor the first two split sizes, give the remainder to test."""
    r = check_ratios(ratios)
    n_train = int(n * r[0])
    n_val = int(n * r[1])
    return n_train, n_val, n - n_train - n_val


def _allocate_cells(class_counts: list[int], sizes: tuple[int, int, int]) -> list[list[int]]:
    """Apportion each class across splits with both marginals exact.

    Starts from floored per-cell targets and distributes the leftover units
    by largest fractional part, never bumping the same cell twice, so every
    cell stays within one item of its real-valued target.
    """
    n = sum(class_counts)
    targets = [[c * s / n for s in sizes] for c in class_counts]
    alloc = [[int(t) for t in row] for row in targets]
    row_left = [class_counts[i] - sum(alloc[i]) for i in range(len(alloc))]
    col_left = [sizes[j] - sum(row[j] for row in alloc) for j in range(3)]

    cells = sorted(
        ((i, j) for i in range(len(alloc)) for j in range(3)),
        key=lambda ij: (-(targets[ij[0]][ij[1]] - alloc[ij[0]][ij[1]]), ij),
    )
    bumped: set[tuple[int, int]] = set()
    for i, j in cells:
        if row_left[i] > 0 and col_left[j] > 0:
            alloc[i][j] += 1
            row_left[i] -= 1
            col_left[j] -= 1
            bumped.add((i, j))

    # rare capacity clash: free the needed column via a one-step reassignment
    for i in range(len(alloc)):
        while row_left[i] > 0:
            j = next(j for j in range(3) if col_left[j] > 0)
            moved = False
            for i2 in range(len(alloc)):
                for j2 in range(3):
                    if (i2, j2) in bumped and (i2, j) not in bumped and (i, j2) not in bumped and j2 != j:
                        alloc[i2][j2] -= 1
                        alloc[i2][j] += 1
                        bumped.discard((i2, j2))
                        bumped.add((i2, j))
                        alloc[i][j2] += 1
                        row_left[i] -= 1
                        col_left[j] -= 1
                        bumped.add((i, j2))
                        moved = True
                        break
                if moved:
                    break
            if not moved:  # give up on the ±1 guarantee rather than loop forever
                alloc[i][j] += 1
                row_left[i] -= 1
                col_left[j] -= 1
    return alloc


def stratified_split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Partition a labeled dataset into (train, val, test).

    Deterministic in (ds, spec): the same seed always selects the same
    members. Split sizes follow the floor-then-remainder policy; with
    stratification every class lands within one item of its global share
    in each split.
    """
    n = len(ds)
    if n == 0:
        raise CorpusError("cannot split an empty dataset")
    labels = ds.labels(required=True)
    sizes = split_sizes(n, spec.ratios)

    rng = random.Random(spec.seed)
    order = list(range(n))
    rng.shuffle(order)

    assignment: dict[int, int] = {}
    if spec.stratified:
        classes = sorted(set(labels))
        by_class: dict[str, list[int]] = {c: [] for c in classes}
        for idx in order:
            by_class[labels[idx]].append(idx)
        for c in classes:
            if len(by_class[c]) < 3:
                raise CorpusError(
                    f"class {c!r} has only {len(by_class[c])} member(s), fewer than the 3 "
                    "splits; use stratified=False for this dataset"
                )
        alloc = _allocate_cells([len(by_class[c]) for c in classes], sizes)
        for ci, c in enumerate(classes):
            pool = by_class[c]
            start = 0
            for j in range(3):
                for idx in pool[start : start + alloc[ci][j]]:
                    assignment[idx] = j
                start += alloc[ci][j]
    else:
        for pos, idx in enumerate(order):
            assignment[idx] = 0 if pos < sizes[0] else (1 if pos < sizes[0] + sizes[1] else 2)

    parts: list[list[LabeledText]] = [[], [], []]
    for idx, item in enumerate(ds.items):  # keep original corpus order inside each split
        parts[assignment[idx]].append(item)
    prov = f"{ds.provenance} split(seed={spec.seed}, ratios={spec.ratios}, stratified={spec.stratified})"
    return tuple(
        Dataset(items=tuple(part), task=ds.task, provenance=prov) for part in parts
    )  # type: ignore[return-value]


def write_split_manifest(
    path: str | Path,
    spec: SplitSpec,
    train: Dataset,
    val: Dataset,
    test: Dataset,
) -> None:
    """Persist the split as JSON so it is reconstructible without re-running."""
    manifest = {
        "seed": spec.seed,
        "ratios": list(spec.ratios),
        "stratified": spec.stratified,
        "ids_per_split": {
            "train": [it.id for it in train],
            "val": [it.id for it in val],
            "test": [it.id for it in test],
        },
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def load_split_manifest(path: str | Path, ds: Dataset) -> tuple[Dataset, Dataset, Dataset]:
    manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    ids = manifest["ids_per_split"]
    return ds.subset(ids["train"]), ds.subset(ids["val"]), ds.subset(ids["test"])
