"""Tweet normalization: mentions, links, emojis and whitespace.

Rules are applied in a fixed order (mentions, links, emojis, whitespace)
so replacements never leave double spaces behind. Replacement tokens are
the bare words ``username`` and ``link``; hashtags pass through verbatim.
Emoji names come from a pinned table vendored with the package, keeping
output identical across machines.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from sklearn.base import BaseEstimator, TransformerMixin

from .validation import ValidationError, check_text_list

DEFAULT_EMOJI_TABLE = "emoji_names.json"

# `@` starts a mention only at the string start or after a non-word
# character, so e-mail addresses survive untouched.
_MENTION_RE = re.compile(r"(?<!\w)@\w+")
# scheme-prefixed URLs only; bare domains are left alone
_LINK_RE = re.compile(r"https?://\S+")
_WHITESPACE_RE = re.compile(r"\s+")

MENTION_TOKEN = "username"
LINK_TOKEN = "link"


class EmojiTableError(ValidationError):
    """Raised when the pinned emoji table cannot be loaded."""


@lru_cache(maxsize=4)
def load_emoji_table(name: str = DEFAULT_EMOJI_TABLE) -> "EmojiTable":
    try:
        raw = resources.files("hatedetect.data").joinpath(name).read_text(encoding="utf-8")
    except (FileNotFoundError, ModuleNotFoundError) as exc:
        raise EmojiTableError(f"emoji table {name!r} is missing from the package data") from exc
    payload = json.loads(raw)
    return EmojiTable(version=payload["version"], entries=payload["entries"])


@dataclass(frozen=True)
class EmojiTable:
    version: str
    entries: dict[str, str]

    @property
    def max_key_len(self) -> int:
        return max((len(k) for k in self.entries), default=1)


@dataclass(frozen=True)
class PreprocessConfig:
    replace_mentions: bool = True
    replace_links: bool = True
    replace_emojis: bool = True
    collapse_whitespace: bool = True
    lowercase: bool = False
    emoji_table_version: str = DEFAULT_EMOJI_TABLE

    def __post_init__(self):
        if self.replace_emojis and not self.emoji_table_version:
            raise ValidationError("emoji_table_version must be set when replace_emojis is on")

    def to_dict(self) -> dict:
        return {
            "replace_mentions": self.replace_mentions,
            "replace_links": self.replace_links,
            "replace_emojis": self.replace_emojis,
            "collapse_whitespace": self.collapse_whitespace,
            "lowercase": self.lowercase,
            "emoji_table_version": self.emoji_table_version,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PreprocessConfig":
        return cls(**payload)


def replace_mentions(text: str) -> str:
    """Replace every @handle token with the literal word ``username``."""
    return _MENTION_RE.sub(MENTION_TOKEN, text)


def replace_links(text: str) -> str:
    """Replace every maximal scheme-prefixed URL span with ``link``."""
    return _LINK_RE.sub(LINK_TOKEN, text)


def replace_emojis(text: str, table: EmojiTable | None = None) -> str:
    """Swap each known emoji sequence for its short name.

    Names are space-delimited from adjacent non-space characters; symbols
    absent from the table pass through unchanged.
    """
    if table is None:
        table = load_emoji_table()
    entries = table.entries
    longest = min(table.max_key_len, 8)
    out: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        name = None
        span = 0
        for k in range(min(longest, n - i), 0, -1):
            candidate = text[i : i + k]
            if candidate in entries:
                name = entries[candidate]
                span = k
                break
        if name is None:
            out.append(text[i])
            i += 1
            continue
        if out and not out[-1][-1].isspace():
            out.append(" ")
        out.append(name)
        if i + span < n and not text[i + span].isspace():
            out.append(" ")
        i += span
    return "".join(out)


def collapse_whitespace(text: str) -> str:
    """Collapse whitespace runs to single spaces and strip the ends."""
    return _WHITESPACE_RE.sub(" ", text).strip()


def preprocess(text: str, cfg: PreprocessConfig | None = None) -> str:
    """Apply the enabled rules in order: mentions, links, emojis, whitespace."""
    if cfg is None:
        cfg = PreprocessConfig()
    if cfg.replace_mentions:
        text = replace_mentions(text)
    if cfg.replace_links:
        text = replace_links(text)
    if cfg.replace_emojis:
        text = replace_emojis(text, load_emoji_table(cfg.emoji_table_version))
    if cfg.lowercase:
        text = text.lower()
    if cfg.collapse_whitespace:
        text = collapse_whitespace(text)
    return text


class TweetNormalizer(BaseEstimator, TransformerMixin):
    """Stateless text normalizer with the pipeline rules as parameters.

    Implements the scikit-learn transformer API over lists of strings so
    the normalization step composes with pipelines and grid search.
    """

    def __init__(
        self,
        replace_mentions: bool = True,
        replace_links: bool = True,
        replace_emojis: bool = True,
        collapse_whitespace: bool = True,
        lowercase: bool = False,
        emoji_table_version: str = DEFAULT_EMOJI_TABLE,
    ):
        self.replace_mentions = replace_mentions
        self.replace_links = replace_links
        self.replace_emojis = replace_emojis
        self.collapse_whitespace = collapse_whitespace
        self.lowercase = lowercase
        self.emoji_table_version = emoji_table_version

    def config(self) -> PreprocessConfig:
        return PreprocessConfig(
            replace_mentions=self.replace_mentions,
            replace_links=self.replace_links,
            replace_emojis=self.replace_emojis,
            collapse_whitespace=self.collapse_whitespace,
            lowercase=self.lowercase,
            emoji_table_version=self.emoji_table_version,
        )

    def fit(self, X, y=None):
        # eagerly load the emoji table so a missing file fails at
        # construction time, not per call
        if self.replace_emojis:
            load_emoji_table(self.emoji_table_version)
        return self

    def transform(self, X, y=None) -> list[str]:
        cfg = self.config()
        return [preprocess(text, cfg) for text in check_text_list(X)]
