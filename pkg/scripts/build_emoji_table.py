"""Regenerate the vendored emoji short-name table.

The table maps emoji codepoint sequences to lowercase underscore-joined
names derived from the Unicode character database. The generated JSON is
vendored under src/hatedetect/data/ and pinned there: do NOT regenerate it
casually, since a different Python build may carry a different Unicode
version and silently change replacement output.
"""

from __future__ import annotations

import json
import re
import sys
import unicodedata
from pathlib import Path

# Emoji-bearing blocks. Plain ASCII/Latin symbols stay out on purpose so
# ordinary punctuation is never rewritten.
RANGES = [
    (0x1F000, 0x1F0FF),  # mahjong / domino / playing cards
    (0x1F1E6, 0x1F1FF),  # regional indicators
    (0x1F300, 0x1F5FF),  # misc symbols and pictographs
    (0x1F600, 0x1F64F),  # emoticons
    (0x1F680, 0x1F6FF),  # transport and map symbols
    (0x1F900, 0x1F9FF),  # supplemental symbols and pictographs
    (0x1FA70, 0x1FAFF),  # symbols and pictographs extended-A
    (0x2600, 0x26FF),    # miscellaneous symbols
    (0x2700, 0x27BF),    # dingbats
    (0x2B00, 0x2BFF),    # arrows / stars (white medium star etc.)
]

VARIATION_SELECTOR_16 = "️"


def short_name(codepoint: int) -> str | None:
    name = unicodedata.name(chr(codepoint), None)
    if name is None:
        return None
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


def build_table() -> dict:
    entries: dict[str, str] = {}
    for start, end in RANGES:
        for cp in range(start, end + 1):
            name = short_name(cp)
            if name is None:
                continue
            char = chr(cp)
            entries[char] = name
            # emoji presentation sequences (e.g. red heart) resolve to the
            # same name with the selector consumed
            entries[char + VARIATION_SELECTOR_16] = name
    return {
        "version": f"unicodedata-{unicodedata.unidata_version}",
        "entries": entries,
    }


def main() -> int:
    out = Path(__file__).resolve().parent.parent / "src" / "hatedetect" / "data" / "emoji_names.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    table = build_table()
    out.write_text(json.dumps(table, ensure_ascii=False, sort_keys=True, indent=0) + "\n", encoding="utf-8")
    print(f"wrote {len(table['entries'])} entries ({table['version']}) to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
