from __future__ import annotations

import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from hatedetect.preprocess import (
    EmojiTableError,
    PreprocessConfig,
    TweetNormalizer,
    collapse_whitespace,
    load_emoji_table,
    preprocess,
    replace_emojis,
    replace_links,
    replace_mentions,
)

# short tweets in the style of the corpus, used as golden fixtures
SAMPLE_TWEETS = [
    (
        "This is enough of yours Modi This is not skill India it is kill India "
        "@narendramodi #ExitModi #Resign_PM_Modi https://t.co/m9FZyU4Lfg",
        "This is enough of yours Modi This is not skill India it is kill India "
        "username #ExitModi #Resign_PM_Modi link",
    ),
    (
        "Please, abdicate! You failed us. You failed everyone. Everyone is suffering. "
        "EVERYONE! #ModiKaVaccineJumla",
        "Please, abdicate! You failed us. You failed everyone. Everyone is suffering. "
        "EVERYONE! #ModiKaVaccineJumla",
    ),
    (
        "@Feisty_Waters Ok. What did you do to piss off the universe?",
        "username Ok. What did you do to piss off the universe?",
    ),
    (
        "@ndtv Nothing gonna help you please #Resign_PM_Modi",
        "username Nothing gonna help you please #Resign_PM_Modi",
    ),
]


class TestReplaceMentions:
    def test_leading_mention(self):
        assert replace_mentions("@Feisty_Waters Ok. What did you do...") == "username Ok. What did you do..."

    def test_identity_without_mentions(self):
        assert replace_mentions("no mentions here") == "no mentions here"

    def test_email_address_survives(self):
        assert replace_mentions("a@b.com stays") == "a@b.com stays"

    def test_mention_after_punctuation(self):
        assert replace_mentions("hey (@user) bye") == "hey (username) bye"

    def test_bare_at_sign_survives(self):
        assert replace_mentions("meet @ noon") == "meet @ noon"


class TestReplaceLinks:
    def test_shortener_style_link(self):
        assert (
            replace_links("...#Resign_PM_Modi https://t.co/m9FZyU4Lfg")
            == "...#Resign_PM_Modi link"
        )

    def test_empty_string(self):
        assert replace_links("") == ""

    def test_two_links(self):
        assert replace_links("see http://a.b and https://c.d") == "see link and link"

    def test_bare_domain_not_matched(self):
        assert replace_links("visit example.com now") == "visit example.com now"


class TestReplaceEmojis:
    def test_single_emoji(self):
        assert replace_emojis("good \U0001F525") == "good fire"

    def test_plain_ascii_unchanged(self):
        assert replace_emojis("plain ascii") == "plain ascii"

    def test_adjacent_emojis_space_delimited(self):
        assert replace_emojis("\U0001F525\U0001F525") == "fire fire"

    def test_emoji_between_words(self):
        assert replace_emojis("so\U0001F525hot") == "so fire hot"

    def test_unknown_symbol_passes_through(self):
        # U+0378 is unassigned, so it cannot be in the table
        assert replace_emojis("odd ͸ char") == "odd ͸ char"

    def test_presentation_selector_consumed(self):
        assert replace_emojis("❤️") == "heavy_black_heart"

    def test_missing_table_fails_at_load(self):
        with pytest.raises(EmojiTableError):
            load_emoji_table("no_such_table.json")


class TestCollapseWhitespace:
    def test_mixed_run(self):
        assert collapse_whitespace("a \t  b") == "a b"

    def test_all_whitespace(self):
        assert collapse_whitespace("  ") == ""

    def test_newlines(self):
        assert collapse_whitespace("a\n\nb c") == "a b c"


class TestPreprocessPipeline:
    @pytest.mark.parametrize("raw,expected", SAMPLE_TWEETS)
    def test_golden_fixtures(self, raw, expected):
        assert preprocess(raw) == expected

    def test_composed_rules(self):
        assert preprocess("@a  \U0001F525 http://x.y") == "username fire link"

    def test_rule_order_leaves_no_double_spaces(self):
        out = preprocess("@user   \U0001F602\U0001F602  https://x.y  done")
        assert "  " not in out

    def test_lowercase_extension(self):
        cfg = PreprocessConfig(lowercase=True)
        assert preprocess("Hello @World", cfg) == "hello username"

    def test_disabled_rules_leave_their_targets(self):
        text = "@user https://a.b \U0001F525  end"
        no_mentions = preprocess(text, PreprocessConfig(replace_mentions=False))
        assert "@user" in no_mentions
        no_links = preprocess(text, PreprocessConfig(replace_links=False))
        assert "https://a.b" in no_links
        no_emoji = preprocess(text, PreprocessConfig(replace_emojis=False))
        assert "\U0001F525" in no_emoji
        no_ws = preprocess(text, PreprocessConfig(collapse_whitespace=False))
        assert "  " in no_ws

    def test_hashtags_preserved(self):
        for raw, expected in SAMPLE_TWEETS:
            for token in raw.split():
                if token.startswith("#"):
                    assert token in preprocess(raw)

    @given(st.text(max_size=300))
    @settings(max_examples=300, deadline=None)
    def test_idempotent(self, text):
        once = preprocess(text)
        assert preprocess(once) == once

    @given(st.text(max_size=300))
    @settings(max_examples=200, deadline=None)
    def test_no_mention_or_url_pattern_left(self, text):
        out = preprocess(text)
        assert re.search(r"(?<!\w)@\w+", out) is None
        assert re.search(r"https?://\S+", out) is None

    @given(st.text(max_size=200))
    @settings(max_examples=200, deadline=None)
    def test_output_has_no_whitespace_runs(self, text):
        out = preprocess(text)
        assert not re.search(r"\s\s", out)
        assert out == out.strip()


class TestTweetNormalizer:
    def test_transform_list(self):
        reference = [raw for raw, _ in SAMPLE_TWEETS]
        expected = [out for _, out in SAMPLE_TWEETS]
        normalizer = TweetNormalizer().fit(reference)
        assert normalizer.transform(reference) == expected

    def test_sklearn_params_roundtrip(self):
        normalizer = TweetNormalizer(replace_links=False)
        params = normalizer.get_params()
        assert params["replace_links"] is False
        cloned = clone(normalizer)
        assert cloned.get_params() == params

    def test_fit_fails_on_missing_table(self):
        normalizer = TweetNormalizer(emoji_table_version="missing.json")
        with pytest.raises(EmojiTableError):
            normalizer.fit(["x"])

    def test_rejects_single_string(self):
        with pytest.raises(Exception):
            TweetNormalizer().fit_transform("not a list")
