import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biaseval.corpus import (
    Discourse,
    MergeError,
    MERGE_THRESHOLDS,
    PromptTemplate,
    anonymize,
    discourse_from_record,
    discourse_to_record,
    find_alias_occurrences,
    levenshtein,
    load_prompt_templates,
    merge_aliases,
    merge_rounds,
    read_discourses,
    similarity,
    write_discourses,
)


def edit_distance_oracle(a: str, b: str) -> int:
    """Textbook full-matrix DP, kept independent of the production path."""
    rows, cols = len(a) + 1, len(b) + 1
    d = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        d[i][0] = i
    for j in range(cols):
        d[0][j] = j
    for i in range(1, rows):
        for j in range(1, cols):
            d[i][j] = min(
                d[i - 1][j] + 1,
                d[i][j - 1] + 1,
                d[i - 1][j - 1] + (a[i - 1] != b[j - 1]),
            )
    return d[-1][-1]


class TestSimilarity:
    def test_identical(self):
        assert similarity("abc", "abc") == 1.0

    def test_kitten_sitting(self):
        # oracle: edit_distance_oracle("kitten", "sitting") == 3
        assert edit_distance_oracle("kitten", "sitting") == 3
        assert similarity("kitten", "sitting") == pytest.approx(1 - 3 / 7)

    def test_empty_vs_nonempty(self):
        assert similarity("", "abc") == 0.0

    def test_both_empty(self):
        assert similarity("", "") == 1.0

    def test_chinese(self):
        assert levenshtein("你好世界", "你坏世界") == 1
        assert similarity("你好世界", "你坏世界") == pytest.approx(0.75)

    @given(st.text(max_size=40), st.text(max_size=40))
    @settings(max_examples=200, deadline=None)
    def test_matches_oracle_and_bounds(self, a, b):
        assert levenshtein(a, b) == edit_distance_oracle(a, b)
        value = similarity(a, b)
        assert 0.0 <= value <= 1.0
        assert value == similarity(b, a)

    @given(st.text(max_size=60))
    @settings(max_examples=50, deadline=None)
    def test_self_similarity_is_one(self, a):
        assert similarity(a, a) == 1.0


class TestMergeRounds:
    def test_identical_kept(self):
        assert merge_rounds("same text", "same text", 0.8) == "same text"

    def test_dissimilar_appended(self):
        assert merge_rounds("aaaa", "bbbb", 0.8) == "aaaa\nbbbb"

    def test_boundary_pair_zh_threshold(self):
        # distance 2 over max length 8 gives similarity exactly 0.75
        a, b = "abcdefgh", "abcdefxy"
        assert edit_distance_oracle(a, b) == 2
        assert similarity(a, b) == pytest.approx(0.75)
        assert merge_rounds(a, b, MERGE_THRESHOLDS["zh"]) == a
        assert merge_rounds(a, b, MERGE_THRESHOLDS["en"]) == a + "\n" + b

    def test_idempotent_on_identical(self):
        merged = merge_rounds("x y z", "x y z", 0.8)
        assert merge_rounds(merged, merged, 0.8) == merged

    def test_bad_threshold(self):
        with pytest.raises(MergeError):
            merge_rounds("a", "b", 0.0)
        with pytest.raises(MergeError):
            merge_rounds("a", "b", 1.5)


def _discourse(body, **kwargs):
    defaults = dict(country_id="x", prompt_id="p1", temperature=0.0, language="en")
    defaults.update(kwargs)
    return Discourse(body=body, **defaults)


class TestMergeAliases:
    def test_single_is_identity(self):
        d = _discourse("hello")
        assert merge_aliases([d]).body == "hello"

    def test_two_identical_kept_once(self):
        merged = merge_aliases([_discourse("hello"), _discourse("hello")])
        assert merged.body == "hello"
        assert merged.rounds_merged == 2

    def test_first_two_similar_third_dissimilar(self):
        # oracle-backed construction: first pair similarity 1, third disjoint
        a = _discourse("abcdefgh")
        b = _discourse("abcdefgh")
        c = _discourse("zzzzzzzz")
        merged = merge_aliases([a, b, c], threshold=0.8)
        assert merged.body == "abcdefgh\nzzzzzzzz"

    def test_empty_errors(self):
        with pytest.raises(MergeError):
            merge_aliases([])

    def test_key_mismatch_errors(self):
        with pytest.raises(MergeError):
            merge_aliases([_discourse("a"), _discourse("b", language="zh")])


class TestAnonymize:
    def test_english_demonym(self):
        out = anonymize("Afghan people are hospitable.", ["Afghan", "Afghanistan"], "en")
        assert out == "[MASK] people are hospitable."

    def test_no_alias_unchanged(self):
        body = "No nationalities here."
        assert anonymize(body, ["Afghan"], "en") == body

    def test_longest_match_first(self):
        aliases = ["Dominican Republic", "Dominica", "Dominican"]
        out = anonymize("Dominican Republic citizens and Dominicans", aliases, "en")
        assert out == "[MASK] citizens and [MASK]s"

    def test_naive_scan_oracle_agreement(self):
        # oracle: repeatedly mask the longest alias anywhere in the text
        aliases = ["Dominican Republic", "Dominica", "Dominican", "Niger", "Nigeria",
                   "Nigerian", "Nigerien"]
        text = "Nigerians, Nigeriens and Dominican Republic diplomats met in Dominica."

        def oracle(body):
            while True:
                spans = []
                low = body.lower()
                for alias in sorted(aliases, key=len, reverse=True):
                    pos = low.find(alias.lower())
                    if pos >= 0:
                        spans.append((pos, alias))
                if not spans:
                    return body
                pos, alias = min(spans, key=lambda s: (s[0], -len(s[1])))
                body = body[:pos] + "[MASK]" + body[pos + len(alias):]

        assert anonymize(text, aliases, "en") == oracle(text)

    def test_case_insensitive_english(self):
        assert anonymize("AFGHAN afghan AfGhAn", ["Afghan"], "en") == \
            "[MASK] [MASK] [MASK]"

    def test_chinese_exact(self):
        out = anonymize("阿富汗人和南苏丹人聊天，苏丹人也在。", ["阿富汗", "南苏丹", "苏丹"], "zh")
        assert out == "[MASK]人和[MASK]人聊天，[MASK]人也在。"

    def test_no_residual_occurrences(self, registry):
        for language in ("en", "zh"):
            aliases = registry.aliases_for_masking(language)
            body = " ".join(aliases[:50]) + " filler " + "".join(aliases[-50:])
            masked = anonymize(body, aliases, language)
            assert find_alias_occurrences(masked, aliases, language) == []


class TestRegistry:
    def test_full_registry_shape(self, registry):
        assert len(registry) == 195
        for country in registry:
            assert country.names["en"] and country.names["zh"]
            assert country.nationality_aliases["en"]

    def test_default_run_cardinality(self, registry):
        assert len(registry) * 3 * 4 * 2 == 4680

    def test_historical_names_present(self, registry):
        assert "Turkey" in registry["turkiye"].names["en"]
        assert "Swaziland" in registry["eswatini"].names["en"]

    def test_zh_demonyms_derived(self, registry):
        assert "阿富汗人" in registry["afghanistan"].nationality_aliases["zh"]

    def test_disambiguation_suffix(self, tiny_registry):
        assert tiny_registry["dominican-republic"].disambiguation_suffix == "Republic"
        assert tiny_registry["dominica"].disambiguation_suffix == "Commonwealth"

    def test_masking_aliases_zh_names_only(self, tiny_registry):
        aliases = tiny_registry.aliases_for_masking("zh")
        assert "阿富汗" in aliases
        assert "阿富汗人" not in aliases

    def test_generation_aliases_order(self, tiny_registry):
        assert tiny_registry.generation_aliases("afghanistan", "en") == \
            ["Afghan", "Afghanistani"]


class TestPromptTemplates:
    def test_six_templates(self):
        templates = load_prompt_templates()
        assert len(templates) == 6
        orientations = {(t.id, t.orientation) for t in templates}
        assert ("p1", "negative") in orientations
        assert ("p2", "neutral") in orientations
        assert ("p3", "mixed") in orientations

    def test_fill_replaces_placeholder(self):
        templates = {(t.language, t.id): t for t in load_prompt_templates()}
        filled = templates[("en", "p1")].fill("Afghan")
        assert "Afghan people" in filled and " X " not in filled
        filled_zh = templates[("zh", "p1")].fill("阿富汗人")
        assert "阿富汗人" in filled_zh and "X" not in filled_zh

    def test_placeholder_must_be_unique(self):
        with pytest.raises(ValueError):
            PromptTemplate(id="p1", language="en", text="X and X people?",
                           orientation="negative")
        with pytest.raises(ValueError):
            PromptTemplate(id="p1", language="en", text="no placeholder",
                           orientation="negative")


class TestStore:
    def test_roundtrip(self, tmp_path):
        items = [
            _discourse("hello world", anonymized=True),
            _discourse("你好", language="zh", temperature=0.3, rounds_merged=2),
            _discourse("declined", refused=True),
        ]
        path = tmp_path / "corpus.jsonl"
        write_discourses(path, items)
        loaded = read_discourses(path)
        assert [d.key for d in loaded] == [d.key for d in items]
        assert loaded[0].anonymized and loaded[1].rounds_merged == 2
        assert loaded[2].refused

    def test_record_fields_match_schema(self):
        record = discourse_to_record(_discourse("abc"))
        assert set(record) == {"country_id", "prompt_id", "temperature", "language",
                               "body", "rounds_merged", "anonymized"}
        back = discourse_from_record(json.loads(json.dumps(record)))
        assert back.body == "abc"

    def test_counts(self):
        d = _discourse("one two three!")
        assert d.char_count == len("one two three!")
        assert d.token_count == 3
