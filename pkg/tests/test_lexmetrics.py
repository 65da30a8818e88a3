import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biaseval.lexmetrics import MattrResult, TokenSequence, mattr, tokenize


def mattr_window_oracle(tokens, window, keep_last=False):
    """Direct window enumeration: mean distinct count over L-length windows."""
    n = len(tokens)
    n_windows = n - window + 1 if keep_last else n - window
    total = sum(len(set(tokens[i:i + window])) for i in range(n_windows))
    return total / (window * n_windows)


class TestTokenize:
    def test_english_lowercase_punct(self):
        assert tokenize("A a, b!", "en").tokens == ("a", "a", "b")

    def test_chinese_chars(self):
        assert tokenize("你好。", "zh").tokens == ("你", "好")

    def test_mixed_latin_in_chinese(self):
        # reference scan: alphanumeric characters survive one by one
        expected = tuple(ch for ch in "GDP增长" if ch.isalnum())
        assert tokenize("GDP增长", "zh").tokens == expected == ("G", "D", "P", "增", "长")

    def test_unknown_language(self):
        with pytest.raises(ValueError):
            tokenize("text", "fr")


class TestMattr:
    def test_hand_enumerated_example(self):
        seq = TokenSequence(tuple("ababc"), "en")
        result = mattr(seq, window=3)
        # windows (a,b,a)=2 and (b,a,b)=2 types: 4 / (3*2)
        assert result.value == pytest.approx(4 / 6)
        assert result.value == pytest.approx(mattr_window_oracle(seq.tokens, 3))
        assert not result.fallback_used

    def test_all_identical(self):
        seq = TokenSequence(("tok",) * 64, "en")
        assert mattr(seq, window=32).value == pytest.approx(1 / 32)

    def test_all_distinct(self):
        seq = TokenSequence(tuple(f"t{i}" for i in range(64)), "en")
        assert mattr(seq, window=32).value == pytest.approx(1.0)

    def test_literature_window_variant(self):
        tokens = tuple("abcabcab")
        ours = mattr(TokenSequence(tokens, "en"), window=3, window_mode="n-l+1")
        assert ours.value == pytest.approx(mattr_window_oracle(tokens, 3, keep_last=True))
        default = mattr(TokenSequence(tokens, "en"), window=3)
        assert default.value == pytest.approx(mattr_window_oracle(tokens, 3))

    def test_short_text_fallback(self):
        seq = TokenSequence(("a", "b", "a"), "en")
        result = mattr(seq, window=32)
        assert result.fallback_used
        assert result.value == pytest.approx(2 / 3)

    def test_window_equal_length_uses_fallback(self):
        seq = TokenSequence(tuple("abcd"), "en")
        assert mattr(seq, window=4).fallback_used

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            mattr(TokenSequence((), "en"))

    @given(st.lists(st.sampled_from("abcdefgh"), min_size=5, max_size=80),
           st.integers(min_value=1, max_value=4))
    @settings(max_examples=150, deadline=None)
    def test_matches_oracle(self, tokens, window):
        if len(tokens) <= window:
            return
        result = mattr(TokenSequence(tuple(tokens), "en"), window=window)
        assert result.value == pytest.approx(mattr_window_oracle(tokens, window))

    @given(st.lists(st.sampled_from("abcde"), min_size=10, max_size=100))
    @settings(max_examples=100, deadline=None)
    def test_bounds(self, tokens):
        window = 4
        if len(tokens) <= window:
            return
        value = mattr(TokenSequence(tuple(tokens), "en"), window=window).value
        assert 1 / window - 1e-12 <= value <= 1 + 1e-12

    @given(st.lists(st.integers(min_value=0, max_value=9), min_size=12, max_size=60),
           st.permutations(list(range(10))))
    @settings(max_examples=80, deadline=None)
    def test_alphabet_renaming_invariance(self, tokens, mapping):
        window = 5
        if len(tokens) <= window:
            return
        original = mattr(TokenSequence(tuple(map(str, tokens)), "en"), window=window)
        renamed = mattr(TokenSequence(tuple(str(mapping[t]) for t in tokens), "en"),
                        window=window)
        assert original.value == pytest.approx(renamed.value)

    def test_repetition_penalized(self):
        # the window must span both copies for the repeats to show up
        prefix = tuple(f"t{i}" for i in range(40))
        doubled = prefix + prefix
        window = 48
        rich = mattr(TokenSequence(prefix, "en"), window=window).value
        repeated = mattr(TokenSequence(doubled, "en"), window=window).value
        assert rich == pytest.approx(1.0)
        assert repeated < rich

    def test_random_bounds_bulk(self):
        rng = random.Random(99)
        window = 32
        for _ in range(1000):
            n = rng.randint(window + 1, 200)
            tokens = tuple(str(rng.randint(0, 50)) for _ in range(n))
            value = mattr(TokenSequence(tokens, "en"), window=window).value
            assert 1 / window - 1e-12 <= value <= 1 + 1e-12
