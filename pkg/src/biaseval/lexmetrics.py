"""Tokenization and the moving-average type-token ratio (MATTR).

English tokens are maximal alphanumeric runs, lowercased; Chinese tokens are
single alphanumeric characters. Punctuation and whitespace are dropped in
both languages.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

_EN_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)

# Sum over the first N-L windows of length L, not the usual N-L+1; the last
# window is dropped. "n-l+1" switches to the conventional window count.
WINDOW_MODES = ("n-l", "n-l+1")


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...]
    language: str

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class MattrResult:
    value: float
    window: int
    n_tokens: int
    fallback_used: bool


def tokenize(body: str, language: str) -> TokenSequence:
    """Deterministic tokenization per the language contract above."""
    if language == "zh":
        tokens = tuple(ch for ch in body if ch.isalnum())
    elif language == "en":
        tokens = tuple(_EN_TOKEN.findall(body.lower()))
    else:
        raise ValueError(f"unsupported language {language!r}")
    return TokenSequence(tokens=tokens, language=language)


def mattr(seq: TokenSequence, window: int = 32, window_mode: str = "n-l") -> MattrResult:
    """Mean type count over sliding windows, divided by the window length.

    For N > window: value = (sum of per-window distinct counts) / (L * W)
    where W is N-L windows ("n-l" mode) or N-L+1 ("n-l+1" mode), each window
    L tokens long, step 1, starting at the first token. For N <= window the
    plain type-token ratio is returned with fallback_used set.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if window_mode not in WINDOW_MODES:
        raise ValueError(f"window_mode must be one of {WINDOW_MODES}")
    tokens = seq.tokens
    n = len(tokens)
    if n == 0:
        raise ValueError("cannot compute mattr of an empty token sequence")

    if n <= window:
        value = len(set(tokens)) / n
        return MattrResult(value=value, window=window, n_tokens=n, fallback_used=True)

    n_windows = n - window if window_mode == "n-l" else n - window + 1
    counts = Counter(tokens[:window])
    total_types = len(counts)
    for i in range(1, n_windows):
        out_tok = tokens[i - 1]
        counts[out_tok] -= 1
        if counts[out_tok] == 0:
            del counts[out_tok]
        in_tok = tokens[i + window - 1]
        counts[in_tok] += 1
        total_types += len(counts)
    value = total_types / (window * n_windows)
    return MattrResult(value=value, window=window, n_tokens=n, fallback_used=False)
