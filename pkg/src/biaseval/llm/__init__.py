"""Chat-completion client and the three tasks built on it: corpus generation,
direct 1-5 self-scoring, and pairwise self-annotation with order reversal."""

from biaseval.llm.client import AuthenticationError, ChatClient, ChatRequest, TransportExhaustedError
from biaseval.llm.annotate import (
    DirectScore,
    PairwiseAnswer,
    direct_score,
    pairwise_annotate,
    parse_direct_score,
    parse_pairwise_choice,
)
from biaseval.llm.generate import GenerationReport, generate_corpus, request_fanout, slot_count

__all__ = [
    "AuthenticationError",
    "ChatClient",
    "ChatRequest",
    "TransportExhaustedError",
    "DirectScore",
    "PairwiseAnswer",
    "direct_score",
    "pairwise_annotate",
    "parse_direct_score",
    "parse_pairwise_choice",
    "GenerationReport",
    "generate_corpus",
    "request_fanout",
    "slot_count",
]
