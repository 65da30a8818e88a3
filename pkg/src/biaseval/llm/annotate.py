"""Model self-annotation: direct 1-5 scoring and 3-round pairwise comparison.

Pairwise rounds 1 and 2 present the texts in their original order; round 3
swaps them and the answer is mapped back (a "Text A" reply under the swapped
presentation records a choice of the original B). Per-pair results aggregate
by 2-of-3 majority; pairs without a majority stay unresolved and are excluded
from ranking input.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

from biaseval.bws import ComparisonPair, kappa, majority
from biaseval.corpus import Discourse
from biaseval.llm.client import ANNOTATION_TEMPERATURE, ChatClient, TransportExhaustedError

UNPARSEABLE = "unparseable"

# Explicit "Text A"/"文本A" mentions outrank bare letters.
_EXPLICIT_CHOICE = re.compile(r"(?:text\s*|文本\s*)([AB])", re.IGNORECASE)
_BARE_CHOICE = re.compile(r"(?<![A-Za-z])([AB])(?![A-Za-z])")
_STANDALONE_DIGIT = re.compile(r"(?<!\d)([1-5])(?!\d)")


@dataclass(frozen=True)
class DirectScore:
    country_id: str
    prompt_id: str
    temperature: float
    language: str
    score: int | None          # None when unparseable
    shot_mode: str             # zero | few
    reply: str = ""


@dataclass(frozen=True)
class PairwiseAnswer:
    pair_id: str
    choice: str                # A | B | unparseable, in original orientation
    round: int                 # 1..3
    order_tag: str             # same | reverse


def parse_direct_score(reply: str) -> int | None:
    """First standalone digit 1-5 in the reply, or None."""
    match = _STANDALONE_DIGIT.search(reply)
    return int(match.group(1)) if match else None


def parse_pairwise_choice(reply: str) -> str:
    """A, B, or unparseable; explicit Text/文本 mentions win over bare letters."""
    match = _EXPLICIT_CHOICE.search(reply)
    if match:
        return match.group(1).upper()
    match = _BARE_CHOICE.search(reply)
    if match:
        return match.group(1).upper()
    return UNPARSEABLE


def load_annotation_prompt(name: str) -> str:
    """Bundled prompt text: direct_zero_zh, direct_few_zh, pairwise_zh, pairwise_en."""
    return resources.files("biaseval").joinpath(f"data/prompts/{name}.txt") \
        .read_text(encoding="utf-8")


def direct_score(client: ChatClient, discourse: Discourse, shot_mode: str = "zero",
                 temperature: float = ANNOTATION_TEMPERATURE) -> DirectScore:
    """Ask the model to grade one anonymized discourse from 1 to 5."""
    if shot_mode not in ("zero", "few"):
        raise ValueError(f"shot_mode must be zero or few, got {shot_mode!r}")
    prompt = load_annotation_prompt(f"direct_{shot_mode}_zh")
    reply = client.chat(prompt + "\n" + discourse.body, temperature=temperature)
    return DirectScore(
        country_id=discourse.country_id, prompt_id=discourse.prompt_id,
        temperature=discourse.temperature, language=discourse.language,
        score=parse_direct_score(reply), shot_mode=shot_mode, reply=reply,
    )


def _pair_message(prompt: str, text_a: str, text_b: str, language: str) -> str:
    if language == "zh":
        return f"{prompt}\n\n文本A：{text_a}\n\n文本B：{text_b}"
    return f"{prompt}\n\nText A: {text_a}\n\nText B: {text_b}"


@dataclass
class PairwiseResult:
    answers: list[PairwiseAnswer]
    pairs: list[ComparisonPair]
    unresolved: list[str]
    same_order_kappa: float | None
    reverse_order_kappa: float | None


def pairwise_annotate(client: ChatClient,
                      pairs: Sequence[tuple[str, str, str, str, str]],
                      rounds: int = 3,
                      temperature: float = ANNOTATION_TEMPERATURE,
                      max_workers: int = 8) -> PairwiseResult:
    """Three-round pairwise self-annotation with order reversal.

    Each input pair is (pair_id, id_a, id_b, body_a, body_b); the pair's
    language is inferred from the id suffix only by the caller, so the prompt
    language comes from the body (CJK detection). Returns per-round answers,
    majority-resolved comparisons (source=llm), unresolved pair ids, and the
    same-order (round 1 vs 2) and reverse-order (round 1 vs mapped round 3)
    kappas over pairs parseable in both rounds being compared.
    """
    if rounds != 3:
        raise ValueError("the order-reversal protocol is defined for exactly 3 rounds")

    def ask(pair, round_no):
        pair_id, id_a, id_b, body_a, body_b = pair
        reverse = round_no == 3
        zh = any("一" <= ch <= "鿿" for ch in body_a + body_b)
        language = "zh" if zh else "en"
        prompt = load_annotation_prompt(f"pairwise_{language}")
        first, second = (body_b, body_a) if reverse else (body_a, body_b)
        try:
            reply = client.chat(_pair_message(prompt, first, second, language),
                                temperature=temperature)
            choice = parse_pairwise_choice(reply)
        except TransportExhaustedError:
            choice = UNPARSEABLE
        if reverse and choice in ("A", "B"):
            choice = "B" if choice == "A" else "A"
        return PairwiseAnswer(pair_id=pair_id, choice=choice, round=round_no,
                              order_tag="reverse" if reverse else "same")

    answers: list[PairwiseAnswer] = []
    by_round: dict[int, dict[str, str]] = {}
    for round_no in (1, 2, 3):
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            round_answers = list(pool.map(lambda p: ask(p, round_no), pairs))
        answers.extend(round_answers)
        by_round[round_no] = {a.pair_id: a.choice for a in round_answers}

    comparisons: list[ComparisonPair] = []
    unresolved: list[str] = []
    for pair_id, id_a, id_b, _, _ in pairs:
        choices = [by_round[r][pair_id] for r in (1, 2, 3)]
        pick = majority(choices, unparseable=UNPARSEABLE)
        if pick is None:
            unresolved.append(pair_id)
            continue
        winner, loser = (id_a, id_b) if pick == "A" else (id_b, id_a)
        comparisons.append(ComparisonPair(winner_id=winner, loser_id=loser,
                                          source="llm", order_tag="same", round=0))

    same_kappa = _round_kappa(pairs, by_round, 1, 2)
    reverse_kappa = _round_kappa(pairs, by_round, 1, 3)
    return PairwiseResult(answers=answers, pairs=comparisons, unresolved=unresolved,
                          same_order_kappa=same_kappa, reverse_order_kappa=reverse_kappa)


def _round_kappa(pairs, by_round, r1: int, r2: int) -> float | None:
    a, b = [], []
    for pair_id, *_ in pairs:
        c1, c2 = by_round[r1][pair_id], by_round[r2][pair_id]
        if UNPARSEABLE not in (c1, c2):
            a.append(c1)
            b.append(c2)
    if not a:
        return None
    return kappa(a, b)
