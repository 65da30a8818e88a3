"""Best-worst scaling: tuple schedules, judgments, pairwise expansion, agreement.

A schedule packs texts into 4-text tuples so every text appears at least r
times. A (best, worst) judgment over one tuple expands into 5 directed
"friendlier than" comparisons.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

TUPLE_SIZE = 4


class ScheduleError(ValueError):
    pass


class JudgmentError(ValueError):
    pass


@dataclass(frozen=True)
class Tuple4:
    tuple_id: str
    text_ids: tuple[str, ...]
    round: int = 1

    def __post_init__(self):
        if len(set(self.text_ids)) != len(self.text_ids):
            raise ScheduleError(f"{self.tuple_id}: duplicate text ids")


@dataclass(frozen=True)
class Judgment:
    tuple_id: str
    annotator_id: str
    best_id: str
    worst_id: str
    timestamp: str = ""


@dataclass(frozen=True)
class ComparisonPair:
    """winner_id was judged friendlier than loser_id."""

    winner_id: str
    loser_id: str
    source: str = "human"      # human | llm
    order_tag: str = "same"    # same | reverse
    round: int = 1

    def __post_init__(self):
        if self.winner_id == self.loser_id:
            raise JudgmentError("winner and loser must differ")


def schedule(text_ids: Sequence[str], repetitions: int,
             tuple_size: int = TUPLE_SIZE, seed: int = 0,
             round_number: int = 1) -> list[Tuple4]:
    """Pack texts into tuples via repeated seeded shuffle-and-partition.

    Each of the `repetitions` passes shuffles all texts and slices them into
    consecutive blocks of `tuple_size`; a short final block is backfilled with
    texts from earlier in the same shuffle, so every text appears at least
    `repetitions` times. Deterministic for a fixed seed.
    """
    ids = list(text_ids)
    n = len(ids)
    if tuple_size < 2:
        raise ScheduleError(f"tuple_size must be >= 2, got {tuple_size}")
    if n < tuple_size:
        raise ScheduleError(f"need at least {tuple_size} texts, got {n}")
    if repetitions < 1:
        raise ScheduleError(f"repetitions must be >= 1, got {repetitions}")
    if len(set(ids)) != n:
        raise ScheduleError("duplicate text ids")

    rng = random.Random(seed)
    tuples: list[Tuple4] = []
    for rep in range(repetitions):
        order = ids[:]
        rng.shuffle(order)
        for start in range(0, n, tuple_size):
            block = order[start:start + tuple_size]
            if len(block) < tuple_size:
                in_block = set(block)
                filler = (t for t in order if t not in in_block)
                while len(block) < tuple_size:
                    block.append(next(filler))
            tuples.append(Tuple4(
                tuple_id=f"t{len(tuples):05d}",
                text_ids=tuple(block),
                round=round_number,
            ))
    return tuples


def expand(judgment: Judgment, tup: Tuple4) -> list[ComparisonPair]:
    """The 5 pairwise comparisons implied by one best/worst pick.

    Best beats the three others; the two middle texts each beat worst.
    """
    if judgment.tuple_id != tup.tuple_id:
        raise JudgmentError(f"judgment is for {judgment.tuple_id}, tuple is {tup.tuple_id}")
    best, worst = judgment.best_id, judgment.worst_id
    if best == worst:
        raise JudgmentError("best and worst must differ")
    if best not in tup.text_ids or worst not in tup.text_ids:
        raise JudgmentError("best and worst must belong to the tuple")

    middles = [t for t in tup.text_ids if t not in (best, worst)]
    pairs = [ComparisonPair(best, other, round=tup.round) for other in tup.text_ids if other != best]
    pairs += [ComparisonPair(mid, worst, round=tup.round) for mid in middles]
    return pairs


def majority(choices: Iterable[Hashable],
             unparseable: Hashable = "unparseable") -> Hashable | None:
    """The pick appearing at least twice across rounds, or None if unresolved.

    Unparseable entries (the `unparseable` sentinel or None) never count as
    picks.
    """
    counted = Counter(c for c in choices if c is not None and c != unparseable)
    if not counted:
        return None
    pick, count = counted.most_common(1)[0]
    return pick if count >= 2 else None


def kappa(rater1: Sequence[Hashable], rater2: Sequence[Hashable]) -> float:
    """Cohen's kappa with marginal-product chance agreement.

    Returns 1.0 in the degenerate case where both raters are constant on the
    same label (observed and chance agreement both 1).
    """
    if len(rater1) != len(rater2):
        raise ValueError(f"label lists differ in length: {len(rater1)} vs {len(rater2)}")
    n = len(rater1)
    if n == 0:
        raise ValueError("need at least one item")

    observed = sum(1 for a, b in zip(rater1, rater2) if a == b) / n
    marg1 = Counter(rater1)
    marg2 = Counter(rater2)
    chance = sum(marg1[label] * marg2.get(label, 0) for label in marg1) / (n * n)
    if chance == 1.0:
        return 1.0
    return (observed - chance) / (1.0 - chance)
