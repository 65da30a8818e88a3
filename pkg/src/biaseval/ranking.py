"""Spectral rank aggregation of pairwise comparisons under the BTL model.

Given win counts w[i][j] ("i beat j"), the spectral iteration builds a
continuous-time Markov chain whose transition rate from j to i is
w[i][j] / (pi_i + pi_j) under the current scores pi, takes its stationary
distribution as the new pi, and repeats. The fixed point is the BTL
maximum-likelihood estimate. A coordinate-ascent brute-force maximizer over
tiny graphs serves as an independent verification oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from biaseval.bws import ComparisonPair

DEFAULT_EPSILON = 0.01
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100

# Dense linear solves are fine up to a couple thousand items; above that the
# stationary distribution comes from uniformized power iteration.
DENSE_SOLVE_LIMIT = 2000


class RankingError(ValueError):
    pass


class DisconnectedGraphError(RankingError):
    def __init__(self, components: list[list[str]]):
        self.components = components
        listing = "; ".join("{" + ", ".join(c) + "}" for c in components)
        super().__init__(
            f"comparison graph is not strongly connected without smoothing; "
            f"components: {listing}")


@dataclass
class ComparisonGraph:
    """Items plus a dense win-count matrix (wins[i][j] = count i beat j)."""

    items: list[str]
    wins: np.ndarray
    smoothing: float = 0.0

    def __post_init__(self):
        self.wins = np.asarray(self.wins, dtype=float)
        n = len(self.items)
        if self.wins.shape != (n, n):
            raise RankingError(f"wins must be {n}x{n}, got {self.wins.shape}")
        if (self.wins < 0).any():
            raise RankingError("win counts must be non-negative")
        if np.diagonal(self.wins).any():
            raise RankingError("diagonal win counts must be zero")
        if self.smoothing < 0:
            raise RankingError("smoothing must be >= 0")

    @classmethod
    def from_pairs(cls, pairs: Iterable[ComparisonPair],
                   smoothing: float = 0.0,
                   items: Sequence[str] | None = None) -> "ComparisonGraph":
        pairs = list(pairs)
        if items is None:
            seen: dict[str, None] = {}
            for p in pairs:
                seen.setdefault(p.winner_id)
                seen.setdefault(p.loser_id)
            items = list(seen)
        index = {item: i for i, item in enumerate(items)}
        wins = np.zeros((len(items), len(items)))
        for p in pairs:
            wins[index[p.winner_id], index[p.loser_id]] += 1
        return cls(items=list(items), wins=wins, smoothing=smoothing)

    def effective_wins(self) -> np.ndarray:
        """Win counts with the smoothing pseudo-wins added in both directions."""
        if self.smoothing == 0:
            return self.wins
        n = len(self.items)
        return self.wins + self.smoothing * (np.ones((n, n)) - np.eye(n))

    def strongly_connected_components(self) -> list[list[str]]:
        """Components of the directed graph with an edge j->i per win of i over j."""
        w = self.effective_wins()
        adjacency = csr_matrix((w.T > 0).astype(np.int8))
        n_comp, labels = connected_components(adjacency, directed=True, connection="strong")
        groups: list[list[str]] = [[] for _ in range(n_comp)]
        for item, label in zip(self.items, labels):
            groups[label].append(item)
        return groups


@dataclass
class ScoreTable:
    """Positive per-item scores normalized to geometric mean one."""

    items: list[str]
    scores: np.ndarray
    iterations: int = 0
    converged: bool = True

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)

    def score_of(self, item: str) -> float:
        return float(self.scores[self.items.index(item)])

    def log_scores(self) -> np.ndarray:
        return np.log(self.scores)

    def as_rows(self) -> list[tuple[str, float, float]]:
        return [(item, float(s), float(math.log(s)))
                for item, s in zip(self.items, self.scores)]


def _normalize_geometric(scores: np.ndarray) -> np.ndarray:
    log_s = np.log(scores)
    return np.exp(log_s - log_s.mean())


def _stationary_dense(generator: np.ndarray) -> np.ndarray:
    # Solve pi^T G = 0 with sum(pi) = 1 by replacing one equation.
    n = generator.shape[0]
    a = generator.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(a, b)
    return pi


def _stationary_power(generator: np.ndarray, tol: float = 1e-12,
                      max_iter: int = 100_000) -> np.ndarray:
    # Uniformization: P = I + G/rate is a stochastic matrix sharing G's
    # stationary distribution.
    rate = float(np.max(-np.diagonal(generator))) or 1.0
    transition = np.eye(generator.shape[0]) + generator / (rate * 1.000001)
    pi = np.full(generator.shape[0], 1.0 / generator.shape[0])
    for _ in range(max_iter):
        nxt = pi @ transition
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) < tol:
            return nxt
        pi = nxt
    return pi


def ilsr(graph: ComparisonGraph, tol: float = DEFAULT_TOL,
         max_iter: int = DEFAULT_MAX_ITER,
         dense_limit: int = DENSE_SOLVE_LIMIT) -> ScoreTable:
    """Iterative Luce spectral ranking to the BTL maximum likelihood.

    Raises DisconnectedGraphError when the unsmoothed graph is not strongly
    connected; returns converged=False when max_iter passes without the
    max |delta log pi| dropping below tol.
    """
    components = graph.strongly_connected_components()
    if len(components) > 1:
        raise DisconnectedGraphError(components)

    wins = graph.effective_wins()
    n = len(graph.items)
    if n == 1:
        return ScoreTable(items=list(graph.items), scores=np.ones(1))

    pi = np.ones(n)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        denom = pi[:, None] + pi[None, :]
        # rates[j, i]: flow from loser j toward winner i
        rates = (wins / denom).T
        np.fill_diagonal(rates, 0.0)
        generator = rates - np.diag(rates.sum(axis=1))
        if n <= dense_limit:
            stationary = _stationary_dense(generator)
        else:
            stationary = _stationary_power(generator)
        stationary = np.clip(stationary, 1e-300, None)
        new_pi = _normalize_geometric(stationary)
        delta = float(np.max(np.abs(np.log(new_pi) - np.log(pi))))
        pi = new_pi
        if delta < tol:
            converged = True
            break
    return ScoreTable(items=list(graph.items), scores=pi,
                      iterations=iterations, converged=converged)


def btl_log_likelihood(wins: np.ndarray, scores: np.ndarray) -> float:
    total = 0.0
    n = wins.shape[0]
    for i in range(n):
        for j in range(n):
            if wins[i, j] > 0:
                total += wins[i, j] * math.log(scores[i] / (scores[i] + scores[j]))
    return total


def btl_brute_force(graph: ComparisonGraph, tol: float = 1e-10,
                    max_sweeps: int = 10_000) -> ScoreTable:
    """Coordinate ascent on the BTL log-likelihood in log space (oracle path).

    Refuses graphs with more than 8 items. Each sweep solves, per item, the
    stationarity condition wins_i = sum_j n_ij * pi_i / (pi_i + pi_j) by
    bisection on log pi_i.
    """
    n = len(graph.items)
    if n > 8:
        raise RankingError(f"brute-force oracle is limited to 8 items, got {n}")
    components = graph.strongly_connected_components()
    if len(components) > 1:
        raise DisconnectedGraphError(components)
    if n == 1:
        return ScoreTable(items=list(graph.items), scores=np.ones(1))

    wins = graph.effective_wins()
    matches = wins + wins.T
    total_wins = wins.sum(axis=1)
    log_pi = np.zeros(n)

    def conditional_gradient(i: int, theta: float) -> float:
        pi_i = math.exp(theta)
        expected = 0.0
        for j in range(n):
            if j != i and matches[i, j] > 0:
                expected += matches[i, j] * pi_i / (pi_i + math.exp(log_pi[j]))
        return total_wins[i] - expected

    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        shift = 0.0
        for i in range(n):
            lo, hi = log_pi[i] - 1.0, log_pi[i] + 1.0
            while conditional_gradient(i, lo) < 0:
                lo -= 1.0
            while conditional_gradient(i, hi) > 0:
                hi += 1.0
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if conditional_gradient(i, mid) > 0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo < tol / 4:
                    break
            new_theta = 0.5 * (lo + hi)
            shift = max(shift, abs(new_theta - log_pi[i]))
            log_pi[i] = new_theta
        log_pi -= log_pi.mean()
        if shift < tol:
            break
    scores = np.exp(log_pi - log_pi.mean())
    return ScoreTable(items=list(graph.items), scores=scores,
                      iterations=sweeps, converged=True)


def rank_with_smoothing(pairs: Iterable[ComparisonPair],
                        epsilon: float = DEFAULT_EPSILON,
                        items: Sequence[str] | None = None,
                        tol: float = DEFAULT_TOL,
                        max_iter: int = DEFAULT_MAX_ITER) -> ScoreTable:
    """Build the comparison graph, add epsilon pseudo-wins both ways, run ilsr."""
    graph = ComparisonGraph.from_pairs(pairs, smoothing=epsilon, items=items)
    if len(graph.items) < 2:
        raise RankingError(f"need at least 2 items, got {len(graph.items)}")
    return ilsr(graph, tol=tol, max_iter=max_iter)
