"""Joins scores with social indicators and computes the report statistics.

Correlations use Spearman's rho (average ranks for ties) with a seeded
permutation p-value; group comparisons use the two-sided Mann-Whitney U with
normal approximation, tie correction, and continuity correction. Missing
values are dropped listwise and their counts reported, never zero-filled.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

INDICATORS = ("GDP", "PCGDP", "Incre_Rate_GDP", "Incre_Rate_PCGDP", "IU", "HDI", "WHR")
REPORT_METRICS = ("RC", "SM", "HS", "OF", "RG-proportions", "bws-score", "direct-score")

N_PERMUTATIONS = 10_000
MAP_BUCKETS = 9


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class ReportRow:
    country_id: str
    prompt_id: str
    temperature: float
    language: str
    metric: str
    value: float | None


def _rank_average(values: Sequence[float]) -> np.ndarray:
    """Ranks 1..n with ties sharing their average rank."""
    arr = np.asarray(values, dtype=float)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(len(arr), dtype=float)
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0:
        return 0.0
    return float(dx @ dy) / denom


def _complete_pairs(x: Sequence, y: Sequence) -> tuple[np.ndarray, np.ndarray]:
    if len(x) != len(y):
        raise AnalysisError(f"paired samples differ in length: {len(x)} vs {len(y)}")
    xs, ys = [], []
    for a, b in zip(x, y):
        if a is None or b is None:
            continue
        a, b = float(a), float(b)
        if math.isnan(a) or math.isnan(b):
            continue
        xs.append(a)
        ys.append(b)
    return np.asarray(xs), np.asarray(ys)


def spearman(x: Sequence, y: Sequence, n_permutations: int = N_PERMUTATIONS,
             seed: int = 0) -> tuple[float, float]:
    """Spearman's rho with a two-sided permutation p-value.

    Incomplete pairs are dropped listwise; fewer than 3 surviving pairs is an
    error. The p-value counts permutations of y whose |rho| reaches the
    observed |rho|, with add-one smoothing.
    """
    xs, ys = _complete_pairs(x, y)
    if len(xs) < 3:
        raise AnalysisError(f"need at least 3 complete pairs, got {len(xs)}")
    rank_x = _rank_average(xs)
    rank_y = _rank_average(ys)
    rho = _pearson(rank_x, rank_y)

    rng = np.random.default_rng(seed)
    hits = 0
    threshold = abs(rho) - 1e-12
    for _ in range(n_permutations):
        permuted = rng.permutation(rank_y)
        if abs(_pearson(rank_x, permuted)) >= threshold:
            hits += 1
    p_value = (hits + 1) / (n_permutations + 1)
    return rho, p_value


def significance_stars(p_value: float) -> str:
    if p_value <= 0.001:
        return "***"
    if p_value <= 0.01:
        return "**"
    if p_value <= 0.05:
        return "*"
    return ""


def compare_groups(sample_a: Sequence[float],
                   sample_b: Sequence[float]) -> tuple[float, float]:
    """Two-sided Mann-Whitney U (normal approximation, tie and continuity
    corrected). Returns (U of sample_a, p). All-equal pooled data gives p=1."""
    a = np.asarray([float(v) for v in sample_a if v is not None], dtype=float)
    b = np.asarray([float(v) for v in sample_b if v is not None], dtype=float)
    n1, n2 = len(a), len(b)
    if n1 < 2 or n2 < 2:
        raise AnalysisError("each sample needs at least 2 values")

    pooled = np.concatenate([a, b])
    ranks = _rank_average(pooled)
    r1 = float(ranks[:n1].sum())
    u1 = r1 - n1 * (n1 + 1) / 2
    mean_u = n1 * n2 / 2

    n = n1 + n2
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(((tie_counts ** 3) - tie_counts).sum())
    var_u = n1 * n2 / 12 * ((n + 1) - tie_term / (n * (n - 1)))
    if var_u <= 0:
        return u1, 1.0

    diff = u1 - mean_u
    if diff > 0.5:
        diff -= 0.5
    elif diff < -0.5:
        diff += 0.5
    else:
        diff = 0.0
    z = diff / math.sqrt(var_u)
    p_value = min(1.0, math.erfc(abs(z) / math.sqrt(2)))
    return u1, p_value


def aggregate(rows: Iterable[ReportRow], group_by: Sequence[str],
              stat: str = "mean") -> list[dict]:
    """Grouped mean or count; missing values excluded from means and the
    non-missing count always reported."""
    if stat not in ("mean", "count"):
        raise AnalysisError(f"stat must be mean or count, got {stat!r}")
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        key = tuple(getattr(row, field) for field in group_by)
        bucket = groups.setdefault(key, [])
        if row.value is not None and not (isinstance(row.value, float) and math.isnan(row.value)):
            bucket.append(float(row.value))
    out = []
    for key in sorted(groups, key=lambda k: tuple(str(v) for v in k)):
        values = groups[key]
        entry = dict(zip(group_by, key))
        entry["count"] = len(values)
        if stat == "mean":
            entry["value"] = sum(values) / len(values) if values else None
        else:
            entry["value"] = len(values)
        out.append(entry)
    return out


def quantile_buckets(values: Sequence[float], n_buckets: int = MAP_BUCKETS) -> list[int]:
    """Bucket 1..n_buckets per value by average rank; equal values share a
    bucket, and an all-equal input sits in the middle bucket."""
    arr = np.asarray(values, dtype=float)
    if len(arr) == 0:
        return []
    if np.all(arr == arr[0]):
        return [(n_buckets + 1) // 2] * len(arr)
    ranks = _rank_average(arr) - 1.0
    buckets = np.floor(ranks * n_buckets / len(arr)).astype(int) + 1
    return [int(min(max(b, 1), n_buckets)) for b in buckets]


def export_map(scores: dict[str, float], out_path: str | Path,
               n_buckets: int = MAP_BUCKETS) -> list[dict]:
    """Write country_id, log_score, bucket rows for external map rendering."""
    items = sorted(scores.items())
    logs = [math.log(score) for _, score in items]
    buckets = quantile_buckets(logs, n_buckets)
    rows = [{"country_id": cid, "log_score": log, "bucket": bucket}
            for (cid, _), log, bucket in zip(items, logs, buckets)]
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["country_id", "log_score", "bucket"])
        writer.writeheader()
        writer.writerows(rows)
    return rows


def load_indicators(path: str | Path, year: int | None = None) -> dict[str, dict[str, float]]:
    """Long-format indicators CSV (country_id, year, indicator, value).

    Blank values stay absent: missingness is explicit, never zero-filled.
    With a year given, rows tagged with other years are dropped.
    """
    table: dict[str, dict[str, float]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            value = row.get("value", "").strip()
            if value == "":
                continue
            if year is not None and int(row.get("year", year)) != year:
                continue
            table.setdefault(row["country_id"], {})[row["indicator"]] = float(value)
    return table


def correlate_with_indicators(scores: dict[str, float],
                              indicators: dict[str, dict[str, float]],
                              which: Sequence[str] = INDICATORS,
                              seed: int = 0,
                              n_permutations: int = N_PERMUTATIONS) -> list[dict]:
    """Spearman rho of country scores against each indicator.

    Countries missing either side are dropped listwise; the missing count
    rides along with every correlation row.
    """
    out = []
    for indicator in which:
        xs, ys = [], []
        missing = 0
        for country, score in sorted(scores.items()):
            value = indicators.get(country, {}).get(indicator)
            if value is None:
                missing += 1
                continue
            xs.append(score)
            ys.append(value)
        if len(xs) < 3:
            out.append({"indicator": indicator, "rho": None, "p_value": None,
                        "n": len(xs), "missing": missing, "stars": ""})
            continue
        rho, p_value = spearman(xs, ys, seed=seed, n_permutations=n_permutations)
        out.append({"indicator": indicator, "rho": rho, "p_value": p_value,
                    "n": len(xs), "missing": missing,
                    "stars": significance_stars(p_value)})
    return out
