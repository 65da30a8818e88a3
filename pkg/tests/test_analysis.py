import math
import random

import numpy as np
import pytest
import scipy.stats

from biaseval.analysis import (
    AnalysisError,
    ReportRow,
    aggregate,
    compare_groups,
    correlate_with_indicators,
    export_map,
    load_indicators,
    quantile_buckets,
    significance_stars,
    spearman,
)


class TestSpearman:
    def test_monotone(self):
        rho, p = spearman([1, 2, 3], [10, 20, 30], n_permutations=500, seed=0)
        assert rho == pytest.approx(1.0)

    def test_antitone(self):
        rho, _ = spearman([1, 2, 3], [30, 20, 10], n_permutations=500, seed=0)
        assert rho == pytest.approx(-1.0)

    def test_ties_average_ranks(self):
        # hand computation with average ranks: x ranks (1, 2.5, 2.5, 4),
        # y ranks (1, 3, 2, 4) -> pearson = 4.5 / sqrt(4.5 * 5)
        expected = 4.5 / math.sqrt(4.5 * 5.0)
        rho, _ = spearman([1, 2, 2, 4], [1, 3, 2, 4], n_permutations=100, seed=0)
        assert rho == pytest.approx(expected)
        reference = scipy.stats.spearmanr([1, 2, 2, 4], [1, 3, 2, 4]).statistic
        assert rho == pytest.approx(reference)

    def test_permutation_p_small_for_perfect_monotone(self):
        x = list(range(10))
        y = [v * 3 + 1 for v in x]
        _, p = spearman(x, y, n_permutations=10_000, seed=42)
        assert p < 0.001

    def test_symmetry(self):
        x = [3, 1, 4, 1, 5, 9, 2, 6]
        y = [2, 7, 1, 8, 2, 8, 1, 8]
        rho_xy, _ = spearman(x, y, n_permutations=200, seed=0)
        rho_yx, _ = spearman(y, x, n_permutations=200, seed=0)
        assert rho_xy == pytest.approx(rho_yx)

    def test_monotone_transform_invariance(self):
        x = [0.3, 1.5, 2.2, 4.1, 5.0, 6.6]
        y = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0]
        rho_raw, _ = spearman(x, y, n_permutations=100, seed=0)
        rho_exp, _ = spearman([math.exp(v) for v in x], y, n_permutations=100, seed=0)
        assert rho_raw == pytest.approx(rho_exp)

    def test_listwise_deletion(self):
        rho, _ = spearman([1, 2, None, 3], [10, 20, 99, 30], n_permutations=100, seed=0)
        assert rho == pytest.approx(1.0)

    def test_too_few_pairs(self):
        with pytest.raises(AnalysisError):
            spearman([1, 2], [2, 1])
        with pytest.raises(AnalysisError):
            spearman([1, None, 3], [1, 2, None])


class TestCompareGroups:
    def test_identical_samples_p_near_one(self):
        sample = [1.0, 2.0, 3.0, 4.0]
        _, p = compare_groups(sample, sample)
        assert p == pytest.approx(1.0, abs=0.05)

    def test_disjoint_ranges_tiny_p(self):
        a = list(range(20))
        b = [v + 100 for v in range(20)]
        _, p = compare_groups(a, b)
        assert p < 0.001

    def test_matches_scipy_reference(self):
        rng = np.random.default_rng(1234)
        for _ in range(20):
            a = rng.normal(0, 1, size=rng.integers(5, 40))
            b = rng.normal(rng.uniform(-1, 1), 1.3, size=rng.integers(5, 40))
            u, p = compare_groups(a, b)
            ref = scipy.stats.mannwhitneyu(a, b, alternative="two-sided",
                                           method="asymptotic")
            assert u == pytest.approx(ref.statistic)
            assert p == pytest.approx(ref.pvalue, rel=1e-9)

    def test_matches_scipy_with_ties(self):
        rng = np.random.default_rng(7)
        a = np.round(rng.normal(0, 1, 30), 1)
        b = np.round(rng.normal(0.4, 1, 25), 1)
        u, p = compare_groups(a, b)
        ref = scipy.stats.mannwhitneyu(a, b, alternative="two-sided",
                                       method="asymptotic")
        assert u == pytest.approx(ref.statistic)
        assert p == pytest.approx(ref.pvalue, rel=1e-9)

    def test_swap_symmetric_p(self):
        a = [1.0, 3.0, 5.0, 7.0, 8.0]
        b = [2.0, 4.0, 6.0, 6.5]
        u_ab, p_ab = compare_groups(a, b)
        u_ba, p_ba = compare_groups(b, a)
        assert p_ab == pytest.approx(p_ba)
        assert u_ab + u_ba == pytest.approx(len(a) * len(b))

    def test_degenerate_all_equal(self):
        _, p = compare_groups([2.0, 2.0, 2.0], [2.0, 2.0])
        assert p == 1.0

    def test_too_small(self):
        with pytest.raises(AnalysisError):
            compare_groups([1.0], [1.0, 2.0])

    def test_stars(self):
        assert significance_stars(0.0005) == "***"
        assert significance_stars(0.005) == "**"
        assert significance_stars(0.05) == "*"
        assert significance_stars(0.2) == ""


def _rows():
    return [
        ReportRow("c1", "p1", 0.0, "en", "SM", 0.5),
        ReportRow("c1", "p1", 0.3, "en", "SM", 0.7),
        ReportRow("c1", "p2", 0.0, "en", "SM", 0.9),
        ReportRow("c2", "p1", 0.0, "en", "SM", None),
        ReportRow("c2", "p1", 0.3, "en", "SM", 0.1),
        ReportRow("c2", "p2", 0.0, "en", "SM", 0.3),
    ]


class TestAggregate:
    def test_mean_over_constant(self):
        rows = [ReportRow("c", "p1", 0.0, "en", "SM", 0.4)] * 5
        out = aggregate(rows, ["country_id"], "mean")
        assert out == [{"country_id": "c", "count": 5, "value": pytest.approx(0.4)}]

    def test_hand_built_group_means(self):
        out = aggregate(_rows(), ["country_id"], "mean")
        by_country = {row["country_id"]: row for row in out}
        assert by_country["c1"]["value"] == pytest.approx((0.5 + 0.7 + 0.9) / 3)
        assert by_country["c2"]["value"] == pytest.approx((0.1 + 0.3) / 2)
        assert by_country["c2"]["count"] == 2  # missing value excluded

    def test_count_sums_to_non_missing(self):
        out = aggregate(_rows(), ["prompt_id"], "count")
        assert sum(row["value"] for row in out) == 5

    def test_group_by_prompt_temperature_shape(self):
        out = aggregate(_rows(), ["prompt_id", "temperature"], "mean")
        keys = {(row["prompt_id"], row["temperature"]) for row in out}
        assert keys == {("p1", 0.0), ("p1", 0.3), ("p2", 0.0)}


class TestQuantileBuckets:
    def test_uniform_scores_middle_bucket(self):
        assert quantile_buckets([2.0] * 17) == [5] * 17

    def test_strictly_increasing_nine(self):
        assert quantile_buckets(list(range(9))) == list(range(1, 10))

    def test_balanced_sizes_at_scale(self):
        rng = random.Random(5)
        values = [rng.random() for _ in range(195)]
        buckets = quantile_buckets(values)
        sizes = [buckets.count(b) for b in range(1, 10)]
        assert max(sizes) - min(sizes) <= 1
        assert sum(sizes) == 195

    def test_order_respected(self):
        values = [5.0, 1.0, 3.0]
        buckets = quantile_buckets(values)
        assert buckets[1] <= buckets[2] <= buckets[0]


class TestMapExport:
    def test_csv_shape(self, tmp_path):
        scores = {f"c{i}": math.exp(i / 10) for i in range(9)}
        out = tmp_path / "map.csv"
        rows = export_map(scores, out)
        assert [row["bucket"] for row in rows] == list(range(1, 10))
        text = out.read_text().splitlines()
        assert text[0] == "country_id,log_score,bucket"
        assert len(text) == 10


class TestIndicators:
    def test_load_and_correlate(self, tmp_path):
        lines = ["country_id,year,indicator,value"]
        scores = {}
        rng = random.Random(11)
        for i in range(30):
            country = f"c{i:02d}"
            scores[country] = i / 10 + rng.random() * 0.01
            lines.append(f"{country},2021,GDP,{i * 1000}")
            if i != 3:
                lines.append(f"{country},2021,HDI,{1 - i / 40}")
        path = tmp_path / "ind.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        table = load_indicators(path)
        assert "HDI" not in table["c03"]

        rows = correlate_with_indicators(scores, table, which=("GDP", "HDI", "WHR"),
                                         n_permutations=300)
        by_name = {row["indicator"]: row for row in rows}
        assert by_name["GDP"]["rho"] == pytest.approx(1.0)
        assert by_name["GDP"]["missing"] == 0
        assert by_name["HDI"]["rho"] == pytest.approx(-1.0)
        assert by_name["HDI"]["missing"] == 1
        assert by_name["HDI"]["n"] == 29
        assert by_name["WHR"]["rho"] is None   # indicator absent everywhere

    def test_blank_values_stay_missing(self, tmp_path):
        path = tmp_path / "ind.csv"
        path.write_text("country_id,year,indicator,value\nc1,2021,GDP,\n",
                        encoding="utf-8")
        assert load_indicators(path) == {}

    def test_year_filter(self, tmp_path):
        path = tmp_path / "ind.csv"
        path.write_text(
            "country_id,year,indicator,value\n"
            "c1,2021,GDP,5\nc1,2019,GDP,4\nc2,2019,GDP,9\n", encoding="utf-8")
        assert load_indicators(path, year=2021) == {"c1": {"GDP": 5.0}}
        assert load_indicators(path)["c1"]["GDP"] == 4.0  # last row wins unfiltered
