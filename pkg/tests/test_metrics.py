import itertools
import math
from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dspace import metrics
from dspace.metrics import (
    SpaceCDF,
    average_normalized_cost,
    best_percentile,
    hypergeometric_success,
    normalized_cost,
    percent_savings,
    rank_ids,
    rank_resolution,
    target_region_size,
    top5_overlap,
)


def test_best_percentile_definition():
    cdf = SpaceCDF.from_values(range(1, 57))
    assert best_percentile(1, cdf) == 100.0
    assert best_percentile(56, cdf) == pytest.approx(100 / 56)
    median = SpaceCDF.from_values(range(100))
    assert best_percentile(50, median) == pytest.approx(50.0)
    up = SpaceCDF.from_values(range(1, 57), "maximize")
    assert best_percentile(56, up) == 100.0 and best_percentile(1, up) == pytest.approx(100 / 56)


def test_cdf_excludes_failed_points():
    cdf = SpaceCDF.from_values([3.0, None, float("nan"), 1.0])
    assert cdf.values == (1.0, 3.0)
    with pytest.raises(ValueError):
        best_percentile(1.0, SpaceCDF.from_values([]))


def test_top5_overlap():
    ids = list("abcdefghij")
    assert top5_overlap(ids, ids) == 100.0
    assert top5_overlap(ids, ids[5:] + ids[:5]) == 0.0
    assert top5_overlap(list("abcxy") + ["q"], list("abcde")) == 60.0
    with pytest.raises(ValueError):
        top5_overlap(list("abcd"), ids)


def test_rank_ids_ties_to_lower_id():
    assert rank_ids({"b": 1.0, "a": 1.0, "c": 0.5}) == ["c", "a", "b"]
    assert rank_ids({"b": 1.0, "a": 1.0, "c": 0.5}, "maximize") == ["a", "b", "c"]


def _rank_resolution_oracle(pred, true):
    # direct arithmetic, written independently of the implementation
    n = len(true)
    err = sum(abs(p - t) for p, t in zip(pred, true)) / n
    s = sorted(true)
    for g in range(1, n):
        gaps = [s[i + g] - s[i] for i in range(n - g)]
        if sum(gaps) / len(gaps) >= err:
            return g
    return n


def test_rank_resolution_exact():
    true = list(range(1, 11))
    assert rank_resolution(true, true) == 1


def test_rank_resolution_offset_fixture():
    true = [float(v) for v in range(1, 11)]
    pred = [v + 2.5 for v in true]
    assert rank_resolution(pred, true) == 3 == _rank_resolution_oracle(pred, true)


def test_rank_resolution_constant_predictions():
    # E = mean |5.5 - t| = 2.5, G(g) = g, so g = 3; the oracle output is committed.
    true = [float(v) for v in range(1, 11)]
    pred = [5.5] * 10
    assert rank_resolution(pred, true) == _rank_resolution_oracle(pred, true) == 3
    # a constant far from the data exhausts every gap and returns n
    assert rank_resolution([100.0] * 10, true) == 10


def test_rank_resolution_random_vs_oracle():
    rng = np.random.default_rng(3)
    for _ in range(200):
        n = int(rng.integers(2, 30))
        true = list(rng.normal(size=n))
        pred = [t + e for t, e in zip(true, rng.normal(scale=rng.uniform(0, 3), size=n))]
        assert rank_resolution(pred, true) == _rank_resolution_oracle(pred, true)


def test_normalized_cost():
    r = lambda new, reused: SimpleNamespace(new_measurements=new, reused=reused)  # noqa: E731
    assert normalized_cost(r(6, 4)) == 0.6
    assert normalized_cost(r(5, 0)) == 1.0
    assert normalized_cost(r(0, 9)) == 0.0
    with pytest.raises(ValueError):
        normalized_cost(r(0, 0))


def test_average_cost_identical_runs():
    runs = [["a", "b", "c"]] * 4
    assert average_normalized_cost(runs, 20, seed=1) == [1.0, 0.0, 0.0, 0.0]


def test_average_cost_disjoint_runs():
    runs = [[f"{i}-{j}" for j in range(3)] for i in range(5)]
    assert average_normalized_cost(runs, 20, seed=1) == [1.0] * 5


def test_average_cost_two_runs_exhaustive_oracle():
    r1 = ["a", "b", "c", "d"]
    r2 = ["c", "d", "e", "f", "g", "h"]
    # position-2 cost over both orders: r2 after r1 -> 4/6, r1 after r2 -> 2/4
    orders = list(itertools.permutations([r1, r2]))
    expected2 = sum(Fraction(len(set(b) - set(a)), len(b)) for a, b in orders) / len(orders)
    got = average_normalized_cost([r1, r2], permutations=4000, seed=0)
    assert got[0] == 1.0
    assert abs(got[1] - float(expected2)) < 0.02


def test_average_cost_accepts_operation_results():
    runs = [SimpleNamespace(proposals=["a", "b"]), SimpleNamespace(proposals=["b", "c"])]
    assert average_normalized_cost(runs, 10)[0] == 1.0


def test_average_cost_non_increasing_for_identical_distribution():
    rng = np.random.default_rng(9)
    runs = [list(rng.choice(60, size=15, replace=False)) for _ in range(12)]
    means = average_normalized_cost(runs, 200, seed=4)
    assert all(b <= a + 1e-9 for a, b in zip(means, means[1:]))


def test_hypergeometric_examples():
    assert hypergeometric_success(864, 43, 0) == 0.0
    assert hypergeometric_success(864, 43, 864) == 1.0
    assert hypergeometric_success(20, 1, 10) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        hypergeometric_success(10, 2, 11)


def _exact(N, K, n):
    return 1 - Fraction(math.comb(N - K, n), math.comb(N, n))


def test_hypergeometric_exact_rational_small():
    for N in range(1, 61):
        for K in range(0, N + 1, max(1, N // 7)):
            for n in range(0, N + 1, max(1, N // 9)):
                assert abs(hypergeometric_success(N, K, n) - float(_exact(N, K, n))) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 3000).flatmap(lambda N: st.tuples(
    st.just(N), st.integers(0, N - 1), st.integers(0, N - 1))))
def test_hypergeometric_monotone(args):
    N, K, n = args
    p = hypergeometric_success(N, K, n)
    assert 0.0 <= p <= 1.0
    assert hypergeometric_success(N, K, n + 1) >= p - 1e-12
    assert hypergeometric_success(N, K + 1, n) >= p - 1e-12


@pytest.mark.parametrize("N,K,n", [(864, 43, 15), (120, 6, 11), (2268, 113, 40)])
def test_random_walk_monte_carlo(N, K, n):
    rng = np.random.default_rng(N + n)
    runs = 2000
    hits = sum(bool((rng.permutation(N)[:n] < K).any()) for _ in range(runs))
    p = hypergeometric_success(N, K, n)
    se = math.sqrt(p * (1 - p) / runs)
    assert abs(hits / runs - p) <= 3 * se


def test_target_region_size():
    assert target_region_size(864) == 44
    assert target_region_size(860) == 43
    assert target_region_size(120) == 6
    assert target_region_size(3) == 1


def test_percent_savings():
    assert percent_savings(4, 48) == pytest.approx(91.6667, abs=1e-4)
    assert percent_savings(48, 48) == 0.0
    assert percent_savings(8, 56) == pytest.approx(85.714, abs=1e-3)
    assert metrics.percent_savings_from_costs([1, 2], [1, 2, 3, 4]) == pytest.approx(70.0)
    with pytest.raises(ValueError):
        percent_savings(5, 4)


def test_csv_emitters():
    text = metrics.baseline_csv(20, 1, 2)
    assert text.split("\r\n")[:2] == ["draws,probability", "0,0.0"]
    savings = metrics.savings_csv([1.0, 0.25])
    assert savings.split("\r\n")[0] == "run_index,mean_normalized_cost,percent_saved"
    assert savings.split("\r\n")[2] == "2,0.25,75.0"
