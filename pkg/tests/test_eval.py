import json

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from conftest import make_dataset, random_pairs
from distilqe.distill import size_subsets
from distilqe.evaluation import (
    bin_variance_error,
    equal_count_sizes,
    evaluate,
    histogram,
    histograms_to_jsonl,
    pearson,
    rankdata,
    spearman,
    summarize_runs,
    sweep,
    write_sweep_csv,
)
from distilqe.exceptions import ConfigError, ContractError, MetricError
from distilqe.trainer import TrainConfig, evaluate_epoch, train
from oracles import pearson_direct, spearman_ranks


@pytest.mark.parametrize(
    "x, y, r",
    [([1, 2, 3], [1, 2, 3], 1.0), ([1, 2, 3], [3, 2, 1], -1.0), ([1, 2, 3, 4], [1, 3, 2, 4], 0.8)],
)
def test_pearson_examples(x, y, r):
    assert pearson(x, y) == pytest.approx(r, abs=1e-15)


def test_pearson_undefined_and_errors():
    assert pearson([1, 1, 1], [1, 2, 3]) is None
    assert pearson([1], [2]) is None
    with pytest.raises(ContractError, match="length mismatch"):
        pearson([1, 2], [1, 2, 3])


def test_pearson_matches_direct_formula_on_1000_pairs():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 1001))
        x = rng.normal(size=n)
        y = 0.5 * x + rng.normal(size=n)
        worst = max(worst, abs(pearson(x, y) - pearson_direct(list(x), list(y))))
    assert worst <= 1e-10


@given(
    st.lists(st.floats(-100, 100), min_size=2, max_size=50),
    st.floats(0.01, 100),
    st.floats(-100, 100),
    st.booleans(),
)
def test_pearson_affine(x, a, b, negate):
    assume(np.ptp(x) > 1e-3)
    a = -a if negate else a
    y = [a * v + b for v in x]
    assert abs(pearson(x, y) - (-1.0 if negate else 1.0)) <= 1e-9


@given(st.lists(st.integers(0, 5), min_size=1, max_size=30))
def test_rankdata_matches_counting_oracle(values):
    assert rankdata(values).tolist() == spearman_ranks(values)


def test_spearman_monotone():
    assert spearman([1, 2, 3, 4], [1, 4, 9, 16]) == 1.0


# -- reports --------------------------------------------------------------------------


def test_evaluate_identity_and_degenerate():
    r = evaluate([0.1, 0.5, 0.9], [0.1, 0.5, 0.9])
    assert r.pearson == 1.0 and r.mse == 0 and r.mae == 0
    assert r.format() == "pearson=1.0 mae=0.000000 rmse=0.000000 n=3"
    with pytest.raises(MetricError):
        evaluate([0.1], [0.1])
    flat = evaluate([0.5, 0.5], [0.1, 0.9])
    assert flat.pearson is None and not flat.pearson_defined
    assert "pearson=undefined" in flat.format()


def test_evaluate_epoch_on_student():
    d = make_dataset(random_pairs(10, 0), labels=list(np.linspace(0, 1, 10)))
    student, _ = train(d, d, TrainConfig(max_epochs=1), {"embedding_dim": 4, "hidden_dim": 2})
    r = evaluate_epoch(student, d)
    assert r.n == 10 and r.mae >= 0
    with pytest.raises(MetricError):
        evaluate_epoch(student, d.subset([0]))


# -- binning --------------------------------------------------------------------------


def test_bins_monotone_construction():
    v = np.arange(20, dtype=float)
    labels = np.zeros(20)
    preds = v / 100.0  # error grows with variance
    report = bin_variance_error(preds, labels, v, bins=10)
    errs = report.errors
    assert all(a < b for a, b in zip(errs, errs[1:]))


def test_bins_equal_variance_file_order():
    err = np.arange(10, dtype=float)
    report = bin_variance_error(err, np.zeros(10), np.ones(10), bins=5)
    assert report.errors == [0.5, 2.5, 4.5, 6.5, 8.5]


def test_bin_counts_remainder_rule():
    report = bin_variance_error(np.zeros(25), np.zeros(25), np.arange(25.0), bins=10)
    assert report.counts == [3, 3, 3, 3, 3, 2, 2, 2, 2, 2]


def test_bin_errors_and_jsonl(tmp_path):
    with pytest.raises(ConfigError):
        bin_variance_error(np.zeros(5), np.zeros(5), np.zeros(5), bins=10)
    with pytest.raises(ConfigError):
        bin_variance_error(np.zeros(5), np.zeros(5), np.zeros(5), bins=1)
    report = bin_variance_error(np.zeros(4), np.zeros(4), [0.1, 0.4, 0.2, 0.3], bins=2)
    report.to_jsonl(tmp_path / "b.jsonl")
    rows = [json.loads(line) for line in (tmp_path / "b.jsonl").read_text().splitlines()]
    assert [r["count"] for r in rows] == [2, 2] and rows[0]["variance_high"] == 0.2


def test_equal_width_bins():
    report = bin_variance_error(np.zeros(4), np.zeros(4), [0.0, 0.1, 0.2, 1.0], bins=2, equal_width=True)
    assert report.counts == [3, 1] and report.mode == "equal-width"


@given(st.integers(2, 300), st.integers(2, 20))
def test_bin_sizes_balanced(n, bins):
    assume(n >= bins)
    sizes = equal_count_sizes(n, bins)
    assert sum(sizes) == n and max(sizes) - min(sizes) <= 1
    rng = np.random.default_rng(n)
    report = bin_variance_error(rng.random(n), rng.random(n), rng.random(n), bins=bins)
    highs = [b.variance_high for b in report.bins]
    assert report.counts == sizes and highs == sorted(highs)


# -- histograms ---------------------------------------------------------------------------


def test_histogram_examples():
    assert histogram([0, 1], 2)[1].tolist() == [1, 1]
    assert histogram([], 4)[1].tolist() == [0, 0, 0, 0]
    assert histogram([-5, 7], 3)[1].tolist() == [1, 0, 1]
    with pytest.raises(ConfigError):
        histogram([0.5], 0)


@given(st.lists(st.floats(-2, 3), max_size=200), st.integers(1, 30))
def test_histogram_conserves_count(values, k):
    edges, counts = histogram(values, k)
    assert counts.sum() == len(values) and len(edges) == k + 1


def test_histograms_jsonl(tmp_path):
    histograms_to_jsonl(tmp_path / "h.jsonl", {"teacher": [0.4, 0.5], "gold": [0.0, 1.0]}, bin_count=2)
    rows = [json.loads(line) for line in (tmp_path / "h.jsonl").read_text().splitlines()]
    assert [r["name"] for r in rows] == ["teacher", "gold"]
    assert rows[0]["std"] < rows[1]["std"]


# -- sweeps --------------------------------------------------------------------------------


class Echo:
    """Student stand-in whose predictions are the labels plus size-dependent noise."""

    def __init__(self, size, seed):
        self.size, self.seed = size, seed

    def predict(self, dataset):
        rng = np.random.default_rng([self.size, self.seed])
        return dataset.labels() + rng.normal(0, 1.0 / self.size, len(dataset))


def test_single_repeat_has_zero_half_width():
    assert summarize_runs([0.7]) == (0.7, 0.0)


def test_sweep_shape_and_csv(tmp_path):
    pool = make_dataset(random_pairs(100, 0), labels=np.linspace(0, 1, 100))
    test = make_dataset(random_pairs(30, 1), labels=np.linspace(0, 1, 30))
    subsets = size_subsets(pool, [10, 50, 70, 100], seed=0)
    rows = sweep(subsets, test, test, lambda s, v, seed: Echo(len(s), seed), repeats=3)
    assert [r.size for r in rows] == [10, 50, 70, 100]
    assert rows[-1].mean_pearson > rows[0].mean_pearson
    assert all(len(r.values) == 3 and r.half_range >= 0 for r in rows)
    write_sweep_csv(rows, tmp_path / "s.csv")
    header = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert header == "size,mean_pearson,half_range_over_seeds,runs"


def test_sweep_config_errors():
    test = make_dataset(random_pairs(3, 1), labels=[0.1, 0.2, 0.3])
    with pytest.raises(ConfigError):
        sweep([test], test, test, None, repeats=0)
    with pytest.raises(ConfigError):
        sweep([test], test, test, None, repeats=2, seeds=[1])
