import csv
from dataclasses import replace

import numpy as np
import pytest

from distilqe.exceptions import ConfigError
from distilqe.synthetic_bench import (
    THRESHOLDS,
    BenchConfig,
    FindingsReport,
    Scenario,
    generate_scenario,
    run_findings_suite,
)

SMALL = Scenario(
    seed=3,
    source_vocab=200,
    junk_vocab=500,
    train_size=60,
    val_size=20,
    test_size=30,
    unlabeled_size=80,
    shifted_size=40,
    shifted_vocab=50,
)
FAST = BenchConfig(embedding_dim=6, hidden_dim=4, max_epochs=2, seeds=(0, 1), ensemble_size=2, bins=3)


@pytest.fixture(scope="module")
def small():
    return generate_scenario(SMALL)


def test_scenario_validation():
    with pytest.raises(ConfigError):
        Scenario(sigma_gold=-0.1)
    with pytest.raises(ConfigError):
        Scenario(train_size=1)
    with pytest.raises(ConfigError):
        Scenario(min_len=5, max_len=4)


def test_pool_sizes_and_domains(small):
    sizes = {k: len(v) for k, v in small.pools().items()}
    assert sizes == {"train": 60, "validation": 20, "test": 30, "unlabeled": 80, "shifted": 40}
    assert small.shifted.domain == "shifted" and small.unlabeled.domain == "in-domain"
    assert all(ex.label is None for ex in small.unlabeled)
    assert all(0 <= ex.label <= 1 for ex in small.train)


def test_pools_pairwise_disjoint(small):
    keys = [{ex.key for ex in pool} for pool in small.pools().values()]
    for i in range(len(keys)):
        for j in range(i + 1, len(keys)):
            assert not keys[i] & keys[j]
    assert sum(map(len, keys)) == sum(len(p) for p in small.pools().values())


def test_noiseless_gold_equals_planted(small):
    g = generate_scenario(replace(SMALL, sigma_gold=0.0))
    assert g.train.labels().tolist() == g.truth(g.train).tolist()
    assert g.test.labels().tolist() == g.test_truth.tolist()


def test_same_seed_identical_bytes(tmp_path):
    a = generate_scenario(SMALL)
    b = generate_scenario(SMALL)
    a.write(tmp_path / "a")
    b.write(tmp_path / "b")
    for name in ("train.tsv", "validation.tsv", "test.tsv", "unlabeled.tsv", "shifted.tsv", "test_truth.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    c = generate_scenario(replace(SMALL, seed=4))
    c.write(tmp_path / "c")
    assert (tmp_path / "a" / "train.tsv").read_bytes() != (tmp_path / "c" / "train.tsv").read_bytes()


def test_shifted_pool_uses_shifted_tokens(small):
    frac = [np.mean([t.startswith("u") for t in ex.source_tokens]) for ex in small.shifted]
    assert min(frac) >= 0 and np.mean(frac) > 0.3
    assert not any(t.startswith("u") for ex in small.unlabeled for t in ex.source_tokens)


def test_teacher_noise_grows_off_domain():
    g = generate_scenario(replace(SMALL, shifted_size=400))
    in_dom = g.teacher().predict(g.unlabeled)[0] - g.truth(g.unlabeled)
    shifted = g.teacher().predict(g.shifted)[0] - g.truth(g.shifted)
    assert np.std(shifted) > np.std(in_dom)


def test_quality_spread(small):
    # labels should use most of the [0, 1] range so correlation is meaningful
    truth = small.truth(small.unlabeled)
    assert truth.std() > 0.1 and truth.min() < 0.7 and truth.max() == 1.0


# -- findings report ----------------------------------------------------------------------


def test_report_judging_and_csv(tmp_path):
    r = FindingsReport()
    r.add("distilled_minus_gold", 0.05)
    r.add("shifted_filter_drop_fraction", 0.5)
    r.add("note", 1.0)
    assert r["distilled_minus_gold"].status == "pass"
    assert r["shifted_filter_drop_fraction"].status == "fail" and not r.passed
    assert r["note"].status == "info"
    r.to_csv(tmp_path / "f.csv")
    rows = list(csv.DictReader(open(tmp_path / "f.csv")))
    assert rows[1]["threshold"] == "in [0.05, 0.4]"
    assert set(THRESHOLDS) >= {row["claim"] for row in rows[:2]}


def test_suite_runs_end_to_end_and_is_deterministic(small, tmp_path):
    a = run_findings_suite(SMALL, FAST, out_dir=tmp_path / "a", generated=small)
    b = run_findings_suite(SMALL, FAST, out_dir=tmp_path / "b", generated=small)
    claims = [f.claim for f in a.findings]
    for claim in THRESHOLDS:
        assert claim in claims
    assert (tmp_path / "a" / "findings.csv").read_bytes() == (tmp_path / "b" / "findings.csv").read_bytes()
    assert (tmp_path / "a" / "sweep.csv").exists() and (tmp_path / "a" / "variance_bins.jsonl").exists()


def test_equal_noise_reports_no_gap(small):
    sc = replace(SMALL, sigma_teacher=SMALL.sigma_gold)
    g = generate_scenario(sc)
    r = run_findings_suite(sc, FAST, generated=g, experiments=["gold_vs_distilled"])
    assert r["distilled_minus_gold"].status == "no-gap" and r.passed


def test_smoothing_claim_default_noise(small):
    r = run_findings_suite(SMALL, FAST, generated=small, experiments=["smoothing"])
    assert r["teacher_std_below_gold_std"].measured == 1.0
