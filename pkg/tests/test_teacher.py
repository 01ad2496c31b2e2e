import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_dataset, random_pairs
from distilqe.corpus import Dataset, write_pairs
from distilqe.exceptions import ConfigError, ContractError, LookupMissError
from distilqe.teacher import (
    EnsemblePrediction,
    EnsembleTeacher,
    FileTeacher,
    OracleConfig,
    SyntheticTeacher,
    ensemble_predict,
    label_dataset,
    overlap_f1,
    population_variance,
    synthetic_quality,
    train_ensemble,
)
from distilqe.model import init_params
from distilqe.trainer import TrainConfig
from oracles import variance_two_pass

TINY = {"embedding_dim": 5, "hidden_dim": 3, "max_len": 8}


class Fixed:
    """Stand-in member that returns canned predictions."""

    def __init__(self, values, tag="v"):
        self.values = np.asarray(values, dtype=float)
        self.tag = tag

    def predict(self, dataset):
        return self.values[: len(dataset)]

    def same_inputs_as(self, other):
        return self.tag == other.tag


@pytest.fixture(scope="module")
def trained():
    d = make_dataset(random_pairs(30, 0), labels=list(np.linspace(0, 1, 30)))
    v = make_dataset(random_pairs(8, 1), labels=list(np.linspace(0, 1, 8)))
    return d, v


# -- ensembles ---------------------------------------------------------------------------


def test_ensemble_prediction_worked_example():
    p = ensemble_predict([Fixed([0.2]), Fixed([0.4]), Fixed([0.6])], make_dataset([("a", "b")])[0])
    assert p.mean == pytest.approx(0.4, abs=1e-15)
    assert p.variance == pytest.approx(0.08 / 3, abs=1e-12)
    assert p.member_values == [0.2, 0.4, 0.6]


def test_identical_members_zero_variance():
    p = EnsemblePrediction.from_values([0.7] * 5)
    assert p.variance == 0.0 and p.mean == 0.7


@given(st.lists(st.floats(0, 1), min_size=2, max_size=10))
def test_prediction_matches_two_pass_oracle(values):
    p = EnsemblePrediction.from_values(values)
    assert abs(p.variance - variance_two_pass(values)) <= 1e-12
    assert min(values) - 1e-15 <= p.mean <= max(values) + 1e-15


def test_population_variance_along_members():
    m = np.array([[0.0, 1.0], [1.0, 1.0]])
    assert population_variance(m).tolist() == [0.25, 0.0]


def test_mismatched_members_rejected():
    with pytest.raises(ContractError, match="member 1"):
        ensemble_predict([Fixed([0.1]), Fixed([0.2], tag="w")], make_dataset([("a", "b")]))
    with pytest.raises(ContractError):
        ensemble_predict([Fixed([0.1])], make_dataset([("a", "b")]))


def test_train_ensemble_deterministic_and_sized(trained, tmp_path):
    d, v = trained
    cfg = TrainConfig(max_epochs=2)
    a = train_ensemble(d, v, 2, base_seed=3, train_config=cfg, model_config=TINY, save_dir=tmp_path)
    b = train_ensemble(d, v, 2, base_seed=3, train_config=cfg, model_config=TINY)
    assert all(x.params.equals(y.params) for x, y in zip(a, b))
    assert not a[0].params.equals(a[1].params)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["member0.bqe", "member1.bqe"]
    assert len(train_ensemble(d, v, 5, 0, TrainConfig(max_epochs=1), TINY)) == 5
    with pytest.raises(ConfigError):
        train_ensemble(d, v, 1, 0, cfg, TINY)


def test_pool_tokens_keep_member_specific_embeddings(trained):
    d, v = trained
    pool = make_dataset([("q1 q2", "r1 r2")])
    members = train_ensemble(d, v, 2, 0, TrainConfig(max_epochs=2), TINY, vocab_from=[pool])
    assert all("q1" in m.source_vocab and "r2" in m.mt_vocab for m in members)
    assert "q1" not in train_ensemble(d, v, 2, 0, TrainConfig(max_epochs=1), TINY)[0].source_vocab
    # never trained, so each row is still its member's own initialization
    rows = [m.params.arrays["source_embeddings"][m.source_vocab.lookup("q1")] for m in members]
    assert not np.array_equal(rows[0], rows[1])
    inits = [init_params(m.config, i) for i, m in enumerate(members)]
    for m, p, row in zip(members, inits, rows):
        assert np.array_equal(row, p.arrays["source_embeddings"][m.source_vocab.lookup("q1")])


def test_ensemble_teacher_labels_and_variances(trained):
    d, v = trained
    members = train_ensemble(d, v, 3, 0, TrainConfig(max_epochs=1), TINY)
    pool = make_dataset(random_pairs(3, 5))
    out = label_dataset(pool, EnsembleTeacher(members))
    assert len(out) == 3 and all(ex.variance is not None and ex.origin == "distilled" for ex in out)
    # labels are member 0's predictions, never the mean
    assert [ex.label for ex in out] == members[0].predict(pool).tolist()
    direct = ensemble_predict(members, pool)
    assert [ex.variance for ex in out] == pytest.approx([p.variance for p in direct], abs=1e-15)


def test_ensemble_teacher_with_labeler():
    pool = make_dataset([("a", "b"), ("c", "d")])
    labeler = SyntheticTeacher(OracleConfig())
    labels, variances = EnsembleTeacher([Fixed([0.1, 0.2]), Fixed([0.3, 0.2])], labeler=labeler).predict(pool)
    assert labels.tolist() == [0.0, 0.0]
    assert variances.tolist() == pytest.approx([0.01, 0.0])


# -- planted oracle ---------------------------------------------------------------------


def test_oracle_examples():
    cfg = OracleConfig()
    assert synthetic_quality(["a", "b"], ["a", "b"], cfg) == 1.0
    assert synthetic_quality(["a", "b"], ["c", "d"], cfg) == 0.0
    assert overlap_f1(["a", "b"], ["x", "b"], {"a": "x"}) == 1.0
    # precision 1/2, recall 1/1 -> 2/3
    assert overlap_f1(["a"], ["a", "z"]) == pytest.approx(2 / 3, abs=1e-15)


@pytest.mark.parametrize("sigma", [0.05, 0.15])
def test_noise_std_monte_carlo(sigma):
    # mid-range clean values so clamping at 0 or 1 almost never triggers
    cfg = OracleConfig(sigma=sigma, seed=11)
    src = ["a", "b", "c", "d"]
    residuals = []
    for i in range(10_000):
        mt = ["a", "b", f"z{i}", f"y{i}"]
        residuals.append(synthetic_quality(src, mt, cfg) - 0.5)
    assert abs(np.std(residuals) - sigma) < 0.2 * sigma


@given(st.lists(st.sampled_from("abcde"), min_size=1, max_size=6), st.lists(st.sampled_from("abcxy"), min_size=1, max_size=6))
def test_oracle_deterministic_and_bounded(src, mt):
    cfg = OracleConfig(sigma=0.3, seed=2)
    a = synthetic_quality(src, mt, cfg)
    assert a == synthetic_quality(list(src), list(mt), cfg)
    assert 0.0 <= a <= 1.0


def test_teacher_smoother_than_gold():
    pairs = random_pairs(3000, 4, vocab=10)
    d = make_dataset(pairs)
    clean = np.array([synthetic_quality(ex.source_tokens, ex.mt_tokens, OracleConfig()) for ex in d])
    gold, _ = SyntheticTeacher(OracleConfig(sigma=0.15, seed=1)).predict(d)
    teacher, _ = SyntheticTeacher(OracleConfig(sigma=0.05, seed=2)).predict(d)
    assert np.var(teacher - clean) < np.var(gold - clean)


def test_shifted_sigma_grows_with_shifted_fraction():
    cfg = OracleConfig(sigma=0.0, seed=0, shifted_tokens=frozenset({"u"}), shifted_sigma=0.2)
    from distilqe.teacher import pair_sigma

    assert pair_sigma(["a", "a"], cfg) == 0.0
    assert pair_sigma(["u", "a"], cfg) == pytest.approx(0.1)
    assert pair_sigma(["u", "u"], cfg) == pytest.approx(0.2)
    with pytest.raises(ConfigError):
        OracleConfig(sigma=-1)


# -- labeling -------------------------------------------------------------------------


def test_label_empty_pool():
    out = label_dataset(Dataset([]), SyntheticTeacher(OracleConfig()))
    assert len(out) == 0


def test_label_keeps_gold_unless_overwrite():
    pool = make_dataset([("a", "a"), ("b", "c")], labels=[0.3, 0.4])
    pool.examples[1] = pool[1].replace(label=None)
    teacher = SyntheticTeacher(OracleConfig())
    kept = label_dataset(pool, teacher)
    assert [ex.label for ex in kept] == [0.3, 0.0]
    assert [ex.origin for ex in kept] == ["gold", "distilled"]
    assert [ex.label for ex in label_dataset(pool, teacher, overwrite=True)] == [1.0, 0.0]


def test_label_rejects_empty_sentence():
    with pytest.raises(ContractError, match="pool example 0"):
        label_dataset(make_dataset([("", "x")]), SyntheticTeacher(OracleConfig()))


@given(st.permutations(list(range(6))))
def test_labeling_commutes_with_permutation(perm):
    pool = make_dataset(random_pairs(6, 8, vocab=5))
    teacher = SyntheticTeacher(OracleConfig(sigma=0.1, seed=3))
    a = label_dataset(pool, teacher)
    b = label_dataset(pool.subset(perm), teacher)
    assert [ex.label for ex in b] == [a[i].label for i in perm]


def test_distilled_copy_of_gold_set():
    # labeling a gold training set with overwrite gives the distilled version of it
    gold = make_dataset([("a b", "a b"), ("a b", "a c")], labels=[0.1, 0.2])
    dist = label_dataset(gold, SyntheticTeacher(OracleConfig()), overwrite=True)
    assert [ex.label for ex in dist] == [1.0, 0.5]
    assert [ex.source_text for ex in dist] == [ex.source_text for ex in gold]


# -- file teacher --------------------------------------------------------------------------


def test_file_teacher_lookup_and_miss(tmp_path):
    path = tmp_path / "t.tsv"
    path.write_text("hello there\thallo da\t80\n a \tb\t20\n", encoding="utf-8")
    teacher = FileTeacher(path)
    out = label_dataset(make_dataset([("a", "b"), ("hello there", "hallo da")]), teacher)
    assert [ex.label for ex in out] == [0.2, 0.8] and out[0].variance is None
    with pytest.raises(LookupMissError, match="pair 1.*'zzz'"):
        label_dataset(make_dataset([("a", "b"), ("zzz", "q")]), teacher)


def test_file_teacher_with_variances(tmp_path):
    path = tmp_path / "t.tsv"
    write_pairs(make_dataset([("a", "b"), ("c", "d")], labels=[0.1, 0.2], variances=[0.5, 0.25]), path)
    labels, variances = FileTeacher(path).predict(make_dataset([("c", "d")]))
    assert labels.tolist() == [0.2] and variances.tolist() == [0.25]


def test_file_teacher_requires_scores(tmp_path):
    path = tmp_path / "t.tsv"
    path.write_text("a\tb\n", encoding="utf-8")
    with pytest.raises(ContractError, match="line 1"):
        FileTeacher(path)
