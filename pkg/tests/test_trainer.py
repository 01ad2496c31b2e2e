import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_dataset, random_pairs
from distilqe.exceptions import ConfigError, ContractError, NumericError
from distilqe.model import init_params
from distilqe.trainer import EarlyStopping, TrainConfig, evaluate_epoch, resolve_model_config, train
from distilqe.corpus import build_vocab

TINY = {"embedding_dim": 6, "hidden_dim": 4, "max_len": 8}


def _learnable(n, seed):
    # label = share of "good" tokens on the mt side
    rng = np.random.default_rng(seed)
    pairs, labels = [], []
    for _ in range(n):
        k = int(rng.integers(2, 6))
        good = int(rng.integers(0, k + 1))
        mt = ["good"] * good + ["bad"] * (k - good)
        rng.shuffle(mt)
        pairs.append((" ".join(f"w{int(i)}" for i in rng.integers(0, 8, k)), " ".join(mt)))
        labels.append(good / k)
    return make_dataset(pairs, labels=labels)


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(validation_metric="spearman")
    assert TrainConfig().patience == 5


# -- early stopping -------------------------------------------------------------------


def test_early_stopping_example():
    stop = EarlyStopping(patience=2)
    history = [0.5, 0.6, 0.6, 0.55]
    for v in history:
        stop.step(v)
    assert stop.best_epoch == 2 and stop.should_stop


def test_early_stopping_min_mode_and_none():
    stop = EarlyStopping(patience=3, mode="min")
    for v in [None, 0.4, None, 0.3]:
        stop.step(v)
    assert stop.best_epoch == 4 and not stop.should_stop


@given(st.lists(st.one_of(st.none(), st.floats(-1, 1)), min_size=1, max_size=30), st.integers(1, 6))
def test_early_stopping_matches_brute_force(values, patience):
    stop = EarlyStopping(patience)
    stopped_at = None
    for epoch, v in enumerate(values, start=1):
        stop.step(v)
        if stop.should_stop:
            stopped_at = epoch
            break
    seen = values[: stopped_at or len(values)]
    # brute force: first epoch holding the strict running maximum of defined values
    best, best_epoch = None, 1
    for i, v in enumerate(seen, start=1):
        if v is not None and (best is None or v > best):
            best, best_epoch = v, i
    assert stop.best_epoch == best_epoch
    if stopped_at is not None:
        assert stopped_at - best_epoch == patience


# -- training --------------------------------------------------------------------------


def test_training_is_bitwise_reproducible():
    data, val = _learnable(40, 0), _learnable(10, 1)
    cfg = TrainConfig(max_epochs=3, batch_size=8, seed=4)
    a, ra = train(data, val, cfg, TINY)
    b, rb = train(data, val, cfg, TINY)
    assert a.params.equals(b.params)
    assert ra.train_loss == rb.train_loss and ra.val_metric == rb.val_metric
    c, _ = train(data, val, TrainConfig(max_epochs=3, batch_size=8, seed=5), TINY)
    assert not a.params.equals(c.params)


def test_training_reduces_loss_and_learns_signal():
    data, val = _learnable(200, 0), _learnable(60, 1)
    student, report = train(data, val, TrainConfig(max_epochs=25, batch_size=16, learning_rate=1e-2), TINY)
    assert report.train_loss[-1] < report.train_loss[0]
    assert evaluate_epoch(student, val).pearson > 0.8


def test_best_weights_are_restored():
    data, val = _learnable(60, 2), _learnable(20, 3)
    student, report = train(data, val, TrainConfig(max_epochs=12, patience=2, batch_size=4, learning_rate=3e-2), TINY)
    assert 1 <= report.best_epoch <= report.epochs
    assert evaluate_epoch(student, val).pearson == pytest.approx(report.best_metric, abs=1e-12)
    defined = [v for v in report.val_metric if v is not None]
    assert report.best_metric == max(defined)


def test_stops_early_with_patience():
    data, val = _learnable(30, 2), _learnable(10, 3)
    _, report = train(data, val, TrainConfig(max_epochs=200, patience=1, learning_rate=0.2), TINY)
    assert report.stopped_early and report.epochs < 200
    assert report.epochs - report.best_epoch == 1


def test_constant_validation_labels_give_undefined_metric(tmp_path):
    data = _learnable(20, 0)
    val = make_dataset([("w1", "good"), ("w2", "bad")], labels=[0.5, 0.5])
    _, report = train(data, val, TrainConfig(max_epochs=2), TINY)
    assert report.val_metric == [None, None] and report.best_epoch == 1
    report.to_csv(tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_pearson" and lines[1].endswith(",undefined")


def test_contract_errors():
    good = _learnable(5, 0)
    with pytest.raises(ContractError, match="no label"):
        train(make_dataset([("a", "b")]), good, TrainConfig(max_epochs=1), TINY)
    with pytest.raises(ContractError, match="empty sentence"):
        train(make_dataset([("a", "")], labels=[0.2]), good, TrainConfig(max_epochs=1), TINY)
    with pytest.raises(ContractError, match="at least 2"):
        train(good, make_dataset([("a", "b")], labels=[0.1]), TrainConfig(max_epochs=1), TINY)


def test_non_finite_loss_raises():
    data, val = _learnable(8, 0), _learnable(4, 1)
    sv, mv = build_vocab([data], side="source"), build_vocab([data], side="mt")
    init = init_params(resolve_model_config(TINY, sv, mv), 0)
    init.arrays["output_w"][:] = np.nan
    with pytest.raises(NumericError, match="epoch 1, batch 0"):
        train(data, val, TrainConfig(max_epochs=1), TINY, sv, mv, init=init)


def test_model_config_vocab_sizes_follow_vocabularies():
    d = make_dataset(random_pairs(10, 0), labels=list(np.linspace(0, 1, 10)))
    student, _ = train(d, d, TrainConfig(max_epochs=1, vocab_size=5), TINY)
    assert student.config.vocab_size == 7 and student.config.mt_vocab_size == 7


def test_constant_labels_fit_constant():
    d = make_dataset(random_pairs(40, 0), labels=[0.5] * 40)
    held_out = make_dataset(random_pairs(10, 9))
    student, _ = train(d, d, TrainConfig(max_epochs=10, validation_metric="mse"), TINY)
    assert np.all(np.abs(student.predict(held_out) - 0.5) < 0.05)


def test_patience_one_without_improvement_stops_at_epoch_two():
    data = _learnable(20, 0)
    val = make_dataset([("w1", "good"), ("w2", "bad")], labels=[0.5, 0.5])
    _, report = train(data, val, TrainConfig(max_epochs=10, patience=1), TINY)
    assert report.epochs == 2 and report.stopped_early and report.best_epoch == 1


def test_memorization_smoke():
    d = make_dataset(random_pairs(10, 3), labels=list(np.linspace(0.05, 0.95, 10)))
    cfg = TrainConfig(max_epochs=200, patience=200, batch_size=10, learning_rate=1e-2, validation_metric="mse")
    _, report = train(d, d, cfg, {"embedding_dim": 16, "hidden_dim": 8, "max_len": 8})
    assert min(report.train_loss) < 1e-3
