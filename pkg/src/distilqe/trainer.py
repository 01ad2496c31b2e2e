"""Mini-batch MSE training of the student with early stopping."""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .corpus import Dataset, build_vocab, encode_batch
from .evaluation import EvalReport, evaluate
from .exceptions import ConfigError, ContractError, MetricError, NumericError
from .model import ModelConfig, Student, batch_loss, init_params, make_batch

logger = logging.getLogger(__name__)

METRICS = ("pearson", "mse")


@dataclass(frozen=True)
class TrainConfig:
    """Student training settings.

    Only the early-stopping patience of 5 comes from the original student
    setup; batch size, epoch cap and the Adam settings are this package's
    defaults because the student's optimizer was never specified.
    """

    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    validation_metric: str = "pearson"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    vocab_size: int = 30000
    eval_batch_size: int = 256

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.validation_metric not in METRICS:
            raise ConfigError(f"validation_metric must be one of {METRICS}, got {self.validation_metric!r}")


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_metric: list = field(default_factory=list)  # None where Pearson was undefined
    metric: str = "pearson"
    best_epoch: int = 0  # 1-based
    stopped_early: bool = False
    wall_time: float = 0.0

    @property
    def epochs(self):
        return len(self.train_loss)

    @property
    def best_metric(self):
        return self.val_metric[self.best_epoch - 1]

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", f"val_{self.metric}"])
            for i, (loss, metric) in enumerate(zip(self.train_loss, self.val_metric), start=1):
                w.writerow([i, f"{loss:.10g}", "undefined" if metric is None else f"{metric:.10g}"])


class EarlyStopping:
    """Tracks the best epoch and says when ``patience`` epochs passed without
    a strict improvement.  Undefined metrics (None) never count as one."""

    def __init__(self, patience, mode="max"):
        self.patience = patience
        self.mode = mode
        self.best = None
        self.best_epoch = 0
        self.counter = 0
        self.epoch = 0

    def _better(self, value):
        if value is None:
            return False
        if self.best is None:
            return True
        return value > self.best if self.mode == "max" else value < self.best

    def step(self, value):
        """Record one epoch; returns True when this epoch is the new best."""
        self.epoch += 1
        if self.best_epoch == 0 or self._better(value):
            self.best = value
            self.best_epoch = self.epoch
            self.counter = 0
            return True
        self.counter += 1
        return False

    @property
    def should_stop(self):
        return self.counter >= self.patience


def _encode_dataset(dataset, source_vocab, mt_vocab, max_len):
    src_ids, src_mask = encode_batch([ex.source_tokens for ex in dataset], source_vocab, max_len)
    mt_ids, mt_mask = encode_batch([ex.mt_tokens for ex in dataset], mt_vocab, max_len)
    return src_ids, src_mask, mt_ids, mt_mask


def _check_trainable(dataset, what):
    for i, ex in enumerate(dataset):
        if ex.label is None:
            raise ContractError(f"{what} example {i} has no label")
        if not ex.source_tokens or not ex.mt_tokens:
            raise ContractError(f"{what} example {i} has an empty sentence")


def evaluate_epoch(student: Student, dataset: Dataset, batch_size=256) -> EvalReport:
    """Pearson / MAE / RMSE of ``student`` on a labeled dataset, in file order."""
    if len(dataset) < 2:
        raise MetricError(f"need at least 2 examples to evaluate, got {len(dataset)}")
    return evaluate(student.predict(dataset, batch_size), dataset.labels())


def resolve_model_config(model_config, source_vocab, mt_vocab):
    if model_config is None:
        model_config = {}
    if isinstance(model_config, dict):
        return ModelConfig(vocab_size=len(source_vocab), mt_vocab_size=len(mt_vocab), **model_config)
    return dataclasses.replace(model_config, vocab_size=len(source_vocab), mt_vocab_size=len(mt_vocab))


def train(
    train: Dataset,
    validation: Dataset,
    config: TrainConfig = TrainConfig(),
    model_config=None,
    source_vocab=None,
    mt_vocab=None,
    init=None,
):
    """Fit a student on ``train`` with early stopping on ``validation``.

    Parameters
    ----------
    model_config : ModelConfig or dict, optional
        Architecture; vocabulary sizes are always taken from the vocabularies.
        A dict gives ``ModelConfig`` keyword overrides.
    source_vocab, mt_vocab : Vocabulary, optional
        Built from ``train`` (capped at ``config.vocab_size``) when omitted.
    init : ModelParams, optional
        Starting point instead of a fresh seeded initialization.

    Returns
    -------
    (Student, TrainReport)
        The student carries the weights of the best validation epoch.
    """
    _check_trainable(train, "training")
    _check_trainable(validation, "validation")
    if len(train) == 0:
        raise ContractError("training set is empty")
    if len(validation) < 2:
        raise ContractError("validation set needs at least 2 examples")
    started = time.perf_counter()
    if source_vocab is None:
        source_vocab = build_vocab([train], config.vocab_size, side="source")
    if mt_vocab is None:
        mt_vocab = build_vocab([train], config.vocab_size, side="mt")
    mcfg = resolve_model_config(model_config, source_vocab, mt_vocab)
    params = init.copy() if init is not None else init_params(mcfg, config.seed)
    if params.config != mcfg:
        raise ConfigError("initial parameters do not match the model config")

    arrays = _encode_dataset(train, source_vocab, mt_vocab, mcfg.max_len)
    labels = train.labels()
    state = nx.AdamState(
        learning_rate=config.learning_rate, beta1=config.beta1, beta2=config.beta2, epsilon=config.epsilon
    )
    order_rng = np.random.default_rng([config.seed, 1])
    stopper = EarlyStopping(config.patience, mode="max" if config.validation_metric == "pearson" else "min")
    report = TrainReport(metric=config.validation_metric)
    best = params.copy()
    student = Student(params, source_vocab, mt_vocab)

    for epoch in range(1, config.max_epochs + 1):
        order = order_rng.permutation(len(train))
        total, seen = 0.0, 0
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start : start + config.batch_size]
            batch = make_batch(*(a[idx] for a in arrays), labels=labels[idx])
            tape = nx.Tape()
            nodes = {name: tape.parameter(value, name) for name, value in params.arrays.items()}
            loss, _ = batch_loss(tape, nodes, batch)
            value = float(loss.value)
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}")
            grads = tape.backward(loss)
            nx.adam_step(params.arrays, grads, state)
            total += value * len(idx)
            seen += len(idx)
        result = evaluate_epoch(student, validation, config.eval_batch_size)
        metric = result.pearson if config.validation_metric == "pearson" else result.mse
        report.train_loss.append(total / seen)
        report.val_metric.append(metric)
        if stopper.step(metric):
            best = params.copy()
        logger.info("epoch %d train_loss=%.6f val_%s=%s", epoch, total / seen, config.validation_metric, metric)
        if stopper.should_stop:
            report.stopped_early = epoch < config.max_epochs
            break
    # the best epoch is the first one when no epoch ever had a defined metric
    report.best_epoch = stopper.best_epoch
    report.wall_time = time.perf_counter() - started
    return Student(best, source_vocab, mt_vocab), report
