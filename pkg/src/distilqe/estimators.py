"""Estimator-style wrappers (``fit`` / ``predict`` / ``get_params``).

These let the student and the variance filter drop into code written against
the scikit-learn estimator conventions; the functional API in ``trainer`` and
``distill`` stays the primary interface.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_pairs, check_targets, check_variances
from .corpus import Dataset
from .distill import exact_sqrt, keep_mask
from .evaluation import pearson
from .exceptions import ContractError
from .trainer import TrainConfig, train


class BiRNNQualityRegressor(RegressorMixin, BaseEstimator):
    """Student regressor over (source, mt) sentence pairs.

    ``fit`` takes targets on the normalized [0, 1] scale.  Without an explicit
    validation set a seeded ``validation_fraction`` of the data is held out
    for early stopping.  ``score`` returns the Pearson correlation, not R^2.
    """

    def __init__(
        self,
        embedding_dim=300,
        hidden_dim=50,
        max_len=70,
        attention_dim=None,
        batch_size=32,
        max_epochs=50,
        patience=5,
        learning_rate=1e-3,
        vocab_size=30000,
        validation_fraction=0.1,
        random_state=0,
    ):
        self.embedding_dim = embedding_dim
        self.hidden_dim = hidden_dim
        self.max_len = max_len
        self.attention_dim = attention_dim
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.learning_rate = learning_rate
        self.vocab_size = vocab_size
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=int(self.random_state),
            learning_rate=self.learning_rate,
            vocab_size=self.vocab_size,
        )

    def fit(self, X, y, X_val=None, y_val=None):
        examples = check_pairs(X)
        y = check_targets(y, examples)
        data = Dataset([ex.replace(label=float(v)) for ex, v in zip(examples, y)], name="fit")
        if X_val is not None:
            val_examples = check_pairs(X_val)
            yv = check_targets(y_val, val_examples)
            validation = Dataset([ex.replace(label=float(v)) for ex, v in zip(val_examples, yv)], name="validation")
            train_set = data
        else:
            n_val = max(2, int(round(self.validation_fraction * len(data))))
            if n_val >= len(data):
                raise ContractError(f"{len(data)} examples are too few to hold out {n_val} for validation")
            order = np.random.default_rng([int(self.random_state), 2]).permutation(len(data))
            validation = data.subset(order[:n_val], name="validation")
            train_set = data.subset(order[n_val:], name="train")
        model_config = {
            "embedding_dim": self.embedding_dim,
            "hidden_dim": self.hidden_dim,
            "max_len": self.max_len,
            "attention_dim": self.attention_dim,
        }
        self.student_, self.report_ = train(train_set, validation, self._train_config(), model_config)
        return self

    def predict(self, X):
        check_is_fitted(self, "student_")
        return self.student_.predict(Dataset(check_pairs(X)))

    def score(self, X, y, sample_weight=None):
        """Pearson correlation (``nan`` when undefined)."""
        r = pearson(self.predict(X), check_targets(y, check_pairs(X)))
        return float("nan") if r is None else r


class VarianceFilter(BaseEstimator):
    """Mean-plus-one-standard-deviation rule on ensemble variances.

    ``fit`` records the statistics of a candidate set; ``predict`` returns the
    keep mask for the variances it was fit on (or any other vector, judged
    against the fitted statistics).
    """

    def __init__(self, two_sided=False):
        self.two_sided = two_sided

    def fit(self, variances, y=None):
        v = check_variances(variances)
        keep, mu, var = keep_mask(v, self.two_sided)
        self.mean_ = float(mu)
        self.std_ = exact_sqrt(var)
        self.threshold_ = self.mean_ + self.std_
        self._mu, self._var = mu, var
        self.support_ = keep
        return self

    def predict(self, variances):
        from fractions import Fraction

        check_is_fitted(self, "support_")
        v = check_variances(variances)
        out = []
        for x in v:
            d = Fraction(float(x)) - self._mu
            out.append(d * d <= self._var if self.two_sided else (d <= 0 or d * d <= self._var))
        return np.array(out, dtype=bool)
