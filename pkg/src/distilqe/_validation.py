"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_consistent_length, column_or_1d

from .corpus import Dataset, Example
from .exceptions import ContractError


def check_pairs(X):
    """Accept a Dataset, a list of (source, mt) strings or an (n, 2) array.

    Returns a list of Examples without labels.
    """
    if isinstance(X, Dataset):
        return [ex.replace(label=None, variance=None) for ex in X]
    rows = list(X)
    out = []
    for i, row in enumerate(rows):
        if isinstance(row, Example):
            out.append(row.replace(label=None, variance=None))
            continue
        if isinstance(row, str) or len(row) != 2:
            raise ContractError(f"row {i} must be a (source, mt) pair")
        src, mt = row
        if not isinstance(src, str) or not isinstance(mt, str):
            raise ContractError(f"row {i} must hold two strings")
        ex = Example(src, mt)
        if not ex.source_tokens or not ex.mt_tokens:
            raise ContractError(f"row {i} has an empty sentence")
        out.append(ex)
    if not out:
        raise ContractError("no input pairs")
    return out


def check_targets(y, examples):
    y = column_or_1d(np.asarray(y, dtype=np.float64))
    check_consistent_length(examples, y)
    if not np.all(np.isfinite(y)):
        raise ContractError("targets must be finite")
    if y.min() < 0.0 or y.max() > 1.0:
        raise ContractError("targets must lie on the normalized [0, 1] scale")
    return y


def check_variances(v):
    v = column_or_1d(np.asarray(v, dtype=np.float64))
    if v.size == 0:
        raise ContractError("no variances")
    if not np.all(np.isfinite(v)) or v.min() < 0:
        raise ContractError("variances must be finite and >= 0")
    return v
