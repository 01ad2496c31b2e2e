import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

from distilqe.corpus import Dataset, Example  # noqa: E402


def make_dataset(pairs, labels=None, variances=None, name="d"):
    out = []
    for i, (src, mt) in enumerate(pairs):
        out.append(
            Example(
                src,
                mt,
                label=None if labels is None else float(labels[i]),
                variance=None if variances is None else float(variances[i]),
            )
        )
    return Dataset(out, name=name)


def random_pairs(n, seed, vocab=30, length=(2, 6)):
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        ls, lm = rng.integers(length[0], length[1] + 1, 2)
        src = " ".join(f"s{int(t)}" for t in rng.integers(0, vocab, ls))
        mt = " ".join(f"t{int(t)}" for t in rng.integers(0, vocab, lm))
        pairs.append((src, mt))
    return pairs


@pytest.fixture
def tiny_model_config():
    return {"embedding_dim": 8, "hidden_dim": 4, "max_len": 10}
