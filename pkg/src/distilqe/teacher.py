"""Teachers that label unlabeled pairs.

Three sources are supported:

* :class:`FileTeacher` looks predictions up in a TSV produced elsewhere (the
  way a large external QE model's scores enter the pipeline);
* :class:`EnsembleTeacher` wraps K independently seeded students; it reports
  their population variance as the uncertainty of each label;
* :class:`SyntheticTeacher` scores pairs with a planted oracle plus seeded
  Gaussian noise, for end-to-end checks with known ground truth.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .corpus import Dataset, read_pairs
from .exceptions import ConfigError, ContractError, LookupMissError
from .parallel import parallel_map
from .trainer import TrainConfig, train


@dataclass
class EnsemblePrediction:
    mean: float
    variance: float
    member_values: list

    @classmethod
    def from_values(cls, values):
        values = [float(v) for v in values]
        return cls(float(np.mean(values)), float(population_variance(values)), values)


def population_variance(values):
    values = np.asarray(values, dtype=np.float64)
    mean = values.mean(axis=0)
    return ((values - mean) ** 2).mean(axis=0)


def ensemble_predict(models, examples):
    """Member predictions, their mean and population variance.

    ``examples`` may be a single Example or a Dataset; a single example gives
    one :class:`EnsemblePrediction`, a dataset a list of them.
    """
    single = not isinstance(examples, Dataset)
    dataset = Dataset([examples]) if single else examples
    members = ensemble_members(models, dataset)
    mean = members.mean(axis=0)
    var = population_variance(members)
    out = [EnsemblePrediction(float(mean[i]), float(var[i]), [float(v) for v in members[:, i]]) for i in range(len(dataset))]
    return out[0] if single else out


def ensemble_members(models, dataset):
    """``(K, N)`` array of member predictions."""
    models = list(models)
    if len(models) < 2:
        raise ContractError(f"an ensemble needs at least 2 members, got {len(models)}")
    first = models[0]
    for k, m in enumerate(models[1:], start=1):
        if not first.same_inputs_as(m):
            raise ContractError(f"ensemble member {k} has a different vocabulary or config than member 0")
    if len(dataset) == 0:
        return np.zeros((len(models), 0))
    return np.stack([m.predict(dataset) for m in models])


def train_ensemble(
    train_set, validation, k, base_seed, train_config=TrainConfig(), model_config=None, save_dir=None, threads=1,
    vocab_from=(),
):
    """Train ``k`` students that differ only in their seed (``base_seed + i``).

    Members share the vocabularies built from ``train_set`` so their
    predictions are comparable.  Datasets in ``vocab_from`` (typically the
    pool that will be labeled) also contribute tokens.  Those tokens get no
    gradient, so each member keeps its own random embedding for them and the
    members disagree more on inputs built from unfamiliar words.
    """
    from dataclasses import replace

    from .corpus import build_vocab

    if k < 2:
        raise ConfigError(f"ensemble size must be >= 2 for a variance estimate, got {k}")
    corpus = [train_set, *vocab_from]
    source_vocab = build_vocab(corpus, train_config.vocab_size, side="source")
    mt_vocab = build_vocab(corpus, train_config.vocab_size, side="mt")

    def fit(i):
        cfg = replace(train_config, seed=base_seed + i)
        student, _ = train(train_set, validation, cfg, model_config, source_vocab, mt_vocab)
        if save_dir is not None:
            Path(save_dir).mkdir(parents=True, exist_ok=True)
            student.save(Path(save_dir) / f"member{i}.bqe")
        return student

    return parallel_map(fit, range(k), threads)


# -- planted oracle ----------------------------------------------------------


@dataclass
class OracleConfig:
    """Planted quality function and its noise model.

    The noiseless score is the F1 (harmonic mean of precision and recall) of
    multiset token overlap between the MT and the source mapped through
    ``token_map``; tokens missing from the map translate to themselves.
    Noise is Gaussian with standard deviation ``sigma``, seeded per pair, and
    the result is clamped to [0, 1].  When ``shifted_sigma`` is set, the
    standard deviation grows linearly from ``sigma`` to ``shifted_sigma`` with
    the fraction of source tokens that are in ``shifted_tokens``.
    """

    token_map: dict = field(default_factory=dict)
    sigma: float = 0.0
    seed: int = 0
    shifted_tokens: frozenset = frozenset()
    shifted_sigma: Optional[float] = None

    def __post_init__(self):
        if self.sigma < 0 or (self.shifted_sigma is not None and self.shifted_sigma < 0):
            raise ConfigError("noise levels must be >= 0")


def overlap_f1(source_tokens, mt_tokens, token_map=None):
    token_map = token_map or {}
    if not source_tokens or not mt_tokens:
        return 0.0
    translated = Counter(token_map.get(t, t) for t in source_tokens)
    overlap = sum((translated & Counter(mt_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(mt_tokens)
    recall = overlap / len(source_tokens)
    return 2.0 * precision * recall / (precision + recall)


def pair_noise(source_tokens, mt_tokens, seed):
    """Standard normal draw that depends only on the pair and the seed."""
    h = hashlib.blake2b(digest_size=16)
    h.update(str(int(seed)).encode())
    h.update(b"\x00")
    h.update(" ".join(source_tokens).encode("utf-8"))
    h.update(b"\x00")
    h.update(" ".join(mt_tokens).encode("utf-8"))
    return float(np.random.default_rng(int.from_bytes(h.digest(), "little")).standard_normal())


def pair_sigma(source_tokens, config: OracleConfig):
    if config.shifted_sigma is None or not source_tokens:
        return config.sigma
    frac = sum(t in config.shifted_tokens for t in source_tokens) / len(source_tokens)
    return config.sigma + (config.shifted_sigma - config.sigma) * frac


def synthetic_quality(source_tokens, mt_tokens, config: OracleConfig):
    clean = overlap_f1(source_tokens, mt_tokens, config.token_map)
    sigma = pair_sigma(source_tokens, config)
    if sigma == 0:
        return clean
    noisy = clean + sigma * pair_noise(source_tokens, mt_tokens, config.seed)
    return float(min(1.0, max(0.0, noisy)))


# -- teacher sources -------------------------------------------------------------


class FileTeacher:
    """Predictions read from ``source<TAB>mt<TAB>score[<TAB>variance]``.

    Lookups key on the whitespace-trimmed source and MT strings.
    """

    kind = "file"

    def __init__(self, path, has_header=False):
        self.path = Path(path)
        table = read_pairs(self.path, has_header=has_header)
        self.table = {}
        for i, ex in enumerate(table):
            if ex.label is None:
                raise ContractError(f"teacher file {self.path.name} line {i + 1} has no score")
            self.table[ex.key] = (ex.label, ex.variance)
        self.name = f"file:{self.path.name}"
        self.k = None

    def predict(self, dataset):
        labels = np.empty(len(dataset))
        variances = []
        for i, ex in enumerate(dataset):
            try:
                labels[i], var = self.table[ex.key]
            except KeyError:
                raise LookupMissError(
                    f"teacher file {self.path.name} has no prediction for pair {i}: {ex.key[0]!r} ||| {ex.key[1]!r}"
                ) from None
            variances.append(var)
        if all(v is not None for v in variances) and variances:
            return labels, np.array(variances, dtype=np.float64)
        return labels, None


class EnsembleTeacher:
    """K students whose disagreement gives each label's variance.

    Labels come from ``labeler`` (any teacher or student); by default that is
    the first member.  The ensemble mean is never used as a label.
    """

    kind = "ensemble"

    def __init__(self, members, labeler=None, name="ensemble"):
        self.members = list(members)
        if len(self.members) < 2:
            raise ConfigError(f"an ensemble teacher needs >= 2 members, got {len(self.members)}")
        self.labeler = labeler
        self.k = len(self.members)
        self.name = f"{name}(K={self.k})"

    def predict(self, dataset):
        values = ensemble_members(self.members, dataset)
        variances = population_variance(values) if len(dataset) else np.zeros(0)
        if self.labeler is None:
            labels = values[0]
        else:
            # teachers answer (labels, variances); a bare student answers labels
            labels = self.labeler.predict(dataset)
            if isinstance(labels, tuple):
                labels = labels[0]
        return np.asarray(labels, dtype=np.float64), variances


class SyntheticTeacher:
    kind = "synthetic"

    def __init__(self, oracle: OracleConfig, name="synthetic"):
        self.oracle = oracle
        self.k = None
        self.name = f"{name}(sigma={oracle.sigma:g})"

    def predict(self, dataset):
        labels = np.array([synthetic_quality(ex.source_tokens, ex.mt_tokens, self.oracle) for ex in dataset])
        return labels, None


def label_dataset(pool: Dataset, teacher, overwrite=False) -> Dataset:
    """Attach teacher labels (and variances, for ensembles) to every example.

    Examples that already carry a label keep it unless ``overwrite`` is set;
    relabeled examples are tagged ``origin="distilled"``.
    """
    for i, ex in enumerate(pool):
        if not ex.source_tokens or not ex.mt_tokens:
            raise ContractError(f"pool example {i} has an empty sentence")
    labels, variances = teacher.predict(pool) if len(pool) else (np.zeros(0), None)
    out = []
    for i, ex in enumerate(pool):
        changes = {}
        if ex.label is None or overwrite:
            changes["label"] = float(labels[i])
            changes["origin"] = "distilled"
        if variances is not None:
            changes["variance"] = float(variances[i])
        out.append(ex.replace(**changes))
    return Dataset(out, name=pool.name, domain=pool.domain, note=f"labeled by {teacher.name}")
