"""Label, filter and emit: the augmentation pipeline.

``filter_by_variance`` keeps example i iff ``v_i <= mu + sigma`` with mu and
sigma the mean and population standard deviation of the candidate variances.
The comparison is made exactly in rational arithmetic (``v - mu <= sigma`` is
tested as ``v - mu <= 0 or (v - mu)**2 <= sigma**2``), so the kept set does not
depend on rounding and is unchanged when every variance is scaled by the same
positive constant.  The two-sided variant keeps ``|v - mu| <= sigma``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from decimal import Context
from fractions import Fraction
from pathlib import Path

import numpy as np

from .corpus import Dataset, write_pairs
from .exceptions import ConfigError, ContractError
from .teacher import label_dataset

logger = logging.getLogger(__name__)


@dataclass
class FilterStats:
    mean_variance: float
    std_variance: float
    threshold: float
    kept: int
    dropped: int
    two_sided: bool = False

    @property
    def lower(self):
        """Lower bound of the two-sided band (informational when one-sided)."""
        return self.mean_variance - self.std_variance

    @property
    def drop_fraction(self):
        total = self.kept + self.dropped
        return self.dropped / total if total else 0.0


def variance_moments(variances):
    """Exact mean and population variance of ``variances`` as Fractions."""
    exact = [Fraction(float(v)) for v in variances]
    n = len(exact)
    mu = sum(exact, Fraction(0)) / n
    var = sum(((v - mu) ** 2 for v in exact), Fraction(0)) / n
    return exact, mu, var


def exact_sqrt(value: Fraction) -> float:
    """Square root of a non-negative Fraction, rounded once to float.

    ``math.sqrt(float(value))`` underflows for tiny variances (v ~ 1e-250
    squares to 0), which would report sigma = 0 while the exact rule keeps
    values above the mean.
    """
    ctx = Context(prec=60)
    return float(ctx.divide(ctx.sqrt(value.numerator), ctx.sqrt(value.denominator)))


def keep_mask(variances, two_sided=False):
    exact, mu, var = variance_moments(variances)
    keep = []
    for v in exact:
        d = v - mu
        if two_sided:
            keep.append(d * d <= var)
        else:
            keep.append(d <= 0 or d * d <= var)
    return np.array(keep, dtype=bool), mu, var


def filter_by_variance(candidates: Dataset, two_sided=False):
    """Drop examples whose ensemble variance is above mean + one std.

    Returns ``(kept Dataset, FilterStats)``; order is preserved.
    """
    for i, ex in enumerate(candidates):
        if ex.variance is None:
            raise ContractError(f"example {i} has no variance; label the pool with an ensemble teacher first")
    if len(candidates) == 0:
        return Dataset([], name=candidates.name, domain=candidates.domain), FilterStats(0.0, 0.0, 0.0, 0, 0, two_sided)
    keep, mu, var = keep_mask([ex.variance for ex in candidates], two_sided)
    sigma = exact_sqrt(var)
    stats = FilterStats(
        mean_variance=float(mu),
        std_variance=sigma,
        threshold=float(mu) + sigma,
        kept=int(keep.sum()),
        dropped=int((~keep).sum()),
        two_sided=two_sided,
    )
    kept = candidates.subset(np.flatnonzero(keep))
    logger.info("variance filter kept %d of %d (threshold %.6g)", stats.kept, len(candidates), stats.threshold)
    return kept, stats


def write_manifest(path, entries):
    """Flat ``key=value`` text, one entry per line in the given order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in entries.items():
            fh.write(f"{key}={value}\n")


def read_manifest(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                key, _, value = line.partition("=")
                out[key] = value
    return out


def run_pipeline(pool: Dataset, teacher, filter=False, out_path=None, two_sided=False, seed=0, manifest_path=None):
    """Label ``pool`` with ``teacher``, optionally variance-filter, write TSV.

    The manifest carries no timestamps so identical runs give identical bytes.

    Returns ``(dataset, stats or None, manifest dict)``.
    """
    if filter and getattr(teacher, "kind", None) != "ensemble":
        # a file teacher may carry its own variance column
        if not (getattr(teacher, "kind", None) == "file" and _file_has_variances(teacher, pool)):
            raise ConfigError("filtering needs an ensemble teacher (or a teacher file with a variance column)")
    labeled = label_dataset(pool, teacher, overwrite=True)
    stats = None
    out = labeled
    if filter:
        out, stats = filter_by_variance(labeled, two_sided=two_sided)
    manifest = {
        "pool_size": len(pool),
        "teacher": teacher.name,
        "K": teacher.k if teacher.k is not None else "",
        "mu_v": repr(stats.mean_variance) if stats else "",
        "sigma_v": repr(stats.std_variance) if stats else "",
        "threshold": repr(stats.threshold) if stats else "",
        "kept": stats.kept if stats else len(out),
        "dropped": stats.dropped if stats else 0,
        "two_sided": str(bool(two_sided)).lower(),
        "seed": seed,
    }
    if out_path is not None:
        write_pairs(out, out_path)
        if manifest_path is None:
            manifest_path = Path(str(out_path) + ".manifest")
    if manifest_path is not None:
        write_manifest(manifest_path, manifest)
    return out, stats, manifest


def _file_has_variances(teacher, pool):
    _, variances = teacher.predict(pool)
    return variances is not None


def size_subsets(dataset: Dataset, sizes, seed):
    """Nested random subsets: one seeded permutation, then prefixes of it."""
    sizes = [int(s) for s in sizes]
    for s in sizes:
        if s < 1 or s > len(dataset):
            raise ConfigError(f"subset size {s} is outside 1..{len(dataset)}")
    order = np.random.default_rng(seed).permutation(len(dataset))
    return [dataset.subset(order[:s], name=f"{dataset.name}[{s}]") for s in sizes]
