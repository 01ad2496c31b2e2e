"""Metrics and the analyses behind the reported tables and figures.

``pearson`` returns ``None`` when the correlation is undefined (fewer than
two points or a constant vector); it never returns NaN.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .exceptions import ConfigError, ContractError, MetricError


def _vectors(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ContractError(f"length mismatch: {x.size} predictions vs {y.size} labels")
    return x, y


def pearson(x, y) -> Optional[float]:
    """Sample Pearson correlation, or None when undefined."""
    x, y = _vectors(x, y)
    if x.size < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def rankdata(values):
    """Ranks starting at 1, ties given their average rank."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> Optional[float]:
    x, y = _vectors(x, y)
    return pearson(rankdata(x), rankdata(y))


@dataclass
class EvalReport:
    pearson: Optional[float]
    mae: float
    rmse: float
    n: int

    @property
    def mse(self):
        return self.rmse**2

    @property
    def pearson_defined(self):
        return self.pearson is not None

    def format(self):
        r = "undefined" if self.pearson is None else repr(round(self.pearson, 6))
        return f"pearson={r} mae={self.mae:.6f} rmse={self.rmse:.6f} n={self.n}"


def evaluate(predictions, labels) -> EvalReport:
    p, y = _vectors(predictions, labels)
    if p.size < 2:
        raise MetricError(f"need at least 2 examples to evaluate, got {p.size}")
    err = p - y
    return EvalReport(
        pearson=pearson(p, y),
        mae=float(np.mean(np.abs(err))),
        rmse=float(np.sqrt(np.mean(err * err))),
        n=int(p.size),
    )


# -- variance/error binning ----------------------------------------------------


@dataclass
class Bin:
    index: int
    variance_low: float
    variance_high: float
    mean_abs_error: Optional[float]
    count: int


@dataclass
class BinReport:
    bins: list
    mode: str = "equal-count"

    @property
    def counts(self):
        return [b.count for b in self.bins]

    @property
    def errors(self):
        return [b.mean_abs_error for b in self.bins]

    def to_jsonl(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for b in self.bins:
                fh.write(json.dumps({"kind": "variance_bin", "mode": self.mode, **asdict(b)}, sort_keys=True) + "\n")


def equal_count_sizes(n, bins):
    base, extra = divmod(n, bins)
    return [base + 1 if i < extra else base for i in range(bins)]


def bin_variance_error(predictions, labels, variances, bins=10, equal_width=False) -> BinReport:
    """Group examples by ensemble variance and average |prediction - label| per group.

    Equal-count mode sorts by variance (stable, so ties keep input order) and
    cuts into ``bins`` groups whose sizes differ by at most one, the larger
    groups first.  Equal-width mode splits the variance range evenly; empty
    bins report ``None`` as their error.
    """
    p, y = _vectors(predictions, labels)
    v = np.asarray(variances, dtype=np.float64).ravel()
    if v.shape != p.shape:
        raise ContractError(f"length mismatch: {v.size} variances vs {p.size} predictions")
    if bins < 2:
        raise ConfigError(f"bins must be >= 2, got {bins}")
    if p.size < bins:
        raise ConfigError(f"need at least {bins} examples for {bins} bins, got {p.size}")
    err = np.abs(p - y)
    out = []
    if not equal_width:
        order = np.argsort(v, kind="stable")
        start = 0
        for i, size in enumerate(equal_count_sizes(p.size, bins)):
            idx = order[start : start + size]
            start += size
            out.append(Bin(i, float(v[idx].min()), float(v[idx].max()), float(err[idx].mean()), int(size)))
        return BinReport(out, mode="equal-count")
    edges = np.linspace(v.min(), v.max(), bins + 1)
    which = np.clip(np.searchsorted(edges, v, side="right") - 1, 0, bins - 1)
    for i in range(bins):
        sel = which == i
        mae = float(err[sel].mean()) if sel.any() else None
        out.append(Bin(i, float(edges[i]), float(edges[i + 1]), mae, int(sel.sum())))
    return BinReport(out, mode="equal-width")


def histogram(values, bin_count=20, value_range=(0.0, 1.0)):
    """Fixed-width histogram; values outside the range land in the edge bins.

    Returns ``(edges, counts)`` with ``len(edges) == bin_count + 1``.
    """
    lo, hi = map(float, value_range)
    if bin_count < 1:
        raise ConfigError(f"bin_count must be >= 1, got {bin_count}")
    if not hi > lo:
        raise ConfigError(f"invalid range {value_range}")
    edges = np.linspace(lo, hi, bin_count + 1)
    values = np.asarray(values, dtype=np.float64).ravel()
    idx = np.floor((values - lo) / (hi - lo) * bin_count).astype(np.int64)
    idx = np.clip(idx, 0, bin_count - 1)
    counts = np.bincount(idx, minlength=bin_count)
    return edges, counts


def histograms_to_jsonl(path, named_values, bin_count=20, value_range=(0.0, 1.0)):
    """One JSON line per named distribution (e.g. teacher vs gold labels)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name, values in named_values.items():
            edges, counts = histogram(values, bin_count, value_range)
            values = np.asarray(values, dtype=np.float64)
            row = {
                "kind": "histogram",
                "name": name,
                "edges": [float(e) for e in edges],
                "counts": [int(c) for c in counts],
                "n": int(values.size),
                "std": float(values.std()) if values.size else 0.0,
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")


# -- data-size sweeps ----------------------------------------------------------


@dataclass
class SweepRow:
    size: int
    mean_pearson: float
    half_range: float
    values: list = field(default_factory=list)


def summarize_runs(values):
    """Mean and the largest deviation from it (a range, not a parametric CI)."""
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    return mean, float(np.max(np.abs(values - mean)))


def sweep(subsets, validation, test, train_fn, repeats=3, seeds=None, truth=None, threads=1):
    """Train ``repeats`` students per training subset and score them on ``test``.

    Parameters
    ----------
    subsets : list of Dataset
        Typically the nested prefixes from ``distill.size_subsets``.
    train_fn : callable
        ``train_fn(train, validation, seed) -> Student``.
    seeds : list of int, optional
        One seed per repeat; defaults to ``0..repeats-1``.
    truth : array, optional
        Reference scores for ``test``; defaults to the test labels.
    """
    from .parallel import parallel_map

    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    seeds = list(range(repeats)) if seeds is None else list(seeds)
    if len(seeds) != repeats:
        raise ConfigError(f"{len(seeds)} seeds given for {repeats} repeats")
    reference = test.labels() if truth is None else np.asarray(truth, dtype=np.float64)
    jobs = [(subset, seed) for subset in subsets for seed in seeds]

    def run(job):
        subset, seed = job
        student = train_fn(subset, validation, seed)
        r = pearson(student.predict(test), reference)
        if r is None:
            raise MetricError(f"undefined Pearson for size {len(subset)}, seed {seed} (constant predictions)")
        return r

    scores = parallel_map(run, jobs, threads)
    rows = []
    for i, subset in enumerate(subsets):
        values = scores[i * repeats : (i + 1) * repeats]
        mean, half = summarize_runs(values)
        rows.append(SweepRow(len(subset), mean, half, values))
    return rows


def write_sweep_csv(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["size", "mean_pearson", "half_range_over_seeds", "runs"])
        for row in rows:
            w.writerow([row.size, f"{row.mean_pearson:.6f}", f"{row.half_range:.6f}", " ".join(f"{v:.6f}" for v in row.values)])
