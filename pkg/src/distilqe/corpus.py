"""Tokenization, vocabularies, TSV datasets and corpus sampling."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .exceptions import ConfigError, ContractError, ParseError, ScoreRangeError

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1
ORIGINS = ("gold", "distilled", "augmented")

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and detach punctuation.

    >>> tokenize("Hello, world")
    ['hello', ',', 'world']
    """
    return _TOKEN_RE.findall(text.lower())


def normalize_score(raw: float, line: Optional[int] = None) -> float:
    """Map a 0-100 quality score onto [0, 1]."""
    raw = float(raw)
    if not 0.0 <= raw <= 100.0:
        raise ScoreRangeError(f"score {raw!r} outside [0, 100]", line=line)
    return raw / 100.0


def denormalize_score(value: float) -> float:
    return float(value) * 100.0


@dataclass
class Example:
    """One source/MT pair.

    ``label`` is on the normalized [0, 1] scale.  ``variance`` is the
    ensemble variance of the label, also in normalized units.
    """

    source_text: str
    mt_text: str
    label: Optional[float] = None
    variance: Optional[float] = None
    origin: str = "gold"
    source_tokens: list = field(default=None, repr=False)
    mt_tokens: list = field(default=None, repr=False)

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ContractError(f"origin must be one of {ORIGINS}, got {self.origin!r}")
        if self.source_tokens is None:
            self.source_tokens = tokenize(self.source_text)
        if self.mt_tokens is None:
            self.mt_tokens = tokenize(self.mt_text)

    @property
    def key(self):
        return (self.source_text.strip(), self.mt_text.strip())

    def replace(self, **changes):
        fields = dict(
            source_text=self.source_text,
            mt_text=self.mt_text,
            label=self.label,
            variance=self.variance,
            origin=self.origin,
            source_tokens=self.source_tokens,
            mt_tokens=self.mt_tokens,
        )
        fields.update(changes)
        return Example(**fields)


@dataclass
class Dataset:
    examples: list
    name: str = ""
    domain: str = ""
    note: str = ""

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return self.subset(range(len(self.examples))[item])
        return self.examples[item]

    def subset(self, indices, name=None):
        return Dataset([self.examples[i] for i in indices], name=name or self.name, domain=self.domain, note=self.note)

    def shuffled(self, seed):
        order = np.random.default_rng(seed).permutation(len(self.examples))
        return self.subset(order)

    def labels(self):
        missing = [i for i, ex in enumerate(self.examples) if ex.label is None]
        if missing:
            raise ContractError(f"example {missing[0]} of dataset {self.name!r} has no label")
        return np.array([ex.label for ex in self.examples], dtype=np.float64)

    def variances(self):
        missing = [i for i, ex in enumerate(self.examples) if ex.variance is None]
        if missing:
            raise ContractError(f"example {missing[0]} of dataset {self.name!r} has no variance")
        return np.array([ex.variance for ex in self.examples], dtype=np.float64)

    def is_labeled(self):
        return all(ex.label is not None for ex in self.examples)


class Vocabulary:
    """Frequency-ranked token -> id map with ``<pad>``=0 and ``<unk>``=1.

    Ranks by descending count; equal counts are ordered lexicographically so
    the mapping is identical on every platform.
    """

    def __init__(self, tokens: Sequence[str], max_size: int = 30000):
        tokens = list(tokens)
        if tokens[:2] != [PAD, UNK]:
            raise ContractError("vocabulary must start with the <pad> and <unk> specials")
        if len(tokens) > max_size + 2:
            raise ContractError(f"{len(tokens)} tokens exceed max_size {max_size} + 2 specials")
        self.tokens = tokens
        self.max_size = max_size
        self.id_of = {tok: i for i, tok in enumerate(tokens)}
        if len(self.id_of) != len(tokens):
            raise ContractError("duplicate token in vocabulary")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.id_of

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __repr__(self):
        return f"Vocabulary(size={len(self)}, max_size={self.max_size})"

    def lookup(self, token):
        return self.id_of.get(token, UNK_ID)

    @classmethod
    def from_counts(cls, counts: Counter, max_size: int = 30000):
        if max_size < 1:
            raise ConfigError(f"max_size must be >= 1, got {max_size}")
        ranked = sorted((tok for tok in counts if tok not in (PAD, UNK)), key=lambda t: (-counts[t], t))
        return cls([PAD, UNK] + ranked[:max_size], max_size=max_size)

    def save(self, path):
        Path(path).write_text("\n".join(self.tokens[2:]) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path, max_size=None):
        words = [w for w in Path(path).read_text(encoding="utf-8").split("\n") if w]
        return cls([PAD, UNK] + words, max_size=max_size if max_size is not None else max(len(words), 1))


def build_vocab(corpus: Iterable[Dataset], max_size: int = 30000, side: str = "both") -> Vocabulary:
    """Vocabulary over the given datasets' tokens.

    ``side`` selects which tokens are counted: ``"source"``, ``"mt"`` or
    ``"both"`` (the union).
    """
    if side not in ("source", "mt", "both"):
        raise ConfigError(f"side must be source, mt or both, got {side!r}")
    if max_size < 1:
        raise ConfigError(f"max_size must be >= 1, got {max_size}")
    counts = Counter()
    n = 0
    for dataset in corpus:
        for ex in dataset:
            n += 1
            if side in ("source", "both"):
                counts.update(ex.source_tokens)
            if side in ("mt", "both"):
                counts.update(ex.mt_tokens)
    if n == 0 or not counts:
        raise ContractError("cannot build a vocabulary from an empty corpus")
    return Vocabulary.from_counts(counts, max_size)


def encode(tokens: Sequence[str], vocab: Vocabulary, max_len: int):
    """Token list -> (int64 ids, float64 mask), both of length ``max_len``."""
    if max_len < 1:
        raise ConfigError(f"max_len must be >= 1, got {max_len}")
    ids = np.zeros(max_len, dtype=np.int64)
    mask = np.zeros(max_len, dtype=np.float64)
    kept = tokens[:max_len]
    ids[: len(kept)] = [vocab.lookup(t) for t in kept]
    mask[: len(kept)] = 1.0
    return ids, mask


def encode_batch(token_lists, vocab, max_len):
    ids = np.zeros((len(token_lists), max_len), dtype=np.int64)
    mask = np.zeros((len(token_lists), max_len), dtype=np.float64)
    for row, tokens in enumerate(token_lists):
        ids[row], mask[row] = encode(tokens, vocab, max_len)
    return ids, mask


# -- TSV IO -------------------------------------------------------------------


def _parse_float(text, what, line):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"non-numeric {what} {text!r}", line=line) from None
    if not np.isfinite(value):
        raise ParseError(f"non-finite {what} {text!r}", line=line)
    return value


def read_pairs(path, has_header=False, origin="gold", name=None, domain=""):
    """Read ``source<TAB>mt[<TAB>score[<TAB>variance]]`` lines.

    Scores are on the 0-100 scale in the file and normalized on read; an
    empty score field means unlabeled.  Variances are read verbatim.
    """
    path = Path(path)
    examples = []
    with path.open("r", encoding="utf-8", newline="\n") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if has_header and lineno == 1:
                continue
            line = raw.rstrip("\n")
            if line.endswith("\r"):
                line = line[:-1]
            if not line:
                continue
            cols = line.split("\t")
            if not 2 <= len(cols) <= 4:
                raise ParseError(f"expected 2-4 tab-separated columns, found {len(cols)}", line=lineno)
            label = variance = None
            if len(cols) >= 3 and cols[2] != "":
                label = normalize_score(_parse_float(cols[2], "score", lineno), line=lineno)
            if len(cols) == 4 and cols[3] != "":
                variance = _parse_float(cols[3], "variance", lineno)
                if variance < 0:
                    raise ParseError(f"negative variance {variance!r}", line=lineno)
            examples.append(Example(cols[0], cols[1], label=label, variance=variance, origin=origin))
    return Dataset(examples, name=name or path.stem, domain=domain, note=f"read from {path.name}")


def format_score(label):
    # shortest repr that round-trips exactly
    return repr(denormalize_score(label))


def write_pairs(dataset, path):
    """Write a dataset in the format :func:`read_pairs` reads.

    Text fields must not contain tabs or newlines.
    """
    with_var = any(ex.variance is not None for ex in dataset)
    lines = []
    for i, ex in enumerate(dataset):
        for text in (ex.source_text, ex.mt_text):
            if "\t" in text or "\n" in text:
                raise ContractError(f"example {i}: text contains a tab or newline")
        cols = [ex.source_text, ex.mt_text]
        if ex.label is not None or with_var:
            cols.append("" if ex.label is None else format_score(ex.label))
        if with_var:
            cols.append("" if ex.variance is None else repr(float(ex.variance)))
        lines.append("\t".join(cols))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8", newline="\n")


# -- corpus sampling ----------------------------------------------------------


def accept_all(sentence: str) -> bool:
    return True


def sample_corpus(
    documents,
    langid: Callable[[str], bool] = accept_all,
    min_chars: int = 50,
    max_chars: int = 150,
    top_docs: int = 100,
):
    """Keep the sentences of the ``top_docs`` documents richest in usable sentences.

    A sentence is usable when ``langid(sentence)`` is true and its raw
    character length lies in ``[min_chars, max_chars]`` (both inclusive).
    Documents are ranked by their usable count, descending, ties by doc id.

    Returns
    -------
    list of (doc_id, sentence)
        Usable sentences of the selected documents, in ranking order and
        then original order within each document.
    """
    if top_docs < 1:
        raise ConfigError(f"top_docs must be >= 1, got {top_docs}")
    if min_chars > max_chars:
        raise ConfigError(f"min_chars {min_chars} exceeds max_chars {max_chars}")
    scored = []
    for doc_id, sentences in documents:
        usable = [s for s in sentences if min_chars <= len(s) <= max_chars and langid(s)]
        scored.append((-len(usable), doc_id, usable))
    scored.sort(key=lambda item: (item[0], item[1]))
    pool = []
    for _, doc_id, usable in scored[:top_docs]:
        pool.extend((doc_id, s) for s in usable)
    return pool


def exclude_overlap(pool: Dataset, forbidden: Iterable[Dataset]) -> Dataset:
    """Drop pool pairs that also occur (after tokenization) in any forbidden set."""
    seen = set()
    for dataset in forbidden:
        for ex in dataset:
            seen.add((tuple(ex.source_tokens), tuple(ex.mt_tokens)))
    kept = [ex for ex in pool if (tuple(ex.source_tokens), tuple(ex.mt_tokens)) not in seen]
    return Dataset(kept, name=pool.name, domain=pool.domain, note=pool.note)
