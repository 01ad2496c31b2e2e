"""Command-line entry point.

Settings resolve in this order, later winning: built-in defaults, the
``--config`` key=value file, ``DISTILQE_<KEY>`` environment variables (key
upper-cased, dashes as underscores), then command-line flags.  Unknown keys
are rejected.  Every command that writes files also writes
``<output>.config`` holding the resolved settings and a sha256 of each input.

Exit status: 0 on success, 1 with one ``error: <category>: <message>`` line on
a data or contract failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .exceptions import ConfigError, DistilQEError, NumericError, ParseError

ENV_PREFIX = "DISTILQE_"


class UsageError(Exception):
    pass


def _bool(text):
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(text):
    items = text if isinstance(text, list) else [text]
    return [part for item in items for part in str(item).split(",") if part]


def _optional_int(text):
    if text is None or str(text).strip().lower() in ("", "none", "auto"):
        return None
    return int(text)


@dataclass(frozen=True)
class Key:
    kind: object
    default: object = None
    help: str = ""
    path: bool = False  # an input file whose hash goes into the manifest


KEYS = {
    # data
    "train": Key(str, help="training TSV", path=True),
    "val": Key(str, help="validation TSV", path=True),
    "test": Key(str, help="test TSV", path=True),
    "data": Key(_list, help="dataset TSV(s); repeat the flag or separate with commas", path=True),
    "pool": Key(str, help="unlabeled pool TSV", path=True),
    "in": Key(str, help="input file", path=True),
    "out": Key(str, help="output file"),
    "out-dir": Key(str, help="output directory"),
    "has-header": Key(_bool, False, "skip the first line of TSV inputs"),
    # vocabulary / model
    "max-size": Key(int, 30000, "vocabulary size cap (specials excluded)"),
    "side": Key(str, "both", "vocabulary side: both, source or mt"),
    "embedding-dim": Key(int, 300),
    "hidden-dim": Key(int, 50),
    "max-len": Key(int, 70),
    "attention-dim": Key(_optional_int, None, "defaults to 2 * hidden-dim"),
    # training
    "batch-size": Key(int, 32),
    "max-epochs": Key(int, 50),
    "patience": Key(int, 5),
    "learning-rate": Key(float, 1e-3),
    "vocab-size": Key(int, 30000),
    "validation-metric": Key(str, "pearson"),
    # teacher / filter
    "teacher-file": Key(str, help="teacher predictions TSV (source, mt, score[, variance])", path=True),
    "ensemble": Key(_list, help="ensemble member model files", path=True),
    "overwrite": Key(_bool, False, "replace existing labels"),
    "filter": Key(_bool, False, "apply the variance filter"),
    "two-sided": Key(_bool, False, "drop low-variance outliers too"),
    # evaluation
    "model": Key(str, help="model file", path=True),
    "predictions": Key(str, help="predictions TSV aligned with --data", path=True),
    "bins": Key(int, 10),
    "equal-width": Key(_bool, False),
    "bin-report": Key(str, help="JSON-lines variance-bin report"),
    "sizes": Key(_list, help="comma-separated subset sizes"),
    "repeats": Key(int, 3),
    # corpus sampling
    "min-chars": Key(int, 50),
    "max-chars": Key(int, 150),
    "top-docs": Key(int, 100),
    # bench / diagnostics
    "scale": Key(float, 1.0, "multiply every scenario pool size"),
    "experiments": Key(_list, help="subset of the findings experiments"),
    "strict": Key(_bool, False, "exit 1 when a finding fails"),
    "tolerance": Key(float, 1e-4),
    "step": Key(float, 1e-3),
    "tokens": Key(int, 20),
    "repeats-latency": Key(int, 200),
}

COMMANDS = {
    "build-vocab": (["data", "out", "max-size", "side", "has-header"], ["data", "out"]),
    "train": (
        ["train", "val", "out", "has-header", "embedding-dim", "hidden-dim", "max-len", "attention-dim", "batch-size",
         "max-epochs", "patience", "learning-rate", "vocab-size", "validation-metric"],
        ["train", "val", "out"],
    ),
    "label": (["pool", "out", "teacher-file", "ensemble", "overwrite", "has-header"], ["pool", "out"]),
    "filter": (["in", "out", "two-sided", "has-header"], ["in", "out"]),
    "distill": (
        ["pool", "out", "teacher-file", "ensemble", "filter", "two-sided", "has-header"],
        ["pool", "out"],
    ),
    "evaluate": (["data", "model", "predictions", "bins", "equal-width", "bin-report", "has-header"], ["data"]),
    "sweep": (
        ["train", "val", "test", "out", "sizes", "repeats", "has-header", "embedding-dim", "hidden-dim", "max-len",
         "attention-dim", "batch-size", "max-epochs", "patience", "learning-rate", "vocab-size"],
        ["train", "val", "test", "out", "sizes"],
    ),
    "bench": (
        ["out-dir", "scale", "experiments", "strict", "embedding-dim", "hidden-dim", "batch-size", "max-epochs",
         "patience", "learning-rate"],
        ["out-dir"],
    ),
    "sample-corpus": (["in", "out", "min-chars", "max-chars", "top-docs"], ["in", "out"]),
    "gradcheck": (["tolerance", "step"], []),
    "efficiency": (["embedding-dim", "hidden-dim", "max-len", "vocab-size", "tokens", "repeats-latency"], []),
}

# bench defaults differ from the student defaults (see BenchConfig)
BENCH_DEFAULTS = {"embedding-dim": 64, "max-epochs": 30}

HELP = {
    "build-vocab": "build a frequency-ranked vocabulary",
    "train": "train a student on labeled pairs",
    "label": "label a pool with a teacher file and/or an ensemble",
    "filter": "drop examples whose variance exceeds mean + one std",
    "distill": "label, optionally filter, and write a student training set",
    "evaluate": "Pearson/MAE/RMSE of a model or a predictions file",
    "sweep": "train on nested subsets and report Pearson per size",
    "bench": "run the synthetic findings suite",
    "sample-corpus": "sample sentences by length from the top documents",
    "gradcheck": "finite-difference check of the full student",
    "efficiency": "print the parameter count and single-pair latency",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="distilqe", description="Distillation toolkit for sentence-level QE.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for name, (keys, _) in COMMANDS.items():
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--seed", type=int, required=True, help="controls all randomness")
        p.add_argument("--threads", type=int, default=1, help="worker threads (1 keeps runs reproducible)")
        p.add_argument("--config", help="key=value settings file")
        p.add_argument("-v", "--verbose", action="store_true")
        for key in keys:
            spec = KEYS[key]
            flag = f"--{key}"
            if spec.kind is _bool:
                p.add_argument(flag, dest=key, action="store_const", const=True, default=argparse.SUPPRESS, help=spec.help)
            elif spec.kind is _list:
                p.add_argument(flag, dest=key, action="extend", nargs="+", default=argparse.SUPPRESS, help=spec.help)
            else:
                p.add_argument(flag, dest=key, default=argparse.SUPPRESS, help=spec.help)
    return parser


def read_config_file(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}: line {n}: expected key=value")
            key, _, value = line.partition("=")
            key = key.strip().replace("_", "-")
            if key not in KEYS:
                raise UsageError(f"{path}: line {n}: unknown config key {key!r}")
            out[key] = value.strip()
    return out


def env_settings(environ):
    out = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower().replace("_", "-")
        if key not in KEYS:
            raise UsageError(f"unknown environment setting {name}")
        out[key] = value
    return out


def resolve(command, args, environ=None):
    """Merge defaults, config file, environment and flags for ``command``."""
    keys, required = COMMANDS[command]
    settings = {k: KEYS[k].default for k in keys}
    if command == "bench":
        settings.update(BENCH_DEFAULTS)
    layers = []
    if args.config:
        layers.append(read_config_file(args.config))
    layers.append(env_settings(os.environ if environ is None else environ))
    layers.append({k: v for k, v in vars(args).items() if k in KEYS})
    for layer in layers:
        for key, value in layer.items():
            if key not in settings:
                continue  # a shared config file may carry keys for other commands
            try:
                settings[key] = KEYS[key].kind(value) if value is not None else None
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for {key}: {exc}") from None
    missing = [k for k in required if settings.get(k) in (None, [])]
    if missing:
        raise UsageError("missing required setting(s): " + ", ".join(f"--{k}" for k in missing))
    settings["seed"] = args.seed
    settings["threads"] = args.threads
    return settings


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_run_config(out_path, command, settings):
    """Resolved settings and input hashes, next to the main output."""
    lines = [f"command={command}"]
    hashes = []
    for key in sorted(settings):
        value = settings[key]
        text = ",".join(value) if isinstance(value, list) else ("" if value is None else str(value))
        lines.append(f"{key}={text}")
        spec = KEYS.get(key)
        if spec is not None and spec.path and value:
            for p in value if isinstance(value, list) else [value]:
                hashes.append(f"sha256[{p}]={sha256_file(p)}")
    with open(str(out_path) + ".config", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines + hashes) + "\n")


# -- commands --------------------------------------------------------------------


def _model_config(s):
    return {
        "embedding_dim": int(s["embedding-dim"]),
        "hidden_dim": int(s["hidden-dim"]),
        "max_len": int(s["max-len"]),
        "attention_dim": s["attention-dim"],
    }


def _train_config(s, seed):
    from .trainer import TrainConfig

    return TrainConfig(
        batch_size=int(s["batch-size"]),
        max_epochs=int(s["max-epochs"]),
        patience=int(s["patience"]),
        seed=seed,
        learning_rate=float(s["learning-rate"]),
        vocab_size=int(s["vocab-size"]),
        validation_metric=s.get("validation-metric", "pearson"),
    )


def cmd_build_vocab(s, out):
    from .corpus import build_vocab, read_pairs

    datasets = [read_pairs(p, has_header=s["has-header"]) for p in s["data"]]
    vocab = build_vocab(datasets, int(s["max-size"]), side=s["side"])
    vocab.save(s["out"])
    write_run_config(s["out"], "build-vocab", s)
    out(f"vocabulary: {len(vocab)} entries -> {s['out']}")


def cmd_train(s, out):
    from .corpus import read_pairs
    from .trainer import train

    train_set = read_pairs(s["train"], has_header=s["has-header"], name="train")
    val = read_pairs(s["val"], has_header=s["has-header"], name="validation")
    student, report = train(train_set, val, _train_config(s, s["seed"]), _model_config(s))
    student.save(s["out"])
    report.to_csv(s["out"] + ".train.csv")
    write_run_config(s["out"], "train", s)
    best = report.best_metric
    out(
        f"epochs={report.epochs} best_epoch={report.best_epoch} "
        f"best_val_{report.metric}={'undefined' if best is None else f'{best:.6f}'} -> {s['out']}"
    )


def _teacher(s):
    from .model import Student
    from .teacher import EnsembleTeacher, FileTeacher

    file_teacher = FileTeacher(s["teacher-file"], has_header=s["has-header"]) if s.get("teacher-file") else None
    members = [Student.load(p) for p in s.get("ensemble") or []]
    if members:
        return EnsembleTeacher(members, labeler=file_teacher)
    if file_teacher is None:
        raise ConfigError("give --teacher-file and/or --ensemble")
    return file_teacher


def cmd_label(s, out):
    from .corpus import read_pairs, write_pairs
    from .teacher import label_dataset

    pool = read_pairs(s["pool"], has_header=s["has-header"], name="pool")
    labeled = label_dataset(pool, _teacher(s), overwrite=s["overwrite"])
    write_pairs(labeled, s["out"])
    write_run_config(s["out"], "label", s)
    out(f"labeled {len(labeled)} pairs -> {s['out']}")


def _write_stats_manifest(path, stats, size, s, teacher="input", k=""):
    from .distill import write_manifest

    write_manifest(
        path,
        {
            "pool_size": size,
            "teacher": teacher,
            "K": k,
            "mu_v": repr(stats.mean_variance),
            "sigma_v": repr(stats.std_variance),
            "threshold": repr(stats.threshold),
            "kept": stats.kept,
            "dropped": stats.dropped,
            "two_sided": str(bool(s["two-sided"])).lower(),
            "seed": s["seed"],
        },
    )


def cmd_filter(s, out):
    from .corpus import read_pairs, write_pairs
    from .distill import filter_by_variance

    data = read_pairs(s["in"], has_header=s["has-header"], origin="distilled")
    kept, stats = filter_by_variance(data, two_sided=s["two-sided"])
    write_pairs(kept, s["out"])
    _write_stats_manifest(s["out"] + ".manifest", stats, len(data), s)
    write_run_config(s["out"], "filter", s)
    out(f"kept={stats.kept} dropped={stats.dropped} threshold={stats.threshold:.6g} -> {s['out']}")


def cmd_distill(s, out):
    from .corpus import read_pairs
    from .distill import run_pipeline

    pool = read_pairs(s["pool"], has_header=s["has-header"], name="pool")
    data, stats, _ = run_pipeline(
        pool, _teacher(s), filter=s["filter"], out_path=s["out"], two_sided=s["two-sided"], seed=s["seed"]
    )
    write_run_config(s["out"], "distill", s)
    extra = f" dropped={stats.dropped} threshold={stats.threshold:.6g}" if stats else ""
    out(f"distilled={len(data)}{extra} -> {s['out']}")


def cmd_evaluate(s, out):
    from .corpus import read_pairs
    from .evaluation import bin_variance_error, evaluate
    from .model import Student

    gold = read_pairs(s["data"][0], has_header=s["has-header"], name="gold")
    if bool(s.get("model")) == bool(s.get("predictions")):
        raise ConfigError("give exactly one of --model or --predictions")
    variances = None
    if s.get("model"):
        predictions = Student.load(s["model"]).predict(gold)
    else:
        pred = read_pairs(s["predictions"], has_header=s["has-header"], origin="distilled")
        if len(pred) != len(gold):
            raise ConfigError(f"{len(pred)} predictions for {len(gold)} gold pairs")
        for i, (a, b) in enumerate(zip(pred, gold)):
            if a.key != b.key:
                raise ConfigError(f"predictions line {i + 1} is not the same pair as gold line {i + 1}")
        predictions = pred.labels()
        if all(ex.variance is not None for ex in pred):
            variances = pred.variances()
    report = evaluate(predictions, gold.labels())
    out(report.format())
    if s.get("bin-report"):
        if variances is None:
            raise ConfigError("a bin report needs a variance column in the predictions file")
        bins = bin_variance_error(predictions, gold.labels(), variances, int(s["bins"]), s["equal-width"])
        bins.to_jsonl(s["bin-report"])
        write_run_config(s["bin-report"], "evaluate", s)


def cmd_sweep(s, out):
    from .corpus import read_pairs
    from .distill import size_subsets
    from .evaluation import sweep, write_sweep_csv
    from .trainer import train

    pool = read_pairs(s["train"], has_header=s["has-header"], name="train")
    val = read_pairs(s["val"], has_header=s["has-header"], name="validation")
    test = read_pairs(s["test"], has_header=s["has-header"], name="test")
    sizes = [int(x) for x in s["sizes"]]
    subsets = size_subsets(pool, sizes, s["seed"])
    repeats = int(s["repeats"])

    def fit(tr, va, seed):
        return train(tr, va, _train_config(s, seed), _model_config(s))[0]

    seeds = [s["seed"] + i for i in range(repeats)]
    rows = sweep(subsets, val, test, fit, repeats, seeds, threads=s["threads"])
    write_sweep_csv(rows, s["out"])
    write_run_config(s["out"], "sweep", s)
    for row in rows:
        out(f"size={row.size} mean_pearson={row.mean_pearson:.6f} half_range={row.half_range:.6f}")


def cmd_bench(s, out):
    from dataclasses import replace

    from .synthetic_bench import BenchConfig, Scenario, run_findings_suite

    base = Scenario(seed=s["seed"])
    scale = float(s["scale"])
    if scale <= 0:
        raise ConfigError(f"scale must be > 0, got {scale}")
    scenario = replace(
        base,
        **{
            name: max(2, int(round(getattr(base, name) * scale)))
            for name in ("train_size", "val_size", "test_size", "unlabeled_size", "shifted_size")
        },
    )
    bench = BenchConfig(
        embedding_dim=int(s["embedding-dim"]),
        hidden_dim=int(s["hidden-dim"]),
        batch_size=int(s["batch-size"]),
        max_epochs=int(s["max-epochs"]),
        patience=int(s["patience"]),
        learning_rate=float(s["learning-rate"]),
    )
    out_dir = Path(s["out-dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    report = run_findings_suite(scenario, bench, out_dir=out_dir, experiments=s.get("experiments") or None)
    write_run_config(out_dir / "findings.csv", "bench", s)
    for f in report.findings:
        out(f"{f.claim}: {f.measured:.4f} {f.threshold} {f.status}")
    if s["strict"] and not report.passed:
        failed = ", ".join(f.claim for f in report.findings if not f.passed)
        raise NumericError(f"findings not reproduced: {failed}")


def cmd_sample_corpus(s, out):
    from .corpus import sample_corpus

    documents = {}
    with open(s["in"], encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            doc, sep, sentence = line.partition("\t")
            if not sep:
                raise ParseError("expected doc_id<TAB>sentence", line=n)
            documents.setdefault(doc, []).append(sentence)
    picked = sample_corpus(list(documents.items()), min_chars=int(s["min-chars"]), max_chars=int(s["max-chars"]), top_docs=int(s["top-docs"]))
    with open(s["out"], "w", encoding="utf-8", newline="\n") as fh:
        for doc, sentence in picked:
            fh.write(f"{doc}\t{sentence}\n")
    write_run_config(s["out"], "sample-corpus", s)
    out(f"sampled {len(picked)} sentences -> {s['out']}")


def cmd_gradcheck(s, out):
    from .model import gradcheck_student

    report = gradcheck_student(s["seed"], tolerance=float(s["tolerance"]), step=float(s["step"]))
    for line in report.lines():
        out(line)
    out(f"max_relative_error={report.worst:.3e} tolerance={float(s['tolerance']):g}")
    if not report.passed:
        raise NumericError(f"gradient check failed: max relative error {report.worst:.3e}")


def cmd_efficiency(s, out):
    from .model import PAPER_PARAM_COUNT, ModelConfig, init_params, measure_latency

    vocab = int(s["vocab-size"]) + 2
    config = ModelConfig(
        vocab_size=vocab, embedding_dim=int(s["embedding-dim"]), hidden_dim=int(s["hidden-dim"]), max_len=int(s["max-len"])
    )
    params = init_params(config, s["seed"])
    latency = measure_latency(params, tokens=int(s["tokens"]), repeats=int(s["repeats-latency"]), seed=s["seed"])
    out(f"parameters={config.param_count()} (closed form; vocabularies of {vocab} per side)")
    out(f"reference_parameters={PAPER_PARAM_COUNT} (published full-vocabulary student)")
    out(f"latency_ms={latency * 1e3:.3f} per {int(s['tokens'])}-token pair, single thread")


HANDLERS = {
    "build-vocab": cmd_build_vocab,
    "train": cmd_train,
    "label": cmd_label,
    "filter": cmd_filter,
    "distill": cmd_distill,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "bench": cmd_bench,
    "sample-corpus": cmd_sample_corpus,
    "gradcheck": cmd_gradcheck,
    "efficiency": cmd_efficiency,
}


def main(argv=None, environ=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on unknown commands and flags
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.exit(2, "error: usage: --threads must be >= 1\n")
    try:
        settings = resolve(args.command, args, environ)
    except UsageError as exc:
        parser.exit(2, f"error: usage: {exc}\n")

    def out(line):
        print(line, flush=True)

    try:
        HANDLERS[args.command](settings, out)
    except DistilQEError as exc:
        print(f"error: {exc.category}: {_one_line(exc)}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io: {_one_line(exc)}", file=sys.stderr)
        return 1
    return 0


def _one_line(exc):
    return " ".join(str(exc).split())


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
