"""End-to-end runs: data, vocabulary, training, decoding and report files.

A run directory holds everything needed to reproduce or reuse a run::

    config.txt     the full configuration, every key written out
    data/          generated TSV splits (synthetic runs only)
    vocab.txt      token vocabulary
    model.json     model dimensions
    model.ckpt     best parameters
    stats.csv      per-step training statistics
    metrics.csv    mode,n_max,size,WER,CER on the test split
    coverage.csv   token length -> fraction of characters
    nbest.txt      beam n-best lists for the first test inputs
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import load_into, save_checkpoint
from .config import EXPERIMENT_MODES, ExperimentConfig, load_config
from .data import generate, read_tsv, write_splits
from .decoding import (beam_search, collapse_nbest, coverage_distribution, decode_strings,
                       edit_distance_metrics, format_nbest)
from .errors import EmptyResultError, InvalidInputError, LSDError
from .model import ModelConfig, Seq2Seq
from .tokens import BaseAlphabet, Vocabulary, read_vocab, write_vocab
from .training import Trainer, train_run
from .vocab_builder import singleton_vocab, vocab_from_corpus

METRICS_HEADER = ("mode", "n_max", "size", "WER", "CER")


class StageError(LSDError):
    """A run stage failed; ``stage`` names it and ``__cause__`` holds the reason."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.category = getattr(cause, "category", "io" if isinstance(cause, OSError) else "internal")


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, typ, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, Exception):
            raise StageError(self.name, exc) from exc
        return False


@dataclass
class ExperimentResult:
    out_dir: Path
    metrics: dict
    coverage: dict
    best_step: int
    stopped_early: bool


# ------------------------------------------------------------------ stages

def load_splits(cfg: ExperimentConfig, out_dir=None) -> dict:
    """TSV splits from the configured paths, else freshly generated ones."""
    if cfg.train_path:
        return {"train": read_tsv(cfg.train_path), "dev": read_tsv(cfg.dev_path),
                "test": read_tsv(cfg.test_path)}
    splits = generate(cfg.dataset_spec())
    if out_dir is not None:
        write_splits(splits, Path(out_dir) / "data")
    return splits


def build_vocabulary(cfg: ExperimentConfig, targets) -> Vocabulary:
    if cfg.vocab_path:
        vocab = read_vocab(cfg.vocab_path)
        if cfg.mode == "char-baseline" and not vocab.is_singleton_only():
            vocab = singleton_vocab(vocab.alphabet)
        return vocab
    alphabet = BaseAlphabet.from_text(targets)
    if cfg.mode == "char-baseline":
        return singleton_vocab(alphabet)
    size = cfg.vocab_size or len(alphabet) + cfg.vocab_extra
    return vocab_from_corpus(targets, cfg.n_max, size, alphabet)


def input_dim_of(rows) -> int:
    for x, _ in rows:
        if isinstance(x, str):
            raise InvalidInputError("the model needs frame inputs; got a raw string input field")
        return int(np.asarray(x).shape[1])
    raise InvalidInputError("dataset is empty")


def metrics_table(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r in rows:
        w.writerow([r["mode"], r["n_max"], r["size"], f"{r['WER']:.6f}", f"{r['CER']:.6f}"])
    return buf.getvalue()


def coverage_table(cov: dict) -> str:
    lines = ["length,fraction"]
    lines += [f"{n},{frac:.12f}" for n, frac in sorted(cov.items())]
    return "\n".join(lines) + "\n"


def evaluate(model: Seq2Seq, vocab: Vocabulary, rows, batch_size=64):
    """Pooled WER and CER of greedy decodes, plus the decoded token ids."""
    decoded = decode_strings(model, vocab, [x for x, _ in rows], batch_size)
    totals = {"word": [0, 0], "char": [0, 0]}
    for (hyp, _), (_, ref) in zip(decoded, rows):
        for unit in totals:
            m = edit_distance_metrics(hyp, ref, unit)
            totals[unit][0] += m["errors"]
            totals[unit][1] += m["ref_len"]
    rate = {u: (e / n if n else float(e)) for u, (e, n) in totals.items()}
    return rate["word"], rate["char"], [z for _, z in decoded]


def nbest_dump(model, vocab, rows, cfg: ExperimentConfig) -> str:
    beam = cfg.beam()
    parts = []
    for i, (x, y) in enumerate(rows[:cfg.nbest_samples]):
        parts.append(f"# example {i}\treference\t{y}\n")
        try:
            hyps = beam_search(model, x, vocab, beam)
        except EmptyResultError as exc:
            parts.append(f"# no finished hypothesis: {exc}\n")
            continue
        parts.append(format_nbest(collapse_nbest(hyps, vocab, beam.collapse_merge), vocab))
    return "".join(parts)


def save_run_model(model: Seq2Seq, out: Path):
    (out / "model.json").write_text(json.dumps(model.config.to_dict(), indent=1, sort_keys=True) + "\n")
    save_checkpoint(model.params, out / "model.ckpt")


def load_run(run_dir):
    """``(config, vocab, model)`` restored from a run directory."""
    run = Path(run_dir)
    cfg = load_config(run / "config.txt")
    vocab = read_vocab(run / "vocab.txt")
    try:
        mcfg = ModelConfig(**json.loads((run / "model.json").read_text()))
    except (OSError, ValueError, TypeError) as exc:
        raise InvalidInputError(f"cannot read model dimensions from {run / 'model.json'}: {exc}") from exc
    model = load_into(Seq2Seq(mcfg), run / "model.ckpt")
    return cfg, vocab, model


# ------------------------------------------------------------------ driver

def run_experiment(cfg: ExperimentConfig, out_dir, progress=None) -> ExperimentResult:
    """Run one configuration end to end and write its report directory."""
    out = Path(out_dir)
    with _Stage("setup"):
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(cfg.to_text())
    with _Stage("data"):
        splits = load_splits(cfg, out)
        for name in ("train", "dev", "test"):
            if not splits[name]:
                raise InvalidInputError(f"{name} split is empty")
        targets = [y for _, y in splits["train"]]
        input_dim = input_dim_of(splits["train"])
    with _Stage("vocab"):
        vocab = build_vocabulary(cfg, targets)
        write_vocab(vocab, out / "vocab.txt")
    with _Stage("model"):
        model = Seq2Seq(cfg.model_config(input_dim, len(vocab)), seed=cfg.seed)
    with _Stage("train"):
        trainer = Trainer(model, vocab, cfg.trainer_mode, cfg.optimizer(), cfg.schedule(),
                          seed=cfg.seed, total_steps=cfg.steps)
        res = train_run(trainer, splits["train"], splits["dev"], cfg.steps, cfg.batch_size,
                        cfg.eval_every, cfg.patience, out_dir=out, progress=progress)
        save_run_model(model, out)
    with _Stage("decode"):
        wer, cer, decoded = evaluate(model, vocab, splits["test"])
        cov = coverage_distribution(decoded, vocab)
        nbest = nbest_dump(model, vocab, splits["test"], cfg)
    with _Stage("report"):
        metrics = {"mode": cfg.mode, "n_max": vocab.n_max,
                   "size": len(vocab), "WER": wer, "CER": cer}
        (out / "metrics.csv").write_text(metrics_table([metrics]))
        (out / "coverage.csv").write_text(coverage_table(cov))
        (out / "nbest.txt").write_text(nbest)
    return ExperimentResult(out, metrics, cov, res.best_step, res.stopped_early)


def run_sweep(cfg: ExperimentConfig, out_dir, modes=EXPERIMENT_MODES, progress=None) -> list:
    """One run per mode in ``out_dir/<mode>``, plus a combined metrics table."""
    results = [run_experiment(cfg.replace(mode=m), Path(out_dir) / m, progress) for m in modes]
    with _Stage("report"):
        (Path(out_dir) / "metrics.csv").write_text(metrics_table([r.metrics for r in results]))
    return results


def collect_metrics(run_dirs) -> str:
    """Concatenate the metrics rows of several run directories into one table."""
    rows = []
    for d in run_dirs:
        path = Path(d) / "metrics.csv"
        try:
            with open(path, newline="") as fh:
                for r in csv.DictReader(fh):
                    rows.append({"mode": r["mode"], "n_max": int(r["n_max"]), "size": int(r["size"]),
                                 "WER": float(r["WER"]), "CER": float(r["CER"])})
        except OSError as exc:
            raise OSError(f"cannot read metrics {path}: {exc}") from exc
        except (KeyError, ValueError) as exc:
            raise InvalidInputError(f"malformed metrics table {path}: {exc}") from exc
    return metrics_table(rows)
