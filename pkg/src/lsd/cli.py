"""``lsd`` command line.

Results go to stdout in machine-readable form; diagnostics go to stderr.
Failures exit nonzero with a code per error category (see :data:`EXIT_CODES`).
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from pathlib import Path

from . import __version__
from .config import KEYS, ExperimentConfig, load_config, parse_config
from .data import DatasetSpec, generate, read_tsv, write_splits
from .decoding import BeamConfig, beam_search, collapse_nbest, decode_strings, format_nbest
from .errors import LSDError
from .experiment import collect_metrics, evaluate, load_run, metrics_table, run_experiment, run_sweep
from .lattice import DEFAULT_LIMIT, count_decompositions, enumerate_decompositions, exact_posterior
from .tokens import read_vocab, write_vocab
from .vocab_builder import vocab_from_corpus

log = logging.getLogger("lsd")

EXIT_CODES = {
    "usage": 2,
    "invalid-config": 2,
    "invalid-input": 3,
    "io": 4,
    "capacity": 5,
    "corrupt-checkpoint": 6,
    "shape-mismatch": 6,
    "empty-result": 7,
    "non-finite": 8,
    "state": 9,
    "error": 9,
    "internal": 10,
}

HINTS = {
    "invalid-config": "check the key names and values; 'lsd config-keys' lists every key",
    "invalid-input": "check that the input files match the documented formats",
    "io": "check that the path exists and is readable or writable",
    "capacity": "use a shorter target or raise --limit",
    "corrupt-checkpoint": "the checkpoint is damaged or from another model; retrain or pick another run",
    "shape-mismatch": "the checkpoint was trained with different dimensions than model.json describes",
    "empty-result": "raise --max-steps or --beam-width",
    "non-finite": "lower lr_start or weight_noise_std",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error [usage]: {message}", file=sys.stderr)
        print(f"hint: run '{self.prog} --help' for the accepted flags", file=sys.stderr)
        sys.exit(EXIT_CODES["usage"])


def _overrides(pairs):
    out = {}
    for p in pairs or ():
        key, sep, value = p.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"--set expects key=value, got {p!r}")
        out[key.strip()] = value.strip()
    return out


def _config(args) -> ExperimentConfig:
    ov = _overrides(args.set)
    for key in ("mode", "seed", "steps"):
        v = getattr(args, key, None)
        if v is not None:
            ov[key] = str(v)
    if args.config:
        return load_config(args.config, ov)
    return parse_config("", overrides=ov)


def _pieces(z, vocab) -> str:
    return "|".join(vocab[t].text for t in z if t != 0)


def _select(rows, index):
    if index is None:
        return rows
    if not 0 <= index < len(rows):
        raise IndexError(f"--index {index} outside 0..{len(rows) - 1}")
    return [rows[index]]


# ------------------------------------------------------------------ commands

def cmd_vocab_build(args):
    src = Path(args.corpus)
    if src.suffix == ".tsv":
        lines = [y for _, y in read_tsv(src)]
    else:
        try:
            lines = src.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise OSError(f"cannot read corpus {src}: {exc}") from exc
    vocab = vocab_from_corpus(lines, args.n_max, args.size)
    write_vocab(vocab, args.out)
    print(f"{len(vocab)}\t{args.out}")


def cmd_train(args):
    cfg = _config(args)

    def progress(s):
        if s.step % cfg.eval_every == 0:
            log.info("step %d loss %.4f eps %s", s.step, s.loss, s.epsilon)

    if args.sweep:
        results = run_sweep(cfg, args.out, progress=progress)
        sys.stdout.write(metrics_table([r.metrics for r in results]))
    else:
        res = run_experiment(cfg, args.out, progress=progress)
        sys.stdout.write(metrics_table([res.metrics]))


def cmd_decode(args):
    _, vocab, model = load_run(args.run)
    rows = _select(read_tsv(args.input), args.index)
    if args.nbest:
        cfg = BeamConfig(beam_width=max(args.beam_width, args.nbest), max_steps=args.max_steps,
                         n_best=args.nbest, collapse_merge=args.merge)
        blocks = []
        for x, _ in rows:
            hyps = beam_search(model, x, vocab, cfg)
            blocks.append(format_nbest(collapse_nbest(hyps, vocab, cfg.collapse_merge), vocab))
        sys.stdout.write("\n".join(blocks))
    else:
        for text, z in decode_strings(model, vocab, [x for x, _ in rows]):
            print(f"{text}\t{_pieces(z, vocab)}")


def cmd_eval(args):
    cfg, vocab, model = load_run(args.run)
    wer, cer, _ = evaluate(model, vocab, read_tsv(args.input))
    sys.stdout.write(metrics_table([{"mode": cfg.mode, "n_max": vocab.n_max, "size": len(vocab),
                                     "WER": wer, "CER": cer}]))


def cmd_oracle(args):
    if args.oracle == "posterior":
        _, vocab, model = load_run(args.run)
        x, y = _select(read_tsv(args.input), args.index)[0]
        target = args.target if args.target is not None else y
        post = exact_posterior(model, x, target, vocab, args.limit)
        for z, p in zip(post.items, post.probabilities()):
            print(f"{_pieces(z, vocab)}\t{p:.9g}")
        return
    vocab = read_vocab(args.vocab)
    if args.oracle == "count":
        print(count_decompositions(args.target, vocab))
    else:
        for z in enumerate_decompositions(args.target, vocab, args.limit):
            print(_pieces(z, vocab))


def cmd_dataset_generate(args):
    if args.config:
        spec = load_config(args.config).dataset_spec()
    else:
        spec = DatasetSpec(seed=args.seed, language=args.language, n_train=args.n_train,
                           n_dev=args.n_dev, n_test=args.n_test)
    for name, path in write_splits(generate(spec), args.out).items():
        print(f"{name}\t{path}")


def cmd_report(args):
    sys.stdout.write(collect_metrics(args.runs))


def cmd_config_keys(args):
    defaults = ExperimentConfig()
    for key, doc in KEYS.items():
        print(f"{key} = {getattr(defaults, key)}\t# {doc}")


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lsd", description="Latent word-piece decomposition toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--threads", type=int, default=1,
                   help="cap on BLAS/OpenMP threads (default 1, which is bit-deterministic)")
    p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    vocab = sub.add_parser("vocab", help="vocabulary tools")
    vsub = vocab.add_subparsers(dest="vocab_command", required=True, parser_class=_Parser)
    vb = vsub.add_parser("build", help="build a vocabulary from a corpus")
    vb.add_argument("--corpus", required=True, help="text file (one target per line) or TSV dataset")
    vb.add_argument("--n-max", type=int, required=True, help="longest token length")
    vb.add_argument("--size", type=int, required=True, help="total tokens including EOS and singletons")
    vb.add_argument("--out", required=True, help="vocabulary file to write")
    vb.set_defaults(func=cmd_vocab_build)

    tr = sub.add_parser("train", help="run an experiment and write its report directory")
    tr.add_argument("--config", help="flat key = value config file")
    tr.add_argument("--out", required=True, help="run directory")
    tr.add_argument("--mode", choices=("lsd", "maxext", "char-baseline"))
    tr.add_argument("--seed", type=int)
    tr.add_argument("--steps", type=int)
    tr.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    tr.add_argument("--sweep", action="store_true", help="run all three modes into subdirectories")
    tr.set_defaults(func=cmd_train)

    de = sub.add_parser("decode", help="decode a TSV split with a trained run")
    de.add_argument("--run", required=True, help="run directory written by 'train'")
    de.add_argument("--input", required=True, help="TSV dataset")
    de.add_argument("--index", type=int, help="decode only this row")
    de.add_argument("--nbest", type=int, default=0, help="print N-best beam lists instead of greedy output")
    de.add_argument("--beam-width", type=int, default=8)
    de.add_argument("--max-steps", type=int, default=100)
    de.add_argument("--merge", action="store_true", help="keep one decomposition per output string")
    de.set_defaults(func=cmd_decode)

    ev = sub.add_parser("eval", help="WER and CER of greedy decodes on a TSV split")
    ev.add_argument("--run", required=True)
    ev.add_argument("--input", required=True)
    ev.set_defaults(func=cmd_eval)

    orc = sub.add_parser("oracle", help="exact decomposition oracles")
    osub = orc.add_subparsers(dest="oracle", required=True, parser_class=_Parser)
    for name, help_ in (("count", "number of decompositions"), ("enumerate", "list every decomposition")):
        o = osub.add_parser(name, help=help_)
        o.add_argument("--target", required=True)
        o.add_argument("--vocab", required=True, help="vocabulary file or plain token list")
        o.add_argument("--limit", type=int, default=DEFAULT_LIMIT)
        o.set_defaults(func=cmd_oracle)
    op = osub.add_parser("posterior", help="exact posterior over decompositions under a trained model")
    op.add_argument("--run", required=True)
    op.add_argument("--input", required=True, help="TSV dataset")
    op.add_argument("--index", type=int, default=0)
    op.add_argument("--target", help="target string (default: the row's target)")
    op.add_argument("--limit", type=int, default=DEFAULT_LIMIT)
    op.set_defaults(func=cmd_oracle)

    ds = sub.add_parser("dataset", help="synthetic datasets")
    dsub = ds.add_subparsers(dest="dataset_command", required=True, parser_class=_Parser)
    dg = dsub.add_parser("generate", help="write train/dev/test TSV splits")
    dg.add_argument("--out", required=True)
    dg.add_argument("--config", help="take the data_* keys and seed from this config")
    dg.add_argument("--language", choices=("plain", "qu"), default="plain")
    dg.add_argument("--seed", type=int, default=0)
    dg.add_argument("--n-train", type=int, default=600)
    dg.add_argument("--n-dev", type=int, default=60)
    dg.add_argument("--n-test", type=int, default=100)
    dg.set_defaults(func=cmd_dataset_generate)

    rp = sub.add_parser("report", help="combine the metrics tables of several runs")
    rp.add_argument("runs", nargs="+", help="run directories")
    rp.set_defaults(func=cmd_report)

    ck = sub.add_parser("config-keys", help="list every config key with its default")
    ck.set_defaults(func=cmd_config_keys)
    return p


def _category(exc) -> str:
    if isinstance(exc, LSDError):
        return exc.category
    if isinstance(exc, OSError):
        return "io"
    if isinstance(exc, (IndexError, argparse.ArgumentTypeError)):
        return "usage"
    return "internal"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads < 1:
        print("lsd: error [usage]: --threads must be >= 1", file=sys.stderr)
        return EXIT_CODES["usage"]
    try:
        from threadpoolctl import threadpool_limits
        limit = threadpool_limits(limits=args.threads)
    except ImportError:
        limit = contextlib.nullcontext()
    try:
        with limit:
            args.func(args)
    except Exception as exc:  # report every failure with its category
        cat = _category(exc)
        if cat == "internal":
            log.exception("unexpected failure")
        print(f"lsd: error [{cat}]: {exc}", file=sys.stderr)
        if cat in HINTS:
            print(f"hint: {HINTS[cat]}", file=sys.stderr)
        return EXIT_CODES.get(cat, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
