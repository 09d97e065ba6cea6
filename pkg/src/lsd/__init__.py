"""Sequence-to-sequence learning with latent word-piece decompositions."""

__version__ = "0.1.0"

from .errors import (CapacityError, ConfigError, CorruptCheckpointError, EmptyResultError,
                     InvalidInputError, LSDError, NonFiniteError, ShapeMismatchError, StateError)
from .tokens import (EOS, EOS_ID, SPACE, SPACE_ID, BaseAlphabet, Token, Vocabulary, collapse,
                     is_valid_decomposition, max_ext, read_vocab, valid_extensions, write_vocab)
from .vocab_builder import build_vocab, count_ngrams, singleton_vocab, vocab_from_corpus
from .lattice import (count_decompositions, enumerate_decompositions, exact_gradient,
                      exact_log_marginal, exact_posterior, sample_posterior)
from .model import ModelConfig, ModelParams, Seq2Seq
from .checkpoint import load_checkpoint, load_into, save_checkpoint
from .training import (EpsilonSchedule, OptimizerConfig, Trainer, estimate_gradient,
                       sample_decomposition, sample_decompositions, train_run)
from .decoding import (BeamConfig, Hypothesis, beam_search, coverage_distribution,
                       edit_distance_metrics, format_nbest, greedy_decode)
from .data import DatasetSpec, generate, read_tsv, write_tsv
from .config import ExperimentConfig, load_config, parse_config
from .experiment import run_experiment, run_sweep
