"""Active-learning workbench for sub-cell NER in industrial tables."""

from .table_core import (Cell, CellRef, Corpus, LabelClass, PoolState, Span,
                         Table, ValidationError, corpus_stats, io_to_spans,
                         spans_to_io)
from .corpus_synth import GeneratorConfig, generate_corpus, load_corpus, save_corpus, split
from .talm import ModelConfig, TaggerModel, TrainConfig, build_vocab, fit, tokenize
from .acquisition import AcquisitionKind, BatchSelection, kmeans_pp, mnlp_score
from .al_loop import (ActiveLearningRun, ExperimentConfig, LearningCurve,
                      aggregate, full_training_ceiling, run_experiment,
                      stratified_seed, table_diversity)

__version__ = "0.1.0"
