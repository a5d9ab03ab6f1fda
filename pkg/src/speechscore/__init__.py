"""Whole-audio speech quality score regression on frozen frame embeddings."""

from .embedding_io import (
    CorpusManifest,
    EmbeddingMatrix,
    UtteranceRecord,
    load_manifest,
    read_embedding,
    save_manifest,
    validate_corpus,
    write_embedding,
)
from .errors import DataValidationError, EmbeddingFormatError
from .evaluation import EvalReport, FoldAggregate, ScorePair, evaluate, spearman
from .experiments import FoldSplit, ScaleMap, kfold_split, run_kfold
from .pooling_regressor import (
    RegressionHead,
    TrainConfig,
    init_head,
    load_head,
    predict,
    save_head,
    statistic_pooling,
    train,
)

__version__ = "0.1.0"
