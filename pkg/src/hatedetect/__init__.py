"""Experiment toolkit for hate-speech identification on short texts.

Four classifier families (char-LSTM, word-LSTM, frozen-encoder features
into a GRU, full encoder fine-tuning) behind a scikit-learn estimator
API, plus the surrounding machinery: tweet normalization, seeded
stratified splits, exhaustive hyperparameter grids and F1 reporting.
"""

__version__ = "0.1.0"

from .classifiers import (
    FineTunedEncoderClassifier,
    FrozenEncoderGruClassifier,
    Predictor,
    RecurrentTextClassifier,
    evaluate_model,
    load_predictor,
)
from .corpus import (
    Dataset,
    LabeledText,
    SplitSpec,
    Task,
    class_stats,
    load_tsv,
    stratified_split,
)
from .evaluate import EvalReport, confusion_matrix, f1_scores
from .models import HyperParams, ModelFamily, ModelSpec, build_model, param_count
from .preprocess import PreprocessConfig, TweetNormalizer, preprocess
from .pretrained import EncoderVariant, StubEncoder, encode_features, encoder_stub
from .search import GridSpace, ResultsTable, enumerate_grid, run_grid
from .train import TrainConfig, TrainHistory, load_checkpoint, save_checkpoint, train
from .vocab import Vocab, VocabLevel, build_vocab, encode, load_pretrained_embeddings

__all__ = [
    "Dataset",
    "EncoderVariant",
    "EvalReport",
    "FineTunedEncoderClassifier",
    "FrozenEncoderGruClassifier",
    "GridSpace",
    "HyperParams",
    "LabeledText",
    "ModelFamily",
    "ModelSpec",
    "Predictor",
    "PreprocessConfig",
    "RecurrentTextClassifier",
    "ResultsTable",
    "SplitSpec",
    "StubEncoder",
    "Task",
    "TrainConfig",
    "TrainHistory",
    "TweetNormalizer",
    "Vocab",
    "VocabLevel",
    "build_model",
    "build_vocab",
    "class_stats",
    "confusion_matrix",
    "encode",
    "encode_features",
    "encoder_stub",
    "enumerate_grid",
    "evaluate_model",
    "f1_scores",
    "load_checkpoint",
    "load_predictor",
    "load_pretrained_embeddings",
    "load_tsv",
    "param_count",
    "preprocess",
    "run_grid",
    "save_checkpoint",
    "stratified_split",
    "train",
]
