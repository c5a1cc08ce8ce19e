"""Whispered-speech detection: features, frame classifiers, utterance scoring and evaluation."""

from .audio_io import (
    AudioUtterance,
    DatasetManifest,
    FrameSpec,
    Label,
    Split,
    decode_wav,
    encode_wav,
    frame_signal,
    load_manifest,
)
from .errors import ConfigError, DataError, NumericError, UsageError, WhisperDetError
from .features import FeatureConfig, FeatureMatrix, FeatureMode, extract_features
from .inference import STUDY_MODULES, InferenceModuleSpec, build_result, parse_module
from .metrics import EvalReport, OperatingPoint, evaluate, frame_accuracy, tune_threshold
from .neural import LSTM, MLP, TrainConfig, load_model, save_model, train

__version__ = "0.1.0"
