"""MLP and LSTM frame classifiers trained with SGD / truncated BPTT."""

from .models import (
    LSTM,
    MLP,
    NORMAL,
    WHISPER,
    PosteriorTrajectory,
    build_model,
    cross_entropy_loss,
    label_index,
    lstm_forward,
    mlp_forward,
    softmax,
)
from .serialize import ModelBundle, from_bytes, load_model, save_model, to_bytes
from .training import (
    EpochStats,
    GradCheckReport,
    TrainConfig,
    TrainResult,
    frame_accuracy_of,
    gradient_check,
    train,
)
