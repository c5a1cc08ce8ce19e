"""Frame-level acoustic features."""

from .engineered import (
    AcmaxConfig,
    HfeConfig,
    SrhConfig,
    acmax,
    hfe,
    hfe_from_power,
    levinson_durbin,
    lpc_residual,
    normalized_autocorrelation,
    srh,
    srh_from_amplitude,
    srh_spectrum,
)
from .extract import (
    FeatureConfig,
    FeatureMatrix,
    FeatureMode,
    Normalizer,
    channel_mean_subtract,
    extract_features,
    layout_for,
    layout_from_string,
    layout_to_string,
    read_feature_file,
    write_feature_file,
)
from .spectral import (
    LfbeConfig,
    bin_frequencies,
    hz_to_mel,
    lfbe_values,
    mel_filterbank,
    mel_to_hz,
    parseval_weights,
    power_spectrum,
)


def lfbe(frames, cfg=LfbeConfig(), sample_rate=16000):
    """64-dim LFBE matrix for a :class:`~whisperdet.audio_io.FrameSequence`."""
    return FeatureMatrix(
        values=lfbe_values(frames.frames, sample_rate, cfg),
        layout=(("lfbe", cfg.num_filters),),
        utterance_id=frames.utterance_id,
    )
