"""Per-utterance feature matrices, channel mean subtraction and feature files."""

from __future__ import annotations

import enum
import logging
import struct
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ..audio_io import FrameSpec, Label, Window, frame_samples, window_function
from ..errors import CorruptFile, EmptyGroup, VersionMismatch
from .engineered import AcmaxConfig, HfeConfig, SrhConfig, acmax, hfe, srh_spectrum
from .spectral import LfbeConfig, lfbe_values

log = logging.getLogger(__name__)

ENGINEERED_BLOCKS = (
    ("srh", 1),
    ("hfe_ratio", 1),
    ("hfe_entropy", 1),
    ("acmax_peak", 1),
    ("acmax_pos", 1),
    ("acmax_meandist", 1),
)


class FeatureMode(enum.Enum):
    LFBE = "lfbe"
    LFBE_ENG = "lfbe+eng"


def layout_for(mode, num_filters=64):
    blocks = [("lfbe", num_filters)]
    if FeatureMode(mode) is FeatureMode.LFBE_ENG:
        blocks += list(ENGINEERED_BLOCKS)
    return tuple(blocks)


def layout_to_string(layout):
    return ",".join(f"{name}:{width}" for name, width in layout)


def layout_from_string(text):
    if not text:
        return ()
    out = []
    for part in text.split(","):
        name, width = part.split(":")
        out.append((name, int(width)))
    return tuple(out)


@dataclass
class FeatureMatrix:
    values: np.ndarray
    layout: tuple
    utterance_id: str = ""
    speaker_id: str = ""
    device_id: str = ""
    label: Label | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != sum(w for _, w in self.layout):
            raise ValueError(f"values shape {self.values.shape} does not match layout")

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def num_frames(self):
        return self.values.shape[0]

    @property
    def group_key(self):
        return (self.speaker_id, self.device_id)

    def block(self, name):
        start = 0
        for n, w in self.layout:
            if n == name:
                return slice(start, start + w)
            start += w
        raise KeyError(name)

    def with_values(self, values):
        return replace(self, values=values)


@dataclass(frozen=True)
class FeatureConfig:
    """Everything that determines the feature values of an utterance."""

    frame: FrameSpec = FrameSpec()
    lfbe: LfbeConfig = LfbeConfig()
    srh: SrhConfig = SrhConfig()
    hfe: HfeConfig = HfeConfig()
    acmax: AcmaxConfig = AcmaxConfig()

    def snapshot(self):
        """JSON-compatible dict; used to detect feature/model skew."""
        def conv(obj):
            if isinstance(obj, enum.Enum):
                return obj.value
            if isinstance(obj, dict):
                return {k: conv(v) for k, v in obj.items()}
            if isinstance(obj, (list, tuple)):
                return [conv(v) for v in obj]
            return obj
        return conv(asdict(self))

    @classmethod
    def from_snapshot(cls, snap):
        frame = dict(snap.get("frame", {}))
        if "window" in frame:
            frame["window"] = Window(frame["window"])
        hfe_cfg = dict(snap.get("hfe", {}))
        for k in ("high_band_hz", "low_band_hz"):
            if k in hfe_cfg:
                hfe_cfg[k] = tuple(hfe_cfg[k])
        if "window" in hfe_cfg:
            hfe_cfg["window"] = Window(hfe_cfg["window"])
        return cls(
            frame=FrameSpec(**frame),
            lfbe=LfbeConfig(**snap.get("lfbe", {})),
            srh=SrhConfig(**snap.get("srh", {})),
            hfe=HfeConfig(**hfe_cfg),
            acmax=AcmaxConfig(**snap.get("acmax", {})),
        )


def centered_frames(samples, count, frame_len, shift, analysis_len):
    """``[count, analysis_len]`` windows sharing their centre with each feature frame.

    Samples outside the signal are zero.
    """
    x = np.asarray(samples, dtype=np.float64)
    lead = analysis_len // 2 - frame_len // 2
    starts = np.arange(count) * shift - lead
    pad_l = max(0, -int(starts.min())) if count else 0
    pad_r = max(0, int(starts.max()) + analysis_len - len(x)) if count else 0
    padded = np.concatenate([np.zeros(pad_l), x, np.zeros(pad_r)])
    idx = (starts + pad_l)[:, None] + np.arange(analysis_len)
    return padded[idx]


def engineered_features(samples, cfg=FeatureConfig(), sample_rate=16000):
    """``[num_frames, 6]`` block: SRH, HFE ratio, HFE entropy, ACMAX x3.

    HFE and ACMAX see the raw feature frames; SRH sees a longer window
    (``cfg.srh.analysis_ms``) centred on each frame.
    """
    n = cfg.frame.frame_len(sample_rate)
    shift = cfg.frame.frame_shift(sample_rate)
    raw = frame_samples(samples, n, shift)
    srh_frames = centered_frames(samples, len(raw), n, shift,
                                 max(n, cfg.srh.analysis_len(sample_rate)))
    res = srh_spectrum(srh_frames, cfg.srh, sample_rate)
    if cfg.srh.use_residual and not res.used_residual.all():
        log.debug("%d frame(s) fell back to plain-spectrum SRH",
                  int((~res.used_residual).sum()))
    ratio, ent = hfe(raw, cfg.hfe, sample_rate)
    ac = acmax(raw, cfg.acmax, sample_rate)
    return np.column_stack([res.peak, ratio, ent, ac])


def extract_features(u, mode=FeatureMode.LFBE, cfg=FeatureConfig()):
    """Frame *u* and compute its feature matrix (before CMS)."""
    mode = FeatureMode(mode)
    n = cfg.frame.frame_len(u.sample_rate)
    raw = frame_samples(u.samples, n, cfg.frame.frame_shift(u.sample_rate))
    blocks = [lfbe_values(raw * window_function(cfg.frame.window, n), u.sample_rate, cfg.lfbe)]
    if mode is FeatureMode.LFBE_ENG:
        blocks.append(engineered_features(u.samples, cfg, u.sample_rate))
    return FeatureMatrix(
        values=np.hstack(blocks),
        layout=layout_for(mode, cfg.lfbe.num_filters),
        utterance_id=u.utterance_id,
        speaker_id=u.speaker_id,
        device_id=u.device_id,
        label=u.label,
    )


def channel_mean_subtract(features, block="lfbe"):
    """Subtract the per-(speaker, device) mean of the LFBE block.

    The mean is pooled over all frames of all utterances in a group; other
    blocks pass through untouched. Returns new matrices in input order.
    """
    groups = defaultdict(list)
    for i, fm in enumerate(features):
        groups[fm.group_key].append(i)
    out = list(features)
    for key, idx in groups.items():
        sl = features[idx[0]].block(block)
        stacked = np.concatenate([features[i].values[:, sl] for i in idx])
        if stacked.shape[0] == 0:
            raise EmptyGroup(f"group {key} has no frames")
        mean = stacked.mean(axis=0)
        for i in idx:
            v = features[i].values.copy()
            v[:, sl] -= mean
            out[i] = features[i].with_values(v)
    return out


@dataclass
class Normalizer:
    """Per-dimension affine standardisation ``(x - mean) / std``."""

    mean: np.ndarray
    std: np.ndarray = field(default=None)

    def __post_init__(self):
        # kept at float32 precision so the model file round-trips exactly
        self.mean = np.asarray(self.mean, dtype=np.float32).astype(np.float64)
        if self.std is None:
            self.std = np.ones_like(self.mean)
        self.std = np.asarray(self.std, dtype=np.float32).astype(np.float64)

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.ones(dim))

    @classmethod
    def fit(cls, features, min_std=1e-6):
        stacked = np.concatenate([f.values for f in features])
        std = stacked.std(axis=0)
        return cls(stacked.mean(axis=0), np.where(std < min_std, 1.0, std))

    def __call__(self, values):
        return (values - self.mean) / self.std


# -- feature files ---------------------------------------------------------------

FEATURE_MAGIC = b"WDFT"
FEATURE_VERSION = 1


def write_feature_file(path, fm):
    """Binary record: magic, version, dim, frames, layout, then LE float32 rows."""
    layout = layout_to_string(fm.layout).encode("utf-8")
    header = FEATURE_MAGIC + struct.pack("<IIII", FEATURE_VERSION, fm.dim, fm.num_frames,
                                         len(layout))
    body = np.ascontiguousarray(fm.values, dtype="<f4").tobytes()
    Path(path).write_bytes(header + layout + body)


def read_feature_file(path, **meta):
    data = Path(path).read_bytes()
    if data[:4] != FEATURE_MAGIC:
        raise CorruptFile(f"{path}: not a feature file")
    if len(data) < 20:
        raise CorruptFile(f"{path}: truncated header")
    version, dim, frames, llen = struct.unpack_from("<IIII", data, 4)
    if version != FEATURE_VERSION:
        raise VersionMismatch(f"{path}: feature file version {version}")
    layout = layout_from_string(data[20:20 + llen].decode("utf-8"))
    body = data[20 + llen:]
    if len(body) != dim * frames * 4:
        raise CorruptFile(f"{path}: expected {dim * frames * 4} payload bytes, got {len(body)}")
    values = np.frombuffer(body, dtype="<f4").reshape(frames, dim).astype(np.float64)
    return FeatureMatrix(values=values, layout=layout, **meta)
