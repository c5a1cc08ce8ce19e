"""WAV decoding, dataset manifests and framing."""

from __future__ import annotations

import enum
import json
import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    DuplicateUtteranceId,
    NotWav,
    ParseError,
    TooShort,
    Truncated,
    UnknownLabel,
    UnsupportedFormat,
)

SAMPLE_RATE = 16000
_PCM = 1
_EXTENSIBLE = 0xFFFE


class Label(enum.Enum):
    WHISPER = "whisper"
    NORMAL = "normal"

    @classmethod
    def parse(cls, text):
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            raise UnknownLabel(f"unknown label {text!r}") from None

    @property
    def is_whisper(self):
        return self is Label.WHISPER


class Window(enum.Enum):
    HANNING = "hanning"
    RECTANGULAR = "rectangular"


class Split(enum.Enum):
    TRAIN = "train"
    CV = "cv"
    TEST = "test"


@dataclass
class AudioUtterance:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    utterance_id: str = ""
    speaker_id: str = ""
    device_id: str = ""
    label: Label | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def group_key(self):
        return (self.speaker_id, self.device_id)


@dataclass(frozen=True)
class FrameSpec:
    frame_len_ms: float = 25.0
    frame_shift_ms: float = 10.0
    window: Window = Window.HANNING

    def __post_init__(self):
        if not 0 < self.frame_shift_ms <= self.frame_len_ms:
            raise ValueError("need 0 < frame_shift_ms <= frame_len_ms")

    def frame_len(self, sample_rate):
        return _ms_to_samples(self.frame_len_ms, sample_rate)

    def frame_shift(self, sample_rate):
        return _ms_to_samples(self.frame_shift_ms, sample_rate)


def _ms_to_samples(ms, sample_rate):
    n = ms * sample_rate / 1000.0
    if abs(n - round(n)) > 1e-9:
        raise ValueError(f"{ms} ms is not a whole number of samples at {sample_rate} Hz")
    return int(round(n))


@dataclass
class FrameSequence:
    frames: np.ndarray
    spec: FrameSpec
    utterance_id: str = ""

    @property
    def num_frames(self):
        return self.frames.shape[0]


def hanning(n):
    """Symmetric Hann window, ``w[0] = w[n-1] = 0``."""
    if n == 1:
        return np.ones(1)
    k = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / (n - 1)))


def window_function(kind, n):
    if Window(kind) is Window.HANNING:
        return hanning(n)
    return np.ones(n)


def num_frames(num_samples, frame_len, shift):
    if num_samples < frame_len:
        return 0
    return (num_samples - frame_len) // shift + 1


def frame_samples(samples, frame_len, shift):
    """Unwindowed ``[num_frames, frame_len]`` view of *samples*; partial tail dropped."""
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) < frame_len:
        raise TooShort(f"{len(samples)} samples is shorter than one {frame_len}-sample frame")
    return sliding_window_view(samples, frame_len)[::shift]


def frame_signal(u, spec=FrameSpec()):
    """Slice an utterance into overlapping windowed frames."""
    n = spec.frame_len(u.sample_rate)
    raw = frame_samples(u.samples, n, spec.frame_shift(u.sample_rate))
    frames = raw * window_function(spec.window, n)
    return FrameSequence(frames=frames, spec=spec, utterance_id=u.utterance_id)


# -- WAV ---------------------------------------------------------------------

def decode_wav(path, expected_rate=SAMPLE_RATE, **meta):
    """Read a mono 16-bit PCM WAV file.

    Samples are scaled by 1/32768. ``expected_rate=None`` accepts any rate.
    Extra keyword arguments populate the utterance metadata.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise NotWav(f"{path}: missing RIFF/WAVE header")

    fmt = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        size = struct.unpack_from("<I", data, pos + 4)[0]
        body = pos + 8
        if cid == b"fmt ":
            if size < 16 or body + 16 > len(data):
                raise Truncated(f"{path}: fmt chunk truncated")
            fmt = struct.unpack_from("<HHIIHH", data, body)
            tag = fmt[0]
            if tag == _EXTENSIBLE and size >= 40:
                tag = struct.unpack_from("<H", data, body + 24)[0]
            if tag != _PCM:
                raise UnsupportedFormat(f"{path}: format tag {tag} is not PCM")
            if fmt[1] != 1:
                raise UnsupportedFormat(f"{path}: {fmt[1]} channels, expected mono")
            if fmt[5] != 16:
                raise UnsupportedFormat(f"{path}: {fmt[5]}-bit samples, expected 16-bit")
            if expected_rate is not None and fmt[2] != expected_rate:
                raise UnsupportedFormat(f"{path}: {fmt[2]} Hz, expected {expected_rate} Hz")
        elif cid == b"data":
            if fmt is None:
                raise NotWav(f"{path}: data chunk before fmt chunk")
            if body + size > len(data):
                raise Truncated(f"{path}: data chunk claims {size} bytes, "
                                f"{len(data) - body} present")
            if size % 2:
                raise Truncated(f"{path}: odd data chunk length {size}")
            pcm = np.frombuffer(data, dtype="<i2", count=size // 2, offset=body)
            samples = pcm.astype(np.float64) / 32768.0
            return AudioUtterance(samples=samples, sample_rate=fmt[2], **meta)
        pos = body + size + (size & 1)
    if fmt is None:
        raise NotWav(f"{path}: no fmt chunk")
    raise Truncated(f"{path}: no data chunk")


def to_pcm16(samples):
    """Quantize float samples to int16 (round-to-nearest, clipped)."""
    x = np.round(np.asarray(samples, dtype=np.float64) * 32768.0)
    return np.clip(x, -32768, 32767).astype("<i2")


def encode_wav(path, samples, sample_rate=SAMPLE_RATE):
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(to_pcm16(samples).tobytes())


# -- manifests ---------------------------------------------------------------

@dataclass
class ManifestEntry:
    audio_path: str
    utterance_id: str
    speaker_id: str
    label: Label
    device_id: str = ""

    def to_json(self):
        return {
            "audio_path": self.audio_path,
            "utterance_id": self.utterance_id,
            "speaker_id": self.speaker_id,
            "device_id": self.device_id,
            "label": self.label.value,
        }


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)
    split: Split | None = None
    root: Path | None = None

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def resolve(self, entry):
        p = Path(entry.audio_path)
        if not p.is_absolute() and self.root is not None:
            p = self.root / p
        return p

    def load_audio(self, entry):
        return decode_wav(
            self.resolve(entry),
            utterance_id=entry.utterance_id,
            speaker_id=entry.speaker_id,
            device_id=entry.device_id,
            label=entry.label,
        )

    @property
    def speakers(self):
        return {e.speaker_id for e in self.entries}


_REQUIRED = ("audio_path", "utterance_id", "speaker_id", "label")


def load_manifest(path, split=None):
    """Parse a JSON-lines manifest.

    Relative ``audio_path`` values resolve against the manifest's directory.
    When *split* is not given it is inferred from the file stem
    (``train``, ``cv`` or ``test``) if possible.
    """
    path = Path(path)
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON: {e.msg}", lineno) from None
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", lineno)
            missing = [k for k in _REQUIRED if k not in obj]
            if missing:
                raise ParseError(f"missing keys {missing}", lineno)
            try:
                label = Label.parse(obj["label"])
            except UnknownLabel as e:
                raise UnknownLabel(str(e), lineno) from None
            uid = str(obj["utterance_id"])
            if uid in seen:
                raise DuplicateUtteranceId(f"duplicate utterance_id {uid!r}", lineno)
            seen.add(uid)
            entries.append(ManifestEntry(
                audio_path=str(obj["audio_path"]),
                utterance_id=uid,
                speaker_id=str(obj["speaker_id"]),
                device_id=str(obj.get("device_id") or ""),
                label=label,
            ))
    if split is None:
        try:
            split = Split(path.stem)
        except ValueError:
            pass
    return DatasetManifest(entries=entries, split=Split(split) if split else None,
                           root=path.parent)


def write_manifest(path, entries):
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps(e.to_json(), sort_keys=True) + "\n")
