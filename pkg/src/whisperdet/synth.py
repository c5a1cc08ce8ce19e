"""Deterministic synthetic corpus of voiced-like and whisper-like utterances.

Both modes share a speaker's formant filter; they differ only in the
excitation. Voiced-like speech is a glottal pulse train at ``f0``;
whisper-like speech is white noise with a low shelf that holds everything
below 600 Hz 18 dB down. Optional near-silent lead/trail segments
carry only the additive noise floor.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from .audio_io import (
    SAMPLE_RATE,
    AudioUtterance,
    Label,
    ManifestEntry,
    Split,
    encode_wav,
    write_manifest,
)
from .errors import ConfigError

PEAK_LEVEL = 0.5
# whisper excitation: flat shelf below SHELF_LOW_HZ, rising to 0 dB at SHELF_HIGH_HZ
SHELF_GAIN_DB = -18.0
SHELF_LOW_HZ = 600.0
SHELF_HIGH_HZ = 1000.0


class SynthMode(enum.Enum):
    VOICED = "voiced"
    WHISPER = "whisper"

    @property
    def label(self):
        return Label.WHISPER if self is SynthMode.WHISPER else Label.NORMAL


@dataclass(frozen=True)
class Speaker:
    speaker_id: str
    formants: tuple  # ((centre_hz, bandwidth_hz), ...)
    f0_range: tuple  # (low_hz, high_hz)
    device_id: str = ""


@dataclass(frozen=True)
class SynthSpec:
    mode: SynthMode = SynthMode.VOICED
    duration_s: float = 1.0
    f0_hz: float = 150.0
    formants: tuple = ((500.0, 80.0), (1500.0, 120.0), (2500.0, 160.0))
    snr_db: float = 30.0
    lead_silence_s: float = 0.0
    trail_silence_s: float = 0.0
    seed: int = 0
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if not 0.5 <= self.duration_s <= 3.0:
            raise ValueError("duration_s must lie in [0.5, 3.0]")
        if SynthMode(self.mode) is SynthMode.VOICED and not 80 <= self.f0_hz <= 300:
            raise ValueError("f0_hz must lie in [80, 300]")
        if not 2 <= len(self.formants) <= 3:
            raise ValueError("need 2 or 3 formant sections")
        for fc, bw in self.formants:
            if not 300 <= fc <= 3000 or bw <= 0:
                raise ValueError(f"bad formant ({fc}, {bw})")
        if not (0 <= self.lead_silence_s <= 0.5 and 0 <= self.trail_silence_s <= 0.5):
            raise ValueError("silence segments must lie in [0, 0.5] s")


def resonator(fc, bw, fs):
    """Two-pole resonator with unit gain at DC removed; returns (b, a)."""
    r = np.exp(-np.pi * bw / fs)
    a = np.array([1.0, -2.0 * r * np.cos(2.0 * np.pi * fc / fs), r * r])
    return np.array([a.sum()]), a


def formant_filter(x, formants, fs):
    for fc, bw in formants:
        b, a = resonator(fc, bw, fs)
        x = signal.lfilter(b, a, x)
    return x


def pulse_train(f0_contour, fs):
    """Unit impulses at each whole cycle of the integrated f0 contour."""
    phase = np.cumsum(f0_contour) / fs
    cycles = np.floor(phase)
    x = np.zeros_like(phase)
    x[1:][np.diff(cycles) > 0] = 1.0
    x[0] = 1.0
    return x


def shelf_gain(freqs):
    """Linear amplitude gain of the whisper low shelf at *freqs* (Hz)."""
    g = 10.0 ** (SHELF_GAIN_DB / 20.0)
    f = np.asarray(freqs, dtype=np.float64)
    pos = np.clip((f - SHELF_LOW_HZ) / (SHELF_HIGH_HZ - SHELF_LOW_HZ), 0.0, 1.0)
    return g + (1.0 - g) * (0.5 - 0.5 * np.cos(np.pi * pos))


def shaped_noise(n, fs, rng):
    """White noise with the whisper low shelf applied in the frequency domain."""
    spec = np.fft.rfft(rng.standard_normal(n))
    spec *= shelf_gain(np.fft.rfftfreq(n, 1.0 / fs))
    return np.fft.irfft(spec, n)


def _excitation(spec, n, rng):
    fs = spec.sample_rate
    if SynthMode(spec.mode) is SynthMode.VOICED:
        t = np.arange(n) / fs
        drift = 1.0 + 0.02 * np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t + rng.uniform(0, 2 * np.pi))
        pulses = pulse_train(spec.f0_hz * drift, fs)
        # two-pole glottal spectral tilt
        return signal.lfilter([1.0], np.poly([0.95, 0.95]), pulses)
    return shaped_noise(n, fs, rng)


def _envelope(n, fs):
    ramp = min(int(0.02 * fs), n // 2)
    env = np.ones(n)
    if ramp:
        r = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        env[:ramp] = r
        env[n - ramp:] = r[::-1]
    return env


def generate_utterance(spec, utterance_id="", speaker_id="", device_id=""):
    """Render *spec* as a peak-normalised 16 kHz utterance (deterministic per seed)."""
    fs = spec.sample_rate
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration_s * fs))
    speech = formant_filter(_excitation(spec, n, rng), spec.formants, fs)
    speech = signal.lfilter([1.0, -1.0], [1.0], speech) * _envelope(n, fs)  # lip radiation
    speech /= np.sqrt(np.mean(speech ** 2)) or 1.0
    lead = int(round(spec.lead_silence_s * fs))
    trail = int(round(spec.trail_silence_s * fs))
    x = np.concatenate([np.zeros(lead), speech, np.zeros(trail)])
    x += rng.standard_normal(len(x)) * 10.0 ** (-spec.snr_db / 20.0)
    x *= PEAK_LEVEL / np.max(np.abs(x))
    return AudioUtterance(
        samples=x,
        sample_rate=fs,
        utterance_id=utterance_id,
        speaker_id=speaker_id,
        device_id=device_id,
        label=SynthMode(spec.mode).label,
    )


# -- corpus ----------------------------------------------------------------------

@dataclass(frozen=True)
class CorpusConfig:
    n_per_class: int = 100
    split_fractions: tuple = (0.7, 0.1, 0.2)
    seed: int = 0
    utts_per_speaker_per_class: int = 5
    duration_s: tuple = (0.5, 3.0)
    silence_s: tuple = (0.0, 0.5)
    trailing_silence: bool = True
    snr_db: tuple = (25.0, 35.0)

    def validate(self):
        if self.n_per_class < 10:
            raise ConfigError("n_per_class must be >= 10")
        fr = self.split_fractions
        if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError(f"split_fractions {fr} must be three non-negative values summing to 1")
        if self.utts_per_speaker_per_class < 1:
            raise ConfigError("utts_per_speaker_per_class must be >= 1")
        return self


def random_speaker(rng, index):
    f1 = rng.uniform(300, 900)
    f2 = rng.uniform(max(f1 + 300, 900), 2400)
    f3 = rng.uniform(max(f2 + 200, 2300), 3000)
    formants = ((f1, rng.uniform(60, 120)), (f2, rng.uniform(80, 160)), (f3, rng.uniform(100, 200)))
    lo = rng.uniform(80, 220)
    return Speaker(
        speaker_id=f"spk{index:04d}",
        formants=tuple((round(float(f), 3), round(float(b), 3)) for f, b in formants),
        f0_range=(round(float(lo), 3), round(float(min(lo * 1.35, 300.0)), 3)),
        device_id=f"dev{index % 3}",
    )


def _split_counts(total, fractions, min_one=False):
    """Largest-remainder apportionment of *total* items.

    With *min_one*, every bucket with a positive fraction receives at least
    one item (taken from the largest bucket) when there are enough items.
    """
    raw = [f * total for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (counts[i] - raw[i], i))
    for i in order[:total - sum(counts)]:
        counts[i] += 1
    if min_one and total >= sum(f > 0 for f in fractions):
        for i, f in enumerate(fractions):
            if f > 0 and counts[i] == 0:
                counts[int(np.argmax(counts))] -= 1
                counts[i] = 1
    return counts


def utterance_specs(speaker, count_per_class, rng, cfg):
    """SynthSpecs for one speaker, alternating voiced / whisper."""
    specs = []
    for i in range(count_per_class):
        for mode in (SynthMode.VOICED, SynthMode.WHISPER):
            lead = rng.uniform(*cfg.silence_s)
            trail = rng.uniform(*cfg.silence_s) if cfg.trailing_silence else 0.0
            specs.append(SynthSpec(
                mode=mode,
                duration_s=round(float(rng.uniform(*cfg.duration_s)), 4),
                f0_hz=round(float(rng.uniform(*speaker.f0_range)), 3),
                formants=speaker.formants,
                snr_db=round(float(rng.uniform(*cfg.snr_db)), 3),
                lead_silence_s=round(float(lead), 4),
                trail_silence_s=round(float(trail), 4),
                seed=int(rng.integers(2 ** 31)),
            ))
    return specs


@dataclass
class Corpus:
    root: Path
    manifests: dict = field(default_factory=dict)  # Split -> path
    counts: dict = field(default_factory=dict)     # Split -> utterance count
    speakers: dict = field(default_factory=dict)   # Split -> set of speaker ids


def plan_corpus(cfg):
    """Yield ``(split, speaker, spec, utterance_id)`` in a fixed order."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n_speakers = max(cfg.n_per_class // cfg.utts_per_speaker_per_class,
                     sum(f > 0 for f in cfg.split_fractions))
    n_speakers = min(n_speakers, cfg.n_per_class)
    per_speaker = _split_counts(cfg.n_per_class, [1.0 / n_speakers] * n_speakers)
    speakers = [random_speaker(rng, i) for i in range(n_speakers)]
    split_sizes = _split_counts(n_speakers, cfg.split_fractions, min_one=True)
    splits = [Split.TRAIN] * split_sizes[0] + [Split.CV] * split_sizes[1] + [Split.TEST] * split_sizes[2]
    for split, spk, count in zip(splits, speakers, per_speaker):
        for j, spec in enumerate(utterance_specs(spk, count, rng, cfg)):
            uid = f"{spk.speaker_id}_{j:03d}_{SynthMode(spec.mode).value}"
            yield split, spk, spec, uid


def generate_corpus(out_dir, cfg=CorpusConfig()):
    """Write WAVs under ``out_dir/wav`` and one JSON-lines manifest per split."""
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    entries = {s: [] for s in Split}
    for split, spk, spec, uid in plan_corpus(cfg):
        u = generate_utterance(spec, uid, spk.speaker_id, spk.device_id)
        rel = f"wav/{uid}.wav"
        encode_wav(out_dir / rel, u.samples, u.sample_rate)
        entries[split].append(ManifestEntry(rel, uid, spk.speaker_id, u.label, spk.device_id))
    corpus = Corpus(root=out_dir)
    for split in Split:
        path = out_dir / f"{split.value}.jsonl"
        write_manifest(path, entries[split])
        corpus.manifests[split] = path
        corpus.counts[split] = len(entries[split])
        corpus.speakers[split] = {e.speaker_id for e in entries[split]}
        if split is not Split.TRAIN:
            # negatives-only lists for operating-point tuning
            write_manifest(out_dir / f"{split.value}_normal.jsonl",
                           [e for e in entries[split] if e.label is Label.NORMAL])
    return corpus


def tree_checksum(root):
    """SHA-256 over relative paths and contents of every file under *root*."""
    root = Path(root)
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()
