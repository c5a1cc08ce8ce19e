"""Power spectra, mel filterbanks and log filterbank energies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def power_spectrum(frames, fft_size):
    """|DFT|^2 for bins ``0..fft_size/2`` of each frame, zero-padded to *fft_size*.

    Accepts a single frame or a ``[num_frames, frame_len]`` matrix.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[-1] > fft_size:
        raise ValueError(f"frame length {frames.shape[-1]} exceeds fft_size {fft_size}")
    spec = np.fft.rfft(frames, n=fft_size, axis=-1)
    return spec.real ** 2 + spec.imag ** 2


def parseval_weights(fft_size):
    """Weights ``w`` with ``sum(w * power_spectrum(x)) == sum(x**2)``."""
    w = np.full(fft_size // 2 + 1, 2.0 / fft_size)
    w[0] = 1.0 / fft_size
    if fft_size % 2 == 0:
        w[-1] = 1.0 / fft_size
    return w


def bin_frequencies(fft_size, sample_rate):
    return np.arange(fft_size // 2 + 1) * (sample_rate / fft_size)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class LfbeConfig:
    num_filters: int = 64
    fft_size: int = 512
    mel_low_hz: float = 0.0
    mel_high_hz: float | None = None  # None means sample_rate / 2
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.num_filters < 1:
            raise ValueError("num_filters must be >= 1")
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a power of two")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    def band(self, sample_rate):
        high = sample_rate / 2 if self.mel_high_hz is None else self.mel_high_hz
        if not 0 <= self.mel_low_hz < high <= sample_rate / 2:
            raise ValueError("need 0 <= mel_low_hz < mel_high_hz <= sample_rate/2")
        return self.mel_low_hz, high


def mel_filterbank(num_filters, fft_size, sample_rate, low_hz=0.0, high_hz=None):
    """Triangular filters equally spaced on the HTK mel scale.

    Returns ``[num_filters, fft_size//2 + 1]``. Filter *m* rises linearly
    from edge *m* to edge *m+1* and falls to edge *m+2*, evaluated at the
    bin centre frequencies.
    """
    if high_hz is None:
        high_hz = sample_rate / 2
    edges = mel_to_hz(np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), num_filters + 2))
    freqs = bin_frequencies(fft_size, sample_rate)
    left = edges[:-2, None]
    centre = edges[1:-1, None]
    right = edges[2:, None]
    rising = (freqs - left) / (centre - left)
    falling = (right - freqs) / (right - centre)
    return np.maximum(0.0, np.minimum(rising, falling))


def lfbe_from_power(power, filterbank, log_floor=1e-10):
    energies = power @ filterbank.T
    return np.log(np.maximum(energies, log_floor))


def lfbe_values(frames, sample_rate, cfg=LfbeConfig()):
    """``[num_frames, num_filters]`` log mel energies of already-windowed frames."""
    low, high = cfg.band(sample_rate)
    frames = np.atleast_2d(frames)
    if frames.shape[-1] > cfg.fft_size:
        raise ValueError("fft_size must be >= frame length")
    fb = mel_filterbank(cfg.num_filters, cfg.fft_size, sample_rate, low, high)
    return lfbe_from_power(power_spectrum(frames, cfg.fft_size), fb, cfg.log_floor)
