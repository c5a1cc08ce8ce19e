import numpy as np
import pytest

from whisperdet.synth import SynthMode, SynthSpec, generate_utterance

FS = 16000


def sine(f0, n, fs=FS, amp=1.0, phase=0.0):
    return amp * np.sin(2 * np.pi * f0 * np.arange(n) / fs + phase)


def pulse_frame(f0, n, rng, fs=FS):
    """Impulse train at *f0* through a fixed two-formant filter."""
    from scipy.signal import lfilter

    x = np.zeros(n + 400)
    period = fs / f0
    t = rng.uniform(0, period)
    while t < len(x):
        x[int(t)] = 1.0
        t += period
    for fc, bw in ((500.0, 80.0), (1500.0, 120.0)):
        r = np.exp(-np.pi * bw / fs)
        x = lfilter([1.0], [1.0, -2 * r * np.cos(2 * np.pi * fc / fs), r * r], x)
    return x[400:]


def speech_frames(mode, count, seed, n=400):
    """*count* frames cut from the active middle of synthetic utterances."""
    rng = np.random.default_rng(seed)
    frames = []
    while len(frames) < count:
        spec = SynthSpec(mode=mode, duration_s=1.0, f0_hz=float(rng.uniform(90, 250)),
                         formants=((float(rng.uniform(400, 900)), 90.0),
                                   (float(rng.uniform(1100, 2000)), 110.0),
                                   (float(rng.uniform(2300, 3000)), 150.0)),
                         snr_db=30.0, lead_silence_s=0.0, trail_silence_s=0.0,
                         seed=int(rng.integers(2**31)))
        x = generate_utterance(spec).samples
        for start in rng.integers(1000, len(x) - n - 1000, size=10):
            frames.append(x[start:start + n])
    return np.array(frames[:count])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def voiced_frame(f0, n, seed):
    """*n* samples from the middle of a synthetic voiced utterance at *f0*."""
    rng = np.random.default_rng(seed)
    spec = SynthSpec(mode=SynthMode.VOICED, duration_s=0.5, f0_hz=float(f0),
                     formants=((float(rng.uniform(400, 900)), 90.0),
                               (float(rng.uniform(1100, 2000)), 110.0),
                               (float(rng.uniform(2300, 3000)), 150.0)),
                     snr_db=30.0, seed=int(rng.integers(2**31)))
    x = generate_utterance(spec).samples
    c = len(x) // 2
    return x[c - n // 2:c - n // 2 + n]
