"""Whisper-oriented frame features: SRH, HFE and ACMAX.

All functions accept either one frame (1-D) or a ``[num_frames, frame_len]``
matrix of *raw* (unwindowed) frames and window internally where needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..audio_io import SAMPLE_RATE, Window, hanning, window_function
from ..errors import DegenerateLpc
from .spectral import bin_frequencies, power_spectrum

# equal autocorrelation peaks resolve to the shortest lag
_PEAK_TIE_TOL = 1e-9


# -- linear prediction ---------------------------------------------------------

def autocorrelation(frames, max_lag):
    """Biased autocorrelation ``r[0..max_lag]`` along the last axis."""
    x = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    n = x.shape[-1]
    nfft = 1 << int(math.ceil(math.log2(2 * n)))
    spec = np.fft.rfft(x, nfft, axis=-1)
    r = np.fft.irfft(spec.real ** 2 + spec.imag ** 2, nfft, axis=-1)
    return r[:, :max_lag + 1]


def levinson_durbin(r, order):
    """Solve the normal equations for each row of autocorrelations *r*.

    Returns ``(a, err, ok)`` where ``a[:, k-1]`` is the k-th predictor
    coefficient (``x[n] ~ sum_k a_k x[n-k]``), ``err`` the final prediction
    error power, and ``ok`` marks rows whose recursion stayed stable
    (positive error power, reflection coefficients inside the unit circle).
    Rows failing that get zero coefficients.
    """
    r = np.atleast_2d(np.asarray(r, dtype=np.float64))
    batch = r.shape[0]
    a = np.zeros((batch, order))
    err = r[:, 0].copy()
    ok = err > 0
    safe_err = np.where(ok, err, 1.0)
    for i in range(order):
        acc = r[:, i + 1] - np.einsum("bj,bj->b", a[:, :i], r[:, i:0:-1])
        k = acc / safe_err
        prev = a[:, :i].copy()
        a[:, :i] = prev - k[:, None] * prev[:, ::-1]
        a[:, i] = k
        err = err * (1.0 - k * k)
        ok &= (np.abs(k) < 1.0) & (err > 0)
        safe_err = np.where(ok, err, 1.0)
    a[~ok] = 0.0
    return a, err, ok


def lpc_residual(frames, order):
    """Inverse-filter each raw frame with its own LPC polynomial.

    Coefficients come from the autocorrelation method on the Hann-windowed
    frame. Returns ``(residual, ok)``; frames with a degenerate
    autocorrelation are returned unchanged with ``ok`` False.
    """
    x = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    n = x.shape[-1]
    if n < 2 * order:
        raise ValueError(f"frame length {n} < 2 * lpc_order")
    r = autocorrelation(x * hanning(n), order)
    a, _, ok = levinson_durbin(r, order)
    e = x.copy()
    for k in range(1, order + 1):
        e[:, k:] -= a[:, k - 1:k] * x[:, :-k]
    return e, ok


# -- SRH -----------------------------------------------------------------------

@dataclass(frozen=True)
class SrhConfig:
    n_harm: int = 5
    f0_min_hz: float = 80.0
    f0_max_hz: float = 450.0
    fft_size: int = 16384
    lpc_order: int = 12
    use_residual: bool = True
    analysis_ms: float = 64.0  # window centred on each feature frame

    def analysis_len(self, sample_rate=SAMPLE_RATE):
        return int(round(self.analysis_ms * sample_rate / 1000.0))

    def validate(self, sample_rate=SAMPLE_RATE):
        if self.n_harm < 2:
            raise ValueError("n_harm must be >= 2")
        if not 0 < self.f0_min_hz < self.f0_max_hz:
            raise ValueError("need 0 < f0_min_hz < f0_max_hz")
        if self.f0_max_hz * self.n_harm >= sample_rate / 2:
            raise ValueError("f0_max_hz * n_harm must stay below Nyquist")
        return self


@dataclass
class SrhResult:
    f0_grid: np.ndarray      # [num_candidates] Hz
    values: np.ndarray       # [num_frames, num_candidates]
    used_residual: np.ndarray  # [num_frames] bool

    @property
    def peak(self):
        return self.values.max(axis=-1)

    @property
    def argmax_hz(self):
        return self.f0_grid[np.argmax(self.values, axis=-1)]


def _nearest_bin(x):
    return np.floor(x + 0.5).astype(np.intp)


def srh_from_amplitude(amplitude, candidate_bins, n_harm):
    """Evaluate the harmonic sum at each candidate fundamental bin.

    ``amplitude[..., b]`` is the amplitude spectrum. Harmonic ``k * f`` adds
    its amplitude; the inter-harmonic point ``(k - 1/2) * f`` subtracts.
    """
    b = np.asarray(candidate_bins, dtype=np.float64)
    out = amplitude[..., _nearest_bin(b)].copy()
    for k in range(2, n_harm + 1):
        out += amplitude[..., _nearest_bin(k * b)]
        out -= amplitude[..., _nearest_bin((k - 0.5) * b)]
    return out


def srh_spectrum(frames, cfg=SrhConfig(), sample_rate=SAMPLE_RATE, chunk=64):
    """SRH over the f0 grid for each raw frame."""
    cfg.validate(sample_rate)
    x = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    n = x.shape[-1]
    if n > cfg.fft_size:
        raise ValueError("fft_size must be >= frame length")
    if cfg.use_residual:
        x, used = lpc_residual(x, cfg.lpc_order)
    else:
        used = np.zeros(len(x), dtype=bool)
    freqs = bin_frequencies(cfg.fft_size, sample_rate)
    cand = np.nonzero((freqs >= cfg.f0_min_hz) & (freqs <= cfg.f0_max_hz))[0]
    win = hanning(n)
    values = np.empty((len(x), len(cand)))
    for start in range(0, len(x), chunk):
        block = x[start:start + chunk] * win
        amp = np.abs(np.fft.rfft(block, cfg.fft_size, axis=-1))
        peak = amp.max(axis=-1, keepdims=True)
        amp = np.divide(amp, peak, out=np.zeros_like(amp), where=peak > 0)
        values[start:start + chunk] = srh_from_amplitude(amp, cand, cfg.n_harm)
    return SrhResult(f0_grid=freqs[cand], values=values, used_residual=used)


def srh(frames, cfg=SrhConfig(), sample_rate=SAMPLE_RATE, strict=False):
    """Scalar voicing score ``max_f SRH(f)`` per raw frame.

    With ``strict=True`` a frame whose LPC fit is degenerate raises
    :class:`DegenerateLpc`; otherwise that frame silently falls back to the
    plain spectrum (see :func:`srh_spectrum` for the per-frame flag).
    """
    res = srh_spectrum(frames, cfg, sample_rate)
    if strict and cfg.use_residual and not res.used_residual.all():
        raise DegenerateLpc(f"{int((~res.used_residual).sum())} frame(s) with degenerate LPC")
    out = res.peak
    return out if np.ndim(frames) > 1 else float(out[0])


# -- HFE -----------------------------------------------------------------------

@dataclass(frozen=True)
class HfeConfig:
    high_band_hz: tuple = (6875.0, 8000.0)
    low_band_hz: tuple = (310.0, 620.0)
    energy_floor: float = 1e-12
    fft_size: int = 512
    window: Window = Window.HANNING

    def band_masks(self, sample_rate=SAMPLE_RATE):
        freqs = bin_frequencies(self.fft_size, sample_rate)
        hi = (freqs >= self.high_band_hz[0]) & (freqs <= self.high_band_hz[1])
        lo = (freqs >= self.low_band_hz[0]) & (freqs <= self.low_band_hz[1])
        if (hi & lo).any():
            raise ValueError("HFE bands overlap")
        if hi.sum() < 2 or lo.sum() < 2:
            raise ValueError(f"each HFE band needs >= 2 bins at fft_size {self.fft_size}")
        return hi, lo


def shannon_entropy_bits(power):
    """Entropy (bits) of non-negative weights normalised along the last axis; 0 if all zero."""
    p = np.asarray(power, dtype=np.float64)
    total = p.sum(axis=-1, keepdims=True)
    p = np.divide(p, total, out=np.zeros_like(p), where=total > 0)
    logs = np.log2(p, out=np.zeros_like(p), where=p > 0)
    return -(p * logs).sum(axis=-1)


def hfe_from_power(power, cfg=HfeConfig(), sample_rate=SAMPLE_RATE):
    """(high/low energy ratio, low-band entropy) from one-sided power spectra."""
    hi, lo = cfg.band_masks(sample_rate)
    power = np.asarray(power, dtype=np.float64)
    high_e = power[..., hi].sum(axis=-1)
    low_e = power[..., lo].sum(axis=-1)
    ratio = high_e / np.maximum(low_e, cfg.energy_floor)
    return ratio, shannon_entropy_bits(power[..., lo])


def hfe(frames, cfg=HfeConfig(), sample_rate=SAMPLE_RATE):
    """HFE pair for raw frames. Returns arrays shaped like the frame batch."""
    x = np.asarray(frames, dtype=np.float64)
    x = x * window_function(cfg.window, x.shape[-1])
    ratio, ent = hfe_from_power(power_spectrum(x, cfg.fft_size), cfg, sample_rate)
    if x.ndim == 1:
        return float(ratio), float(ent)
    return ratio, ent


# -- ACMAX ---------------------------------------------------------------------

@dataclass(frozen=True)
class AcmaxConfig:
    f0_min_hz: float = 80.0
    f0_max_hz: float = 450.0
    neighbor_count: int = 4

    def lag_range(self, sample_rate=SAMPLE_RATE):
        lo = math.ceil(sample_rate / self.f0_max_hz)
        hi = math.floor(sample_rate / self.f0_min_hz)
        if lo > hi or lo < 1:
            raise ValueError("empty ACMAX lag range")
        return lo, hi


def normalized_autocorrelation(frames):
    """Autocorrelation normalised per lag by the energy of both overlapping segments.

    ``r[l] = sum x[n] x[n+l] / sqrt(sum x[n]^2 * sum x[n+l]^2)`` over the
    ``N - l`` overlapping samples, so ``r[0] = 1``, ``|r[l]| <= 1`` and an
    exactly periodic frame scores 1 at every multiple of its period.
    Lags whose segments carry no energy come back as 0.
    """
    x = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    n = x.shape[-1]
    num = autocorrelation(x, n - 1)
    csum = np.cumsum(x * x, axis=-1)
    total = csum[:, -1:]
    lags = np.arange(n)
    head = csum[:, n - 1 - lags]
    tail = total - np.concatenate([np.zeros((len(x), 1)), csum[:, :-1]], axis=1)
    denom = np.sqrt(head * tail)
    tiny = 1e-300 + 1e-12 * total
    return np.divide(num, denom, out=np.zeros_like(num), where=denom > tiny)


def find_peaks(values, neighbor_count):
    """Mask of strict local maxima over *neighbor_count* positions per side.

    Neighbours outside the array are ignored. Only positive values qualify.
    """
    v = np.atleast_2d(values)
    pad = np.full((v.shape[0], neighbor_count), -np.inf)
    padded = np.concatenate([pad, v, pad], axis=1)
    length = v.shape[1]
    mask = v > 0
    for d in range(1, neighbor_count + 1):
        mask &= v > padded[:, neighbor_count - d:neighbor_count - d + length]
        mask &= v > padded[:, neighbor_count + d:neighbor_count + d + length]
    return mask


def acmax(frames, cfg=AcmaxConfig(), sample_rate=SAMPLE_RATE):
    """(peak value, peak lag, mean peak spacing) of the normalised autocorrelation.

    Peaks are searched in the lag range of plausible F0. Frames without a
    peak yield ``(0, 0, 0)``; frames with a single peak report its lag as
    the spacing.
    """
    x = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    lo, hi = cfg.lag_range(sample_rate)
    if x.shape[-1] <= hi:
        raise ValueError(f"frame length {x.shape[-1]} must exceed max lag {hi}")
    seg = normalized_autocorrelation(x)[:, lo:hi + 1]
    peaks = find_peaks(seg, cfg.neighbor_count)
    lags = np.arange(lo, hi + 1)

    out = np.zeros((len(x), 3))
    for i in range(len(x)):
        idx = np.nonzero(peaks[i])[0]
        if idx.size == 0:
            continue
        vals = seg[i, idx]
        best = idx[np.argmax(vals >= vals.max() - _PEAK_TIE_TOL)]
        out[i, 0] = seg[i, best]
        out[i, 1] = lags[best]
        out[i, 2] = np.diff(lags[idx]).mean() if idx.size > 1 else lags[best]
    if np.ndim(frames) == 1:
        return tuple(float(v) for v in out[0])
    return out
