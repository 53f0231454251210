"""Multichannel STFT front end."""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal as sps


@dataclass
class MultichannelSignal:
    samples: np.ndarray  # (Q, S)
    sample_rate: float

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.ndim != 2 or self.samples.shape[1] < 1:
            raise ValueError("samples must have shape (Q, S) with S >= 1")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def n_channels(self):
        return self.samples.shape[0]

    @property
    def duration(self):
        return self.samples.shape[1] / self.sample_rate


@dataclass
class Spectrogram:
    """Complex STFT data with axis metadata.

    ``data`` has shape ``(channels, frames, bins)``.
    """

    data: np.ndarray
    frame_times: np.ndarray
    bin_freqs: np.ndarray
    window_len: int
    hop: int
    sample_rate: float

    @property
    def n_channels(self):
        return self.data.shape[0]

    @property
    def n_frames(self):
        return self.data.shape[1]

    @property
    def n_bins(self):
        return self.data.shape[2]

    @property
    def frame_rate(self):
        return self.sample_rate / self.hop

    def replace(self, data):
        return Spectrogram(data, self.frame_times, self.bin_freqs, self.window_len, self.hop,
                           self.sample_rate)


def hann_periodic(n):
    return sps.get_window("hann", n, fftbins=True)


def stft(sig, window_len=512, overlap=0.5, window="hann"):
    """One-sided STFT of every channel.

    Frame ``t`` covers samples ``[t*hop, t*hop + window_len)``; the trailing
    partial frame is dropped and nothing is zero-padded. ``window`` is
    ``"hann"`` (periodic) or ``"rect"``.
    """
    if window_len < 2:
        raise ValueError("window_len must be >= 2")
    if not 0 <= overlap < 1:
        raise ValueError("overlap must be in [0, 1)")
    x = sig.samples
    n_samples = x.shape[1]
    if n_samples < window_len:
        raise ValueError(f"signal has {n_samples} samples, shorter than one window ({window_len})")
    hop = max(1, int(round(window_len * (1 - overlap))))
    n_frames = (n_samples - window_len) // hop + 1
    if window == "hann":
        w = hann_periodic(window_len)
    elif window == "rect":
        w = np.ones(window_len)
    else:
        raise ValueError(f"unknown window {window!r}")
    frames = np.lib.stride_tricks.sliding_window_view(x, window_len, axis=1)[:, ::hop][:, :n_frames]
    data = np.fft.rfft(frames * w, axis=-1)
    frame_times = np.arange(n_frames) * hop / sig.sample_rate
    bin_freqs = np.fft.rfftfreq(window_len, d=1.0 / sig.sample_rate)
    return Spectrogram(data, frame_times, bin_freqs, window_len, hop, sig.sample_rate)


def band_select(spec, f_min, f_max):
    """Contiguous bin indices with ``f_min <= f <= f_max``, as a ``range``."""
    freqs = spec.bin_freqs if isinstance(spec, Spectrogram) else np.asarray(spec)
    if f_min >= f_max:
        raise ValueError(f"f_min ({f_min}) must be below f_max ({f_max})")
    if f_min < 0 or f_min > freqs[-1]:
        raise ValueError(f"f_min {f_min} Hz outside [0, {freqs[-1]}] Hz")
    idx = np.flatnonzero((freqs >= f_min - 1e-9) & (freqs <= f_max + 1e-9))
    if idx.size == 0:
        raise ValueError(f"no bins between {f_min} and {f_max} Hz")
    return range(int(idx[0]), int(idx[-1]) + 1)


def resample(sig, rate):
    """Polyphase windowed-sinc resampling (Kaiser window, beta 5) to ``rate``."""
    if rate == sig.sample_rate:
        return sig
    ratio = Fraction(int(round(rate)), int(round(sig.sample_rate)))
    y = sps.resample_poly(sig.samples, ratio.numerator, ratio.denominator, axis=1,
                          window=("kaiser", 5.0))
    return MultichannelSignal(y, float(rate))
