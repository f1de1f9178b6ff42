"""Two-channel sampled waveforms and WAV file I/O."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile


@dataclass(frozen=True)
class BinauralSignal:
    """Left/right sampled waveform pair sharing one sample rate."""

    left: np.ndarray
    right: np.ndarray
    sample_rate: int

    def __post_init__(self):
        left = np.asarray(self.left, dtype=np.float64)
        right = np.asarray(self.right, dtype=np.float64)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        if left.ndim != 1 or right.ndim != 1:
            raise ValueError("channels must be 1-D sample sequences")
        if left.shape != right.shape:
            raise ValueError(
                f"left/right lengths differ: {left.size} vs {right.size}")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def n_samples(self) -> int:
        return self.left.size

    @property
    def duration(self) -> float:
        return self.left.size / self.sample_rate

    def as_array(self) -> np.ndarray:
        """Return samples as a (2, n) array, left first."""
        return np.stack([self.left, self.right])


_INT_SCALE = {np.dtype(np.int16): 2.0 ** 15, np.dtype(np.int32): 2.0 ** 31,
              np.dtype(np.uint8): 2.0 ** 7}


def read_wav(path):
    """Read a WAV file to float64 samples in [-1, 1).

    Returns (samples, sample_rate) where samples has shape (n,) for mono
    or (n, channels) for multichannel. Integer PCM (16/24/32-bit) and
    32/64-bit float files are accepted; 24-bit is delivered by scipy as
    int32.
    """
    rate, data = wavfile.read(path)
    if data.dtype in _INT_SCALE:
        scaled = data.astype(np.float64) / _INT_SCALE[data.dtype]
        if data.dtype == np.dtype(np.uint8):
            scaled = scaled - 1.0
        data = scaled
    else:
        data = data.astype(np.float64)
    return data, int(rate)


def read_wav_binaural(path) -> BinauralSignal:
    data, rate = read_wav(path)
    if data.ndim == 1:
        return BinauralSignal(data, data.copy(), rate)
    if data.shape[1] < 2:
        return BinauralSignal(data[:, 0], data[:, 0].copy(), rate)
    return BinauralSignal(data[:, 0], data[:, 1], rate)


def read_wav_mono(path):
    """Read a WAV file and average channels down to mono."""
    data, rate = read_wav(path)
    if data.ndim > 1:
        data = data.mean(axis=1)
    return data, rate


def write_wav(path, samples, sample_rate):
    """Write float32 WAV; samples may be (n,) or (n, channels)."""
    wavfile.write(path, int(sample_rate), np.asarray(samples, dtype=np.float32))


def write_wav_binaural(path, signal: BinauralSignal):
    write_wav(path, signal.as_array().T, signal.sample_rate)
