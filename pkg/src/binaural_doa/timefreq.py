"""Analysis front-ends: windowed STFT and the complex one-sided gammatone
auditory filterbank (AFB) with ERB-scale channels and per-channel decimation.

Both front-ends share one coefficient convention: the coefficient of channel
``c`` at output frame ``m`` is the inner product of the signal with a window
(or gammatone envelope) anchored at sample ``m`` and a complex exponential
referenced to absolute signal time, so interaural phase relations are
preserved exactly across channels and front-ends.
"""

from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .signal import BinauralSignal

__all__ = [
    "StftParams", "ErbBank", "TFRepresentation",
    "erb_bandwidth", "erb_rate", "erb_rate_inverse", "erb_space",
    "make_erb_bank", "stft_analyze", "stft_via_filtering", "stft_bin_filter",
    "afb_analyze", "binaural_analyze", "save_tf", "load_tf",
]

TF_FORMAT = "binaural-doa-tf"
TF_VERSION = 1

_WINDOWS = {
    "hann": np.hanning,
    "hamming": np.hamming,
    "blackman": np.blackman,
    "rect": np.ones,
}


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StftParams:
    """Windowed-transform configuration: FFT size, hop and window taps."""

    fft_size: int
    hop: int
    window_name: str
    window: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "window", np.asarray(self.window, np.float64))
        if not 0 < self.hop <= self.fft_size:
            raise ValueError("hop must satisfy 0 < hop <= fft_size")
        if self.window.shape != (self.fft_size,):
            raise ValueError("window length must equal fft_size")
        if not np.all(np.isfinite(self.window)) or np.any(self.window < 0):
            raise ValueError("window coefficients must be finite and non-negative")

    @classmethod
    def create(cls, fft_size=1536, hop=None, window="hann") -> "StftParams":
        """Default analysis setup: 1536-sample FFT, Hanning, 50% overlap."""
        if hop is None:
            hop = fft_size // 2
        if window not in _WINDOWS:
            raise ValueError(f"unknown window {window!r}; choose from {sorted(_WINDOWS)}")
        taps = np.maximum(_WINDOWS[window](int(fft_size)), 0.0)
        return cls(fft_size=int(fft_size), hop=int(hop), window_name=window,
                   window=taps)


@dataclass
class ErbBank:
    """Complex one-sided gammatone filterbank on the ERB-rate scale.

    ``impulse_responses[c]`` holds the materialized anti-causal filter of
    channel ``c`` in chronological order, i.e. entry ``n`` is the filter
    value at time ``(n - L + 1) / sample_rate`` for a length-``L`` response.
    """

    center_frequencies: np.ndarray
    bandwidths: np.ndarray
    decimation_factors: np.ndarray
    impulse_responses: list
    order: int
    sample_rate: int
    _spectra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        cf = np.asarray(self.center_frequencies, np.float64)
        if cf.size < 1 or np.any(np.diff(cf) <= 0):
            raise ValueError("center frequencies must be strictly increasing")
        if np.any(np.asarray(self.bandwidths) <= 0):
            raise ValueError("bandwidths must be positive")
        if np.any(np.asarray(self.decimation_factors) < 1):
            raise ValueError("decimation factors must be >= 1")
        if self.order < 1:
            raise ValueError("filter order must be >= 1")

    @property
    def n_channels(self) -> int:
        return self.center_frequencies.size

    @property
    def sample_interval(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def max_filter_length(self) -> int:
        return max(len(g) for g in self.impulse_responses)

    def time_steps(self) -> np.ndarray:
        """Per-channel output frame spacing in seconds."""
        return self.decimation_factors / float(self.sample_rate)

    def filter_spectrum(self, channel: int, n_fft: int) -> np.ndarray:
        """FFT of the (zero-padded) channel filter, cached per length."""
        key = (channel, n_fft)
        if key not in self._spectra:
            self._spectra[key] = sfft.fft(self.impulse_responses[channel], n_fft)
        return self._spectra[key]


@dataclass
class TFRepresentation:
    """Complex time-frequency coefficients with per-channel time grids."""

    frontend: str                      # "stft" or "afb"
    channel_frequencies: np.ndarray    # Hz, one per channel
    channel_time_steps: np.ndarray     # seconds per frame, one per channel
    channels: list                     # complex coefficient array per channel

    def __post_init__(self):
        self.channel_frequencies = np.asarray(self.channel_frequencies, np.float64)
        self.channel_time_steps = np.asarray(self.channel_time_steps, np.float64)
        if len(self.channels) != self.channel_frequencies.size:
            raise ValueError("channel count does not match channel_frequencies")
        if self.channel_time_steps.size != self.channel_frequencies.size:
            raise ValueError("channel count does not match channel_time_steps")
        if np.any(self.channel_time_steps <= 0):
            raise ValueError("channel time steps must be positive")

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def times(self, channel: int) -> np.ndarray:
        """Frame time stamps of one channel in seconds (window anchor)."""
        n = len(self.channels[channel])
        return np.arange(n) * self.channel_time_steps[channel]

    def select(self, indices) -> "TFRepresentation":
        """Sub-representation restricted to the given channel indices."""
        idx = np.asarray(indices, int)
        return TFRepresentation(
            frontend=self.frontend,
            channel_frequencies=self.channel_frequencies[idx],
            channel_time_steps=self.channel_time_steps[idx],
            channels=[self.channels[i] for i in idx],
        )


# ---------------------------------------------------------------------------
# ERB scale
# ---------------------------------------------------------------------------

def erb_bandwidth(freq_hz):
    """Glasberg-Moore equivalent rectangular bandwidth in Hz."""
    return 24.7 * (4.37 * np.asarray(freq_hz, np.float64) / 1000.0 + 1.0)


def erb_rate(freq_hz):
    """Frequency in Hz to ERB-rate (ERB-number) scale."""
    return 21.4 * np.log10(4.37 * np.asarray(freq_hz, np.float64) / 1000.0 + 1.0)


def erb_rate_inverse(rate):
    """ERB-rate back to Hz."""
    return (10.0 ** (np.asarray(rate, np.float64) / 21.4) - 1.0) * 1000.0 / 4.37


def erb_space(f_lo, f_hi, n_channels):
    """Center frequencies uniformly spaced on the ERB-rate scale, inclusive."""
    r = np.linspace(erb_rate(f_lo), erb_rate(f_hi), n_channels)
    out = erb_rate_inverse(r)
    out[0], out[-1] = f_lo, f_hi   # pin endpoints against roundoff
    return out


# ---------------------------------------------------------------------------
# gammatone bank construction
# ---------------------------------------------------------------------------

def _one_sided_projection(g_chrono, sample_rate, target_db=-46.0, max_iter=30):
    """Suppress residual negative-frequency energy of a materialized filter.

    Alternates projections between exact zeroing of negative-frequency bins
    (on an 8x oversampled grid) and the original time support. The
    envelope-modulated construction alone leaves up to ~-31 dB of energy at
    negative frequencies for the lowest channels; a few passes push every
    channel below ``target_db``.
    """
    L = len(g_chrono)
    n_fft = sfft.next_fast_len(8 * L)
    neg = sfft.fftfreq(n_fft) < 0
    g = g_chrono
    for _ in range(max_iter):
        G = sfft.fft(g, n_fft)
        e_neg = np.sum(np.abs(G[neg]) ** 2)
        e_tot = np.sum(np.abs(G) ** 2)
        if e_neg <= 10.0 ** (target_db / 10.0) * e_tot:
            break
        G[neg] = 0.0
        g = sfft.ifft(G)[:L]
    return g


def make_erb_bank(f_lo, f_hi, n_channels, sample_rate, order=4,
                  envelope_floor=1e-5, max_filter_samples=None) -> ErbBank:
    """Build the one-sided gammatone bank.

    Channel centers are uniform on the ERB-rate scale between ``f_lo`` and
    ``f_hi`` (inclusive); bandwidths are ``1.019 * ERB(fc)``; decimation
    factors are ``floor(sample_rate / (2 * ERB(fc)))``. Each filter is the
    time-reversed gammatone envelope modulated to ``+fc``, truncated where
    the envelope falls below ``envelope_floor`` of its peak, capped at 4096
    samples at 48 kHz (scaled for other rates), then spectrally projected so
    negative-frequency energy stays below -40 dB, and scaled to unit peak
    frequency-domain magnitude.
    """
    if not (0 < f_lo < f_hi < sample_rate / 2):
        raise ValueError("need 0 < f_lo < f_hi < sample_rate/2")
    if n_channels < 2:
        raise ValueError("n_channels must be >= 2")
    sample_rate = int(sample_rate)
    if max_filter_samples is None:
        max_filter_samples = int(np.ceil(4096 * sample_rate / 48000.0))
    ts = 1.0 / sample_rate

    centers = erb_space(f_lo, f_hi, n_channels)
    bandwidths = 1.019 * erb_bandwidth(centers)
    decim = np.floor(sample_rate / (2.0 * erb_bandwidth(centers))).astype(int)
    decim = np.maximum(decim, 1)

    responses = []
    for fc, b in zip(centers, bandwidths):
        peak_idx = int(np.ceil((order - 1) / (2 * np.pi * b) / ts))
        if max_filter_samples <= peak_idx:
            raise ValueError(
                f"filter cap {max_filter_samples} shorter than envelope peak "
                f"({peak_idx} samples) for channel at {fc:.1f} Hz")
        t = np.arange(1, max_filter_samples + 1) * ts
        env = t ** (order - 1) * np.exp(-2 * np.pi * b * t)
        above = np.nonzero(env >= envelope_floor * env.max())[0]
        L = int(above[-1]) + 1
        tt = np.arange(L) * ts
        env = tt ** (order - 1) * np.exp(-2 * np.pi * b * tt)
        # anti-causal one-sided filter g[n] = env[-n] * exp(j*2*pi*fc*n*ts),
        # n in (-L, 0]; stored chronologically.
        g = (env * np.exp(-2j * np.pi * fc * tt))[::-1]
        g = _one_sided_projection(g, sample_rate)
        n_fft = sfft.next_fast_len(8 * L)
        g = g / np.abs(sfft.fft(g, n_fft)).max()
        responses.append(np.ascontiguousarray(g))

    return ErbBank(center_frequencies=centers, bandwidths=bandwidths,
                   decimation_factors=decim, impulse_responses=responses,
                   order=order, sample_rate=sample_rate)


# ---------------------------------------------------------------------------
# STFT
# ---------------------------------------------------------------------------

def _frame_positions(n_samples, params):
    if n_samples < params.fft_size:
        raise ValueError(
            f"signal of {n_samples} samples shorter than one frame "
            f"({params.fft_size})")
    n_frames = (n_samples - params.fft_size) // params.hop + 1
    return np.arange(n_frames) * params.hop


def stft_analyze(signal, params: StftParams, sample_rate) -> TFRepresentation:
    """One-sided STFT with absolute-time phase reference.

    Coefficient of bin k at frame position p (samples):
    ``sum_i x[p+i] w[i] exp(-2j*pi*k*i/N) * exp(-2j*pi*k*p/N)``.
    Only the non-negative-frequency bins 0..N/2 are retained.
    """
    x = np.asarray(signal)
    x = x.astype(np.complex128 if np.iscomplexobj(x) else np.float64)
    pos = _frame_positions(x.size, params)
    n = params.fft_size
    frames = np.lib.stride_tricks.sliding_window_view(x, n)[::params.hop]
    frames = frames[:len(pos)] * params.window
    if np.iscomplexobj(x):
        coeff = sfft.fft(frames, axis=1)[:, :n // 2 + 1]
    else:
        coeff = sfft.rfft(frames, axis=1)
    k = np.arange(n // 2 + 1)
    coeff = coeff * np.exp(-2j * np.pi * np.outer(pos, k) / n)
    freqs = k * (sample_rate / n)
    step = params.hop / sample_rate
    return TFRepresentation(
        frontend="stft",
        channel_frequencies=freqs,
        channel_time_steps=np.full(k.size, step),
        channels=list(np.ascontiguousarray(coeff.T)),
    )


def stft_bin_filter(params: StftParams, k: int) -> np.ndarray:
    """Anti-causal band-pass filter realizing STFT bin ``k``, chronological.

    Entry ``n`` is ``f[n - N + 1]`` where ``f[m] = w[-m] exp(2j*pi*k*m/N)``;
    convolving the signal with this filter and sampling at frame positions
    reproduces ``stft_analyze`` after the baseband shift.
    """
    n = params.fft_size
    m = np.arange(-(n - 1), 1)
    return params.window[-m] * np.exp(2j * np.pi * k * m / n)


def stft_via_filtering(signal, params: StftParams, sample_rate) -> TFRepresentation:
    """STFT realized per bin as one-sided band-pass filtering plus baseband
    shift; numerically identical to :func:`stft_analyze`."""
    x = np.asarray(signal)
    x = x.astype(np.complex128 if np.iscomplexobj(x) else np.float64)
    pos = _frame_positions(x.size, params)
    n = params.fft_size
    n_conv = x.size + n - 1          # zero-pad both to signal + filter - 1
    n_fft = sfft.next_fast_len(n_conv)
    spectrum = sfft.fft(x, n_fft)
    k_bins = np.arange(n // 2 + 1)
    channels = []
    for k in k_bins:
        filt = stft_bin_filter(params, k)
        conv = sfft.ifft(spectrum * sfft.fft(filt, n_fft))
        y = conv[n - 1 + pos]        # undo the causal shift of the filter
        channels.append(y * np.exp(-2j * np.pi * k * pos / n))
    freqs = k_bins * (sample_rate / n)
    step = params.hop / sample_rate
    return TFRepresentation(
        frontend="stft",
        channel_frequencies=freqs,
        channel_time_steps=np.full(k_bins.size, step),
        channels=channels,
    )


# ---------------------------------------------------------------------------
# AFB
# ---------------------------------------------------------------------------

def afb_analyze(signal, bank: ErbBank, channel_indices=None) -> TFRepresentation:
    """Gammatone filterbank analysis with per-channel ERB decimation.

    Per channel: FFT-domain product of the zero-padded signal and filter
    (lengths >= N + L - 1, so the convolution is linear), inverse transform,
    baseband shift ``exp(-2j*pi*fc*m/fs)`` on the undecimated sample index
    ``m``, then decimation by the channel factor.

    ``channel_indices`` restricts analysis to a channel subset (the returned
    representation contains only those channels, in the given order).
    """
    x = np.asarray(signal, np.float64)
    if bank.n_channels == 0:
        raise ValueError("empty filterbank")
    if x.size <= bank.max_filter_length:
        raise ValueError(
            f"signal of {x.size} samples not longer than longest filter "
            f"({bank.max_filter_length})")
    if channel_indices is None:
        channel_indices = range(bank.n_channels)
    fs = bank.sample_rate
    n_fft = sfft.next_fast_len(x.size + bank.max_filter_length - 1)
    spectrum = sfft.fft(x, n_fft)

    channels, freqs, steps = [], [], []
    for c in channel_indices:
        g = bank.impulse_responses[c]
        m_dec = int(bank.decimation_factors[c])
        fc = bank.center_frequencies[c]
        conv = sfft.ifft(spectrum * bank.filter_spectrum(c, n_fft))
        y = conv[len(g) - 1:len(g) - 1 + x.size:m_dec]
        mm = np.arange(y.size) * m_dec
        shift = np.exp(-2j * np.pi * np.mod(fc * mm, fs) / fs)
        channels.append(y * shift)
        freqs.append(fc)
        steps.append(m_dec / fs)
    return TFRepresentation(
        frontend="afb",
        channel_frequencies=np.array(freqs),
        channel_time_steps=np.array(steps),
        channels=channels,
    )


def binaural_analyze(signal: BinauralSignal, frontend, channel_indices=None):
    """Apply one front-end to both ears; returns (left, right) on one grid."""
    if isinstance(frontend, StftParams):
        left = stft_analyze(signal.left, frontend, signal.sample_rate)
        right = stft_analyze(signal.right, frontend, signal.sample_rate)
        if channel_indices is not None:
            left = left.select(channel_indices)
            right = right.select(channel_indices)
        return left, right
    if isinstance(frontend, ErbBank):
        if frontend.sample_rate != signal.sample_rate:
            raise ValueError(
                f"bank built for {frontend.sample_rate} Hz, signal is "
                f"{signal.sample_rate} Hz")
        left = afb_analyze(signal.left, frontend, channel_indices)
        right = afb_analyze(signal.right, frontend, channel_indices)
        return left, right
    raise TypeError(f"unsupported front-end {type(frontend).__name__}")


# ---------------------------------------------------------------------------
# binary container
# ---------------------------------------------------------------------------

def save_tf(path, tf: TFRepresentation):
    """Write the documented TF container: one JSON header line followed by
    the channels' coefficients as interleaved little-endian complex64."""
    payload = b"".join(
        np.ascontiguousarray(ch, dtype="<c8").tobytes() for ch in tf.channels)
    header = {
        "format": TF_FORMAT,
        "version": TF_VERSION,
        "frontend": tf.frontend,
        "channels": [
            {"frequency_hz": float(f), "time_step_s": float(s), "n_frames": len(ch)}
            for f, s, ch in zip(tf.channel_frequencies, tf.channel_time_steps,
                                tf.channels)
        ],
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(payload)


def load_tf(path) -> TFRepresentation:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: malformed TF container header: {exc}") from exc
    if header.get("format") != TF_FORMAT:
        raise ValueError(f"{path}: not a {TF_FORMAT} container")
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header.get("payload_sha256"):
        raise ValueError(f"{path}: payload checksum mismatch (corrupt container)")
    chans, freqs, steps, offset = [], [], [], 0
    for entry in header["channels"]:
        n = int(entry["n_frames"])
        raw = payload[offset:offset + 8 * n]
        if len(raw) != 8 * n:
            raise ValueError(f"{path}: truncated payload")
        chans.append(np.frombuffer(raw, dtype="<c8").astype(np.complex128))
        freqs.append(entry["frequency_hz"])
        steps.append(entry["time_step_s"])
        offset += 8 * n
    return TFRepresentation(
        frontend=header["frontend"],
        channel_frequencies=np.array(freqs),
        channel_time_steps=np.array(steps),
        channels=chans,
    )
