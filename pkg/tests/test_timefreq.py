import numpy as np
import pytest
import scipy.fft as sfft
from scipy.signal import chirp

from binaural_doa.signal import BinauralSignal
from binaural_doa.timefreq import (StftParams, erb_bandwidth, erb_rate,
                                   erb_rate_inverse, make_erb_bank,
                                   stft_analyze, stft_via_filtering,
                                   stft_bin_filter, afb_analyze,
                                   binaural_analyze)

FS = 48000


# ---------------------------------------------------------------------------
# ERB scale and bank construction
# ---------------------------------------------------------------------------

def test_erb_bandwidth_at_1khz():
    # hand evaluation: 24.7 * (4.37 * 1 + 1) = 24.7 * 5.37
    assert erb_bandwidth(1000.0) == pytest.approx(132.639, abs=1e-3)


def test_erb_rate_roundtrip():
    f = np.array([60.0, 500.0, 1000.0, 6000.0])
    assert np.allclose(erb_rate_inverse(erb_rate(f)), f, rtol=1e-12)


def test_decimation_factor_oracle_1khz():
    bank = make_erb_bank(1000.0, 2000.0, 2, FS)
    # brute-force Eq. arithmetic: floor((1 / (2 * ERB)) * fs)
    erb = 24.7 * (4.37 * 1000.0 / 1000.0 + 1.0)
    expected = int(np.floor((1.0 / (2.0 * erb)) * FS))
    assert expected == 180
    assert bank.decimation_factors[0] == expected


def test_default_bank_shape(erb_bank):
    assert erb_bank.n_channels == 42
    assert erb_bank.center_frequencies[0] == pytest.approx(60.0, rel=1e-9)
    assert erb_bank.center_frequencies[-1] == pytest.approx(6000.0, rel=1e-9)
    assert np.all(np.diff(erb_bank.center_frequencies) > 0)


def test_bank_rejects_bad_ranges():
    with pytest.raises(ValueError):
        make_erb_bank(6000.0, 60.0, 42, FS)
    with pytest.raises(ValueError):
        make_erb_bank(60.0, 30000.0, 42, FS)
    with pytest.raises(ValueError):
        make_erb_bank(60.0, 6000.0, 1, FS)


def test_bank_cap_shorter_than_envelope_peak_errors():
    with pytest.raises(ValueError, match="cap"):
        make_erb_bank(60.0, 6000.0, 42, FS, max_filter_samples=64)


def test_all_decimation_factors_match_oracle(erb_bank):
    for fc, m in zip(erb_bank.center_frequencies,
                     erb_bank.decimation_factors):
        erb = 24.7 * (4.37 * fc / 1000.0 + 1.0)
        assert m == int(np.floor(FS / (2.0 * erb)))


# ---------------------------------------------------------------------------
# STFT
# ---------------------------------------------------------------------------

def test_stft_zero_input(stft_params):
    tf = stft_analyze(np.zeros(4000), stft_params, FS)
    assert all(np.all(ch == 0) for ch in tf.channels)


def test_stft_exact_bin_rect_window():
    params = StftParams.create(fft_size=256, hop=128, window="rect")
    k0 = 10
    n = np.arange(1024)
    x = np.exp(2j * np.pi * k0 * n / 256)
    tf = stft_analyze(x, params, FS)
    mags = np.abs(np.stack(tf.channels))
    assert np.allclose(mags[k0], 256.0, rtol=1e-9)
    others = np.delete(mags, k0, axis=0)
    assert others.max() < 1e-8 * 256.0


def test_stft_windowed_parseval(stft_params):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(FS)
    tf = stft_analyze(x, stft_params, FS)
    coeffs = np.stack(tf.channels)          # (bins, frames)
    n = stft_params.fft_size
    for m in range(0, coeffs.shape[1], 17):
        p = m * stft_params.hop
        # independent oracle: direct time-domain windowed energy
        direct = np.sum((x[p:p + n] * stft_params.window) ** 2)
        spec = (np.abs(coeffs[0, m]) ** 2 + np.abs(coeffs[-1, m]) ** 2
                + 2 * np.sum(np.abs(coeffs[1:-1, m]) ** 2)) / n
        assert spec == pytest.approx(direct, rel=1e-6)


def test_stft_frame_times(stft_params):
    x = np.zeros(FS)
    tf = stft_analyze(x, stft_params, FS)
    t = tf.times(3)
    assert t[0] == 0.0
    assert np.allclose(np.diff(t), stft_params.hop / FS)


def test_stft_too_short_errors(stft_params):
    with pytest.raises(ValueError, match="shorter"):
        stft_analyze(np.zeros(100), stft_params, FS)


def test_via_filtering_matches_analyze():
    rng = np.random.default_rng(42)
    for trial in range(12):
        n_fft = int(rng.choice([64, 96, 128, 192]))
        hop = int(rng.choice([n_fft // 4, n_fft // 2, n_fft]))
        window = str(rng.choice(["hann", "hamming", "blackman", "rect"]))
        params = StftParams.create(n_fft, hop, window)
        x = rng.standard_normal(int(rng.integers(400, 900)))
        a = stft_analyze(x, params, FS)
        b = stft_via_filtering(x, params, FS)
        ca, cb = np.stack(a.channels), np.stack(b.channels)
        scale = np.abs(ca).max()
        assert np.abs(ca - cb).max() <= 1e-9 * max(scale, 1.0)


def test_bin_filter_symmetric_window_is_modulated_window():
    params = StftParams.create(fft_size=64, hop=32, window="hann")
    f = stft_bin_filter(params, k=5)
    # w(-t) = w(t) for the symmetric window, so |f| equals the window taps
    assert np.allclose(np.abs(f), params.window, atol=1e-12)
    m = np.arange(-(params.fft_size - 1), 1)
    expected = params.window[-m] * np.exp(2j * np.pi * 5 * m / 64)
    assert np.allclose(f, expected)


def test_impulse_input_matches_filter_samples():
    params = StftParams.create(fft_size=64, hop=16, window="hamming")
    n0 = 130
    x = np.zeros(400)
    x[n0] = 1.0
    tf = stft_analyze(x, params, FS)
    tf2 = stft_via_filtering(x, params, FS)
    n = params.fft_size
    for k in (0, 3, 20):
        for m in (5, 9):
            p = m * params.hop
            # direct convolution-sum oracle:
            # X[m,k] = w[n0 - p] * exp(-2j pi k n0 / N) for 0 <= n0-p < N
            off = n0 - p
            w = params.window[off] if 0 <= off < n else 0.0
            expected = w * np.exp(-2j * np.pi * k * n0 / n)
            assert tf.channels[k][m] == pytest.approx(expected, abs=1e-12)
            assert tf2.channels[k][m] == pytest.approx(expected, abs=1e-10)


# ---------------------------------------------------------------------------
# AFB
# ---------------------------------------------------------------------------

def test_afb_zero_input(erb_bank):
    tf = afb_analyze(np.zeros(FS // 2), erb_bank)
    assert all(np.all(ch == 0) for ch in tf.channels)


def test_afb_requires_long_signal(erb_bank):
    with pytest.raises(ValueError, match="longer"):
        afb_analyze(np.zeros(100), erb_bank)


@pytest.mark.parametrize("channel", [0, 10, 20, 30, 41])
def test_afb_tone_envelope_and_frequency(erb_bank, channel):
    fc = erb_bank.center_frequencies[channel]
    t = np.arange(FS) / FS
    x = np.cos(2 * np.pi * fc * t)
    tf = afb_analyze(x, erb_bank, channel_indices=[channel])
    out = tf.channels[0]
    settle = int(np.ceil(len(erb_bank.impulse_responses[channel])
                         / erb_bank.decimation_factors[channel])) + 2
    seg = out[settle:-settle]
    env = np.abs(seg)
    ripple = (env.max() - env.min()) / np.median(env)
    assert ripple < 0.05
    dphase = np.angle(seg[1:] * np.conj(seg[:-1]))
    assert np.abs(dphase).max() < 0.1


def test_afb_time_steps_non_increasing(erb_bank):
    x = np.random.default_rng(1).standard_normal(FS // 2)
    tf = afb_analyze(x, erb_bank)
    assert np.all(np.diff(tf.channel_time_steps) <= 0)
    assert np.allclose(tf.channel_time_steps,
                       erb_bank.decimation_factors / FS)


def test_afb_linearity(erb_bank):
    rng = np.random.default_rng(7)
    x = rng.standard_normal(24000)
    y = rng.standard_normal(24000)
    a, b = 1.7, -0.35
    subset = [0, 15, 41]
    tf_x = afb_analyze(x, erb_bank, subset)
    tf_y = afb_analyze(y, erb_bank, subset)
    tf_mix = afb_analyze(a * x + b * y, erb_bank, subset)
    for cx, cy, cm in zip(tf_x.channels, tf_y.channels, tf_mix.channels):
        ref = a * cx + b * cy
        assert np.abs(cm - ref).max() <= 1e-10 * max(np.abs(ref).max(), 1.0)


def test_filters_one_sided(erb_bank):
    for g in erb_bank.impulse_responses:
        n_fft = sfft.next_fast_len(8 * len(g))
        spec = sfft.fft(g, n_fft)
        freqs = sfft.fftfreq(n_fft, 1.0 / FS)
        e_neg = np.sum(np.abs(spec[freqs < 0]) ** 2)
        e_tot = np.sum(np.abs(spec) ** 2)
        assert 10 * np.log10(e_neg / e_tot) <= -40.0


@pytest.mark.parametrize("channel", [0, 10, 25, 41])
def test_decimation_aliasing_in_band_chirp(erb_bank, channel):
    # Post-filter spectrum beyond the decimated Nyquist band measures what
    # folding can corrupt; drive the channel with a chirp confined to it.
    fc = erb_bank.center_frequencies[channel]
    m = int(erb_bank.decimation_factors[channel])
    erb = erb_bandwidth(fc)
    t = np.arange(FS) / FS
    x = chirp(t, max(fc - 0.4 * erb, 5.0), 1.0, fc + 0.4 * erb)
    x *= np.hanning(x.size)          # soft gating keeps the input band-limited
    g = erb_bank.impulse_responses[channel]
    n_fft = sfft.next_fast_len(x.size + len(g) - 1)
    y = sfft.ifft(sfft.fft(x, n_fft) * sfft.fft(g, n_fft))
    y = y[len(g) - 1:len(g) - 1 + x.size]
    y_base = y * np.exp(-2j * np.pi * fc * np.arange(x.size) / FS)
    spec = sfft.fft(y_base)
    freqs = sfft.fftfreq(x.size, 1.0 / FS)
    nyq = FS / (2.0 * m)
    ratio = (np.sum(np.abs(spec[np.abs(freqs) > nyq]) ** 2)
             / np.sum(np.abs(spec) ** 2))
    assert 10 * np.log10(ratio) < -30.0


def test_afb_frame_count_bookkeeping(erb_bank):
    x = np.random.default_rng(3).standard_normal(30011)
    tf = afb_analyze(x, erb_bank)
    for ch, m in zip(tf.channels, erb_bank.decimation_factors):
        assert 0 <= len(ch) * m - x.size < m


# ---------------------------------------------------------------------------
# binaural wrapper
# ---------------------------------------------------------------------------

def test_binaural_identical_channels(erb_bank):
    x = np.random.default_rng(5).standard_normal(24000)
    sig = BinauralSignal(x, x.copy(), FS)
    left, right = binaural_analyze(sig, erb_bank, channel_indices=[5, 30])
    for cl, cr in zip(left.channels, right.channels):
        assert np.array_equal(cl, cr)


@pytest.mark.parametrize("frontend_kind", ["stft", "afb"])
def test_binaural_delayed_tone_phase(erb_bank, stft_params, frontend_kind):
    delay = 13
    f0 = 1500.0
    t = np.arange(FS) / FS
    x = np.sin(2 * np.pi * f0 * t)
    sig = BinauralSignal(x[delay:], x[:-delay], FS)   # right lags left
    if frontend_kind == "afb":
        frontend = erb_bank
        channel = int(np.argmin(np.abs(erb_bank.center_frequencies - f0)))
        freq = erb_bank.center_frequencies[channel]
    else:
        frontend = stft_params
        channel = int(round(f0 * stft_params.fft_size / FS))
        freq = channel * FS / stft_params.fft_size
    left, right = binaural_analyze(sig, frontend, channel_indices=[channel])
    lc, rc = left.channels[0], right.channels[0]
    sel = np.abs(lc) > 0.2 * np.abs(lc).max()
    phase = np.angle(lc[sel] * np.conj(rc[sel]))
    expected = 2 * np.pi * f0 * delay / FS
    wrapped = (expected + np.pi) % (2 * np.pi) - np.pi
    spread = np.abs((phase - wrapped + np.pi) % (2 * np.pi) - np.pi)
    # tolerance: the AFB channel center sits off the tone frequency
    tol = 0.02 if frontend_kind == "stft" else 2 * np.pi * abs(freq - f0) \
        * delay / FS + 0.05
    assert np.median(spread) < max(tol, 0.02)


def test_binaural_single_frame(stft_params):
    x = np.zeros(stft_params.fft_size)
    sig = BinauralSignal(x, x, FS)
    left, _ = binaural_analyze(sig, stft_params)
    assert all(len(ch) == 1 for ch in left.channels)
