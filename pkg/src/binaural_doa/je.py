"""Joint-estimation baseline: per-bin ITD/ILD cues matched against an
HRTF-derived reference table, evaluated on the DPD-selected bins.

Cue conventions: ITD is positive when the right ear lags the left (source on
the left); it is derived from the interaural cross spectrum phase. ILD is
``20 log10(|h_l| / |h_r|)`` in dB. Matching compares the interaural phase on
the wrapped circle so large reference ITDs stay comparable with single-bin
phase measurements, and applies a duplex-style frequency split: the ITD term
counts below ``itd_max_freq``, the ILD term above ``ild_min_freq``, both in
between.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal import BinauralSignal
from .timefreq import binaural_analyze, StftParams
from .hrtf import HrtfSet, lateral_from_azel
from .localization import (Pipeline, SmoothingParams, spatial_spectrum,
                           dpd_select, DoaHistogram, LocalizationResult,
                           _resolve_stft_pipeline)

__all__ = ["CueTable", "build_cue_table", "marginalize_to_lateral",
           "extract_cues", "match_cues", "je_localize"]

ITD_SCALE = 1e-4      # 0.1 ms
ILD_SCALE = 3.0       # dB
ITD_MAX_FREQ = 1500.0
ILD_MIN_FREQ = 3000.0
ITD_SANITY = 1.5e-3   # head-sized arrays stay well below 1.5 ms


@dataclass
class CueTable:
    """Reference ITD/ILD per (angle row, frequency column).

    ``angles`` is (A, 2) [az, el] for a 2D table or (A,) lateral degrees for
    a marginalized table; ``itd`` in seconds, ``ild`` in dB, both (A, F).
    """

    angles: np.ndarray
    frequencies: np.ndarray
    itd: np.ndarray
    ild: np.ndarray
    mode: str               # "2d" or "lateral"

    def __post_init__(self):
        if not (np.all(np.isfinite(self.itd)) and np.all(np.isfinite(self.ild))):
            raise ValueError("cue table entries must be finite")
        if np.max(np.abs(self.itd)) > ITD_SANITY:
            raise ValueError("reference ITD beyond head-sized range")

    def laterals(self) -> np.ndarray:
        if self.mode == "lateral":
            return np.asarray(self.angles, np.float64)
        return lateral_from_azel(self.angles[:, 0], self.angles[:, 1])


def build_cue_table(hset: HrtfSet, frequencies, directions=None) -> CueTable:
    """Reference cues from the HRTF set at the given analysis frequencies.

    ITD comes from the interaural cross-spectrum phase unwrapped along
    frequency; ILD is the level ratio in dB. ``directions`` defaults to the
    set's own grid (rows index it).
    """
    freqs = np.atleast_1d(np.asarray(frequencies, np.float64))
    if np.any(freqs <= 0):
        raise ValueError("cue frequencies must be positive")
    if directions is None:
        idx = np.arange(hset.n_directions)
        directions = hset.directions
    else:
        directions = np.asarray(directions, np.float64)
        from .hrtf import azel_to_unit
        idx = hset.nearest_index(azel_to_unit(directions[:, 0],
                                              directions[:, 1]))
    resp = hset.response_at(freqs)[idx]          # (A, 2, F)
    h_l, h_r = resp[:, 0, :], resp[:, 1, :]
    mag_l, mag_r = np.abs(h_l), np.abs(h_r)
    if np.any(mag_l == 0) or np.any(mag_r == 0):
        raise ValueError("zero-magnitude HRTF bin in cue table")
    cross = h_l * np.conj(h_r)
    phase = np.unwrap(np.angle(cross), axis=1)
    itd = phase / (2 * np.pi * freqs)
    ild = 20.0 * np.log10(mag_l / mag_r)
    return CueTable(angles=directions, frequencies=freqs, itd=itd, ild=ild,
                    mode="2d")


def marginalize_to_lateral(table: CueTable, lateral_grid) -> CueTable:
    """Collapse a 2D cue table onto lateral cones by the per-cone median."""
    lateral_grid = np.asarray(lateral_grid, np.float64)
    lats = table.laterals()
    nearest = np.argmin(np.abs(lats[:, None] - lateral_grid[None, :]), axis=1)
    n_f = table.frequencies.size
    itd = np.zeros((lateral_grid.size, n_f))
    ild = np.zeros((lateral_grid.size, n_f))
    for i in range(lateral_grid.size):
        rows = np.nonzero(nearest == i)[0]
        if rows.size == 0:
            # borrow the closest populated cone
            alt = np.argmin(np.abs(lats - lateral_grid[i]))
            rows = np.array([alt])
        itd[i] = np.median(table.itd[rows], axis=0)
        ild[i] = np.median(table.ild[rows], axis=0)
    return CueTable(angles=lateral_grid, frequencies=table.frequencies,
                    itd=itd, ild=ild, mode="lateral")


def extract_cues(pair, channel, frame, j_time, frequency):
    """Measured (ITD, ILD) at one TF bin, averaged over the trailing time
    window: the interaural cross product and the per-ear powers are averaged
    before the cues are formed."""
    left, right = pair
    lo = frame - j_time + 1
    if lo < 0:
        raise ValueError("bin has no full trailing window")
    pl = left.channels[channel][lo:frame + 1]
    pr = right.channels[channel][lo:frame + 1]
    cross = np.mean(pl * np.conj(pr))
    pow_l = np.mean(np.abs(pl) ** 2)
    pow_r = np.mean(np.abs(pr) ** 2)
    if pow_l == 0 or pow_r == 0:
        raise ValueError("zero-power bin")
    itd = np.angle(cross) / (2 * np.pi * frequency)
    ild = 10.0 * np.log10(pow_l / pow_r)
    return float(itd), float(ild)


def _wrap_pi(x):
    return (x + np.pi) % (2 * np.pi) - np.pi


def match_cues(itd, ild, table: CueTable, freq_index) -> int:
    """Row of the table minimizing the weighted cue distance at one
    frequency column. The ITD mismatch is evaluated as a wrapped interaural
    phase difference so reference ITDs beyond the ambiguity limit still
    match correctly."""
    f = table.frequencies[freq_index]
    w_itd = 1.0 if f <= ILD_MIN_FREQ else 0.0
    w_ild = 1.0 if f >= ITD_MAX_FREQ else 0.0
    if w_itd == 0.0 and w_ild == 0.0:
        w_itd = w_ild = 1.0
    dphase = _wrap_pi(2 * np.pi * f * (itd - table.itd[:, freq_index]))
    d_itd = dphase / (2 * np.pi * f)
    d_ild = ild - table.ild[:, freq_index]
    dist = w_itd * (d_itd / ITD_SCALE) ** 2 + w_ild * (d_ild / ILD_SCALE) ** 2
    return int(np.argmin(dist))


def je_estimate(pair, field, passed, table: CueTable, smoothing):
    """Shared-run JE estimation: cue extraction and table matching on the
    given pass set, aggregated by the arithmetic mean of lateral angles."""
    if passed.size == 0:
        hist = DoaHistogram(bins=np.empty((0, 2), int), ratios=np.empty(0),
                            laterals=np.empty(0), mean_lateral=None)
        return LocalizationResult(lateral=None, histogram=hist, n_pass=0,
                                  no_estimate=True)
    ratios = field.ratios()
    laterals = np.empty(passed.size)
    az = np.empty(passed.size) if table.mode == "2d" else None
    el = np.empty(passed.size) if table.mode == "2d" else None
    table_lats = table.laterals()
    for j, bi in enumerate(passed):
        c = int(field.bins[bi, 0])
        frame = int(field.bins[bi, 1])
        freq = field.channel_frequencies[c]
        j_time = smoothing.j_time(field.channel_time_steps[c])
        itd, ild = extract_cues(pair, c, frame, j_time, freq)
        fi = int(np.argmin(np.abs(table.frequencies - freq)))
        row = match_cues(itd, ild, table, fi)
        laterals[j] = table_lats[row]
        if table.mode == "2d":
            az[j] = table.angles[row, 0]
            el[j] = table.angles[row, 1]
    hist = DoaHistogram(bins=field.bins[passed], ratios=ratios[passed],
                        laterals=laterals, azimuths=az, elevations=el)
    return LocalizationResult(lateral=hist.mean_lateral, histogram=hist,
                              n_pass=passed.size, no_estimate=False)


def je_localize(signal: BinauralSignal, pipe: Pipeline, pass_set=None,
                table: CueTable = None) -> LocalizationResult:
    """JE lateral estimation on DPD-selected bins.

    ``pass_set`` may be shared from a DPD run over the identical front-end
    configuration; otherwise the DPD smoothing and selection are recomputed
    here. Cues are extracted from the raw (unfocused) representation.
    """
    if isinstance(pipe.frontend, StftParams):
        _resolve_stft_pipeline(pipe, signal.sample_rate)
    pair = binaural_analyze(signal, pipe.frontend,
                            channel_indices=pipe.channel_indices)
    band_free = SmoothingParams(time_window=pipe.smoothing.time_window,
                                freq_bins=pipe.smoothing.freq_bins, band=None)
    field = spatial_spectrum(pair, band_free, focusing=pipe.focusing)
    if pass_set is None:
        pass_set = dpd_select(field, pipe.dpd_mode, pipe.dpd_value)
    if table is None:
        table = build_cue_table(pipe.hset, pipe.frequencies)
        if pipe.search == "1d":
            table = marginalize_to_lateral(table, pipe.lateral_grid)
    return je_estimate(pair, field, pass_set, table, pipe.smoothing)
