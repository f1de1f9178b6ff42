"""Direct-path dominance localization pipeline: focusing, time-frequency
smoothing, DPD bin selection, subspace (MUSIC) search and aggregation.

The smoothed spatial spectrum at each output bin averages outer products
over a trailing time window (64 ms by default) and over the trailing
adjacent frequency channels, after aligning each contributing channel onto
the output channel with its focusing matrix. MUSIC then evaluates per-bin
noise-subspace orthogonality against steering vectors at the bin's own
channel frequency; the steering model for a smoothed bin is the principal
vector of the focused window's steering family, which keeps the model
consistent with what the window average actually contains.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .signal import BinauralSignal
from .timefreq import TFRepresentation, StftParams, ErbBank, binaural_analyze
from .hrtf import (HrtfSet, LateralSteeringField, FocusingOperator, Direction,
                   azel_to_unit, lateral_from_azel, focusing_bank,
                   canonical_phase)

__all__ = [
    "SmoothingParams", "SpatialSpectrumField", "DoaHistogram",
    "LocalizationResult", "Pipeline", "eig2_herm", "apply_focusing",
    "spatial_spectrum", "dpd_select", "music_2d", "music_1d", "localize",
    "window_steering_2d", "window_steering_lateral",
]


# ---------------------------------------------------------------------------
# parameters and result containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmoothingParams:
    """Trailing-window averaging parameters.

    ``time_window`` (seconds) resolves per channel to
    ``J_t = ceil(time_window / channel_time_step)``; ``freq_bins`` is the
    total number of adjacent channels averaged (the bin's own channel plus
    trailing lower neighbors). Channels outside ``band`` are dropped before
    smoothing.
    """

    time_window: float = 0.064
    freq_bins: int = 2
    band: tuple = (1000.0, 6000.0)

    def __post_init__(self):
        if self.time_window <= 0:
            raise ValueError("time_window must be positive")
        if self.freq_bins < 1:
            raise ValueError("freq_bins must be >= 1")
        if self.band is not None and self.band[0] >= self.band[1]:
            raise ValueError("band limits must be increasing")

    def j_time(self, step_seconds) -> int:
        return max(1, int(np.ceil(self.time_window / float(step_seconds))))


@dataclass
class SpatialSpectrumField:
    """Smoothed 2x2 spatial spectra with their singular structure.

    ``bins`` is (n, 2) int: column 0 indexes ``channel_frequencies``, column
    1 is the frame index on that channel's grid (trailing-window anchor).
    """

    channel_frequencies: np.ndarray
    channel_time_steps: np.ndarray
    bins: np.ndarray
    matrices: np.ndarray          # (n, 2, 2)
    sigma_s: np.ndarray           # (n,)
    sigma_n: np.ndarray           # (n,)
    q_s: np.ndarray               # (n, 2)
    q_n: np.ndarray               # (n, 2)

    @property
    def n_bins(self) -> int:
        return self.bins.shape[0]

    def ratios(self) -> np.ndarray:
        """DPD ratio per bin; 0 where the spectrum is all-zero, inf where
        the noise singular value underflows."""
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(self.sigma_s > 0,
                         self.sigma_s / self.sigma_n, 0.0)
        return np.where(np.isnan(r), 0.0, r)


@dataclass
class DoaHistogram:
    """Per-passed-bin estimates plus their arithmetic mean."""

    bins: np.ndarray              # (n, 2) int
    ratios: np.ndarray            # (n,)
    laterals: np.ndarray          # (n,) degrees
    azimuths: np.ndarray = None   # (n,) set in 2D mode
    elevations: np.ndarray = None
    mean_lateral: float = None

    def __post_init__(self):
        if self.mean_lateral is None and self.laterals.size:
            self.mean_lateral = float(self.laterals.mean())


@dataclass
class LocalizationResult:
    lateral: float                # None when no bin passed
    histogram: DoaHistogram
    n_pass: int
    no_estimate: bool
    diagnostics: dict = field(default_factory=dict)

    def report(self) -> dict:
        """JSON-ready localization report."""
        hist = self.histogram
        table = []
        if hist is not None:
            for i in range(hist.bins.shape[0]):
                row = {
                    "channel": int(hist.bins[i, 0]),
                    "frame": int(hist.bins[i, 1]),
                    "ratio": float(hist.ratios[i]),
                    "lateral_deg": float(hist.laterals[i]),
                }
                if hist.azimuths is not None:
                    row["azimuth_deg"] = float(hist.azimuths[i])
                    row["elevation_deg"] = float(hist.elevations[i])
                table.append(row)
        return {
            "estimate_lateral_deg":
                None if self.no_estimate else float(self.lateral),
            "no_estimate": bool(self.no_estimate),
            "n_pass": int(self.n_pass),
            "bins": table,
            "timings_ms": self.diagnostics.get("timings_ms", {}),
            "stages": self.diagnostics.get("stages", {}),
        }


# ---------------------------------------------------------------------------
# small Hermitian eigen kernel
# ---------------------------------------------------------------------------

def eig2_herm(matrices):
    """Closed-form eigendecomposition of Hermitian PSD 2x2 matrices.

    Returns ``(sigma_s, sigma_n, q_s, q_n)`` with ``sigma_s >= sigma_n``,
    ``q_s`` the principal unit eigenvector and ``q_n`` its orthogonal
    complement. Vectorized over leading axes; equivalent to the SVD for
    Hermitian PSD input.
    """
    m = np.asarray(matrices)
    a = m[..., 0, 0].real
    d = m[..., 1, 1].real
    c = m[..., 0, 1]
    mid = 0.5 * (a + d)
    half = 0.5 * (a - d)
    rad = np.sqrt(half * half + np.abs(c) ** 2)
    s1 = mid + rad
    s2 = np.maximum(mid - rad, 0.0)
    v0 = c
    v1 = rad - half
    norm = np.sqrt(np.abs(v0) ** 2 + v1 * v1)
    degenerate = norm <= 1e-15 * np.maximum(s1, 1e-300) + 1e-300
    safe = np.where(degenerate, 1.0, norm)
    q_s = np.stack([np.where(degenerate, 1.0 + 0j, v0 / safe),
                    np.where(degenerate, 0.0 + 0j, v1 / safe)], axis=-1)
    q_n = np.stack([-np.conj(q_s[..., 1]), np.conj(q_s[..., 0])], axis=-1)
    return s1, s2, q_s, q_n


# ---------------------------------------------------------------------------
# focusing application and smoothing
# ---------------------------------------------------------------------------

def apply_focusing(pair, op: FocusingOperator):
    """Multiply every bin by its focusing matrix: ``p~(t,w) = T(w,w0) p(t,w)``.

    Every channel frequency of the pair must lie in the operator's band.
    """
    left, right = pair
    new_l, new_r = [], []
    for c in range(left.n_channels):
        t = op.matrix_for(left.channel_frequencies[c])
        p = np.stack([left.channels[c], right.channels[c]])
        f = t @ p
        new_l.append(f[0])
        new_r.append(f[1])
    mk = lambda tf, chans: TFRepresentation(
        frontend=tf.frontend,
        channel_frequencies=tf.channel_frequencies.copy(),
        channel_time_steps=tf.channel_time_steps.copy(),
        channels=chans)
    return mk(left, new_l), mk(right, new_r)


def _band_indices(tf: TFRepresentation, band):
    if band is None:
        return np.arange(tf.n_channels)
    lo, hi = band
    keep = np.nonzero((tf.channel_frequencies >= lo)
                      & (tf.channel_frequencies <= hi))[0]
    return keep


def _windowed_outer_sums(left, right, j_time):
    """Trailing-window sums of per-frame outer products for one channel.

    Returns (sums, first_frame) where ``sums[i]`` covers frames
    ``first_frame + i - j_time + 1 .. first_frame + i``.
    """
    p = np.stack([left, right])                      # (2, n)
    outer = np.einsum("in,jn->nij", p, p.conj())     # (n, 2, 2)
    if outer.shape[0] < j_time:
        raise ValueError("time window larger than available frames")
    csum = np.cumsum(outer, axis=0)
    sums = csum[j_time - 1:].copy()
    sums[1:] -= csum[:-j_time]
    return sums, j_time - 1


def spatial_spectrum(pair, params: SmoothingParams,
                     focusing=None) -> SpatialSpectrumField:
    """Estimate the smoothed spatial spectrum matrix at every valid bin.

    ``focusing`` is an optional per-channel operator list as built by
    :func:`binaural_doa.hrtf.focusing_bank`; when given, the window's lower
    channels are aligned onto the output channel before averaging. Without
    it the input pair is taken as already aligned (or alignment-free).
    """
    left, right = pair
    keep = _band_indices(left, params.band)
    if keep.size == 0:
        raise ValueError("no channels inside the smoothing band")
    if keep.size < params.freq_bins:
        raise ValueError("frequency window larger than available channels")
    freqs = left.channel_frequencies[keep]
    steps = left.channel_time_steps[keep]
    if focusing is not None and len(focusing) != keep.size:
        raise ValueError("focusing bank length does not match band channels")

    wins, firsts, j_times = [], [], []
    for c in keep:
        j = params.j_time(left.channel_time_steps[c])
        w, first = _windowed_outer_sums(left.channels[c], right.channels[c], j)
        wins.append(w)
        firsts.append(first)
        j_times.append(j)

    all_bins, all_mats = [], []
    jw = params.freq_bins
    for ci in range(jw - 1, keep.size):
        anchor_frames = firsts[ci] + np.arange(len(wins[ci]))
        t_anchor = anchor_frames * steps[ci]
        total = wins[ci].copy()
        count = j_times[ci]
        for back in range(1, jw):
            cj = ci - back
            t_nb = (firsts[cj] + np.arange(len(wins[cj]))) * steps[cj]
            pos = np.clip(np.searchsorted(t_nb, t_anchor), 0, len(t_nb) - 1)
            prev = np.clip(pos - 1, 0, len(t_nb) - 1)
            pick = np.where(np.abs(t_nb[pos] - t_anchor)
                            <= np.abs(t_nb[prev] - t_anchor), pos, prev)
            contrib = wins[cj][pick]
            if focusing is not None:
                t_mat = focusing[ci].matrix_for(freqs[cj])
                contrib = np.einsum("ij,njk,lk->nil", t_mat, contrib,
                                    t_mat.conj())
            total = total + contrib
            count += j_times[cj]
        total /= count
        all_mats.append(total)
        all_bins.append(np.column_stack(
            [np.full(anchor_frames.size, ci), anchor_frames]))

    mats = np.concatenate(all_mats, axis=0)
    bins = np.concatenate(all_bins, axis=0)
    s1, s2, q_s, q_n = eig2_herm(mats)
    return SpatialSpectrumField(
        channel_frequencies=freqs,
        channel_time_steps=steps,
        bins=bins,
        matrices=mats,
        sigma_s=s1,
        sigma_n=s2,
        q_s=q_s,
        q_n=q_n,
    )


# ---------------------------------------------------------------------------
# DPD selection
# ---------------------------------------------------------------------------

def dpd_select(field: SpatialSpectrumField, mode, value) -> np.ndarray:
    """Select direct-path-dominated bins.

    ``mode="threshold"``: every bin with ratio >= value passes.
    ``mode="top_fraction"``: the threshold adapts so ~value of the nonzero
    bins pass (ties broken by larger signal singular value, then bin order).
    Returns indices into ``field.bins`` sorted by bin coordinate.
    """
    if field.n_bins == 0:
        raise ValueError("empty spatial spectrum field")
    ratios = field.ratios()
    alive = field.sigma_s > 0
    if mode == "threshold":
        sel = np.nonzero(alive & (ratios >= value))[0]
    elif mode == "top_fraction":
        if not 0.0 < value <= 1.0:
            raise ValueError("top fraction must be in (0, 1]")
        candidates = np.nonzero(alive)[0]
        k = int(round(value * candidates.size))
        if k == 0:
            sel = np.empty(0, dtype=int)
        else:
            order = np.lexsort((field.bins[:, 1], field.bins[:, 0],
                                -field.sigma_s, -ratios))
            order = order[alive[order]]
            sel = order[:k]
    else:
        raise ValueError(f"unknown DPD mode {mode!r}")
    keys = np.lexsort((field.bins[sel, 1], field.bins[sel, 0]))
    return sel[keys]


# ---------------------------------------------------------------------------
# MUSIC searches
# ---------------------------------------------------------------------------

def _music_argmin(q_n, steering_unit) -> int:
    """Index minimizing the projection onto the noise subspace, i.e. the
    MUSIC spectrum argmax; first index wins ties."""
    proj = np.abs(np.conj(q_n) @ steering_unit) ** 2
    return int(np.argmin(proj))


def _unit_columns(mat):
    norms = np.linalg.norm(mat, axis=0)
    if np.any(norms == 0):
        raise ValueError("zero steering vector in grid")
    return mat / norms


def music_2d(q_n, hset: HrtfSet, frequency) -> Direction:
    """Grid argmax of the 2D MUSIC spectrum ``1 / |q_n^H h(psi)|^2`` with
    unit-normalized steering vectors."""
    q = np.asarray(q_n, np.complex128)
    if not np.isfinite(q).all() or np.linalg.norm(q) == 0:
        raise ValueError("degenerate noise-subspace vector")
    steer = _unit_columns(hset.steering(frequency))
    idx = _music_argmin(q, steer)
    az, el = hset.directions[idx]
    return Direction(azimuth=float(az % 360.0), elevation=float(el))


def music_1d(q_n, field: LateralSteeringField, frequency) -> float:
    """Grid argmax of the lateral MUSIC spectrum against the rank-1 lateral
    steering vectors; returns the lateral angle in degrees."""
    q = np.asarray(q_n, np.complex128)
    if not np.isfinite(q).all() or np.linalg.norm(q) == 0:
        raise ValueError("degenerate noise-subspace vector")
    steer = field.u1_at(frequency)       # (2, L), already unit norm
    idx = _music_argmin(q, steer)
    return float(field.lateral_grid[idx])


# ---------------------------------------------------------------------------
# window-consistent steering fields for the pipeline
# ---------------------------------------------------------------------------

def _principal_from_gram(gram):
    """Principal unit eigenvectors of (..., 2, 2) Hermitian Grams."""
    _, _, q_s, _ = eig2_herm(gram)
    return canonical_phase(q_s)


def window_steering_2d(hset: HrtfSet, frequencies, ops):
    """Per-channel steering matrices consistent with window smoothing.

    For channel ``c`` the steering vector of direction ``psi`` is the
    principal vector of ``{T_c(w) h(psi, w) : w in window(c)}``. Returns a
    list of (2, D) unit-column matrices (None where the window is
    incomplete).
    """
    freqs = np.asarray(frequencies, np.float64)
    resp = hset.response_at(freqs)              # (D, 2, F)
    out = []
    for c, op in enumerate(ops):
        if op is None:
            out.append(None)
            continue
        gram = np.zeros((hset.n_directions, 2, 2), np.complex128)
        for w in op.frequencies:
            fi = int(np.argmin(np.abs(freqs - w)))
            h = resp[:, :, fi]                  # (D, 2)
            ht = h @ op.matrix_for(w).T         # rows: (T h)^T
            gram += ht[:, :, None] * ht.conj()[:, None, :]
        u = _principal_from_gram(gram)          # (D, 2)
        out.append(np.ascontiguousarray(u.T))
    return out


def window_steering_lateral(hset: HrtfSet, lateral_grid, n_intraconic,
                            frequencies, ops):
    """Lateral analogue of :func:`window_steering_2d`: per channel, the
    principal vector over the cone's intraconic directions and the focused
    window frequencies jointly. Returns a list of (2, L) matrices."""
    freqs = np.asarray(frequencies, np.float64)
    lateral_grid = np.asarray(lateral_grid, np.float64)
    resp = hset.response_at(freqs)              # (D, 2, F)
    ic = np.arange(n_intraconic) * (360.0 / n_intraconic)
    cone_idx = []
    for lat in lateral_grid:
        vecs = _interaural_unit(lat, ic)
        idx = np.unique(hset.nearest_index(vecs))
        if idx.size < 1:
            raise ValueError(f"no HRTF directions for cone {lat:.1f} deg")
        cone_idx.append(idx)
    out = []
    for c, op in enumerate(ops):
        if op is None:
            out.append(None)
            continue
        u = np.empty((lateral_grid.size, 2), np.complex128)
        for li, idx in enumerate(cone_idx):
            gram = np.zeros((2, 2), np.complex128)
            for w in op.frequencies:
                fi = int(np.argmin(np.abs(freqs - w)))
                h = resp[idx, :, fi].T          # (2, N)
                ht = op.matrix_for(w) @ h
                gram += ht @ ht.conj().T
            u[li] = _principal_from_gram(gram)
        out.append(np.ascontiguousarray(u.T))
    return out


def _interaural_unit(lateral_deg, intraconic_deg):
    lat = np.radians(np.asarray(lateral_deg, np.float64))
    ic = np.radians(np.asarray(intraconic_deg, np.float64))
    rho = np.sin(lat)
    return np.stack(np.broadcast_arrays(rho * np.cos(ic),
                                        np.cos(lat) * np.ones_like(ic),
                                        rho * np.sin(ic)), axis=-1)


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

class Pipeline:
    """Precomputed localization pipeline bound to one HRTF set.

    Construction materializes everything Algorithm-style localization needs
    up front (filterbank or window, focusing bank, steering fields); calls
    to :meth:`localize` then run front-end, focusing+smoothing, DPD and the
    angle search on a signal.
    """

    def __init__(self, hset: HrtfSet, frontend, smoothing: SmoothingParams,
                 dpd_mode="top_fraction", dpd_value=0.05, search="1d",
                 lateral_step=2.0, n_intraconic=36, lateral_grid=None):
        if search not in ("1d", "2d"):
            raise ValueError("search must be '1d' or '2d'")
        if search == "2d" and hset.n_directions < 4:
            raise ValueError("2D search needs >= 4 HRTF directions")
        self.hset = hset
        self.frontend = frontend
        self.smoothing = smoothing
        self.dpd_mode = dpd_mode
        self.dpd_value = dpd_value
        self.search = search
        if lateral_grid is None:
            n_lat = int(round(180.0 / lateral_step)) + 1
            lateral_grid = np.linspace(0.0, 180.0, n_lat)
        self.lateral_grid = np.asarray(lateral_grid, np.float64)
        self.n_intraconic = n_intraconic

        freqs_all = self._frontend_frequencies()
        if freqs_all is None:
            # STFT bin frequencies depend on the signal sample rate; the
            # steering artifacts are bound on first use (or by prepare()).
            self.channel_indices = None
            self.frequencies = None
            self.focusing = None
            self.steering = None
            self.grid_laterals = hset.laterals() if search == "2d" else None
            return
        keep = np.nonzero((freqs_all >= smoothing.band[0])
                          & (freqs_all <= smoothing.band[1]))[0]
        if keep.size < smoothing.freq_bins:
            raise ValueError("smoothing band holds fewer channels than the "
                             "frequency window")
        self.channel_indices = keep
        self.frequencies = freqs_all[keep]
        self.focusing = focusing_bank(hset, self.frequencies,
                                      window=smoothing.freq_bins)
        if search == "2d":
            self.steering = window_steering_2d(hset, self.frequencies,
                                               self.focusing)
            self.grid_laterals = hset.laterals()
        else:
            self.steering = window_steering_lateral(
                hset, self.lateral_grid, n_intraconic, self.frequencies,
                self.focusing)

    def prepare(self, sample_rate):
        """Bind rate-dependent artifacts ahead of time (no-op for the AFB)."""
        if isinstance(self.frontend, StftParams):
            _resolve_stft_pipeline(self, sample_rate)

    def _frontend_frequencies(self):
        if isinstance(self.frontend, StftParams):
            n = self.frontend.fft_size
            # sample rate bound at analyze time; store bin index * df later
            return None
        return self.frontend.center_frequencies

    @property
    def music_grid_size(self) -> int:
        return (self.hset.n_directions if self.search == "2d"
                else self.lateral_grid.size)

    def localize(self, signal: BinauralSignal) -> LocalizationResult:
        return localize_with(self, signal)


def _resolve_stft_pipeline(pipe: Pipeline, sample_rate):
    """STFT channel frequencies depend on the signal rate; bind lazily."""
    n = pipe.frontend.fft_size
    freqs_all = np.arange(n // 2 + 1) * (sample_rate / n)
    keep = np.nonzero((freqs_all >= pipe.smoothing.band[0])
                      & (freqs_all <= pipe.smoothing.band[1]))[0]
    if (pipe.frequencies is not None
            and pipe.frequencies.size == keep.size
            and np.allclose(freqs_all[keep], pipe.frequencies)):
        return
    pipe.channel_indices = keep
    pipe.frequencies = freqs_all[keep]
    pipe.focusing = focusing_bank(pipe.hset, pipe.frequencies,
                                  window=pipe.smoothing.freq_bins)
    if pipe.search == "2d":
        pipe.steering = window_steering_2d(pipe.hset, pipe.frequencies,
                                           pipe.focusing)
        pipe.grid_laterals = pipe.hset.laterals()
    else:
        pipe.steering = window_steering_lateral(
            pipe.hset, pipe.lateral_grid, pipe.n_intraconic,
            pipe.frequencies, pipe.focusing)


def localize_with(pipe: Pipeline, signal: BinauralSignal,
                  return_field=False):
    """Run the full pipeline on a signal; deterministic given the inputs."""
    timings = {}
    t_start = time.perf_counter()

    if isinstance(pipe.frontend, StftParams):
        _resolve_stft_pipeline(pipe, signal.sample_rate)

    t0 = time.perf_counter()
    pair = binaural_analyze(signal, pipe.frontend,
                            channel_indices=pipe.channel_indices)
    timings["frontend_ms"] = 1e3 * (time.perf_counter() - t0)

    t0 = time.perf_counter()
    band_free = SmoothingParams(time_window=pipe.smoothing.time_window,
                                freq_bins=pipe.smoothing.freq_bins,
                                band=None)
    field = spatial_spectrum(pair, band_free, focusing=pipe.focusing)
    timings["smoothing_ms"] = 1e3 * (time.perf_counter() - t0)

    t0 = time.perf_counter()
    passed = dpd_select(field, pipe.dpd_mode, pipe.dpd_value)
    timings["dpd_ms"] = 1e3 * (time.perf_counter() - t0)

    t0 = time.perf_counter()
    ratios = field.ratios()
    n_pass = passed.size
    if n_pass == 0:
        timings["search_ms"] = 0.0
        timings["total_ms"] = 1e3 * (time.perf_counter() - t_start)
        hist = DoaHistogram(bins=np.empty((0, 2), int),
                            ratios=np.empty(0), laterals=np.empty(0),
                            mean_lateral=None)
        result = LocalizationResult(
            lateral=None, histogram=hist, n_pass=0, no_estimate=True,
            diagnostics={"timings_ms": timings})
        return (result, field) if return_field else result

    laterals = np.empty(n_pass)
    az = np.empty(n_pass) if pipe.search == "2d" else None
    el = np.empty(n_pass) if pipe.search == "2d" else None
    for j, bi in enumerate(passed):
        c = int(field.bins[bi, 0])
        steer = pipe.steering[c]
        idx = _music_argmin(field.q_n[bi], steer)
        if pipe.search == "2d":
            laterals[j] = pipe.grid_laterals[idx]
            az[j] = pipe.hset.directions[idx, 0]
            el[j] = pipe.hset.directions[idx, 1]
        else:
            laterals[j] = pipe.lateral_grid[idx]
    timings["search_ms"] = 1e3 * (time.perf_counter() - t0)

    hist = DoaHistogram(bins=field.bins[passed], ratios=ratios[passed],
                        laterals=laterals, azimuths=az, elevations=el)
    timings["total_ms"] = 1e3 * (time.perf_counter() - t_start)
    result = LocalizationResult(
        lateral=hist.mean_lateral, histogram=hist, n_pass=n_pass,
        no_estimate=False,
        diagnostics={
            "timings_ms": timings,
            "stages": {
                "n_bins_analyzed": int(field.n_bins),
                "focusing_residual_max": float(max(
                    (op.residuals.max() for op in pipe.focusing
                     if op is not None), default=0.0)),
            },
        })
    return (result, field) if return_field else result


def localize(signal: BinauralSignal, hset: HrtfSet, frontend,
             smoothing=None, dpd_mode="top_fraction", dpd_value=0.05,
             search="1d", lateral_step=2.0) -> LocalizationResult:
    """One-shot convenience wrapper building a :class:`Pipeline` and running
    it on a single signal."""
    pipe = Pipeline(hset, frontend, smoothing or SmoothingParams(),
                    dpd_mode=dpd_mode, dpd_value=dpd_value, search=search,
                    lateral_step=lateral_step)
    return pipe.localize(signal)
