"""HRTF sets, interaural coordinates, rank-1 lateral steering vectors and
focusing matrices.

Conventions: azimuth in degrees, counterclockwise from the front, in
[0, 360); elevation in [-90, 90]; the interaural axis is +y toward the left
ear. Lateral angle 0 is the left-ear axis, 90 the median plane, 180 the
right-ear axis; the intraconic angle runs in [0, 360) around the cone with 0
at the front(-ish) horizontal point and 90 above.
"""

from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import spherical_jn, spherical_yn

SPEED_OF_SOUND = 343.0

HRTF_FORMAT = "binaural-doa-hrtf"
HRTF_VERSION = 1

__all__ = [
    "SPEED_OF_SOUND", "Direction", "InterauralDirection", "HrtfSet",
    "LateralSteeringField", "FocusingOperator",
    "sph_to_interaural", "interaural_to_sph",
    "azel_to_unit", "unit_to_azel", "lateral_from_azel",
    "sphere_hrtf", "rigid_sphere_response", "load_hrtf_set", "save_hrtf_set",
    "effective_rank", "build_lateral_field", "build_focusing", "focusing_bank",
]


# ---------------------------------------------------------------------------
# coordinates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Direction:
    """Spherical direction: azimuth [0, 360), elevation [-90, 90] degrees."""

    azimuth: float
    elevation: float

    def __post_init__(self):
        if not 0.0 <= self.azimuth < 360.0:
            raise ValueError(f"azimuth {self.azimuth} outside [0, 360)")
        if not -90.0 <= self.elevation <= 90.0:
            raise ValueError(f"elevation {self.elevation} outside [-90, 90]")


@dataclass(frozen=True)
class InterauralDirection:
    """Interaural direction: lateral [0, 180], intraconic [0, 360) degrees."""

    lateral: float
    intraconic: float

    def __post_init__(self):
        if not 0.0 <= self.lateral <= 180.0:
            raise ValueError(f"lateral {self.lateral} outside [0, 180]")
        if not 0.0 <= self.intraconic < 360.0:
            raise ValueError(f"intraconic {self.intraconic} outside [0, 360)")


def azel_to_unit(azimuth_deg, elevation_deg):
    """Unit vectors for (az, el) degrees; broadcasts, appends axis of size 3."""
    az = np.radians(np.asarray(azimuth_deg, np.float64))
    el = np.radians(np.asarray(elevation_deg, np.float64))
    return np.stack([np.cos(el) * np.cos(az),
                     np.cos(el) * np.sin(az),
                     np.sin(el)], axis=-1)


def unit_to_azel(vec):
    """Inverse of :func:`azel_to_unit`; azimuth mapped to [0, 360)."""
    v = np.asarray(vec, np.float64)
    az = np.degrees(np.arctan2(v[..., 1], v[..., 0])) % 360.0
    el = np.degrees(np.arcsin(np.clip(v[..., 2], -1.0, 1.0)))
    return az, el


def lateral_from_azel(azimuth_deg, elevation_deg):
    """Lateral angle in degrees for (az, el); 0=left, 90=median, 180=right."""
    v = azel_to_unit(azimuth_deg, elevation_deg)
    return np.degrees(np.arccos(np.clip(v[..., 1], -1.0, 1.0)))


def sph_to_interaural(d: Direction) -> InterauralDirection:
    """Spherical to interaural coordinates."""
    v = azel_to_unit(d.azimuth, d.elevation)
    lateral = float(np.degrees(np.arccos(np.clip(v[1], -1.0, 1.0))))
    if lateral <= 0.0 or lateral >= 180.0:
        return InterauralDirection(lateral=lateral, intraconic=0.0)
    intraconic = float(np.degrees(np.arctan2(v[2], v[0])) % 360.0)
    return InterauralDirection(lateral=lateral, intraconic=intraconic)


def interaural_to_sph(d: InterauralDirection) -> Direction:
    """Interaural back to spherical coordinates (inverse away from poles)."""
    lat = np.radians(d.lateral)
    ic = np.radians(d.intraconic)
    rho = np.sin(lat)
    v = np.array([rho * np.cos(ic), np.cos(lat), rho * np.sin(ic)])
    az, el = unit_to_azel(v)
    return Direction(azimuth=float(az), elevation=float(el))


def _interaural_grid_to_unit(lateral_deg, intraconic_deg):
    lat = np.radians(np.asarray(lateral_deg, np.float64))
    ic = np.radians(np.asarray(intraconic_deg, np.float64))
    rho = np.sin(lat)
    return np.stack([rho * np.cos(ic), np.cos(lat), rho * np.sin(ic)], axis=-1)


# ---------------------------------------------------------------------------
# HRTF set
# ---------------------------------------------------------------------------

@dataclass
class HrtfSet:
    """Directional grid of left/right impulse responses.

    ``directions`` is (D, 2) [azimuth, elevation] degrees and ``irs`` is
    (D, 2, T) float64 with ear order (left, right).
    """

    directions: np.ndarray
    sample_rate: int
    irs: np.ndarray
    _resp_cache: dict = field(default_factory=dict, repr=False)
    _tree: object = field(default=None, repr=False)

    def __post_init__(self):
        self.directions = np.asarray(self.directions, np.float64)
        self.irs = np.asarray(self.irs, np.float64)
        if self.directions.ndim != 2 or self.directions.shape[1] != 2:
            raise ValueError("directions must have shape (D, 2)")
        if self.irs.shape[:2] != (self.directions.shape[0], 2):
            raise ValueError("irs must have shape (D, 2, T)")
        if self.directions.shape[0] < 1:
            raise ValueError("need at least one direction")
        uniq = {(round(a, 6) % 360.0, round(e, 6)) for a, e in self.directions}
        if len(uniq) != self.directions.shape[0]:
            raise ValueError("duplicate directions in HRTF set")

    @property
    def n_directions(self) -> int:
        return self.directions.shape[0]

    @property
    def ir_length(self) -> int:
        return self.irs.shape[2]

    def unit_vectors(self) -> np.ndarray:
        return azel_to_unit(self.directions[:, 0], self.directions[:, 1])

    def laterals(self) -> np.ndarray:
        return lateral_from_azel(self.directions[:, 0], self.directions[:, 1])

    def kdtree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.unit_vectors())
        return self._tree

    def nearest_index(self, unit_vecs) -> np.ndarray:
        """Nearest set direction(s) to the given unit vector(s)."""
        _, idx = self.kdtree().query(np.asarray(unit_vecs, np.float64))
        return idx

    def response_at(self, frequencies) -> np.ndarray:
        """Exact DTFT of the impulse responses at arbitrary frequencies (Hz).

        Returns (D, 2, F) complex. Cached per frequency tuple.
        """
        freqs = np.atleast_1d(np.asarray(frequencies, np.float64))
        key = freqs.tobytes()
        if key not in self._resp_cache:
            n = np.arange(self.ir_length)
            basis = np.exp(-2j * np.pi * np.outer(n, freqs) / self.sample_rate)
            self._resp_cache[key] = self.irs @ basis
        return self._resp_cache[key]

    def steering(self, frequency) -> np.ndarray:
        """(2, D) steering matrix at one frequency."""
        return self.response_at([float(frequency)])[:, :, 0].T


def save_hrtf_set(path, hset: HrtfSet):
    """Documented container: JSON header line + float32 LE IR block, left
    then right per direction, direction order as in the header."""
    payload = np.ascontiguousarray(hset.irs, dtype="<f4").tobytes()
    header = {
        "format": HRTF_FORMAT,
        "version": HRTF_VERSION,
        "sample_rate": int(hset.sample_rate),
        "ir_length": int(hset.ir_length),
        "directions": [{"az": float(a), "el": float(e)}
                       for a, e in hset.directions],
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(payload)


def load_hrtf_set(path) -> HrtfSet:
    """Load and validate an HRTF container."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: malformed HRTF container header") from exc
    if header.get("format") != HRTF_FORMAT:
        raise ValueError(f"{path}: not a {HRTF_FORMAT} container")
    if hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise ValueError(f"{path}: payload checksum mismatch (corrupt container)")
    n_dir = len(header["directions"])
    ir_len = int(header["ir_length"])
    expect = n_dir * 2 * ir_len * 4
    if len(payload) != expect:
        raise ValueError(
            f"{path}: payload of {len(payload)} bytes, expected {expect}")
    irs = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    irs = irs.reshape(n_dir, 2, ir_len)
    dirs = np.array([[d["az"], d["el"]] for d in header["directions"]])
    return HrtfSet(directions=dirs, sample_rate=int(header["sample_rate"]),
                   irs=irs)


# ---------------------------------------------------------------------------
# rigid-sphere model
# ---------------------------------------------------------------------------

def rigid_sphere_response(cos_gamma, frequencies, radius,
                          speed_of_sound=SPEED_OF_SOUND, extra_terms=30):
    """Surface pressure of a rigid sphere under a plane wave, relative to the
    free-field pressure at the sphere center.

    ``cos_gamma`` is the cosine of the angle between the source direction and
    the surface point. Phases follow the DFT convention where a pure delay
    ``tau`` corresponds to ``exp(-2j*pi*f*tau)``.  Returns
    (len(cos_gamma), len(frequencies)) complex.
    """
    cosg = np.atleast_1d(np.asarray(cos_gamma, np.float64))
    freqs = np.atleast_1d(np.asarray(frequencies, np.float64))
    ka = 2 * np.pi * freqs * radius / speed_of_sound
    out = np.ones((cosg.size, freqs.size), np.complex128)
    nz = ka > 0
    if not np.any(nz):
        return out
    x = ka[nz]
    n_terms = int(np.ceil(x.max())) + extra_terms
    acc = np.zeros((cosg.size, x.size), np.complex128)
    p_prev = np.ones_like(cosg)
    p_curr = cosg.copy()
    for m in range(n_terms):
        if m == 0:
            legendre = p_prev
        elif m == 1:
            legendre = p_curr
        else:
            p_next = ((2 * m - 1) * cosg * p_curr - (m - 1) * p_prev) / m
            p_prev, p_curr = p_curr, p_next
            legendre = p_next
        dh = (spherical_jn(m, x, derivative=True)
              + 1j * spherical_yn(m, x, derivative=True))
        acc += np.outer(legendre, (2 * m + 1) * (-1j) ** m / dh)
    out[:, nz] = (1j / x ** 2) * acc
    return np.conj(out)


def sphere_hrtf(radius, directions, sample_rate, n_taps=None,
                ref_delay_samples=None) -> HrtfSet:
    """Analytic rigid-sphere HRTF set with ears on the interaural axis.

    ``directions`` is a sequence of :class:`Direction` or an (D, 2) array of
    [azimuth, elevation] degrees. Ears sit antipodally at lateral 0 (left)
    and 180 (right), so responses depend on direction only through the
    lateral angle. A common ``ref_delay_samples`` delay keeps the impulse
    responses causal, and a raised-cosine taper above 90% of Nyquist tames
    the band edge.
    """
    if not 0.05 < radius < 0.15:
        raise ValueError(f"radius {radius} m outside plausible head range")
    dirs = np.asarray(
        [[d.azimuth, d.elevation] if isinstance(d, Direction) else d
         for d in directions], np.float64)
    if dirs.size == 0:
        raise ValueError("no directions given")
    sample_rate = int(sample_rate)
    if n_taps is None:
        n_taps = max(128, int(round(256 * sample_rate / 48000.0)))
    if ref_delay_samples is None:
        ref_delay_samples = max(16, int(round(64 * sample_rate / 48000.0)))

    v = azel_to_unit(dirs[:, 0], dirs[:, 1])
    freqs = np.fft.rfftfreq(n_taps, 1.0 / sample_rate)
    # responses depend only on cos(lateral); evaluate unique values once
    cos_lat = np.round(v[:, 1], 12)
    uniq, inverse = np.unique(
        np.concatenate([cos_lat, -cos_lat]), return_inverse=True)
    resp = rigid_sphere_response(uniq, freqs, radius)
    n_dir = dirs.shape[0]
    resp_l = resp[inverse[:n_dir]]
    resp_r = resp[inverse[n_dir:]]

    delay = np.exp(-2j * np.pi * freqs * ref_delay_samples / sample_rate)
    taper = np.ones_like(freqs)
    edge = 0.9 * sample_rate / 2
    hi = freqs > edge
    taper[hi] = 0.5 * (1 + np.cos(np.pi * (freqs[hi] - edge)
                                  / (sample_rate / 2 - edge)))
    shaping = delay * taper
    irs = np.stack([np.fft.irfft(resp_l * shaping, n_taps, axis=1),
                    np.fft.irfft(resp_r * shaping, n_taps, axis=1)], axis=1)
    return HrtfSet(directions=dirs, sample_rate=sample_rate, irs=irs)


# ---------------------------------------------------------------------------
# effective rank and the lateral steering field
# ---------------------------------------------------------------------------

def effective_rank(singular_values):
    """exp(Shannon entropy) of the normalized singular-value spectrum.

    Works on the last axis for arrays; zero singular values contribute
    nothing to the entropy.
    """
    s = np.asarray(singular_values, np.float64)
    if np.any(s < 0):
        raise ValueError("singular values must be non-negative")
    total = s.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("all-zero singular value spectrum")
    p = s / total
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return np.exp(-terms.sum(axis=-1))


@dataclass
class LateralSteeringField:
    """Per-(lateral angle, frequency) rank-1 steering vectors and rank
    diagnostics of the intraconic steering matrices."""

    lateral_grid: np.ndarray      # (L,) degrees
    frequencies: np.ndarray       # (F,) Hz
    u1: np.ndarray                # (L, F, 2) unit vectors, canonical phase
    singular_values: np.ndarray   # (L, F, 2)
    effective_rank: np.ndarray    # (L, F)

    def u1_at(self, frequency) -> np.ndarray:
        """(2, L) steering matrix at one field frequency."""
        idx = int(np.argmin(np.abs(self.frequencies - frequency)))
        if abs(self.frequencies[idx] - frequency) > 1e-6 * max(frequency, 1.0):
            raise ValueError(
                f"frequency {frequency} Hz not on the field grid")
        return self.u1[:, idx, :].T


def canonical_phase(vectors):
    """Rotate 2-vectors (last axis) so the first nonzero component is real
    and non-negative."""
    v = np.asarray(vectors, np.complex128)
    ref = np.where(np.abs(v[..., 0]) > 1e-14, v[..., 0], v[..., 1])
    phase = np.where(np.abs(ref) > 0, ref / np.maximum(np.abs(ref), 1e-300), 1.0)
    return v * np.conj(phase)[..., None]


def build_lateral_field(hset: HrtfSet, lateral_grid, n_intraconic,
                        frequencies) -> LateralSteeringField:
    """Resample the set onto lateral cones and compress each cone to its
    rank-1 steering vector by SVD.

    Per (lateral, frequency): collect the nearest measured directions for
    ``n_intraconic`` uniformly spaced intraconic angles (deduplicated, at
    least 2 required), stack their left/right responses into a 2 x N matrix,
    and keep the principal left singular vector with canonical phase.
    """
    if n_intraconic < 2:
        raise ValueError("n_intraconic must be >= 2")
    lateral_grid = np.asarray(lateral_grid, np.float64)
    freqs = np.atleast_1d(np.asarray(frequencies, np.float64))
    resp = hset.response_at(freqs)        # (D, 2, F)

    ic = np.arange(n_intraconic) * (360.0 / n_intraconic)
    n_lat = lateral_grid.size
    u1 = np.empty((n_lat, freqs.size, 2), np.complex128)
    svals = np.empty((n_lat, freqs.size, 2), np.float64)
    for i, lat in enumerate(lateral_grid):
        vecs = _interaural_grid_to_unit(np.full(n_intraconic, lat), ic)
        idx = np.unique(hset.nearest_index(vecs))
        if idx.size < 2:
            raise ValueError(
                f"cone at lateral {lat:.1f} deg maps to fewer than 2 distinct "
                f"HRTF directions")
        cone = resp[idx]                  # (N, 2, F)
        mats = np.transpose(cone, (2, 1, 0))   # (F, 2, N)
        u, s, _ = np.linalg.svd(mats)
        u1[i] = canonical_phase(u[:, :, 0])
        svals[i] = s
    return LateralSteeringField(
        lateral_grid=lateral_grid,
        frequencies=freqs,
        u1=u1,
        singular_values=svals,
        effective_rank=effective_rank(svals),
    )


# ---------------------------------------------------------------------------
# focusing
# ---------------------------------------------------------------------------

@dataclass
class FocusingOperator:
    """Per-frequency 2x2 alignment matrices mapping steering at each band
    frequency onto steering at the center frequency, with the recorded
    least-squares alignment residuals."""

    frequencies: np.ndarray       # (B,) Hz
    center_frequency: float
    matrices: np.ndarray          # (B, 2, 2)
    residuals: np.ndarray         # (B,)

    def matrix_for(self, frequency) -> np.ndarray:
        idx = int(np.argmin(np.abs(self.frequencies - frequency)))
        if abs(self.frequencies[idx] - frequency) > 1e-6 * max(frequency, 1.0):
            raise ValueError(f"frequency {frequency} Hz not in operator band")
        return self.matrices[idx]


def build_focusing(hset: HrtfSet, band_frequencies, center_frequency,
                   ) -> FocusingOperator:
    """Least-squares focusing over the full direction grid.

    ``T(w, w0) = H0 Hw^H (Hw Hw^H)^-1`` with ``Hw`` stacking the steering
    vectors of all set directions at frequency ``w``; the relative Frobenius
    residual ``||T Hw - H0|| / ||H0||`` is recorded per frequency.
    """
    band = np.atleast_1d(np.asarray(band_frequencies, np.float64))
    if band.size == 0:
        raise ValueError("empty focusing band")
    center_frequency = float(center_frequency)
    if not (band.min() - 1e-9 <= center_frequency <= band.max() + 1e-9):
        raise ValueError("center frequency outside band")
    all_freqs = np.append(band, center_frequency)
    resp = hset.response_at(all_freqs)            # (D, 2, B+1)
    h0 = resp[:, :, -1].T                          # (2, D)
    norm0 = np.linalg.norm(h0)
    mats = np.empty((band.size, 2, 2), np.complex128)
    residuals = np.empty(band.size)
    for i in range(band.size):
        hw = resp[:, :, i].T
        gram = hw @ hw.conj().T
        try:
            inv = np.linalg.inv(gram)
        except np.linalg.LinAlgError as exc:
            raise ValueError(
                f"degenerate HRTF grid at {band[i]:.1f} Hz: singular normal "
                f"matrix") from exc
        t = h0 @ hw.conj().T @ inv
        mats[i] = t
        residuals[i] = np.linalg.norm(t @ hw - h0) / norm0
    return FocusingOperator(frequencies=band, center_frequency=center_frequency,
                            matrices=mats, residuals=residuals)


def focusing_bank(hset: HrtfSet, frequencies, window=2):
    """One focusing operator per output channel, aligning each channel's
    trailing ``window`` frequencies onto the channel itself.

    Entry ``c`` (for ``c >= window - 1``) covers channels
    ``c-window+1 .. c`` with center ``frequencies[c]``; leading channels map
    to ``None``.
    """
    freqs = np.asarray(frequencies, np.float64)
    ops = []
    for c in range(freqs.size):
        if c < window - 1:
            ops.append(None)
            continue
        band = freqs[c - window + 1:c + 1]
        ops.append(build_focusing(hset, band, freqs[c]))
    return ops
