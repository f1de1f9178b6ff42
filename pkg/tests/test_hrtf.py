import numpy as np
import pytest

from binaural_doa.hrtf import (Direction, InterauralDirection, HrtfSet,
                               sph_to_interaural, interaural_to_sph,
                               azel_to_unit, lateral_from_azel, sphere_hrtf,
                               rigid_sphere_response, save_hrtf_set,
                               load_hrtf_set, effective_rank,
                               build_lateral_field, build_focusing,
                               canonical_phase, SPEED_OF_SOUND)
from conftest import ring_directions

FS = 48000
RADIUS = 0.0875


# ---------------------------------------------------------------------------
# coordinates
# ---------------------------------------------------------------------------

def test_front_is_median_plane():
    d = sph_to_interaural(Direction(0.0, 0.0))
    assert d.lateral == pytest.approx(90.0, abs=1e-12)
    assert d.intraconic == pytest.approx(0.0, abs=1e-12)


def test_hard_left_is_cone_pole():
    d = sph_to_interaural(Direction(90.0, 0.0))
    assert d.lateral == pytest.approx(0.0, abs=1e-6)
    assert d.intraconic == 0.0


def test_zenith():
    d = sph_to_interaural(Direction(0.0, 90.0))
    assert d.lateral == pytest.approx(90.0, abs=1e-6)
    assert d.intraconic == pytest.approx(90.0, abs=1e-6)


def test_interaural_to_sph_examples():
    d = interaural_to_sph(InterauralDirection(90.0, 0.0))
    assert (d.azimuth, d.elevation) == (pytest.approx(0.0, abs=1e-9),
                                        pytest.approx(0.0, abs=1e-9))
    d = interaural_to_sph(InterauralDirection(0.0, 0.0))
    assert d.azimuth == pytest.approx(90.0, abs=1e-9)
    assert d.elevation == pytest.approx(0.0, abs=1e-9)


def test_roundtrip_random_directions():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        az = rng.uniform(0.0, 360.0)
        el = rng.uniform(-89.9, 89.9)
        ia = sph_to_interaural(Direction(az, el))
        back = interaural_to_sph(ia)
        v1 = azel_to_unit(az, el)
        v2 = azel_to_unit(back.azimuth, back.elevation)
        # chord length keeps precision for tiny angles, unlike arccos(dot)
        ang = np.degrees(2 * np.arcsin(0.5 * np.linalg.norm(v1 - v2)))
        worst = max(worst, ang)
    assert worst < 1e-9


def test_cone_has_constant_axis_projection():
    lat = 37.0
    ics = np.arange(0.0, 360.0, 7.0)
    dirs = [interaural_to_sph(InterauralDirection(lat, ic)) for ic in ics]
    v = azel_to_unit(np.array([d.azimuth for d in dirs]),
                     np.array([d.elevation for d in dirs]))
    proj = v[:, 1]
    assert np.ptp(proj) < 1e-12


def test_direction_validation():
    with pytest.raises(ValueError):
        Direction(360.0, 0.0)
    with pytest.raises(ValueError):
        Direction(0.0, 91.0)
    with pytest.raises(ValueError):
        InterauralDirection(190.0, 0.0)


# ---------------------------------------------------------------------------
# rigid sphere model
# ---------------------------------------------------------------------------

def test_sphere_series_converged():
    freqs = np.linspace(100.0, 20000.0, 25)
    cosg = np.linspace(-1.0, 1.0, 11)
    a = rigid_sphere_response(cosg, freqs, RADIUS, extra_terms=30)
    b = rigid_sphere_response(cosg, freqs, RADIUS, extra_terms=60)
    assert np.abs(a - b).max() < 1e-10


def test_sphere_median_plane_symmetry():
    hset = sphere_hrtf(RADIUS, [Direction(0.0, 0.0)], FS)
    assert np.abs(hset.irs[0, 0] - hset.irs[0, 1]).max() < 1e-10


def test_sphere_hard_left_itd_matches_woodworth():
    hset = sphere_hrtf(RADIUS, [Direction(90.0, 0.0)], FS, n_taps=512,
                       ref_delay_samples=128)
    hl, hr = hset.irs[0]
    xc = np.correlate(hr, hl, "full")
    i = int(np.argmax(np.abs(xc)))
    y0, y1, y2 = np.abs(xc[i - 1:i + 2])
    frac = 0.5 * (y0 - y2) / (y0 - 2 * y1 + y2)
    itd = (i - (hl.size - 1) + frac) / FS
    # independent oracle: Woodworth (a/c) * (theta + sin(theta)) at 90 deg
    woodworth = RADIUS / SPEED_OF_SOUND * (np.pi / 2 + 1.0)
    assert itd == pytest.approx(woodworth, rel=0.05)
    assert itd > 0  # left-ear lead means the right channel lags


def test_sphere_antipodal_sources_swap_ears():
    hset = sphere_hrtf(RADIUS, [Direction(40.0, 10.0), Direction(220.0, -10.0)],
                       FS)
    assert np.allclose(hset.irs[0, 0], hset.irs[1, 1], atol=1e-12)
    assert np.allclose(hset.irs[0, 1], hset.irs[1, 0], atol=1e-12)


def test_sphere_radius_validation():
    with pytest.raises(ValueError):
        sphere_hrtf(0.3, [Direction(0.0, 0.0)], FS)


def test_sphere_responses_cone_constant(lattice_set):
    lats = lattice_set.laterals()
    resp = lattice_set.response_at([2000.0])[:, :, 0]
    sel = np.abs(lats - lats[7]) < 1e-9
    assert sel.sum() >= 2
    ref = resp[np.nonzero(sel)[0][0]]
    assert np.abs(resp[sel] - ref).max() < 1e-9


# ---------------------------------------------------------------------------
# container round-trip
# ---------------------------------------------------------------------------

def test_container_roundtrip(tmp_path, lattice_set):
    path = tmp_path / "set.bdh"
    save_hrtf_set(path, lattice_set)
    loaded = load_hrtf_set(path)
    assert loaded.n_directions == lattice_set.n_directions
    assert loaded.sample_rate == lattice_set.sample_rate
    assert np.array_equal(loaded.directions, lattice_set.directions)
    # payload is float32; loading reproduces the cast exactly
    assert np.array_equal(loaded.irs,
                          lattice_set.irs.astype(np.float32).astype(np.float64))
    path2 = tmp_path / "again.bdh"
    save_hrtf_set(path2, loaded)
    assert path.read_bytes()[path.read_bytes().find(b"\n"):] \
        == path2.read_bytes()[path2.read_bytes().find(b"\n"):]


def test_duplicate_directions_rejected():
    irs = np.zeros((2, 2, 16))
    with pytest.raises(ValueError, match="duplicate"):
        HrtfSet(directions=np.array([[10.0, 0.0], [10.0, 0.0]]),
                sample_rate=FS, irs=irs)


def test_corrupt_container_detected(tmp_path, lattice_set):
    path = tmp_path / "set.bdh"
    save_hrtf_set(path, lattice_set)
    blob = bytearray(path.read_bytes())
    blob[-5] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError, match="checksum"):
        load_hrtf_set(path)


# ---------------------------------------------------------------------------
# effective rank
# ---------------------------------------------------------------------------

def test_effective_rank_pure_rank1():
    assert effective_rank([1.0, 0.0]) == pytest.approx(1.0, abs=1e-12)


def test_effective_rank_balanced():
    assert effective_rank([1.0, 1.0]) == pytest.approx(2.0, abs=1e-12)


def test_effective_rank_mixed():
    # hand evaluation: p = (2/3, 1/3),
    # exp(-(2/3) ln(2/3) - (1/3) ln(1/3)) = 1.88988...
    expected = np.exp(-(2 / 3) * np.log(2 / 3) - (1 / 3) * np.log(1 / 3))
    assert expected == pytest.approx(1.8899, abs=5e-5)
    assert effective_rank([1.0, 0.5]) == pytest.approx(expected, rel=1e-12)


def test_effective_rank_rejects_all_zero():
    with pytest.raises(ValueError):
        effective_rank([0.0, 0.0])


# ---------------------------------------------------------------------------
# lateral steering field
# ---------------------------------------------------------------------------

def _cone_pair_set(lateral=60.0, ir_a=None, ir_b=None):
    d1 = interaural_to_sph(InterauralDirection(lateral, 0.0))
    d2 = interaural_to_sph(InterauralDirection(lateral, 180.0))
    dirs = np.array([[d1.azimuth, d1.elevation], [d2.azimuth, d2.elevation]])
    irs = np.stack([ir_a, ir_b])
    return HrtfSet(directions=dirs, sample_rate=FS, irs=irs)


def test_field_rank1_when_columns_equal():
    ir = np.zeros((2, 32))
    ir[0, 0], ir[0, 3] = 1.0, 0.5     # arbitrary common response
    ir[1, 1] = -0.8
    hset = _cone_pair_set(ir_a=ir, ir_b=ir.copy())
    field = build_lateral_field(hset, [60.0], 8, [2000.0])
    h = hset.response_at([2000.0])[0, :, 0]
    expected = canonical_phase(h / np.linalg.norm(h))
    assert np.allclose(field.u1[0, 0], expected, atol=1e-12)
    assert field.singular_values[0, 0, 1] == pytest.approx(0.0, abs=1e-12)
    assert field.effective_rank[0, 0] == pytest.approx(1.0, abs=1e-9)


def test_field_orthonormal_columns_rank2():
    ir_a = np.zeros((2, 8)); ir_a[0, 0] = 1.0     # left-only impulse
    ir_b = np.zeros((2, 8)); ir_b[1, 0] = 1.0     # right-only impulse
    hset = _cone_pair_set(ir_a=ir_a, ir_b=ir_b)
    field = build_lateral_field(hset, [60.0], 8, [1000.0])
    assert np.allclose(field.singular_values[0, 0], [1.0, 1.0], atol=1e-12)
    assert field.effective_rank[0, 0] == pytest.approx(2.0, abs=1e-9)


def test_field_unit_norm_and_canonical_phase(lattice_set):
    freqs = np.linspace(1000.0, 6000.0, 7)
    field = build_lateral_field(lattice_set, np.arange(20.0, 161.0, 10.0),
                                36, freqs)
    norms = np.linalg.norm(field.u1, axis=-1)
    assert np.abs(norms - 1.0).max() < 1e-12
    first = field.u1[..., 0]
    assert np.abs(first.imag).max() < 1e-10
    assert first.real.min() > -1e-12
    s = field.singular_values
    assert np.all(s[..., 0] >= s[..., 1])
    assert np.all(s[..., 1] >= 0)
    assert np.all((field.effective_rank >= 1.0 - 1e-12)
                  & (field.effective_rank <= 2.0 + 1e-12))


def test_field_sphere_effective_rank_near_one(lattice_set):
    freqs = np.linspace(1000.0, 6000.0, 11)
    field = build_lateral_field(lattice_set, np.arange(20.0, 161.0, 4.0),
                                36, freqs)
    assert np.median(field.effective_rank) < 1.4


def test_field_needs_two_cone_directions():
    ir = np.zeros((2, 8)); ir[0, 0] = 1.0
    hset = _cone_pair_set(lateral=60.0, ir_a=ir, ir_b=ir)
    with pytest.raises(ValueError, match="fewer than 2"):
        # a different cone has no nearby second direction
        build_lateral_field(hset, [0.0], 8, [1000.0])


def test_u1_invariant_to_column_permutation_and_phase():
    rng = np.random.default_rng(3)
    h = rng.standard_normal((2, 12)) + 1j * rng.standard_normal((2, 12))
    u_ref, s_ref, _ = np.linalg.svd(h)
    base = canonical_phase(u_ref[:, 0])
    perm = rng.permutation(12)
    for mat in (h[:, perm], h * np.exp(1j * 1.234)):
        u, s, _ = np.linalg.svd(mat)
        assert np.allclose(np.abs(s - s_ref), 0.0, atol=1e-10)
        assert np.allclose(canonical_phase(u[:, 0]), base, atol=1e-10)


# ---------------------------------------------------------------------------
# focusing
# ---------------------------------------------------------------------------

def test_focusing_identity_at_center(lattice_set):
    op = build_focusing(lattice_set, [2000.0], 2000.0)
    assert np.abs(op.matrices[0] - np.eye(2)).max() <= 1e-10
    assert op.residuals[0] <= 1e-10


class _ScaledResponseSet:
    """Minimal stand-in whose steering at f is c(f) times the base."""

    def __init__(self, base, scales, freqs):
        self._base = base            # (D, 2)
        self._scales = dict(zip(freqs, scales))

    def response_at(self, freqs):
        out = np.stack([self._base * self._scales[float(f)]
                        for f in np.atleast_1d(freqs)], axis=-1)
        return out


def test_focusing_scalar_proportional_grid():
    rng = np.random.default_rng(5)
    base = rng.standard_normal((30, 2)) + 1j * rng.standard_normal((30, 2))
    c = 0.4 - 1.3j
    fake = _ScaledResponseSet(base, [c, 1.0], [500.0, 900.0])
    op = build_focusing(fake, [500.0], 900.0)
    assert np.allclose(op.matrices[0], np.eye(2) / c, atol=1e-10)
    assert op.residuals[0] <= 1e-10


def test_focusing_residuals_match_independent_lstsq(lattice_set):
    f0 = 2000.0
    erb = 24.7 * (4.37 * f0 / 1000.0 + 1.0)
    band = np.linspace(f0 - 2 * erb, f0 + 2 * erb, 9)
    op = build_focusing(lattice_set, band, f0)
    resp = lattice_set.response_at(np.append(band, f0))
    h0 = resp[:, :, -1].T
    for i, f in enumerate(band):
        hw = resp[:, :, i].T
        # independent solver: lstsq on the transposed system Hw^T T^T = H0^T
        t_ls, *_ = np.linalg.lstsq(hw.T, h0.T, rcond=None)
        res = np.linalg.norm(t_ls.T @ hw - h0) / np.linalg.norm(h0)
        assert op.residuals[i] == pytest.approx(res, abs=1e-9)
        assert np.allclose(op.matrices[i], t_ls.T, atol=1e-8)
    # measured sphere-set residual envelope: small near the center,
    # growing toward the +-2 ERB edges
    within_1erb = np.abs(band - f0) <= erb + 1e-9
    assert op.residuals[within_1erb].max() < 0.25
    assert op.residuals.max() < 0.45


def test_focusing_self_consistency(lattice_set):
    f0 = 2000.0
    band = [1900.0, 2000.0]
    op = build_focusing(lattice_set, band, f0)
    resp = lattice_set.response_at([1900.0, 2000.0])
    h_w = resp[:, :, 0].T
    h_0 = resp[:, :, 1].T
    t = op.matrices[0]
    norm_h0 = np.linalg.norm(h_0)
    s = 0.7 - 0.2j
    for psi in (0, 57, 200):
        frame = t @ (h_w[:, psi] * s)
        target = h_0[:, psi] * s
        bound = op.residuals[0] * norm_h0 / np.linalg.norm(h_0[:, psi])
        err = np.linalg.norm(frame - target) / np.linalg.norm(target)
        assert err <= bound + 1e-12


def test_focusing_center_outside_band_rejected(lattice_set):
    with pytest.raises(ValueError, match="center"):
        build_focusing(lattice_set, [1000.0, 1100.0], 2000.0)
