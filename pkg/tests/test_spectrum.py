import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from uamo import (BandSet, CouplingPair, band_edges, Frequency, InvalidParameterError, band_measure_trend,
                  band_set, bloch_eigenangles, bloch_matrix, butterfly, closed_form_band_set,
                  convergents, discriminant, symmetry_check, union_band_set, walk_matrix,
                  GOLDEN)

S2 = 1 / math.sqrt(2)
TWO_PI = 2 * math.pi


def re_band_measure(lam):
    """Arc length of {|Re z| <= lam}."""
    return TWO_PI - 4 * math.acos(lam)


# BandSet -----------------------------------------------------------------------

def test_bandset_merge_and_measure():
    b = BandSet([(0.1, 0.3), (0.25, 0.5), (1.0, 1.2)])
    assert b.arcs == [(0.1, 0.5), (1.0, 1.2)]
    assert b.measure == pytest.approx(0.6)
    assert BandSet([(0.1, 0.2), (0.2 + 5e-7, 0.3)]).arcs == [(0.1, 0.3)]


def test_bandset_wraps_through_zero():
    b = BandSet([(TWO_PI - 0.1, TWO_PI + 0.2)])
    assert b.arcs == [(0.0, pytest.approx(0.2)), (pytest.approx(TWO_PI - 0.1), TWO_PI)]
    assert b.measure == pytest.approx(0.3)
    assert b.contains([0.0, 0.1, TWO_PI - 0.05]).all()
    assert b.distance([math.pi])[0] == pytest.approx(math.pi - 0.2)
    assert len(b.gaps()) == 1


def test_bandset_hausdorff():
    a = BandSet([(0.0, 1.0)])
    b = BandSet([(0.0, 0.5)])
    assert a.hausdorff(b) == pytest.approx(0.5)
    c = BandSet([(0.0, 0.2), (0.8, 1.0)])
    assert a.hausdorff(c) == pytest.approx(0.3)
    assert a.hausdorff(a) == 0


@given(st.lists(st.tuples(st.floats(0, 6), st.floats(0, 1)), min_size=1, max_size=12))
def test_bandset_invariants(raw):
    b = BandSet([(lo, lo + w) for lo, w in raw])
    for (l1, h1), (l2, h2) in zip(b.arcs[:-1], b.arcs[1:]):
        assert h1 < l2
    assert 0 <= b.measure <= TWO_PI + 1e-12
    extra = b.union(BandSet([(raw[0][0], raw[0][0] + 0.5)]))
    assert extra.measure >= b.measure - 1e-12


# Bloch matrices ------------------------------------------------------------------

@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, TWO_PI))
def test_bloch_unitary(l1, l2, theta, k):
    B = bloch_matrix(CouplingPair(l1, l2), (3, 7), theta, k)
    assert np.max(np.abs(B.conj().T @ B - np.eye(14))) < 1e-10


def test_bloch_k0_is_periodic_ring():
    p, f = CouplingPair(0.4, 0.75), Frequency.rational(5, 8)
    B = bloch_matrix(p, f, 0.2, 0.0)
    R = walk_matrix(p, f, 0.2, 0, 7, periodic=True)
    assert np.max(np.abs(B - R)) < 1e-15
    ang = np.sort(np.mod(np.angle(np.linalg.eigvals(R)), TWO_PI))
    assert np.max(np.abs(bloch_eigenangles(p, f, 0.2, [0.0])[0] - ang)) < 1e-10


def test_bloch_cayley_route_matches_general_solver():
    p, f = CouplingPair(0.6, 0.7), (5, 13)
    ks = np.linspace(0, math.pi, 7)
    a = bloch_eigenangles(p, f, 0.0, ks)
    gap = band_set(p, f).gaps()[0]
    b = bloch_eigenangles(p, f, 0.0, ks, pole=0.5 * (gap[0] + gap[1]) % TWO_PI)
    assert np.max(np.abs(a - b)) < 1e-10


def test_q1_free_coin_bloch_band():
    bs = band_set(CouplingPair(0.5, 0.0), (0, 1), method="bloch")
    assert bs.measure == pytest.approx(TWO_PI / 3, abs=1e-6)


# band sets ---------------------------------------------------------------------------

def test_closed_form_bands():
    assert band_set(CouplingPair(0.5, 0.0), (3, 7)).measure == pytest.approx(TWO_PI / 3, abs=1e-12)
    assert band_set(CouplingPair(0.0, 0.8), (3, 7)).measure == pytest.approx(re_band_measure(0.8))
    assert closed_form_band_set(CouplingPair(0.0, 0.0)).measure == pytest.approx(0.0)


def test_bloch_agrees_with_closed_form_away_from_q1():
    bs = band_set(CouplingPair(0.5, 0.0), (3, 7), method="bloch")
    assert bs.measure == pytest.approx(TWO_PI / 3, abs=1e-6)
    assert bs.hausdorff(closed_form_band_set(CouplingPair(0.5, 0.0))) < 1e-6


def test_critical_half_flux_is_symmetric_under_minus_z():
    bs = band_set(CouplingPair(S2, S2), (1, 2))
    flipped = BandSet([(lo + math.pi, hi + math.pi) for lo, hi in bs])
    assert bs.hausdorff(flipped) < 1e-6


def test_spectrum_symmetric_under_conjugation():
    bs = band_set(CouplingPair(0.6, 0.7), (5, 13), 0.1)
    conj = BandSet([(TWO_PI - hi, TWO_PI - lo) for lo, hi in bs])
    assert bs.hausdorff(conj) < 1e-6


def test_band_set_phase_covariance():
    p, q = CouplingPair(0.6, 0.8), 8
    a = band_set(p, (3, q), 0.05)
    b = band_set(p, (3, q), 0.05 + 1 / q)
    assert a.hausdorff(b) < 1e-6
    assert abs(a.measure - b.measure) < 1e-4


def test_band_set_rejects_coarse_sampling():
    with pytest.raises(InvalidParameterError):
        band_set(CouplingPair(0.5, 0.5), (3, 7), k_samples=20)


def test_union_measure_grows():
    p, f = CouplingPair(0.5, S2), (5, 8)
    one = union_band_set(p, f, [0.0])
    more = union_band_set(p, f, [0.0, 0.01, 0.02])
    assert more.measure >= one.measure - 1e-12


# discriminant ---------------------------------------------------------------------

def test_discriminant_free_coin():
    l1 = 0.6
    z = np.exp(1j * np.linspace(0.1, 6.2, 25))
    D = discriminant(CouplingPair(l1, 0.0), (0, 1), 0.0, z)
    assert np.max(np.abs(D - 2 * (z / l1).real)) < 1e-12


@pytest.mark.parametrize("pq", [(1, 3), (2, 5), (3, 8)])
def test_discriminant_membership(pq):
    p = CouplingPair(0.5, S2)
    bs = band_set(p, pq, 0.1)
    ang = np.linspace(0, TWO_PI, 2000, endpoint=False)
    inside = bs.contains(ang)
    far = bs.distance(ang) > 1e-4
    for_in = inside & np.array([min(abs(a - e) for e in bs.edges()) > 1e-4 for a in ang])
    D = discriminant(p, pq, 0.1, np.exp(1j * ang))
    assert np.all(np.abs(D[for_in]) <= 2 + 1e-9)
    assert np.all(np.abs(D[far]) > 2)


@given(st.floats(0.05, 1), st.floats(0, 0.99), st.floats(0, 1), st.integers(1, 10), st.floats(0, TWO_PI))
def test_discriminant_real_on_circle(l1, l2, theta, q, t):
    D = discriminant(CouplingPair(l1, l2), (1, q), theta, np.exp(1j * t))[0]
    assert abs(D.imag) / max(1.0, abs(D)) < 1e-9


# butterfly and trends -------------------------------------------------------------------

def test_butterfly_ordering_and_first_row():
    rows = butterfly(CouplingPair(S2, S2), 5)
    keys = [(r.q, r.p) for r in rows]
    assert keys == sorted(keys)
    assert (rows[0].p, rows[0].q) == (0, 1)
    assert all(math.gcd(r.p, r.q) == 1 for r in rows)
    assert len(rows) == 1 + sum(1 for q in range(2, 6) for p in range(1, q) if math.gcd(p, q) == 1)


def test_butterfly_zero_flux_row_matches_symbol():
    p = CouplingPair(0.5, 0.3)
    row = butterfly(p, 2, theta_mode="single")[0]
    ks = np.linspace(0, TWO_PI, 4001)
    ang = bloch_eigenangles(p, (0, 1), 0.0, ks)
    assert np.all(row.bands.distance(ang.ravel()) < 1e-9)


def test_butterfly_swap_symmetry():
    a = butterfly(CouplingPair(0.5, S2), 4, n_theta=32)
    b = butterfly(CouplingPair(S2, 0.5), 4, n_theta=32)
    for ra, rb in zip(a, b):
        assert ra.bands.hausdorff(rb.bands) < 5e-3


def test_symmetry_check_trivial_cases():
    assert symmetry_check(CouplingPair(0.6, 0.6), (2, 5)) == 0.0
    a = closed_form_band_set(CouplingPair(0.4, 0.0))
    b = closed_form_band_set(CouplingPair(0.0, 0.4))
    assert a.hausdorff(b) == 0.0


def test_measure_trend_subcritical_bounded_below():
    convs = [c for c in convergents(GOLDEN.value, 12) if 5 <= c[1] <= 34]
    trend = band_measure_trend(CouplingPair(S2, 0.5), convs)
    assert min(trend.measures) > 1.0
    with pytest.raises(InvalidParameterError):
        band_measure_trend(CouplingPair(0, 0), convs)


def test_measure_trend_critical_decreases():
    convs = [c for c in convergents(GOLDEN.value, 12) if 5 <= c[1] <= 21]
    trend = band_measure_trend(CouplingPair(S2, S2), convs)
    assert trend.strictly_decreasing


def test_band_edges_bound_the_band_set():
    p, f = CouplingPair(0.5, S2), (3, 8)
    bs = band_set(p, f, 0.0)
    edges = band_edges(p, f, 0.0)
    assert len(edges) == 4 * 8
    assert all(np.min(np.abs(edges - e)) < 1e-9 for e in bs.edges())
    D = discriminant(p, f, 0.0, np.exp(1j * edges))
    assert np.max(np.abs(np.abs(D) - 2)) < 1e-8
