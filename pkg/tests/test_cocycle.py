import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from uamo import (GOLDEN, CocycleSpec, CouplingPair, Frequency, InvalidParameterError,
                  NonConvergenceError, SingularCocycleError, SingularCoinError, SpinorField,
                  X_matrix, Y_matrix, acceleration_profile, argument_derivative_check, coin,
                  coins, cocycle_eval, cocycle_values, epsilon0, fit_piecewise_affine,
                  herman_check, herman_matrix, iterate, log_integral_closed,
                  log_integral_quadrature, lyapunov_estimate, lyapunov_exact,
                  monotonicity_coefficients, realify, realify_closed_form, reflection_check,
                  transfer_T, walk_matrix)

S2 = 1 / math.sqrt(2)
inner = st.floats(0.05, 0.95)
phase = st.floats(0.0, 1.0, exclude_max=True)
angle = st.floats(0.0, 2 * math.pi)


def on_circle(t):
    return complex(math.cos(t), math.sin(t))


# transfer matrices ----------------------------------------------------------------

def test_transfer_free_coin():
    l1, z = 0.6, on_circle(0.9)
    l1p = math.sqrt(1 - l1 ** 2)
    T = transfer_T(np.diag([1j, -1j]), l1, z)
    expected = 1j * np.array([[1 / (l1 * z) + z * l1p ** 2 / l1, -l1p * z], [-l1p * z, l1 * z]])
    assert np.max(np.abs(T - expected)) < 1e-14


@given(inner, st.floats(0, 0.999), phase, angle)
def test_transfer_determinant(l1, l2, theta, t):
    q = coin(CouplingPair(l1, l2), GOLDEN, theta, 3)
    T = transfer_T(q, l1, on_circle(t))
    assert abs(np.linalg.det(T) - q[0, 0] / q[1, 1]) < 1e-12


def test_transfer_singular_coin():
    q = coin(CouplingPair(0.5, 1.0), Frequency.rational(1, 4), 0.0, 1)
    with pytest.raises(SingularCoinError):
        transfer_T(q, 0.5, 1j)
    with pytest.raises(InvalidParameterError):
        transfer_T(np.eye(2), 0.0, 1j)


@pytest.mark.parametrize("pair", [(0.5, S2), (0.8, 0.3), (0.3, 0.9)])
def test_transfer_solution_solves_eigen_rows(pair):
    pair = CouplingPair(*pair)
    f, theta, z = Frequency.rational(13, 21), 0.1, on_circle(1.3)
    N = 30
    qs = coins(pair, f, theta, np.arange(0, N + 1))
    plus = np.zeros(N + 2, complex)    # sites -1..N
    minus = np.zeros(N + 2, complex)
    v = np.array([0.3 + 0.2j, -0.7j])  # (psi_0^+, psi_{-1}^-)
    plus[1], minus[0] = v
    for n in range(N):
        v = transfer_T(qs[n], pair.lambda1, z) @ v
        plus[n + 2], minus[n + 1] = v
    psi = SpinorField(-1, plus, minus)
    W = walk_matrix(pair, f, theta, -1, N)
    r = W @ psi.to_vector() - z * psi.to_vector()
    interior = r[4:2 * N - 2]
    assert np.max(np.abs(interior)) < 1e-10 * max(1.0, np.max(np.abs(psi.to_vector())))


# cocycle values ----------------------------------------------------------------------

@given(inner, st.floats(0, 0.999), phase, angle)
def test_determinant_formula(l1, l2, theta, t):
    p = CouplingPair(l1, l2)
    A = cocycle_eval(CocycleSpec("A", p, on_circle(t)), theta)
    c = math.cos(2 * math.pi * theta)
    d = complex(l2 * c, p.lambda2p) / complex(l2 * c, -p.lambda2p)
    assert abs(np.linalg.det(A) - d) < 1e-12 and abs(abs(np.linalg.det(A)) - 1) < 1e-12


def test_free_coin_cocycle_is_constant():
    vals = cocycle_values(CocycleSpec("A", CouplingPair(0.4, 0.0), 1j), np.linspace(0, 1, 9))
    assert np.max(np.abs(vals - vals[0])) < 1e-15


@given(inner, st.floats(0, 0.999), phase, angle, st.floats(-0.2, 0.2))
def test_B_is_rescaled_A(l1, l2, theta, t, eps):
    p, z = CouplingPair(l1, l2), on_circle(t)
    A = cocycle_eval(CocycleSpec("A", p, z, eps), theta)
    B = cocycle_eval(CocycleSpec("B", p, z, eps), theta)
    zeta = 2 * math.pi * complex(theta, eps)
    pref = 2 * (l2 * np.cos(zeta) - 1j * p.lambda2p) / (1 + p.lambda2p)
    assert np.max(np.abs(B - pref * A)) < 1e-13 * max(1.0, np.max(np.abs(B)))


@given(inner, inner, phase, angle)
def test_dual_cocycle_is_conjugate_swap(l1, l2, theta, t):
    p, z = CouplingPair(l1, l2), on_circle(t)
    As = cocycle_eval(CocycleSpec("A_sharp", p, z), theta)
    A = cocycle_eval(CocycleSpec("A", p.swapped(), z), theta)
    assert np.max(np.abs(As - np.conj(A))) < 1e-13


def test_A_singular_at_eps0():
    l2 = S2
    spec = CocycleSpec("A", CouplingPair(0.5, l2), 1j, epsilon0(l2))
    with pytest.raises(SingularCocycleError):
        cocycle_eval(spec, 0.75)
    with pytest.raises(InvalidParameterError):
        CocycleSpec("C", CouplingPair(0.5, 0.5), 1j)
    with pytest.raises(InvalidParameterError):
        CocycleSpec("A", CouplingPair(0.5, 0.5), 0)


# products ------------------------------------------------------------------------------

def test_iterate_single_step():
    spec = CocycleSpec("A", CouplingPair(0.5, S2), on_circle(0.4))
    M, s = iterate(spec, GOLDEN, 0.2, 1)
    assert np.max(np.abs(M * math.exp(s) - cocycle_eval(spec, 0.2))) < 1e-14


def test_iterate_constant_cocycle_matches_power():
    spec = CocycleSpec("A", CouplingPair(0.3, 0.0), on_circle(0.2))
    A = cocycle_eval(spec, 0.0)
    w, V = np.linalg.eig(A)
    n = 40
    ref = V @ np.diag(w ** n) @ np.linalg.inv(V)
    M, s = iterate(spec, GOLDEN, 0.0, n)
    assert np.max(np.abs(M * math.exp(s) - ref)) < 1e-9 * np.max(np.abs(ref))
    assert 0.5 <= np.linalg.norm(M, 2) <= 2


def test_iterate_determinant_is_product():
    # short product: for long hyperbolic products det(M) underflows against |M|^2
    spec = CocycleSpec("A", CouplingPair(0.6, 0.8), on_circle(2.0))
    n = 6
    M, s = iterate(spec, GOLDEN, 0.1, n)
    dets = np.linalg.det(cocycle_values(spec, GOLDEN.phases(np.arange(n), 0.1)))
    # compare phases and log moduli to avoid overflow
    lhs = np.linalg.det(M)
    assert abs(np.log(abs(lhs)) + 2 * s - np.sum(np.log(np.abs(dets)))) < 1e-10
    assert abs(np.angle(lhs / np.prod(dets / np.abs(dets)))) < 1e-10
    assert 0.5 <= np.linalg.norm(M, 2) <= 2
    with pytest.raises(InvalidParameterError):
        iterate(spec, GOLDEN, 0.0, 0)


# Lyapunov exponents ----------------------------------------------------------------------

def test_lyapunov_free_unitary_case():
    L, _ = lyapunov_estimate(CocycleSpec("A", CouplingPair(1.0, 0.0), 1j), GOLDEN, 10 ** 4)
    assert abs(L) < 1e-3


def test_lyapunov_supercritical_quick():
    p = CouplingPair(0.5, S2)
    L, se = lyapunov_estimate(CocycleSpec("B", p, 1j), GOLDEN, 2 * 10 ** 5)
    assert abs(L - math.log(p.lambda0)) < 0.01 and se < 0.01


def test_lyapunov_rejects_short_runs():
    with pytest.raises(InvalidParameterError):
        lyapunov_estimate(CocycleSpec("B", CouplingPair(0.5, 0.5), 1j), GOLDEN, 100)


def test_lyapunov_exact_values():
    assert lyapunov_exact(CouplingPair(S2, S2)) == pytest.approx(0, abs=1e-15)
    assert lyapunov_exact(CouplingPair(0.5, S2)) == pytest.approx(0.4355843099, abs=1e-9)
    assert lyapunov_exact(CouplingPair(S2, 0.5)) == 0
    with pytest.raises(InvalidParameterError):
        lyapunov_exact(CouplingPair(0.0, 0.5))


@pytest.mark.parametrize("eps", [-0.3, -0.2, 0.0, 0.1, 0.25])
def test_B_minus_A_exponent(eps):
    p, z = CouplingPair(0.5, S2), 1j
    e0 = epsilon0(p.lambda2)
    LA, _ = lyapunov_estimate(CocycleSpec("A", p, z, eps), GOLDEN, 10 ** 5)
    LB, _ = lyapunov_estimate(CocycleSpec("B", p, z, eps), GOLDEN, 10 ** 5)
    assert LB - LA == pytest.approx(2 * math.pi * max(abs(eps) - e0, 0.0), abs=2e-3)


# epsilon0 and the log integral ------------------------------------------------------------

def test_epsilon0_values():
    assert round(epsilon0(S2), 4) == 0.1403
    assert epsilon0(1.0) == 0.0
    assert epsilon0(0.0) == math.inf


def test_log_integral_examples():
    assert log_integral_closed(0.0, 0.37) == 0.0
    assert log_integral_closed(1.0, 0.0) == pytest.approx(-math.log(2), abs=1e-15)
    assert log_integral_closed(S2, 0.0) == pytest.approx(math.log((1 + S2) / 2), abs=1e-15)
    # the quoted reference value is rounded loosely
    assert log_integral_closed(S2, 0.0) == pytest.approx(-0.158345, abs=1e-5)
    assert log_integral_quadrature(1.0, 0.0) == pytest.approx(-math.log(2), abs=1e-8)


def test_log_integral_grid():
    for t in np.linspace(0.1, 0.9, 9):
        for e in np.linspace(-0.3, 0.3, 7):
            assert abs(log_integral_quadrature(t, e) - log_integral_closed(t, e)) < 1e-8


def test_log_integral_large_eps_asymptote():
    t, e = 0.6, 0.45
    tp = math.sqrt(1 - t * t)
    val = log_integral_quadrature(t, e) - 2 * math.pi * e
    assert val == pytest.approx(math.log((1 + tp) / 2) - 2 * math.pi * epsilon0(t), abs=1e-8)


@given(st.floats(0, 1), st.floats(-0.4, 0.4))
def test_log_integral_even_in_eps(t, e):
    assert abs(log_integral_quadrature(t, e) - log_integral_quadrature(t, -e)) < 1e-10


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_quadrature_reports_nonconvergence():
    with pytest.raises(NonConvergenceError):
        log_integral_quadrature(0.7, 0.05, tol=1e-30)


# acceleration ----------------------------------------------------------------------------

def test_piecewise_fit_recovers_kink():
    x = np.linspace(-1, 1, 21)
    segs = fit_piecewise_affine(x, np.abs(x) * 3 + 1)
    assert [round(s[2], 10) for s in segs] == [-3, 3]


def test_acceleration_critical_is_two_pi_abs_eps():
    p = CouplingPair(S2, S2)
    eps = np.linspace(-0.3, 0.3, 13)
    prof = acceleration_profile(p, 1j, GOLDEN, 3 * 10 ** 4, eps)
    assert np.max(np.abs(prof.L_values - 2 * math.pi * np.abs(eps))) < 5e-3
    assert list(prof.accelerations) == [-1, 1]
    assert prof.asymmetry() < 1e-3


def test_acceleration_subcritical_plateau():
    p = CouplingPair(S2, 0.5)
    z = 1j
    prof = acceleration_profile(p, z, GOLDEN, 3 * 10 ** 4, np.linspace(-0.35, 0.35, 15))
    assert list(prof.accelerations) == [-1, 0, 1]
    tail = prof.segments[-1]
    assert tail[3] == pytest.approx(math.log(p.lambda0), abs=0.02)
    assert np.all(np.diff(prof.slopes) > 0)


def test_acceleration_requires_symmetric_grid():
    with pytest.raises(InvalidParameterError):
        acceleration_profile(CouplingPair(0.5, 0.5), 1j, GOLDEN, 10 ** 4, [0.0, 0.1])


# reflection -------------------------------------------------------------------------------

@given(st.floats(0.01, 1), st.floats(0.01, 1), phase, angle, st.floats(0.5, 2), st.floats(-0.1, 0.1))
def test_reflection_identity(l1, l2, theta, t, r, eps):
    p = CouplingPair(l1, l2)
    if abs(abs(eps) - epsilon0(l2)) < 1e-3:
        return
    assert reflection_check(CocycleSpec("A", p, r * on_circle(t), eps), theta) < 1e-12


def test_reflection_self_point():
    p = CouplingPair(0.5, 0.6)
    assert reflection_check(CocycleSpec("A", p, on_circle(1.0)), 0.25) < 1e-13


# realification --------------------------------------------------------------------------

@pytest.mark.parametrize("lam", [0.0, 0.3, 1.0])
def test_Y_unitary(lam):
    Y = Y_matrix(lam)
    assert np.max(np.abs(Y.conj().T @ Y - np.eye(2))) < 1e-15


@given(st.floats(0, 1))
def test_X_properties(lam):
    X = X_matrix(lam)
    assert abs(np.trace(X)) < 1e-15
    assert np.allclose(X, X.conj().T) and np.allclose(X @ X, np.eye(2), atol=1e-14)
    Y = Y_matrix(lam)
    assert np.max(np.abs(Y.conj().T @ X @ Y - np.array([[0, 1j], [-1j, 0]]))) < 1e-12


@given(inner, st.floats(0, 0.99), phase, angle)
def test_realify_is_real_unimodular(l1, l2, theta, t):
    p, z = CouplingPair(l1, l2), on_circle(t)
    AR = realify(p, z, theta)
    assert np.max(np.abs(AR.imag)) < 1e-12
    assert abs(np.linalg.det(AR.real) - 1) < 1e-12
    assert np.max(np.abs(AR.real - realify_closed_form(p, z, theta))) < 1e-12
    A = cocycle_eval(CocycleSpec("A", p, z), theta)
    X = X_matrix(l1)
    assert np.max(np.abs(A.conj().T @ X @ A - X)) < 1e-12


def test_realify_refuses_full_coin_coupling():
    with pytest.raises(InvalidParameterError):
        realify(CouplingPair(0.5, 1.0), 1j, 0.1)


def test_argument_derivative_positive():
    assert argument_derivative_check(CouplingPair(0.5, 0.5), 0.13) > 0


@given(inner, st.floats(0, 0.99), phase, angle)
def test_monotonicity_discriminant(l1, l2, theta, t):
    a, b, c = monotonicity_coefficients(CouplingPair(l1, l2), on_circle(t), theta)
    expected = l1 ** 4 * (1 - (l2 * math.sin(2 * math.pi * theta)) ** 2)
    assert a * b - c * c == pytest.approx(expected, abs=1e-12)
    assert a * b - c * c > 0


def test_monotonicity_degenerates_at_full_coupling():
    a, b, c = monotonicity_coefficients(CouplingPair(0.5, 1 - 1e-12), on_circle(0.3), 0.25)
    assert abs(a * b - c * c) < 1e-10


# Herman bound -------------------------------------------------------------------------------

@given(st.floats(0, 1))
def test_herman_spectral_radius(l1):
    r = max(abs(np.linalg.eigvals(herman_matrix(l1))))
    assert r == pytest.approx(1 + math.sqrt(1 - l1 * l1), abs=1e-12)


def test_herman_margin_quick():
    zs = [on_circle(t) for t in np.linspace(0, 2 * math.pi, 8, endpoint=False)]
    assert herman_check(CouplingPair(0.5, S2), GOLDEN, zs, 3 * 10 ** 4) >= -0.02
    with pytest.raises(InvalidParameterError):
        herman_check(CouplingPair(0.7, 0.5), GOLDEN, zs)


def test_exponent_grows_as_shift_coupling_vanishes():
    Ls = [lyapunov_estimate(CocycleSpec("B", CouplingPair(l1, 0.6), 1j), GOLDEN, 10 ** 4)[0]
          for l1 in (0.3, 0.03, 0.003, 0.0003)]
    assert all(b > a + 1 for a, b in zip(Ls[:-1], Ls[1:]))
