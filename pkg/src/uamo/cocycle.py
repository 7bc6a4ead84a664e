"""Transfer matrices and the quasiperiodic cocycles A, B and A-sharp.

Phases may be complexified, theta -> theta + i*epsilon. The cocycle
A_z(theta) is the transfer matrix T_z(n) with the coin phase n*Phi + theta
replaced by theta; B removes the denominator of A and has the same
Lyapunov exponent on real phases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from ._jit import njit
from .core import CouplingPair, Frequency, lambda0
from .errors import (InvalidParameterError, NonConvergenceError, SingularCocycleError,
                     SingularCoinError)

__all__ = [
    "CocycleSpec",
    "LyapunovProfile",
    "transfer_T",
    "cocycle_eval",
    "cocycle_values",
    "iterate",
    "lyapunov_estimate",
    "lyapunov_exact",
    "epsilon0",
    "log_integral_closed",
    "log_integral_quadrature",
    "acceleration_profile",
    "fit_piecewise_affine",
    "reflection_check",
    "X_matrix",
    "Y_matrix",
    "realify",
    "realify_closed_form",
    "monotonicity_coefficients",
    "argument_derivative_check",
    "herman_matrix",
    "herman_check",
]

VARIANTS = ("A", "B", "A_sharp", "A_realified")
_SING_TOL = 1e-13


def transfer_T(coin: np.ndarray, lambda1: float, z: complex) -> np.ndarray:
    """Transfer matrix taking (psi_n^+, psi_{n-1}^-) to (psi_{n+1}^+, psi_n^-).

    coin is Q_n. The determinant equals q11/q22.
    """
    lam = float(lambda1)
    if lam <= 0:
        raise InvalidParameterError("transfer matrices need lambda1 > 0")
    if z == 0:
        raise InvalidParameterError("z must be nonzero")
    lamp = math.sqrt((1.0 - lam) * (1.0 + lam))
    q11, q12, q21, q22 = coin[0, 0], coin[0, 1], coin[1, 0], coin[1, 1]
    if abs(q22) <= _SING_TOL:
        raise SingularCoinError("coin is off-diagonal (q22 = 0)")
    detq = q11 * q22 - q12 * q21
    T = np.array([
        [(detq / z + lamp * (q21 - q12) + z * lamp ** 2) / lam, q12 - lamp * z],
        [-q21 - lamp * z, lam * z],
    ], dtype=complex)
    return T / q22


@dataclass(frozen=True)
class CocycleSpec:
    """Which cocycle, at which coupling, energy z and imaginary phase shift."""

    variant: str
    pair: CouplingPair
    z: complex
    epsilon: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidParameterError(f"variant must be one of {VARIANTS}")
        object.__setattr__(self, "z", complex(self.z))
        if self.z == 0:
            raise InvalidParameterError("z must be nonzero")
        if self.variant in ("A", "A_realified") and self.pair.lambda1 <= 0:
            raise InvalidParameterError("A needs lambda1 > 0")
        if self.variant == "B" and self.pair.lambda1 <= 0:
            raise InvalidParameterError("B needs lambda1 > 0")
        if self.variant == "A_sharp" and self.pair.lambda2 <= 0:
            raise InvalidParameterError("the dual cocycle needs lambda2 > 0")
        if self.variant == "A_realified" and self.epsilon != 0.0:
            raise InvalidParameterError("the realified cocycle is defined on real phases only")

    def with_epsilon(self, epsilon: float) -> "CocycleSpec":
        return CocycleSpec(self.variant, self.pair, self.z, epsilon)


def _A_stack(l1, l1p, l2, l2p, z, zeta, regularized=False):
    """A_z or B_z at complex phases zeta (array)."""
    x = 2 * np.pi * np.asarray(zeta, dtype=complex)
    c, s = np.cos(x), np.sin(x)
    zi = 1.0 / z
    out = np.empty(x.shape + (2, 2), dtype=complex)
    off = -l2 * s - l1p * z
    if regularized:
        pref = 2.0 / (l1 * (1.0 + l2p))
        out[..., 0, 0] = pref * (zi + 2 * l1p * l2 * s + z * l1p ** 2)
        out[..., 0, 1] = pref * l1 * off
        out[..., 1, 0] = pref * l1 * off
        out[..., 1, 1] = pref * l1 ** 2 * z
        return out
    den = l2 * c - 1j * l2p
    if np.any(np.abs(den) <= _SING_TOL):
        raise SingularCocycleError("denominator lambda2 cos - i lambda2' vanishes")
    out[..., 0, 0] = (zi + 2 * l1p * l2 * s + z * l1p ** 2) / l1
    out[..., 0, 1] = off
    out[..., 1, 0] = off
    out[..., 1, 1] = l1 * z
    return out / den[..., None, None]


def cocycle_values(spec: CocycleSpec, thetas) -> np.ndarray:
    """Cocycle matrices at phases thetas + i*epsilon, shape (..., 2, 2)."""
    thetas = np.asarray(thetas, dtype=float)
    zeta = thetas + 1j * spec.epsilon
    return _values_at(spec.variant, spec.pair, spec.z, zeta)


def _values_at(variant, pair, z, zeta):
    p = pair
    if variant == "A":
        return _A_stack(p.lambda1, p.lambda1p, p.lambda2, p.lambda2p, z, zeta)
    if variant == "B":
        return _A_stack(p.lambda1, p.lambda1p, p.lambda2, p.lambda2p, z, zeta, regularized=True)
    if variant == "A_sharp":
        zz = 1.0 / np.conj(z)
        vals = _A_stack(p.lambda2, p.lambda2p, p.lambda1, p.lambda1p, zz, np.conj(zeta))
        return np.conj(vals)
    zeta = np.asarray(zeta)
    if np.any(zeta.imag != 0):
        raise InvalidParameterError("the realified cocycle is defined on real phases only")
    return np.array([realify(p, z, t) for t in np.ravel(zeta.real)]).reshape(zeta.shape + (2, 2))


def cocycle_eval(spec: CocycleSpec, theta: float) -> np.ndarray:
    """Single cocycle matrix at theta + i*epsilon."""
    return cocycle_values(spec, np.array([theta]))[0]


@njit(cache=True, nogil=True)
def _product_kernel(mats, M, acc, comp, marks, out_marks):
    """Left-multiply M by mats in order with sup-norm renormalization.

    acc/comp hold a compensated running sum of the log scale. At local
    step indices listed in marks the total log norm is written to out_marks.
    """
    m00, m01, m10, m11 = M[0, 0], M[0, 1], M[1, 0], M[1, 1]
    j = 0
    nm = marks.shape[0]
    for k in range(mats.shape[0]):
        a00, a01, a10, a11 = mats[k, 0, 0], mats[k, 0, 1], mats[k, 1, 0], mats[k, 1, 1]
        n00 = a00 * m00 + a01 * m10
        n01 = a00 * m01 + a01 * m11
        n10 = a10 * m00 + a11 * m10
        n11 = a10 * m01 + a11 * m11
        s = max(abs(n00), abs(n01), abs(n10), abs(n11))
        if not (s > 0.0) or not np.isfinite(s):
            return m00, m01, m10, m11, acc, comp, k
        m00, m01, m10, m11 = n00 / s, n01 / s, n10 / s, n11 / s
        y = math.log(s) - comp
        t = acc + y
        comp = (t - acc) - y
        acc = t
        while j < nm and marks[j] == k + 1:
            # spectral-norm proxy: Frobenius norm of the normalized factor
            fro = math.sqrt(abs(m00) ** 2 + abs(m01) ** 2 + abs(m10) ** 2 + abs(m11) ** 2)
            out_marks[j] = acc + math.log(fro)
            j += 1
    return m00, m01, m10, m11, acc, comp, -1


_CHUNK = 1 << 16


def _run_product(spec, freq, theta0, n, marks=None):
    """Ordered product A(theta0 + (n-1)Phi) ... A(theta0), renormalized.

    Returns (M, log_scale, mark_values) with the product = M * exp(log_scale).
    """
    M = np.eye(2, dtype=complex)
    acc, comp = 0.0, 0.0
    marks = np.zeros(0, dtype=np.int64) if marks is None else np.asarray(marks, dtype=np.int64)
    mark_vals = np.full(len(marks), np.nan)
    for start in range(0, n, _CHUNK):
        stop = min(n, start + _CHUNK)
        ks = np.arange(start, stop)
        mats = cocycle_values(spec, freq.phases(ks, theta0))
        sel = (marks > start) & (marks <= stop)
        local = marks[sel] - start
        out = np.full(len(local), np.nan)
        m00, m01, m10, m11, acc, comp, bad = _product_kernel(
            np.ascontiguousarray(mats), M, acc, comp, local, out)
        if bad >= 0:
            raise SingularCocycleError(f"degenerate product at step {start + bad}")
        M = np.array([[m00, m01], [m10, m11]])
        mark_vals[sel] = out
    return M, acc, mark_vals


def iterate(spec: CocycleSpec, freq: Frequency, theta0: float, n: int):
    """n-step product as (M, log_scale) with the product equal to M e^{log_scale}."""
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    M, log_scale, _ = _run_product(spec, freq, theta0, int(n))
    return M, log_scale


def lyapunov_estimate(spec: CocycleSpec, freq: Frequency, N: int = 10 ** 6, theta0: float = 0.0,
                      burn_in: int = 0, blocks: int = 8):
    """(L, stderr): (1/N) log ||A^N|| along the orbit started after burn_in steps.

    stderr comes from the spread of the growth rates over ``blocks``
    consecutive blocks.
    """
    N = int(N)
    if N < 10 ** 4:
        raise InvalidParameterError("N must be at least 10^4")
    if blocks < 8:
        raise InvalidParameterError("need at least 8 blocks")
    theta_start = float(freq.phases(np.array([burn_in]), theta0)[0])
    marks = np.linspace(0, N, blocks + 1).astype(np.int64)[1:]
    _, _, vals = _run_product(spec, freq, theta_start, N, marks)
    L = vals[-1] / N
    rates = np.diff(np.concatenate(([0.0], vals))) / np.diff(np.concatenate(([0], marks)))
    stderr = float(np.std(rates, ddof=1) / math.sqrt(blocks))
    return float(L), stderr


def lyapunov_exact(pair: CouplingPair) -> float:
    """max(0, log lambda0), the exponent on the spectrum."""
    if pair.lambda1 <= 0:
        raise InvalidParameterError("undefined for lambda1 = 0")
    return max(0.0, math.log(lambda0(pair))) if pair.lambda2 > 0 else 0.0


def epsilon0(lambda2: float) -> float:
    """arcsinh(lambda2'/lambda2) / (2 pi); infinite at lambda2 = 0."""
    lam = float(lambda2)
    if not 0.0 <= lam <= 1.0:
        raise InvalidParameterError("lambda2 must lie in [0, 1]")
    if lam == 0.0:
        return math.inf
    lamp = math.sqrt((1.0 - lam) * (1.0 + lam))
    return math.asinh(lamp / lam) / (2 * math.pi)


def log_integral_closed(t: float, eps: float) -> float:
    """Closed form of the integral of log|t cos 2pi(theta + i eps) - i t'| over a period."""
    if not 0.0 <= t <= 1.0:
        raise InvalidParameterError("t must lie in [0, 1]")
    tp = math.sqrt((1.0 - t) * (1.0 + t))
    val = math.log((1.0 + tp) / 2.0)
    if t > 0:
        val += 2 * math.pi * max(0.0, abs(eps) - epsilon0(t))
    return val


def log_integral_quadrature(t: float, eps: float, tol: float = 1e-10) -> float:
    """Adaptive quadrature of the same integral.

    The integrand can only blow up at theta = 1/4, 3/4, so those are used
    as breakpoints and each piece is integrated separately.
    """
    if not 0.0 <= t <= 1.0:
        raise InvalidParameterError("t must lie in [0, 1]")
    tp = math.sqrt((1.0 - t) * (1.0 + t))

    def f(th):
        return math.log(abs(t * np.cos(2 * np.pi * complex(th, eps)) - 1j * tp))

    total, err = 0.0, 0.0
    for a, b in ((0.0, 0.25), (0.25, 0.75), (0.75, 1.0)):
        val, e = integrate.quad(f, a, b, epsabs=tol / 10, epsrel=0.0, limit=500)
        total += val
        err += e
    if err > tol:
        raise NonConvergenceError(f"quadrature error estimate {err:.3g} exceeds {tol:.3g}")
    return total


@dataclass(frozen=True)
class LyapunovProfile:
    epsilons: np.ndarray
    L_values: np.ndarray
    stderr: np.ndarray
    slopes: np.ndarray
    accelerations: np.ndarray
    segments: list = field(default_factory=list)
    point_slopes: np.ndarray | None = None
    residuals: np.ndarray | None = None
    kinks: list = field(default_factory=list)

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if self.residuals is not None and len(self.residuals) else 0.0

    def asymmetry(self) -> float:
        """max |L(eps) - L(-eps)| over grid points that come in +- pairs."""
        eps, L = self.epsilons, self.L_values
        worst = 0.0
        for i, e in enumerate(eps):
            j = np.nonzero(np.abs(eps + e) < 1e-12)[0]
            if len(j):
                worst = max(worst, abs(L[i] - L[j[0]]))
        return worst


def fit_piecewise_affine(x, y, tol: float = 1e-3, min_points: int = 3):
    """Greedy split of (x, y) into maximal affine runs.

    A run is accepted while the max abs residual of its least-squares line
    stays below tol. Grid points that fit no run of min_points neighbours
    are left unassigned (they straddle a kink). Returns a list of
    (i_start, i_stop_inclusive, slope, intercept, residual).
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = len(x)

    def fit(i, j):
        xs, ys = x[i:j + 1], y[i:j + 1]
        A = np.vstack([xs, np.ones_like(xs)]).T
        coef = np.linalg.lstsq(A, ys, rcond=None)[0]
        res = float(np.max(np.abs(A @ coef - ys)))
        return coef[0], coef[1], res

    segs = []
    i = 0
    while i <= n - min_points:
        j = i + min_points - 1
        slope, icpt, res = fit(i, j)
        if res >= tol:
            i += 1
            continue
        while j + 1 < n:
            s2, c2, r2 = fit(i, j + 1)
            if r2 >= tol:
                break
            j, slope, icpt, res = j + 1, s2, c2, r2
        segs.append((i, j, float(slope), float(icpt), float(res)))
        i = j
        if j == n - 1:
            break
    return segs


def default_epsilons(pair: CouplingPair | None = None, variant: str = "B") -> np.ndarray:
    """41 points on [-0.35, 0.35], plus points around +-eps0 for A."""
    eps = np.linspace(-0.35, 0.35, 41)
    if variant == "A" and pair is not None and pair.lambda2 > 0:
        e0 = epsilon0(pair.lambda2)
        if e0 < 0.35:
            extra = [s * (e0 + d) for s in (-1, 1) for d in (-0.01, -0.005, 0.005, 0.01)]
            eps = np.union1d(eps, np.round(extra, 12))
    return eps


def acceleration_profile(pair: CouplingPair, z: complex, freq: Frequency, N: int = 10 ** 5,
                         epsilons=None, variant: str = "B", theta0: float = 0.0,
                         fit_tol: float = 1e-3, map_fn=map) -> LyapunovProfile:
    """Sample eps -> L(Phi, A(. + i eps)) and fit integer accelerations.

    map_fn lets callers run the eps grid on a thread pool; results are
    assembled in grid order.
    """
    eps = default_epsilons(pair, variant) if epsilons is None else np.asarray(epsilons, float)
    if not np.allclose(np.sort(eps), np.sort(-eps)):
        raise InvalidParameterError("epsilon grid must be symmetric about 0")
    eps = np.sort(eps)
    if variant == "A":
        e0 = epsilon0(pair.lambda2)
        if np.any(np.abs(np.abs(eps) - e0) < 1e-9):
            raise SingularCocycleError("grid hits |eps| = eps0 where A is singular")

    def one(e):
        return lyapunov_estimate(CocycleSpec(variant, pair, z, float(e)), freq, N, theta0)

    results = list(map_fn(one, eps))
    L = np.array([r[0] for r in results])
    se = np.array([r[1] for r in results])
    segs = fit_piecewise_affine(eps, L, tol=fit_tol)
    slopes = np.array([s[2] for s in segs])
    acc = np.rint(slopes / (2 * np.pi)).astype(int)
    point_slopes = np.full(len(eps), np.nan)
    for i, j, sl, _, _ in segs:
        point_slopes[i:j + 1] = sl
    kinks = [0.5 * (eps[a[1]] + eps[b[0]]) if a[1] != b[0] else float(eps[a[1]])
             for a, b in zip(segs[:-1], segs[1:])]
    return LyapunovProfile(eps, L, se, slopes, acc, segs, point_slopes,
                           np.array([s[4] for s in segs]), kinks)


_R = np.array([[0.0, 1.0], [-1.0, 0.0]])


def reflection_check(spec: CocycleSpec, theta: float) -> float:
    """Residual of R^{-1} A(zeta)^{-1} R = -A(1/2 - zeta) for A and for A-sharp.

    zeta = theta + i*epsilon; R = [[0, 1], [-1, 0]]. The entrywise residual
    is divided by max(1, |A(zeta)| |A(1/2 - zeta)|) in the max norm, since
    inverting A loses digits in proportion to its size (|A| ~ 1/lambda1).
    """
    zeta = complex(theta, spec.epsilon)
    worst = 0.0
    variants = ["A", "A_sharp"]
    for v in variants:
        if v == "A" and spec.pair.lambda1 <= 0:
            continue
        if v == "A_sharp" and spec.pair.lambda2 <= 0:
            continue
        a = _values_at(v, spec.pair, spec.z, np.array([zeta]))[0]
        b = _values_at(v, spec.pair, spec.z, np.array([0.5 - zeta]))[0]
        lhs = np.linalg.solve(_R, np.linalg.solve(a, _R))
        scale = max(1.0, float(np.max(np.abs(a)) * np.max(np.abs(b))))
        worst = max(worst, float(np.max(np.abs(lhs + b))) / scale)
    return worst


def X_matrix(lam: float) -> np.ndarray:
    lamp = math.sqrt((1.0 - lam) * (1.0 + lam))
    return np.array([[lam, lamp], [lamp, -lam]], dtype=complex)


def Y_matrix(lam: float) -> np.ndarray:
    a, b = math.sqrt(1.0 + lam), math.sqrt(1.0 - lam)
    return 0.5 * np.array([[a - 1j * b, -b + 1j * a],
                           [b + 1j * a, a + 1j * b]])


def _check_realifiable(pair: CouplingPair):
    if pair.lambda1 <= 0:
        raise InvalidParameterError("realification needs lambda1 > 0")
    if pair.lambda2 >= 1:
        raise InvalidParameterError("realification needs lambda2 < 1; use the B cocycle")


def realify(pair: CouplingPair, z: complex, theta: float) -> np.ndarray:
    """Y(l1)* (A / sqrt(det A)) Y(l1) for |z| = 1 and real theta.

    sqrt(det A) is taken factor-wise as sqrt(l2 c + i l2') / sqrt(l2 c - i l2'),
    which is continuous in theta. The complex result has imaginary parts
    at rounding level; callers take .real once that is checked.
    """
    _check_realifiable(pair)
    A = _values_at("A", pair, complex(z), np.array([complex(theta)]))[0]
    c = math.cos(2 * math.pi * theta)
    num = complex(pair.lambda2 * c, pair.lambda2p)
    sq = np.sqrt(num) / np.sqrt(num.conjugate())
    Y = Y_matrix(pair.lambda1)
    AR = Y.conj().T @ (A / sq) @ Y
    return AR


def realify_closed_form(pair: CouplingPair, z: complex, theta: float) -> np.ndarray:
    """Explicit real form of the realified cocycle."""
    _check_realifiable(pair)
    l1, l1p, l2, l2p = pair.lambda1, pair.lambda1p, pair.lambda2, pair.lambda2p
    c, s = math.cos(2 * math.pi * theta), math.sin(2 * math.pi * theta)
    x, y = z.real, z.imag
    pref = 1.0 / (l1 * math.sqrt(l2p ** 2 + (l2 * c) ** 2))
    return pref * np.array([
        [x + l1p * l2 * s, l1 * y - l1p * x - l2 * s],
        [-l1 * y - l1p * x - l2 * s, x + l1p * l2 * s],
    ])


def monotonicity_coefficients(pair: CouplingPair, z: complex, theta: float):
    """(a, b, c) of the quadratic form controlling d/dt arg(A^R v)."""
    l1, l1p, l2 = pair.lambda1, pair.lambda1p, pair.lambda2
    s = math.sin(2 * math.pi * theta)
    x, y = z.real, z.imag
    a = l1 * (1 + l2 * s * (l1p * x + l1 * y))
    b = l1 * (1 - l2 * s * (-l1p * x + l1 * y))
    c = -l1 * (l1p + l2 * s * x)
    return a, b, c


def _arg(w):
    # angle measured from the second coordinate axis towards the first
    return np.arctan2(w[..., 0], w[..., 1])


def argument_derivative_check(pair: CouplingPair, theta: float, u_grid=None, t_grid=None,
                              h: float = 1e-6) -> float:
    """Minimum over the grids of d/dt arg(A^R_{e^{it}}(theta) v_u).

    v_u = (cos u, sin u); derivative by central differences.
    """
    _check_realifiable(pair)
    u_grid = np.linspace(0, 2 * np.pi, 64, endpoint=False) if u_grid is None else np.asarray(u_grid)
    t_grid = np.linspace(0, 2 * np.pi, 64, endpoint=False) if t_grid is None else np.asarray(t_grid)
    V = np.stack([np.cos(u_grid), np.sin(u_grid)], axis=1)
    worst = math.inf
    for t in t_grid:
        Ap = realify_closed_form(pair, complex(math.cos(t + h), math.sin(t + h)), theta)
        Am = realify_closed_form(pair, complex(math.cos(t - h), math.sin(t - h)), theta)
        d = _arg(V @ Ap.T) - _arg(V @ Am.T)
        d = (d + np.pi) % (2 * np.pi) - np.pi
        worst = min(worst, float(np.min(d / (2 * h))))
    return worst


def herman_matrix(lambda1: float) -> np.ndarray:
    lamp = math.sqrt((1.0 - lambda1) * (1.0 + lambda1))
    return np.array([[2 * lamp, -lambda1], [-lambda1, 0.0]])


def herman_check(pair: CouplingPair, freq: Frequency, z_grid, N: int = 10 ** 5,
                 theta0: float = 0.0) -> float:
    """min over z of (L_estimate(z) - log lambda0); nonnegative up to noise."""
    if not pair.lambda1 < pair.lambda2:
        raise InvalidParameterError("Herman bound check needs lambda1 < lambda2")
    bound = math.log(lambda0(pair))
    margins = [lyapunov_estimate(CocycleSpec("B", pair, complex(z)), freq, N, theta0)[0] - bound
               for z in z_grid]
    return float(min(margins))
