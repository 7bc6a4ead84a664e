"""The one-dimensional split-step walk W = S_{lambda1} Q_{lambda2, Phi, theta}.

Basis convention for dense matrices and flat vectors: site n of a window
starting at n_min occupies rows 2(n - n_min) (spin +) and 2(n - n_min) + 1
(spin -).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._jit import njit
from .core import CouplingPair, Frequency
from .errors import DegenerateSeriesError, InvalidParameterError, WindowTooSmallError

__all__ = [
    "SpinorField",
    "MomentSeries",
    "ScalingFit",
    "coin",
    "coins",
    "shift_apply",
    "walk_apply",
    "walk_transpose_apply",
    "walk_matrix",
    "assemble_walk_matrix",
    "evolve",
    "scaling_exponent",
]


@dataclass(frozen=True)
class SpinorField:
    """Two-component field on the window [n_min, n_min + len(plus) - 1]."""

    n_min: int
    plus: np.ndarray
    minus: np.ndarray

    def __post_init__(self):
        plus = np.asarray(self.plus, dtype=complex)
        minus = np.asarray(self.minus, dtype=complex)
        if plus.shape != minus.shape or plus.ndim != 1:
            raise InvalidParameterError("plus and minus must be 1-D arrays of equal length")
        object.__setattr__(self, "n_min", int(self.n_min))
        object.__setattr__(self, "plus", plus)
        object.__setattr__(self, "minus", minus)

    @property
    def n_max(self) -> int:
        return self.n_min + len(self.plus) - 1

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.n_min, self.n_max + 1)

    def norm(self) -> float:
        return math.sqrt(float(np.sum(np.abs(self.plus) ** 2 + np.abs(self.minus) ** 2)))

    def weights(self) -> np.ndarray:
        return np.abs(self.plus) ** 2 + np.abs(self.minus) ** 2

    def to_vector(self) -> np.ndarray:
        v = np.empty(2 * len(self.plus), dtype=complex)
        v[0::2] = self.plus
        v[1::2] = self.minus
        return v

    @classmethod
    def from_vector(cls, n_min: int, v) -> "SpinorField":
        v = np.asarray(v, dtype=complex)
        return cls(n_min, v[0::2], v[1::2])

    @classmethod
    def delta(cls, n: int = 0, spin: int = 1, n_min: int | None = None,
              n_max: int | None = None) -> "SpinorField":
        """Unit vector at site n; spin = +1 or -1."""
        n_min = n if n_min is None else n_min
        n_max = n if n_max is None else n_max
        plus = np.zeros(n_max - n_min + 1, dtype=complex)
        minus = np.zeros_like(plus)
        (plus if spin > 0 else minus)[n - n_min] = 1.0
        return cls(n_min, plus, minus)

    def value(self, n: int) -> tuple[complex, complex]:
        if n < self.n_min or n > self.n_max:
            return 0j, 0j
        i = n - self.n_min
        return complex(self.plus[i]), complex(self.minus[i])

    def embed(self, n_min: int, n_max: int) -> "SpinorField":
        """Same field on a window that must contain the current one."""
        if n_min > self.n_min or n_max < self.n_max:
            raise InvalidParameterError("target window does not contain the field")
        plus = np.zeros(n_max - n_min + 1, dtype=complex)
        minus = np.zeros_like(plus)
        i = self.n_min - n_min
        plus[i:i + len(self.plus)] = self.plus
        minus[i:i + len(self.minus)] = self.minus
        return SpinorField(n_min, plus, minus)

    def restrict(self, n_min: int, n_max: int) -> "SpinorField":
        big = self.embed(min(n_min, self.n_min), max(n_max, self.n_max))
        i = n_min - big.n_min
        j = i + n_max - n_min + 1
        return SpinorField(n_min, big.plus[i:j], big.minus[i:j])


def coins(pair: CouplingPair, freq: Frequency, theta: float, n) -> np.ndarray:
    """Stack of coins Q_n, shape (len(n), 2, 2)."""
    x = 2 * np.pi * freq.phases(n, theta)
    c, s = np.cos(x), np.sin(x)
    l2, l2p = pair.lambda2, pair.lambda2p
    out = np.empty((len(x), 2, 2), dtype=complex)
    out[:, 0, 0] = l2 * c + 1j * l2p
    out[:, 0, 1] = -l2 * s
    out[:, 1, 0] = l2 * s
    out[:, 1, 1] = l2 * c - 1j * l2p
    return out


def coin(pair: CouplingPair, freq: Frequency, theta: float, n: int) -> np.ndarray:
    """Coin Q_n as a 2x2 array."""
    return coins(pair, freq, theta, np.array([n]))[0]


def _pad(a: np.ndarray) -> np.ndarray:
    return np.concatenate(([0j], a, [0j]))


def shift_apply(lambda1: float, psi: SpinorField) -> SpinorField:
    """S_lambda psi; the output window is one site wider on each side."""
    lam = float(lambda1)
    lamp = math.sqrt((1.0 - lam) * (1.0 + lam))
    p, m = _pad(psi.plus), _pad(psi.minus)
    plus = np.zeros_like(p)
    minus = np.zeros_like(m)
    plus[1:] += lam * p[:-1]
    plus -= lamp * m
    minus[:-1] += lam * m[1:]
    minus += lamp * p
    return SpinorField(psi.n_min - 1, plus, minus)


def _coin_apply(qs: np.ndarray, psi: SpinorField, transpose: bool = False) -> SpinorField:
    if transpose:
        qs = np.swapaxes(qs, 1, 2)
    plus = qs[:, 0, 0] * psi.plus + qs[:, 0, 1] * psi.minus
    minus = qs[:, 1, 0] * psi.plus + qs[:, 1, 1] * psi.minus
    return SpinorField(psi.n_min, plus, minus)


def walk_apply(pair: CouplingPair, freq: Frequency, theta: float, psi: SpinorField) -> SpinorField:
    """W psi = S_{lambda1} Q psi on the window grown by one site per side."""
    qs = coins(pair, freq, theta, psi.sites)
    return shift_apply(pair.lambda1, _coin_apply(qs, psi))


def walk_transpose_apply(pair: CouplingPair, freq: Frequency, theta: float,
                         psi: SpinorField) -> SpinorField:
    """W^T psi = Q^T S^T psi (entrywise transpose, no conjugation)."""
    lam, lamp = pair.lambda1, pair.lambda1p
    p, m = _pad(psi.plus), _pad(psi.minus)
    plus = lamp * m
    plus[:-1] += lam * p[1:]
    minus = -lamp * p
    minus[1:] += lam * m[:-1]
    st = SpinorField(psi.n_min - 1, plus, minus)
    qs = coins(pair, freq, theta, st.sites)
    return _coin_apply(qs, st, transpose=True)


def assemble_walk_matrix(qs: np.ndarray, lambda1: float, wrap: complex | None = None) -> np.ndarray:
    """Dense W for coins qs on consecutive sites.

    wrap=None truncates (terms leaving the window are dropped); otherwise
    the window is closed into a ring and hops across the seam pick up the
    factor wrap (forward) or its inverse (backward), i.e. Bloch boundary
    conditions psi_{n+N} = wrap * psi_n.
    """
    N = len(qs)
    lam = float(lambda1)
    lamp = math.sqrt((1.0 - lam) * (1.0 + lam))
    W = np.zeros((2 * N, 2 * N), dtype=complex)
    for n in range(N):
        rp, rm = 2 * n, 2 * n + 1
        # on-site parts
        W[rp, 2 * n] += -lamp * qs[n, 1, 0]
        W[rp, 2 * n + 1] += -lamp * qs[n, 1, 1]
        W[rm, 2 * n] += lamp * qs[n, 0, 0]
        W[rm, 2 * n + 1] += lamp * qs[n, 0, 1]
        # from n-1 into the + row
        j, ph = n - 1, 1.0
        if j < 0:
            j, ph = N - 1, (None if wrap is None else 1.0 / wrap)
        if ph is not None:
            W[rp, 2 * j] += ph * lam * qs[j, 0, 0]
            W[rp, 2 * j + 1] += ph * lam * qs[j, 0, 1]
        # from n+1 into the - row
        j, ph = n + 1, 1.0
        if j >= N:
            j, ph = 0, wrap
        if ph is not None:
            W[rm, 2 * j] += ph * lam * qs[j, 1, 0]
            W[rm, 2 * j + 1] += ph * lam * qs[j, 1, 1]
    return W


def walk_matrix(pair: CouplingPair, freq: Frequency, theta: float, n_min: int, n_max: int,
                periodic: bool = False) -> np.ndarray:
    """Dense truncated (or ring-closed) W on sites n_min..n_max."""
    qs = coins(pair, freq, theta, np.arange(n_min, n_max + 1))
    return assemble_walk_matrix(qs, pair.lambda1, 1.0 if periodic else None)


@dataclass(frozen=True)
class MomentSeries:
    t: np.ndarray
    norm: np.ndarray
    mean: np.ndarray
    sigma2: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.sigma2, 0.0))


@njit(cache=True, nogil=True)
def _evolve_kernel(q11, q12, q21, q22, lam, lamp, plus, minus, lo, hi, steps, n0):
    nsite = plus.shape[0]
    cp = np.zeros(nsite, dtype=np.complex128)
    cm = np.zeros(nsite, dtype=np.complex128)
    norm = np.empty(steps)
    mean = np.empty(steps)
    sig2 = np.empty(steps)
    for t in range(steps):
        for i in range(lo, hi + 1):
            a = plus[i]
            b = minus[i]
            cp[i] = q11[i] * a + q12[i] * b
            cm[i] = q21[i] * a + q22[i] * b
        cp[lo - 1] = 0.0
        cm[lo - 1] = 0.0
        cp[hi + 1] = 0.0
        cm[hi + 1] = 0.0
        for i in range(lo - 1, hi + 2):
            plus[i] = lam * cp[i - 1] - lamp * cm[i]
            minus[i] = lam * cm[i + 1] + lamp * cp[i]
        lo -= 1
        hi += 1
        s0 = 0.0
        s1 = 0.0
        for i in range(lo, hi + 1):
            w = plus[i].real ** 2 + plus[i].imag ** 2 + minus[i].real ** 2 + minus[i].imag ** 2
            s0 += w
            s1 += w * (i + n0)
        mu = s1 / s0
        s2 = 0.0
        for i in range(lo, hi + 1):
            w = plus[i].real ** 2 + plus[i].imag ** 2 + minus[i].real ** 2 + minus[i].imag ** 2
            d = i + n0 - mu
            s2 += w * d * d
        norm[t] = s0
        mean[t] = mu
        sig2[t] = s2 / s0
    return norm, mean, sig2


def evolve(pair: CouplingPair, freq: Frequency, theta: float, psi0: SpinorField, steps: int,
           window: tuple[int, int] | None = None, return_state: bool = False):
    """Exact evolution psi_t = W^t psi0 for t = 1..steps with position moments.

    The light cone grows one site per step, so a window containing
    [n_min - steps - 1, n_max + steps + 1] is boundary free. A smaller
    explicit window is refused. norm holds the squared norm.
    """
    steps = int(steps)
    if steps < 1:
        raise InvalidParameterError("steps must be >= 1")
    nz = np.nonzero(psi0.weights())[0]
    if len(nz) == 0:
        raise InvalidParameterError("initial state is zero")
    s_lo, s_hi = psi0.n_min + nz[0], psi0.n_min + nz[-1]
    need = (s_lo - steps - 1, s_hi + steps + 1)
    if window is None:
        window = need
    w_lo, w_hi = int(window[0]), int(window[1])
    if w_lo > need[0] or w_hi < need[1]:
        raise WindowTooSmallError(
            f"window [{w_lo}, {w_hi}] cannot hold the light cone [{need[0]}, {need[1]}]")
    # one extra zero cell on each side keeps the kernel free of bounds checks
    n0 = w_lo - 1
    field = psi0.restrict(s_lo, s_hi).embed(n0, w_hi + 1)
    qs = coins(pair, freq, theta, np.arange(n0, w_hi + 2))
    plus = field.plus.copy()
    minus = field.minus.copy()
    norm, mean, sig2 = _evolve_kernel(
        np.ascontiguousarray(qs[:, 0, 0]), np.ascontiguousarray(qs[:, 0, 1]),
        np.ascontiguousarray(qs[:, 1, 0]), np.ascontiguousarray(qs[:, 1, 1]),
        pair.lambda1, pair.lambda1p, plus, minus, s_lo - n0, s_hi - n0, steps, n0)
    series = MomentSeries(np.arange(1, steps + 1), norm, mean, sig2)
    if return_state:
        return series, SpinorField(n0, plus, minus)
    return series


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    stderr: float
    intercept: float


def scaling_exponent(series: MomentSeries, window: tuple[int, int] | None = None) -> ScalingFit:
    """Least-squares slope of log sigma against log t on window [t_lo, t_hi].

    Points are thinned to a logarithmic grid so that late times do not
    dominate the fit. Raises DegenerateSeriesError for zero variance.
    """
    t = np.asarray(series.t, dtype=float)
    t_lo, t_hi = window if window is not None else (max(1.0, t[-1] / 10), t[-1])
    if not (t_hi > t_lo >= 1):
        raise InvalidParameterError("need t_hi > t_lo >= 1")
    mask = (t >= t_lo) & (t <= t_hi)
    sig = series.sigma[mask]
    tt = t[mask]
    if len(tt) < 3:
        raise InvalidParameterError("fit window holds fewer than 3 points")
    if np.any(sig <= 1e-12 * max(1.0, np.max(sig))) or np.max(sig) == 0:
        raise DegenerateSeriesError("deterministic/zero-variance")
    grid = np.unique(np.searchsorted(tt, np.geomspace(tt[0], tt[-1], 200)).clip(0, len(tt) - 1))
    fit = stats.linregress(np.log(tt[grid]), np.log(sig[grid]))
    return ScalingFit(float(fit.slope), float(fit.stderr), float(fit.intercept))
