"""Two-dimensional magnetic walk W2 = T1 C0 T2 C0 on an L x L torus.

Basis: the + spin block comes first, then the - spin block; inside a block
site (n1, n2) sits at index n1 * L + n2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CouplingPair, Frequency
from .errors import InvalidParameterError

__all__ = [
    "C0",
    "TorusWalk",
    "magnetic_shift",
    "magnetic_translation",
    "walk2d_build",
    "walk2d_spectrum",
    "transition_weights",
]

C0 = np.array([[1, 1j], [-1j, -1]]) / math.sqrt(2)


def _flux(flux) -> Frequency:
    f = flux if isinstance(flux, Frequency) else Frequency.rational(*flux) if isinstance(flux, tuple) \
        else Frequency.parse(flux)
    if not f.is_rational:
        raise InvalidParameterError("flux must be rational on a finite torus")
    return f


def _check_L(L: int, f: Frequency):
    if L <= 0 or L % (2 * f.q):
        raise InvalidParameterError(f"L = {L} must be a positive multiple of 2q = {2 * f.q}")


def _phase(p: int, q: int, n: np.ndarray, sign: int) -> np.ndarray:
    """exp(sign * i pi p n / q), reduced exactly mod 2q."""
    k = np.mod(sign * p * n, 2 * q)
    return np.exp(1j * np.pi * k / q)


def magnetic_shift(axis: int, flux, L: int) -> np.ndarray:
    """U_1: d_n -> e^{-i pi Phi n2} d_{n+e1};  U_2: d_n -> e^{i pi Phi n1} d_{n+e2}."""
    f = _flux(flux)
    _check_L(L, f)
    n1, n2 = np.divmod(np.arange(L * L), L)
    if axis == 1:
        dest = np.mod(n1 + 1, L) * L + n2
        ph = _phase(f.p, f.q, n2, -1)
    elif axis == 2:
        dest = n1 * L + np.mod(n2 + 1, L)
        ph = _phase(f.p, f.q, n1, +1)
    else:
        raise InvalidParameterError("axis must be 1 or 2")
    U = np.zeros((L * L, L * L), dtype=complex)
    U[dest, np.arange(L * L)] = ph
    return U


def magnetic_translation(axis: int, lam: float, flux, L: int) -> np.ndarray:
    """Coupled translation [[lam U, -lam'], [lam', lam U*]] of size 2L^2."""
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise InvalidParameterError("lambda must lie in [0, 1]")
    lamp = math.sqrt((1.0 - lam) * (1.0 + lam))
    U = magnetic_shift(axis, flux, L)
    eye = np.eye(L * L)
    return np.block([[lam * U, -lamp * eye], [lamp * eye, lam * U.conj().T]])


@dataclass(frozen=True)
class TorusWalk:
    L: int
    flux: Frequency
    pair: CouplingPair
    matrix: np.ndarray


def walk2d_build(pair: CouplingPair, flux, L: int) -> TorusWalk:
    f = _flux(flux)
    _check_L(L, f)
    C = np.kron(C0, np.eye(L * L))
    T1 = magnetic_translation(1, pair.lambda1, f, L)
    T2 = magnetic_translation(2, pair.lambda2, f, L)
    return TorusWalk(L, f, pair, T1 @ C @ T2 @ C)


def walk2d_spectrum(tw: TorusWalk) -> np.ndarray:
    """Eigenangles in [0, 2 pi), ascending."""
    ev = np.linalg.eigvals(tw.matrix)
    return np.sort(np.mod(np.angle(ev), 2 * math.pi))


def transition_weights(tw: TorusWalk, spin: int | None = None) -> dict:
    """Probability moved by one step from a point source, keyed by displacement.

    With spin=None the two spin sources are averaged, which is the symmetric
    neighbourhood picture: 1/4 (l1 l2)^2 on the diagonals, 1/2 (l1 l2')^2 on
    +-e1, 1/2 (l1' l2)^2 on +-e2 and (l1' l2')^2 on site.
    """
    if spin is None:
        a, b = transition_weights(tw, 1), transition_weights(tw, -1)
        return {k: 0.5 * (a.get(k, 0.0) + b.get(k, 0.0)) for k in sorted(set(a) | set(b))}
    L = tw.L
    src = (L // 2) * L + L // 2
    v = np.zeros(2 * L * L, dtype=complex)
    v[src if spin > 0 else L * L + src] = 1.0
    w = tw.matrix @ v
    prob = np.abs(w[:L * L]) ** 2 + np.abs(w[L * L:]) ** 2
    out = {}
    for idx in np.flatnonzero(prob > 1e-14):
        out[(int(idx // L - L // 2), int(idx % L - L // 2))] = float(prob[idx])
    return out
