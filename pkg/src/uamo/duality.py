"""Aubry duality at the level of solutions, localized eigenpairs, decay rates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .core import CouplingPair, Frequency
from .errors import InvalidParameterError
from .walk import SpinorField, walk_matrix, walk_transpose_apply

__all__ = [
    "EigenPair",
    "DualSolution",
    "DUAL_ROTATION",
    "participation_ratio",
    "localized_eigenpairs",
    "decay_rate",
    "truncate_to_tail_mass",
    "dual_solution",
    "dual_residual",
]

DUAL_ROTATION = np.array([[1, 1j], [1j, 1]]) / math.sqrt(2)


@dataclass(frozen=True)
class EigenPair:
    z: complex
    psi: SpinorField
    residual: float
    decay_rate: float | None
    participation: float
    degenerate: bool = False


@dataclass(frozen=True)
class DualSolution:
    xi: float
    phi: SpinorField


def participation_ratio(psi: SpinorField) -> float:
    """1 / sum_n w_n^2 for the normalized site weights w_n."""
    w = psi.weights()
    w = w / w.sum()
    return float(1.0 / np.sum(w ** 2))


def _rational(freq) -> Frequency:
    f = freq if isinstance(freq, Frequency) else Frequency.rational(*freq)
    if not f.is_rational:
        raise InvalidParameterError("eigenpairs need a rational frequency (use a convergent)")
    return f


def localized_eigenpairs(pair: CouplingPair, freq, theta: float = 0.0, top_m: int = 10,
                         cluster_tol: float = 1e-9) -> list[EigenPair]:
    """The top_m eigenvectors of the period-q ring with smallest participation ratio.

    The ring of q sites carries q-periodic coins, so it is exactly unitary.
    A complex Schur form gives an orthonormal eigenbasis. Each vector is
    re-centred so its peak sits in the middle of a window of q consecutive
    sites; its largest component is made real and positive.
    """
    f = _rational(freq)
    q = f.q
    W = walk_matrix(pair, f, theta, 0, q - 1, periodic=True)
    T, Z = linalg.schur(W, output="complex")
    zs = np.diag(T)
    out = []
    for j in range(2 * q):
        v = Z[:, j]
        ring = SpinorField.from_vector(0, v)
        w = ring.weights()
        peak = int(np.argmax(w))
        start = peak - q // 2
        order = np.mod(np.arange(start, start + q), q)
        plus, minus = ring.plus[order], ring.minus[order]
        k = int(np.argmax(np.abs(np.concatenate([plus, minus]))))
        big = np.concatenate([plus, minus])[k]
        ph = np.conj(big) / abs(big)
        psi = SpinorField(start, plus * ph, minus * ph)
        res = float(np.linalg.norm(W @ v - zs[j] * v))
        others = np.abs(np.delete(zs, j) - zs[j])
        out.append(EigenPair(complex(zs[j]), psi, res, None, participation_ratio(psi),
                             bool(others.size and others.min() < cluster_tol)))
    out.sort(key=lambda e: e.participation)
    chosen = out[:top_m]
    return [EigenPair(e.z, e.psi, e.residual, decay_rate(e.psi), e.participation, e.degenerate)
            for e in chosen]


def decay_rate(psi: SpinorField, tail_fraction: float = 0.1) -> float | None:
    """Exponential decay rate of |psi_n^+| + |psi_n^-| away from the peak.

    Least-squares slope of the log amplitude against |n - n_peak|, with the
    outer tail_fraction of distances left out. Returns math.inf when the
    vector vanishes exactly somewhere in the window (compact support) and
    None when it does not decay.
    """
    amp = np.abs(psi.plus) + np.abs(psi.minus)
    if amp.max() == 0:
        raise InvalidParameterError("zero vector")
    if np.any(amp == 0):
        return math.inf
    i0 = int(np.argmax(amp))
    d = np.abs(np.arange(len(amp)) - i0)
    keep = d <= (1.0 - tail_fraction) * d.max()
    if np.count_nonzero(keep) < 3 or len(np.unique(d[keep])) < 2:
        return None
    slope = np.polyfit(d[keep], np.log(amp[keep]), 1)[0]
    rate = -float(slope)
    return rate if rate > 0 else None


def truncate_to_tail_mass(psi: SpinorField, tau: float) -> tuple[SpinorField, float]:
    """Smallest window around the peak whose outside mass is at most tau.

    psi is normalized first. Returns the truncated field (not renormalized)
    and the discarded mass.
    """
    w = psi.weights()
    total = w.sum()
    w = w / total
    i0 = int(np.argmax(w))
    n = len(w)
    for r in range(n):
        lo, hi = max(0, i0 - r), min(n - 1, i0 + r)
        outside = 1.0 - w[lo:hi + 1].sum()
        if outside <= tau:
            break
    s = 1.0 / math.sqrt(total)
    cut = SpinorField(psi.n_min + lo, psi.plus[lo:hi + 1] * s, psi.minus[lo:hi + 1] * s)
    return cut, float(max(outside, 0.0))


def dual_solution(psi: SpinorField, theta: float, freq: Frequency, xi: float,
                  n_range: tuple[int, int]) -> DualSolution:
    """phi_n = e^{2 pi i n theta} R (psi-check^+, psi-check^-)(n Phi + xi) / ..., n in n_range.

    psi-check(x) = sum_m e^{2 pi i m x} psi_m and R = (1/sqrt 2)[[1, i], [i, 1]].
    """
    f = freq if isinstance(freq, Frequency) else Frequency.parse(freq)
    n = np.arange(n_range[0], n_range[1] + 1)
    x = f.phases(n, xi)
    m = psi.sites
    E = np.exp(2j * np.pi * np.outer(x, m))
    cp, cm = E @ psi.plus, E @ psi.minus
    phase = np.exp(2j * np.pi * np.mod(n * float(theta), 1.0))
    r = DUAL_ROTATION
    plus = phase * (r[0, 0] * cp + r[0, 1] * cm)
    minus = phase * (r[1, 0] * cp + r[1, 1] * cm)
    return DualSolution(float(xi), SpinorField(int(n[0]), plus, minus))


def dual_residual(pair: CouplingPair, z: complex, dual: DualSolution, freq: Frequency, xi: float,
                  window: tuple[int, int] | None = None) -> float:
    """max over the window of |(W# phi)_n - z phi_n|, W# = W^T with couplings swapped and phase xi."""
    phi = dual.phi
    if window is None:
        window = (phi.n_min + 1, phi.n_max - 1)
    a, b = window
    if a < phi.n_min + 1 or b > phi.n_max - 1 or a > b:
        raise InvalidParameterError("window must lie inside the constructed range, one site in")
    out = walk_transpose_apply(pair.swapped(), freq, xi, phi)
    i0, j0 = a - out.n_min, a - phi.n_min
    L = b - a + 1
    rp = out.plus[i0:i0 + L] - z * phi.plus[j0:j0 + L]
    rm = out.minus[i0:i0 + L] - z * phi.minus[j0:j0 + L]
    return float(max(np.max(np.abs(rp)), np.max(np.abs(rm))))
