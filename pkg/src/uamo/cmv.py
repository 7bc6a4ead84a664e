"""The walk as a generalized extended CMV matrix E = LM.

Index map: delta_n^+ -> 2n - 1 and delta_n^- -> 2n, so the natural site/spin
ordering of the walk basis is already the CMV ordering. Even pairs carry
the shift coupling, odd pairs the coins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CouplingPair, Frequency
from .errors import InvalidParameterError
from .walk import coins, walk_matrix

__all__ = [
    "VerblunskyPair",
    "theta_block",
    "walk_to_verblunsky",
    "lm_build",
    "cmv_equals_walk",
    "verblunsky_records",
]


@dataclass(frozen=True)
class VerblunskyPair:
    index: int
    alpha: complex
    rho: complex

    def __post_init__(self):
        if abs(abs(self.alpha) ** 2 + abs(self.rho) ** 2 - 1.0) > 1e-12:
            raise InvalidParameterError("(alpha, rho) must lie on the unit sphere")


def theta_block(alpha: complex, rho: complex) -> np.ndarray:
    return np.array([[np.conj(alpha), rho], [np.conj(rho), -alpha]], dtype=complex)


def walk_to_verblunsky(pair: CouplingPair, freq: Frequency, theta: float,
                       n_range: tuple[int, int]) -> list[VerblunskyPair]:
    """Pairs with indices 2n-1 (coin Q_n) and 2n (shift) for n in n_range."""
    n = np.arange(n_range[0], n_range[1] + 1)
    qs = coins(pair, freq, theta, n)
    out = []
    for k, qn in zip(n, qs):
        # Q_n = [[conj(rho), -alpha], [conj(alpha), rho]]
        out.append(VerblunskyPair(2 * int(k) - 1, complex(-qn[0, 1]), complex(qn[1, 1])))
        out.append(VerblunskyPair(2 * int(k), complex(pair.lambda1p), complex(pair.lambda1)))
    return out


def lm_build(pairs: list[VerblunskyPair], periodic: bool = False):
    """(L, M, E) on the index window covered by pairs.

    L holds the blocks Theta(alpha_j, rho_j) on {j, j+1} for even j, M those
    for odd j. Blocks sticking out of the window are cut to their diagonal
    entry unless periodic=True, in which case the window closes into a ring.
    The block ending at the first index starts outside the window and is
    left out entirely.
    """
    pairs = sorted(pairs, key=lambda v: v.index)
    idx = [v.index for v in pairs]
    j0 = idx[0]
    N = len(pairs)
    if idx != list(range(j0, j0 + N)):
        raise InvalidParameterError("pairs must cover a contiguous index window")
    if periodic and N % 2:
        raise InvalidParameterError("a periodic window needs an even number of indices")
    L = np.zeros((N, N), dtype=complex)
    M = np.zeros((N, N), dtype=complex)
    for v in pairs:
        target = L if v.index % 2 == 0 else M
        blk = theta_block(v.alpha, v.rho)
        i = v.index - j0
        k = i + 1
        if k >= N:
            if not periodic:
                target[i, i] += blk[0, 0]
                continue
            k = 0
        target[i, i] += blk[0, 0]
        target[i, k] += blk[0, 1]
        target[k, i] += blk[1, 0]
        target[k, k] += blk[1, 1]
    return L, M, L @ M


def cmv_equals_walk(pair: CouplingPair, freq: Frequency, theta: float, m: int = 6) -> float:
    """Max entrywise |W - E| over interior rows for sites -m..m."""
    if m < 3:
        raise InvalidParameterError("m must be at least 3")
    W = walk_matrix(pair, freq, theta, -m, m)
    pairs = walk_to_verblunsky(pair, freq, theta, (-m, m))
    _, _, E = lm_build(pairs)
    # rows whose L- and M-blocks both lie inside the window
    rows = slice(3, E.shape[0] - 3)
    return float(np.max(np.abs(W[rows] - E[rows])))


def verblunsky_records(pairs: list[VerblunskyPair]) -> list[dict]:
    return [{"n": v.index, "alpha_re": v.alpha.real, "alpha_im": v.alpha.imag,
             "rho_re": v.rho.real, "rho_im": v.rho.imag} for v in pairs]
