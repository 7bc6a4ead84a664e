"""Spectra at rational frequency: Bloch bands, discriminant, butterflies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import CouplingPair, Frequency
from .errors import InvalidParameterError, NonConvergenceError, SingularCoinError
from .walk import assemble_walk_matrix, coins

__all__ = [
    "BandSet",
    "ButterflyRow",
    "MeasureTrend",
    "bloch_matrix",
    "bloch_eigenangles",
    "band_set",
    "band_edges",
    "union_band_set",
    "closed_form_band_set",
    "discriminant",
    "butterfly",
    "band_measure_trend",
    "symmetry_check",
]

TWO_PI = 2 * math.pi
MERGE_TOL = 1e-6
_STACK_ENTRIES = 1 << 22


def _wrap(x):
    """Map angle differences into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x), TWO_PI)


class BandSet:
    """Finite union of closed arcs of the unit circle, stored as angle intervals.

    Arcs are disjoint, sorted, and lie in [0, 2 pi]; an arc through angle 0
    is kept as two pieces ending at 0 and 2 pi. Zero-length arcs (isolated
    points) are allowed.
    """

    def __init__(self, arcs: Iterable[tuple[float, float]] = (), tol: float = MERGE_TOL):
        self.arcs = _merge(arcs if isinstance(arcs, np.ndarray) else list(arcs), tol)

    @property
    def measure(self) -> float:
        return float(sum(hi - lo for lo, hi in self.arcs))

    def __len__(self):
        return len(self.arcs)

    def __iter__(self):
        return iter(self.arcs)

    def __repr__(self):
        return f"BandSet({len(self.arcs)} arcs, measure={self.measure:.6g})"

    def union(self, other: "BandSet", tol: float = MERGE_TOL) -> "BandSet":
        return BandSet(list(self.arcs) + list(other.arcs), tol)

    def edges(self) -> np.ndarray:
        pts = [e for arc in self.arcs for e in arc if 0.0 < e < TWO_PI]
        return np.array(sorted(pts))

    def distance(self, angles) -> np.ndarray:
        """Circular distance from each angle to the set (0 inside)."""
        a = np.mod(np.atleast_1d(np.asarray(angles, float)), TWO_PI)
        if not self.arcs:
            return np.full(a.shape, np.inf)
        lo = np.array([x[0] for x in self.arcs])
        hi = np.array([x[1] for x in self.arcs])
        inside = np.any((a[:, None] >= lo) & (a[:, None] <= hi), axis=1)
        ends = np.concatenate([lo, hi])
        d = np.min(np.abs(_wrap(a[:, None] - ends[None, :])), axis=1)
        return np.where(inside, 0.0, d)

    def contains(self, angles, tol: float = 0.0) -> np.ndarray:
        return self.distance(angles) <= tol

    def gaps(self) -> list[tuple[float, float]]:
        """Complementary open arcs as (lo, hi) with hi possibly beyond 2 pi."""
        if not self.arcs:
            return [(0.0, TWO_PI)]
        out = []
        arcs = self.arcs
        for (a_lo, a_hi), (b_lo, b_hi) in zip(arcs[:-1], arcs[1:]):
            if b_lo > a_hi:
                out.append((a_hi, b_lo))
        first, last = arcs[0], arcs[-1]
        wrap_lo, wrap_hi = last[1], first[0] + TWO_PI
        if wrap_hi > wrap_lo:
            out.append((wrap_lo, wrap_hi))
        return out

    def hausdorff(self, other: "BandSet") -> float:
        return max(_directed(self, other), _directed(other, self))


def _merge(arcs, tol):
    if len(arcs) == 0:
        return []
    a = np.asarray(arcs, dtype=float).reshape(-1, 2)
    lo, hi = a[:, 0], a[:, 1]
    if np.any(hi < lo):
        raise InvalidParameterError("arc with hi < lo")
    full = hi - lo >= TWO_PI
    base = np.floor(lo / TWO_PI) * TWO_PI
    lo, hi = lo - base, hi - base
    over = (hi > TWO_PI) & ~full
    lo = np.concatenate([np.where(full, 0.0, lo), np.zeros(over.sum())])
    hi = np.concatenate([np.where(full, TWO_PI, np.minimum(hi, TWO_PI)), hi[over] - TWO_PI])
    order = np.lexsort((hi, lo))
    lo, hi = lo[order], hi[order]
    reach = np.maximum.accumulate(hi)
    # a new arc starts wherever lo clears everything before it
    start = np.ones(len(lo), dtype=bool)
    start[1:] = lo[1:] > reach[:-1] + tol
    idx = np.flatnonzero(start)
    ends = np.append(idx[1:], len(lo)) - 1
    return [(float(lo[i]), float(reach[j])) for i, j in zip(idx, ends)]


def _directed(X: BandSet, Y: BandSet) -> float:
    """sup over x in X of dist(x, Y)."""
    if not X.arcs:
        return 0.0
    if not Y.arcs:
        return math.inf
    cand = [e for arc in X.arcs for e in arc]
    for g_lo, g_hi in Y.gaps():
        mid = 0.5 * (g_lo + g_hi) % TWO_PI
        if X.contains(mid)[0]:
            cand.append(mid)
    return float(np.max(Y.distance(np.array(cand))))


# ---------------------------------------------------------------------------
# Bloch reduction


def _freq_pq(freq) -> tuple[int, int]:
    if isinstance(freq, Frequency):
        if not freq.is_rational:
            raise InvalidParameterError("Bloch reduction needs a rational frequency")
        return freq.p, freq.q
    p, q = freq
    f = Frequency.rational(p, q)
    return f.p, f.q


def bloch_matrix(pair: CouplingPair, freq, theta: float, k: float) -> np.ndarray:
    """2q x 2q Floquet-Bloch matrix with psi_{n+q} = e^{ik} psi_n."""
    p, q = _freq_pq(freq)
    qs = coins(pair, Frequency.rational(p, q), theta, np.arange(q))
    return assemble_walk_matrix(qs, pair.lambda1, complex(math.cos(k), math.sin(k)))


def bloch_eigenangles(pair: CouplingPair, freq, theta: float, ks, pole: float | None = None) -> np.ndarray:
    """Sorted eigenangles in [0, 2 pi) for each k, shape (len(ks), 2q).

    With ``pole`` set (an angle inside a spectral gap) the unitary U is
    mapped to the Hermitian Cayley transform i(1 - wU)(1 + wU)^{-1},
    w = -e^{-i pole}, whose eigenvalues tan((phi - pole + pi)/2) are
    cheaper to get. Falls back to the general solver if the pole sits too
    close to an eigenvalue.
    """
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    _, q = _freq_pq(freq)
    # cap the stack at a few million entries to keep memory flat for large q
    chunk = max(1, _STACK_ENTRIES // (4 * q * q))
    if len(ks) > chunk:
        return np.concatenate([bloch_eigenangles(pair, freq, theta, ks[i:i + chunk], pole)
                               for i in range(0, len(ks), chunk)])
    mats = _bloch_stack(pair, freq, theta, ks)
    if pole is not None:
        alpha = math.pi - pole
        w = complex(math.cos(alpha), math.sin(alpha))
        eye = np.eye(mats.shape[1])
        H = np.linalg.solve(eye + w * mats, 1j * (eye - w * mats))
        H = 0.5 * (H + np.conj(np.swapaxes(H, 1, 2)))
        h = np.linalg.eigvalsh(H)
        if np.max(np.abs(h)) < 1e6:
            return np.sort(np.mod(2 * np.arctan(h) - alpha, TWO_PI), axis=1)
    ev = np.linalg.eigvals(mats)
    return np.sort(np.mod(np.angle(ev), TWO_PI), axis=1)


def _bloch_stack(pair, freq, theta, ks):
    """Bloch matrices for many k: open part plus the two seam terms."""
    p, q = _freq_pq(freq)
    qs = coins(pair, Frequency.rational(p, q), theta, np.arange(q))
    open_ = assemble_walk_matrix(qs, pair.lambda1, None)
    w1 = assemble_walk_matrix(qs, pair.lambda1, 1.0) - open_
    wi = assemble_walk_matrix(qs, pair.lambda1, 1j) - open_
    fwd = 0.5 * (w1 - 1j * wi)
    bwd = 0.5 * (w1 + 1j * wi)
    e = np.exp(1j * ks)[:, None, None]
    return open_[None] + e * fwd[None] + np.conj(e) * bwd[None]


def _gap_midpoint(angles: np.ndarray) -> float | None:
    """Middle of the widest gap between sorted angles, if it is reasonably wide."""
    ext = np.append(angles, angles[0] + TWO_PI)
    gaps = np.diff(ext)
    i = int(np.argmax(gaps))
    if gaps[i] < 1e-3:
        return None
    return float((ext[i] + 0.5 * gaps[i]) % TWO_PI)


def _edge_phase(pair: CouplingPair, p: int, q: int, theta: float) -> float:
    """k at which band edges sit: half the phase of the period's coin determinant ratio."""
    qs = coins(pair, Frequency.rational(p, q), theta, np.arange(q))
    ph = np.sum(np.angle(np.sqrt(qs[:, 0, 0])) - np.angle(np.sqrt(qs[:, 1, 1])))
    return float(ph)


def _sweep_arcs(angles: np.ndarray) -> np.ndarray:
    """Arcs traced by eigenvalue branches between consecutive k samples.

    Eigenvalues keep their cyclic order along k, so consecutive sorted
    lists are matched up to a cyclic shift, chosen to minimize total motion.
    """
    n = angles.shape[1]
    idx = (np.arange(n)[None, :] + np.arange(n)[:, None]) % n
    los, his = [], []
    for a, b in zip(angles[:-1], angles[1:]):
        cost = np.sum(np.abs(_wrap(b[idx] - a[None, :])), axis=1)
        d = _wrap(b[idx[int(np.argmin(cost))]] - a)
        lo = np.where(d >= 0, a, a + d)
        los.append(lo)
        his.append(lo + np.abs(d))
    return np.stack([np.concatenate(los), np.concatenate(his)], axis=1)


def closed_form_band_set(pair: CouplingPair) -> BandSet:
    """Spectrum when lambda1 = 0 or lambda2 = 0: {|Re z| <= lambda}, or {+-i}."""
    l1, l2 = pair.lambda1, pair.lambda2
    if l1 > 0 and l2 > 0:
        raise InvalidParameterError("closed form only for lambda1 = 0 or lambda2 = 0")
    lam = max(l1, l2)
    a = math.acos(lam)
    return BandSet([(a, math.pi - a), (math.pi + a, TWO_PI - a)], tol=0.0)


def band_set(pair: CouplingPair, freq, theta: float = 0.0, k_samples: int | None = None,
             method: str = "auto", refine: bool = True, max_doublings: int = 4) -> BandSet:
    """Spectrum of the period-q walk at fixed theta as a BandSet.

    The Bloch phase k is swept over half a period starting at the band-edge
    phase, where every branch runs monotonically from one edge of its band
    to the other. With refine=True the sampling is doubled until the
    measure changes by less than 1e-4.
    """
    p, q = _freq_pq(freq)
    if method == "auto" and (pair.lambda1 == 0 or pair.lambda2 == 0):
        return closed_form_band_set(pair)
    if method not in ("auto", "bloch"):
        raise InvalidParameterError("method must be 'auto' or 'bloch'")
    k_samples = 8 * q if k_samples is None else int(k_samples)
    if k_samples < 8 * q:
        raise InvalidParameterError("k_samples must be at least 8q")
    k0 = _edge_phase(pair, p, q, theta)

    first = bloch_eigenangles(pair, (p, q), theta, [k0])[0]
    pole = _gap_midpoint(first)

    def angles_on(m, prev=None):
        ks = k0 + np.linspace(0.0, math.pi, m + 1)
        if prev is None:
            return bloch_eigenangles(pair, (p, q), theta, ks, pole)
        # reuse the coarser grid, which is every other point of this one
        out = np.empty((m + 1, 2 * q))
        out[0::2] = prev
        out[1::2] = bloch_eigenangles(pair, (p, q), theta, ks[1::2], pole)
        return out

    m = max(4, k_samples // 2)
    ang = angles_on(m)
    bands = BandSet(_sweep_arcs(ang))
    if not refine:
        return bands
    for _ in range(max_doublings):
        m *= 2
        ang = angles_on(m, ang)
        finer = BandSet(_sweep_arcs(ang))
        if abs(finer.measure - bands.measure) < 1e-4:
            return finer
        bands = finer
    raise NonConvergenceError("band measure did not stabilize under k refinement")


def band_edges(pair: CouplingPair, freq, theta: float = 0.0) -> np.ndarray:
    """All 4q branch endpoints, sorted; closed gaps show up as repeated edges."""
    p, q = _freq_pq(freq)
    k0 = _edge_phase(pair, p, q, theta)
    return np.sort(bloch_eigenangles(pair, (p, q), theta, [k0, k0 + math.pi]).ravel())


def union_band_set(pair: CouplingPair, freq, thetas: Sequence[float], k_samples: int | None = None,
                   refine: bool = True, map_fn: Callable = map) -> BandSet:
    sets = list(map_fn(lambda t: band_set(pair, freq, t, k_samples, refine=refine), thetas))
    out = BandSet()
    for s in sets:
        out = out.union(s)
    return out


def discriminant(pair: CouplingPair, freq, theta: float, z) -> np.ndarray:
    """Trace of the determinant-normalized one-period transfer matrix.

    Vectorized over z. The square root of det = prod q11/q22 is taken
    factor-wise, which makes D real on the unit circle.
    """
    p, q = _freq_pq(freq)
    if pair.lambda1 <= 0:
        raise InvalidParameterError("discriminant needs lambda1 > 0")
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    qs = coins(pair, Frequency.rational(p, q), theta, np.arange(q))
    if np.any(np.abs(qs[:, 1, 1]) <= 1e-13):
        raise SingularCoinError("off-diagonal coin on the period")
    l1, l1p = pair.lambda1, pair.lambda1p
    M = np.zeros(z.shape + (2, 2), dtype=complex)
    M[..., 0, 0] = 1.0
    M[..., 1, 1] = 1.0
    norm = 1.0 + 0j
    for qn in qs:
        q11, q12, q21, q22 = qn[0, 0], qn[0, 1], qn[1, 0], qn[1, 1]
        T = np.empty(z.shape + (2, 2), dtype=complex)
        T[..., 0, 0] = (1.0 / z + l1p * (q21 - q12) + z * l1p ** 2) / l1
        T[..., 0, 1] = q12 - l1p * z
        T[..., 1, 0] = -q21 - l1p * z
        T[..., 1, 1] = l1 * z
        M = (T / q22) @ M
        norm *= np.sqrt(q11) / np.sqrt(q22)
    return (M[..., 0, 0] + M[..., 1, 1]) / norm


@dataclass(frozen=True)
class ButterflyRow:
    p: int
    q: int
    bands: BandSet

    @property
    def phi(self) -> float:
        return self.p / self.q


def _theta_grid(q: int, mode: str, theta: float = 0.0, n_theta: int = 8):
    if mode == "single":
        return [theta]
    if mode == "union":
        return [theta + j / (n_theta * q) for j in range(n_theta)]
    raise InvalidParameterError("theta_mode must be 'union' or 'single'")


def butterfly(pair: CouplingPair, q_max: int, theta_mode: str = "union", k_samples: int | None = None,
              theta: float = 0.0, n_theta: int = 8, refine: bool = True,
              map_fn: Callable = map) -> list[ButterflyRow]:
    """Band sets for every p/q in lowest terms with q <= q_max, ordered by (q, p)."""
    if q_max < 2:
        raise InvalidParameterError("q_max must be >= 2")
    fracs = [(0, 1)] + [(p, q) for q in range(2, q_max + 1) for p in range(1, q) if math.gcd(p, q) == 1]

    def row(pq):
        p, q = pq
        ks = None if k_samples is None else max(int(k_samples), 8 * q)
        bands = union_band_set(pair, (p, q), _theta_grid(q, theta_mode, theta, n_theta), ks, refine)
        return ButterflyRow(p, q, bands)

    return list(map_fn(row, fracs))


@dataclass(frozen=True)
class MeasureTrend:
    qs: list
    measures: list

    @property
    def strictly_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.measures[:-1], self.measures[1:]))


def band_measure_trend(pair: CouplingPair, convs: Sequence[tuple[int, int]], theta: float = 0.0,
                       k_samples: int | None = None) -> MeasureTrend:
    """Band measures at fixed theta along a list of convergents p/q."""
    if pair.lambda1 == 0 and pair.lambda2 == 0:
        raise InvalidParameterError("lambda1 = lambda2 = 0 has spectrum {+-i}; nothing to trend")
    meas = [band_set(pair, pq, theta, k_samples).measure for pq in convs]
    return MeasureTrend([q for _, q in convs], meas)


def symmetry_check(pair: CouplingPair, freq, theta_grid: Sequence[float] | None = None,
                   k_samples: int | None = None, map_fn: Callable = map) -> float:
    """Hausdorff distance between the theta-union spectra of (l1, l2) and (l2, l1)."""
    p, q = _freq_pq(freq)
    if theta_grid is None:
        theta_grid = _theta_grid(q, "union")
    a = union_band_set(pair, (p, q), theta_grid, k_samples, map_fn=map_fn)
    if pair.lambda1 == pair.lambda2:
        return 0.0 if a.arcs else math.inf
    b = union_band_set(pair.swapped(), (p, q), theta_grid, k_samples, map_fn=map_fn)
    return a.hausdorff(b)
