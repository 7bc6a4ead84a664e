"""Coupling constants, frequencies, phases and continued fractions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .errors import InvalidParameterError

__all__ = [
    "UNDEFINED",
    "CouplingPair",
    "Frequency",
    "Phase",
    "SpectralPoint",
    "complement",
    "lambda0",
    "convergents",
    "beta_lower_bound",
    "GOLDEN",
]


class _Undefined:
    """Sentinel for lambda0 at lambda1 = lambda2 = 0."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNDEFINED"

    def __bool__(self):
        return False


UNDEFINED = _Undefined()


def _check_unit(name: str, value: float) -> float:
    value = float(value)
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise InvalidParameterError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def complement(lam: float) -> float:
    """Return lambda' = sqrt(1 - lambda^2)."""
    lam = _check_unit("lambda", lam)
    # (1-l)(1+l) keeps relative accuracy near l = 1
    return math.sqrt((1.0 - lam) * (1.0 + lam))


@dataclass(frozen=True)
class CouplingPair:
    """Shift coupling lambda1 and coin coupling lambda2."""

    lambda1: float
    lambda2: float
    lambda1p: float = field(init=False)
    lambda2p: float = field(init=False)

    def __post_init__(self):
        l1 = _check_unit("lambda1", self.lambda1)
        l2 = _check_unit("lambda2", self.lambda2)
        object.__setattr__(self, "lambda1", l1)
        object.__setattr__(self, "lambda2", l2)
        object.__setattr__(self, "lambda1p", complement(l1))
        object.__setattr__(self, "lambda2p", complement(l2))

    @property
    def lambda0(self):
        return lambda0(self)

    @property
    def regime(self) -> str:
        if self.lambda1 > self.lambda2:
            return "subcritical"
        if self.lambda1 < self.lambda2:
            return "supercritical"
        return "critical"

    def swapped(self) -> "CouplingPair":
        return CouplingPair(self.lambda2, self.lambda1)


def lambda0(pair: CouplingPair):
    """Effective coupling lambda2 (1 + lambda1') / (lambda1 (1 + lambda2')).

    Returns ``math.inf`` when lambda1 = 0 < lambda2 and the ``UNDEFINED``
    sentinel when both couplings vanish.
    """
    l1, l2 = pair.lambda1, pair.lambda2
    if l1 == 0.0:
        return UNDEFINED if l2 == 0.0 else math.inf
    return l2 * (1.0 + pair.lambda1p) / (l1 * (1.0 + pair.lambda2p))


@dataclass(frozen=True)
class Frequency:
    """Rotation number: exact rational p/q or a real number in (0, 1).

    Orbit phases n*Phi + theta are reduced mod 1 with integer arithmetic
    in the rational case and in long double precision otherwise.
    """

    p: int | None = None
    q: int | None = None
    x: float | None = None
    _xl: np.longdouble | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.x is None:
            if self.p is None or self.q is None:
                raise InvalidParameterError("need either p and q, or x")
            p, q = int(self.p), int(self.q)
            if q <= 0:
                raise InvalidParameterError("q must be positive")
            g = math.gcd(p, q)
            p, q = (p // g) % (q // g), q // g
            object.__setattr__(self, "p", p)
            object.__setattr__(self, "q", q)
        else:
            x = float(self.x)
            if not (0.0 < x < 1.0):
                raise InvalidParameterError(f"real frequency must lie in (0, 1), got {x!r}")
            object.__setattr__(self, "x", x)
            if self._xl is None:
                object.__setattr__(self, "_xl", np.longdouble(x))

    @classmethod
    def rational(cls, p: int, q: int) -> "Frequency":
        return cls(p=p, q=q)

    @classmethod
    def real(cls, x: float) -> "Frequency":
        return cls(x=x)

    @classmethod
    def golden(cls) -> "Frequency":
        xl = (np.sqrt(np.longdouble(5)) - 1) / 2
        return cls(x=float(xl), _xl=xl)

    @classmethod
    def parse(cls, text: Union[str, float, "Frequency"]) -> "Frequency":
        """Accept 'golden', 'p/q' or a decimal."""
        if isinstance(text, Frequency):
            return text
        if isinstance(text, (int, float)):
            return cls.real(float(text))
        s = str(text).strip().lower()
        if s == "golden":
            return cls.golden()
        if "/" in s:
            num, den = s.split("/", 1)
            try:
                return cls.rational(int(num), int(den))
            except ValueError as exc:
                raise InvalidParameterError(f"bad fraction {text!r}") from exc
        try:
            return cls.real(float(s))
        except ValueError as exc:
            raise InvalidParameterError(f"bad frequency {text!r}") from exc

    @property
    def is_rational(self) -> bool:
        return self.x is None

    @property
    def value(self) -> float:
        return self.p / self.q if self.is_rational else self.x

    def __str__(self):
        return f"{self.p}/{self.q}" if self.is_rational else repr(self.x)

    def phases(self, n, theta: float = 0.0) -> np.ndarray:
        """(n*Phi + theta) mod 1 for an integer array n."""
        n = np.asarray(n, dtype=np.int64)
        if self.is_rational:
            base = np.mod(n * self.p, self.q) / self.q
            return np.mod(base + theta, 1.0)
        frac = np.mod(n.astype(np.longdouble) * self._xl, np.longdouble(1))
        return np.mod(np.asarray(frac + np.longdouble(theta), dtype=np.float64), 1.0)


GOLDEN = Frequency.golden()


@dataclass(frozen=True)
class Phase:
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta) % 1.0)


@dataclass(frozen=True)
class SpectralPoint:
    angle: float

    def __post_init__(self):
        object.__setattr__(self, "angle", float(self.angle) % (2 * math.pi))

    @property
    def z(self) -> complex:
        return complex(math.cos(self.angle), math.sin(self.angle))

    @classmethod
    def from_z(cls, z: complex) -> "SpectralPoint":
        return cls(math.atan2(z.imag, z.real))


def convergents(x: Union[float, Fraction], K: int) -> list[tuple[int, int]]:
    """First K continued-fraction convergents p_k/q_k of x, skipping 0/1.

    A float input stops once a convergent reproduces it exactly, so 1/3
    terminates like the Fraction 1/3 does. Such early termination returns
    fewer than K entries.
    """
    exact = isinstance(x, Fraction)
    fx = Fraction(x)
    if not (0 < fx < 1):
        raise InvalidParameterError("x must lie in (0, 1)")
    out = []
    p0, q0, p1, q1 = 0, 1, 1, 0
    r = fx
    while len(out) < K + 1:
        a = math.floor(r)
        p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
        out.append((p1, q1))
        frac = r - a
        if frac == 0 or (not exact and len(out) > 1 and p1 / q1 == float(x)):
            break
        r = 1 / frac
    # the first term is the integer part 0/1
    return out[1:K + 1]


def beta_lower_bound(convs: Sequence, start: int = 0) -> float:
    """max over k >= start of log(q_{k+1}) / q_k.

    Accepts (p, q) pairs or bare denominators. Raising ``start`` gives the
    tail estimates whose limsup is beta.
    """
    qs = [c[1] if isinstance(c, (tuple, list)) else c for c in convs]
    if len(qs) - start < 2:
        raise InvalidParameterError("need at least two convergents")
    return max(math.log(b) / a for a, b in zip(qs[start:-1], qs[start + 1:]))
