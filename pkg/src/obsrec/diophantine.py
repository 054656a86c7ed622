"""Circle norms, convergents and the finite scans behind the rotation example."""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import InvariantViolation, NotFoundError

__all__ = [
    "HURWITZ",
    "RotationNumber",
    "circle_norm",
    "convergents_from_quotients",
    "approx_exponent",
    "k0_scan",
    "m_n_eps",
    "m_n_eps_table",
]

HURWITZ = math.sqrt(5.0)
_SCAN_BLOCK = 1 << 16


def circle_norm(t):
    """Distance from t to the nearest integer (vectorized)."""
    t = np.asarray(t, dtype=float)
    d = t - np.floor(t)
    out = np.minimum(d, 1.0 - d)
    return float(out) if out.ndim == 0 else out


def convergents_from_quotients(quotients: Iterable[int], q_max: int | None = None
                               ) -> list[tuple[int, int]]:
    p0, q0, p1, q1 = 0, 1, 1, 0  # p_{-2}/q_{-2} and p_{-1}/q_{-1}
    out = []
    for a in quotients:
        p0, p1 = p1, a * p1 + p0
        q0, q1 = q1, a * q1 + q0
        if q_max is not None and q1 > q_max:
            break
        out.append((p1, q1))
    return out


def _quotients_of(x: Fraction) -> list[int]:
    out = []
    while True:
        a = math.floor(x)
        out.append(a)
        frac = x - a
        if frac == 0:
            return out
        x = 1 / frac


@dataclass(frozen=True)
class RotationNumber:
    """An irrational rotation amount with a list of convergents p/q.

    ``reference`` is an exact or high-precision rational stand-in for alpha used
    when measuring |alpha - p/q|; without it the float value is used.
    """

    value: float
    tag: str
    convergents: tuple[tuple[int, int], ...]
    reference: Fraction | None = None

    def error(self, p: int, q: int) -> float:
        if self.reference is not None:
            return float(abs(self.reference - Fraction(p, q)))
        return abs(self.value - p / q)

    def check_convergents(self) -> bool:
        """Every convergent satisfies |alpha - p/q| < 1/q^2."""
        return all(self.error(p, q) < 1.0 / q**2 for p, q in self.convergents)

    @classmethod
    def golden(cls, q_max: int = 10**7) -> "RotationNumber":
        """(sqrt 5 - 1)/2 = [0; 1, 1, 1, ...] with exact Fibonacci convergents."""
        with localcontext() as ctx:
            ctx.prec = 60
            ref = Fraction((Decimal(5).sqrt() - 1) / 2)

        def quotients():
            yield 0
            while True:
                yield 1

        conv = convergents_from_quotients(quotients(), q_max)
        return cls((math.sqrt(5.0) - 1.0) / 2.0, "golden mean", tuple(conv), ref)

    @classmethod
    def from_fraction(cls, x: Fraction, tag: str = "rational", q_max: int | None = None
                      ) -> "RotationNumber":
        x = Fraction(x)
        return cls(float(x), tag, tuple(convergents_from_quotients(_quotients_of(x), q_max)), x)

    @classmethod
    def from_convergents(cls, value: float, convergents: Sequence[tuple[int, int]],
                         tag: str = "user") -> "RotationNumber":
        return cls(float(value), tag, tuple((int(p), int(q)) for p, q in convergents))

    @classmethod
    def liouville(cls, terms: int = 4) -> "RotationNumber":
        """Truncation of sum_k 10^(-k!) (k = 1..terms), kept exact."""
        x = sum(Fraction(1, 10 ** math.factorial(k)) for k in range(1, terms + 1))
        return cls.from_fraction(x, f"Liouville sum, {terms} terms")


def _alpha_value(alpha) -> float:
    return alpha.value if isinstance(alpha, RotationNumber) else float(alpha)


def approx_exponent(alpha: RotationNumber, q_max: int) -> float:
    """Finite-range estimate of the approximation exponent delta(alpha).

    Each convergent with 2 <= q <= q_max contributes the delta solving
    sqrt(5) |alpha - p/q| = q^-(1 + delta); the estimate is the largest one,
    floored at 1.  The sqrt(5) factor (Hurwitz's constant) removes the constant
    that otherwise dominates small denominators; constant factors do not change
    the "infinitely many p/q" exponent.
    """
    if q_max < 100:
        raise ValueError("q_max must be at least 100")
    best = 1.0
    for p, q in alpha.convergents:
        if q < 2 or q > q_max:
            continue
        err = alpha.error(p, q)
        if err == 0.0:
            continue
        best = max(best, -math.log(HURWITZ * err) / math.log(q) - 1.0)
    return best


def k0_scan(alpha, eps: float, q_max: int) -> int:
    """Smallest K with ||k alpha|| >= k^-(1+eps) for every k in [K, q_max].

    The answer is only certified up to q_max.  A K in the upper half of the
    scanned range is treated as not found: the window it certifies is too short
    to say anything (this is what rational alpha produces).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    a = _alpha_value(alpha)
    last_bad = 0
    for start in range(1, q_max + 1, _SCAN_BLOCK):
        k = np.arange(start, min(start + _SCAN_BLOCK, q_max + 1), dtype=np.float64)
        bad = np.nonzero(circle_norm(k * a) < k ** (-(1.0 + eps)))[0]
        if bad.size:
            last_bad = int(k[bad[-1]])
    K = last_bad + 1
    if K > q_max // 2:
        raise NotFoundError(f"no k0 <= {q_max // 2} certified up to {q_max} at eps={eps}")
    return K


def _check_bound(m: int, n: int, k0: int) -> int:
    if m < n:
        raise InvariantViolation(f"m_(n,eps) = {m} < n = {n}; k0 = {k0} is not valid")
    return m


def m_n_eps(alpha, n: int, eps: float, k0: int, q_limit: int = 10**9) -> int:
    """inf{q > k0 : ||q alpha|| <= n^-(1+eps)} by direct scan; checked to be >= n."""
    if n < k0:
        raise ValueError(f"n = {n} must be at least k0 = {k0}")
    a = _alpha_value(alpha)
    thr = float(n) ** (-(1.0 + eps))
    start = k0 + 1
    while start <= q_limit:
        q = np.arange(start, min(start + _SCAN_BLOCK, q_limit + 1), dtype=np.float64)
        hit = np.nonzero(circle_norm(q * a) <= thr)[0]
        if hit.size:
            return _check_bound(int(q[hit[0]]), n, k0)
        start += _SCAN_BLOCK
    raise NotFoundError(f"no q in ({k0}, {q_limit}] with ||q alpha|| <= {thr}")


def m_n_eps_table(alpha, ns: Sequence[int], eps: float, k0: int,
                  q_limit: int = 10**9) -> np.ndarray:
    """m_n_eps for many n at once, from one scan of running minima of ||q alpha||."""
    ns = np.asarray(ns, dtype=np.int64)
    if ns.size == 0:
        return ns
    if ns.min() < k0:
        raise ValueError(f"every n must be at least k0 = {k0}")
    a = _alpha_value(alpha)
    thr = ns.astype(float) ** (-(1.0 + eps))
    need = thr.min()
    mins = []
    running = np.inf
    start = k0 + 1
    while True:
        if start > q_limit:
            raise NotFoundError(f"scan reached q_limit={q_limit} before ||q alpha|| <= {need}")
        q = np.arange(start, min(start + _SCAN_BLOCK, q_limit + 1), dtype=np.float64)
        block = np.minimum.accumulate(np.minimum(circle_norm(q * a), running))
        mins.append(block)
        running = block[-1]
        start += _SCAN_BLOCK
        if running <= need:
            break
    run = np.concatenate(mins)
    idx = np.searchsorted(-run, -thr, side="left")
    out = k0 + 1 + idx
    for m, n in zip(out, ns):
        _check_bound(int(m), int(n), k0)
    return out
