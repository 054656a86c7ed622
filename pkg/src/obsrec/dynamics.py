"""Measure-preserving systems: phase spaces, maps and invariant samplers.

Four systems are bundled:

* ``tripling``  x -> 3x mod 1 on [0, 1), Lebesgue invariant.
* ``cat``       (x, y) -> (2x + y, x + y) mod 1 on the 2-torus, Lebesgue invariant.
* ``skew``      (omega, y) -> (shift(omega), y + phi(omega)) on {0,1}^N x T^1 where
                phi(omega) = alpha if omega_0 == 1 else 0, invariant measure
                Bernoulli(q) x Lebesgue.
* ``identity``  x -> x on [0, 1).

Symbol sequences for the skew system are never stored: symbol ``i`` of the
stream with key ``k`` is a pure function of ``(k, i)`` (a splitmix64 hash), so a
stream is just a key plus a cursor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Union

import numpy as np
from numba import njit

from .errors import AllocationLimitError, PhaseSpaceMismatch

__all__ = [
    "GOLDEN",
    "KINDS",
    "IntervalState",
    "TorusState",
    "SymbolStream",
    "SkewState",
    "SystemSpec",
    "OrbitBuffer",
    "Ensemble",
    "step",
    "sample_invariant",
    "sample_ensemble",
    "visit_count",
    "orbit_observed",
    "iter_orbit",
    "phase_space",
    "state_coords",
]

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
KINDS = ("tripling", "cat", "skew", "identity")

# Above this many stored floats orbit_observed refuses and callers stream.
MAX_BUFFER_ENTRIES = 1 << 26
CHUNK = 1 << 15


# --------------------------------------------------------------------------
# counter-based symbol hash
# --------------------------------------------------------------------------

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


def symbol_uniforms(keys, index) -> np.ndarray:
    """Uniform [0, 1) variates attached to (key, index) pairs; broadcasts."""
    keys = np.atleast_1d(np.asarray(keys, dtype=np.uint64))
    index = np.atleast_1d(np.asarray(index, dtype=np.uint64))
    with np.errstate(over="ignore"):  # wraparound is the point
        z = _splitmix(keys + _GAMMA) + (index + np.uint64(1)) * _GAMMA
        z = _splitmix(z)
    return (z >> _S11).astype(np.float64) * (1.0 / 9007199254740992.0)


# --------------------------------------------------------------------------
# states
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class IntervalState:
    x: float

    def __post_init__(self):
        if not 0.0 <= self.x < 1.0:
            raise ValueError(f"interval coordinate {self.x} outside [0, 1)")


@dataclass(frozen=True)
class TorusState:
    x: float
    y: float

    def __post_init__(self):
        if not (0.0 <= self.x < 1.0 and 0.0 <= self.y < 1.0):
            raise ValueError(f"torus coordinates ({self.x}, {self.y}) outside [0, 1)^2")


@dataclass(frozen=True)
class SymbolStream:
    """A point of {0,1}^N realized lazily.

    ``symbols(start, n)`` returns omega_start .. omega_{start+n-1} relative to the
    cursor.  Absolute positions below ``len(prefix)`` are read from ``prefix``,
    which lets tests pin the first few symbols explicitly.
    """

    key: int
    bias: float = 0.5
    cursor: int = 0
    prefix: tuple[int, ...] = ()

    def __post_init__(self):
        if self.cursor < 0:
            raise ValueError("cursor must be non-negative")

    def symbols(self, start: int, n: int) -> np.ndarray:
        absolute = np.arange(self.cursor + start, self.cursor + start + n, dtype=np.int64)
        out = (symbol_uniforms(self.key, absolute) < self.bias).astype(np.uint8)
        if self.prefix:
            head = absolute < len(self.prefix)
            if head.any():
                out[head] = np.asarray(self.prefix, dtype=np.uint8)[absolute[head]]
        return out

    def shift(self, k: int = 1) -> "SymbolStream":
        return SymbolStream(self.key, self.bias, self.cursor + k, self.prefix)

    @property
    def first(self) -> int:
        return int(self.symbols(0, 1)[0])


@dataclass(frozen=True)
class SkewState:
    omega: SymbolStream
    y: float

    def __post_init__(self):
        if not 0.0 <= self.y < 1.0:
            raise ValueError(f"fiber coordinate {self.y} outside [0, 1)")

    @property
    def in_cylinder(self) -> bool:
        """True when omega lies in A = {omega_0 = 1}."""
        return self.omega.first == 1


SystemState = Union[IntervalState, TorusState, SkewState]

_PHASE = {"tripling": "interval", "identity": "interval", "cat": "torus2", "skew": "skew"}
_STATE_TYPE = {"interval": IntervalState, "torus2": TorusState, "skew": SkewState}


def phase_space(kind: str) -> str:
    return _PHASE[kind]


def state_coords(s: SystemState) -> np.ndarray:
    """Real coordinates an observable sees: x, (x, y), or the fiber y."""
    if isinstance(s, IntervalState):
        return np.array([s.x])
    if isinstance(s, TorusState):
        return np.array([s.x, s.y])
    if isinstance(s, SkewState):
        return np.array([s.y])
    raise PhaseSpaceMismatch(f"unknown state type {type(s).__name__}")


# --------------------------------------------------------------------------
# system spec
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemSpec:
    kind: str
    alpha: float = GOLDEN
    bernoulli: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown system kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "skew":
            if not 0.0 < self.alpha < 1.0:
                raise ValueError("alpha must lie in (0, 1)")
            approx = Fraction(self.alpha).limit_denominator(10**6)
            if abs(float(approx) - self.alpha) < 1e-14:
                raise ValueError(f"alpha {self.alpha} is rational to working precision ({approx})")
            if not 0.0 < self.bernoulli < 1.0:
                raise ValueError("bernoulli parameter must lie in (0, 1) so that 0 < nu(A) < 1")

    @property
    def phase(self) -> str:
        return _PHASE[self.kind]

    @classmethod
    def from_mapping(cls, d) -> "SystemSpec":
        """Build from string key/value pairs (``kind``, ``alpha``, ``bernoulli``, ``seed``)."""
        kw = {"kind": str(d["kind"]).strip()}
        if "alpha" in d:
            a = str(d["alpha"]).strip()
            kw["alpha"] = GOLDEN if a in ("golden", "golden_mean") else float(a)
        if "bernoulli" in d:
            kw["bernoulli"] = float(d["bernoulli"])
        if "seed" in d:
            kw["seed"] = int(d["seed"])
        return cls(**kw)

    def to_mapping(self) -> dict[str, str]:
        return {"kind": self.kind, "alpha": repr(self.alpha),
                "bernoulli": repr(self.bernoulli), "seed": str(self.seed)}


def _check_state(spec: SystemSpec, s) -> None:
    if not isinstance(s, _STATE_TYPE[spec.phase]):
        raise PhaseSpaceMismatch(
            f"{type(s).__name__} is not a point of the {spec.phase} phase space of {spec.kind!r}")


# --------------------------------------------------------------------------
# orbit kernels
# --------------------------------------------------------------------------


@njit(cache=True)
def _frac(t):
    r = t - math.floor(t)
    if r >= 1.0 or r < 0.0:
        r = 0.0
    return r


@njit(cache=True)
def _tripling_orbit(x0, n):
    out = np.empty(n + 1)
    out[0] = x0
    x = x0
    for k in range(1, n + 1):
        x = _frac(3.0 * x)
        out[k] = x
    return out


@njit(cache=True)
def _cat_orbit(x0, y0, n):
    out = np.empty((n + 1, 2))
    out[0, 0] = x0
    out[0, 1] = y0
    x = x0
    y = y0
    for k in range(1, n + 1):
        u = 2.0 * x + y
        v = x + y
        x = _frac(u)
        y = _frac(v)
        out[k, 0] = x
        out[k, 1] = y
    return out


@njit(cache=True)
def _skew_orbit(y0, alpha, symbols):
    n = symbols.shape[0]
    out = np.empty(n + 1)
    out[0] = y0
    y = y0
    for k in range(n):
        if symbols[k]:
            y = _frac(y + alpha)
        out[k + 1] = y
    return out


def _raw_orbit(spec: SystemSpec, s, n: int):
    """Coordinates of s, T s, ..., T^n s and the state T^n s."""
    kind = spec.kind
    if kind == "tripling":
        out = _tripling_orbit(s.x, n)
        return out, IntervalState(float(out[-1]))
    if kind == "identity":
        return np.full(n + 1, s.x), s
    if kind == "cat":
        out = _cat_orbit(s.x, s.y, n)
        return out, TorusState(float(out[-1, 0]), float(out[-1, 1]))
    syms = s.omega.symbols(0, n)
    out = _skew_orbit(s.y, spec.alpha, syms)
    return out, SkewState(s.omega.shift(n), float(out[-1]))


def step(spec: SystemSpec, s: SystemState) -> SystemState:
    """Apply the map once."""
    _check_state(spec, s)
    return _raw_orbit(spec, s, 1)[1]


def iter_orbit(spec: SystemSpec, s: SystemState, n: int, chunk: int = CHUNK
               ) -> Iterator[tuple[int, np.ndarray]]:
    """Stream the coordinates of T^k s for k = 0..n in blocks.

    Yields ``(k_first, block)``; blocks are consecutive and non-overlapping.
    """
    _check_state(spec, s)
    if n < 0:
        raise ValueError("n must be non-negative")
    m = min(n, chunk)
    block, cur = _raw_orbit(spec, s, m)
    yield 0, block
    done = m
    while done < n:
        m = min(n - done, chunk)
        block, cur = _raw_orbit(spec, cur, m)
        yield done + 1, block[1:]
        done += m


# --------------------------------------------------------------------------
# invariant measures
# --------------------------------------------------------------------------


@dataclass
class Ensemble:
    """Many states of one system advanced in lockstep (vectorized).

    ``coords`` has shape (M,) or (M, 2); ``keys`` holds skew stream keys and all
    streams share ``cursor``.
    """

    spec: SystemSpec
    coords: np.ndarray
    keys: np.ndarray | None = None
    cursor: int = 0

    def __len__(self):
        return self.coords.shape[0]

    def advance(self, n: int = 1) -> "Ensemble":
        c = self.coords.copy()
        kind = self.spec.kind
        cursor = self.cursor
        for _ in range(n):
            if kind == "tripling":
                c = 3.0 * c
                c -= np.floor(c)
            elif kind == "cat":
                c = np.stack([2.0 * c[:, 0] + c[:, 1], c[:, 0] + c[:, 1]], axis=1)
                c -= np.floor(c)
            elif kind == "skew":
                hit = symbol_uniforms(self.keys, cursor) < self.spec.bernoulli
                c = np.where(hit, c + self.spec.alpha, c)
                c -= np.floor(c)
                cursor += 1
        c[c >= 1.0] = 0.0
        return Ensemble(self.spec, c, self.keys, cursor)

    def first_symbols(self) -> np.ndarray:
        if self.keys is None:
            raise PhaseSpaceMismatch("only skew ensembles carry symbol streams")
        return (symbol_uniforms(self.keys, self.cursor) < self.spec.bernoulli).astype(np.uint8)

    def states(self) -> list:
        kind = self.spec.kind
        if kind in ("tripling", "identity"):
            return [IntervalState(float(x)) for x in self.coords]
        if kind == "cat":
            return [TorusState(float(x), float(y)) for x, y in self.coords]
        return [SkewState(SymbolStream(int(k), self.spec.bernoulli, self.cursor), float(y))
                for k, y in zip(self.keys, self.coords)]


def sample_ensemble(spec: SystemSpec, seed: int | None, M: int) -> Ensemble:
    """M independent draws from the invariant measure, as arrays."""
    if M < 1:
        raise ValueError("M must be at least 1")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    if spec.kind in ("tripling", "identity"):
        return Ensemble(spec, rng.random(M))
    if spec.kind == "cat":
        return Ensemble(spec, rng.random((M, 2)))
    keys = rng.integers(0, 2**63 - 1, size=M, dtype=np.int64).astype(np.uint64)
    return Ensemble(spec, rng.random(M), keys)


def sample_invariant(spec: SystemSpec, seed: int | None, M: int) -> list:
    return sample_ensemble(spec, seed, M).states()


def visit_count(spec: SystemSpec, omega: SymbolStream, k: int) -> int:
    """Number of i < k with shift^i(omega) in A, i.e. omega_i == 1."""
    if spec.kind != "skew":
        raise PhaseSpaceMismatch("visit counts are defined for the skew system only")
    if k < 0:
        raise ValueError("k must be non-negative")
    total = 0
    for start in range(0, k, 1 << 20):
        total += int(omega.symbols(start, min(1 << 20, k - start)).sum())
    return total


# --------------------------------------------------------------------------
# observed orbits
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OrbitBuffer:
    values: np.ndarray = field(repr=False)
    start: SystemState
    spec: SystemSpec

    def __len__(self):
        return self.values.shape[0]


def orbit_observed(spec: SystemSpec, obs, x0: SystemState, n: int,
                   max_entries: int = MAX_BUFFER_ENTRIES) -> OrbitBuffer:
    """Materialize f(T^k x0) for k = 0..n."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if (n + 1) * obs.dim > max_entries:
        raise AllocationLimitError(
            f"orbit of {n + 1} points x {obs.dim} coordinates exceeds {max_entries} entries")
    parts = [obs.evaluate_coords(block) for _, block in iter_orbit(spec, x0, n)]
    return OrbitBuffer(np.concatenate(parts, axis=0), x0, spec)
