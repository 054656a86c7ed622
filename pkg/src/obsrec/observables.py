"""Observables f: X -> R^N, target metrics and numerical Jacobian rank."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import SkewState, IntervalState, TorusState, state_coords
from .errors import DimensionMismatch, PhaseSpaceMismatch

__all__ = [
    "Observable",
    "RankField",
    "OBSERVABLES",
    "SMOOTH_KINDS",
    "make_observable",
    "evaluate",
    "obs_distance",
    "distance",
    "jacobian_rank",
    "rank_field",
]

_DOMAIN_TYPE = {"interval": IntervalState, "torus2": TorusState, "skew": SkewState}
_DOMAIN_DIM = {"interval": 1, "torus2": 2, "skew": 1}


def _bump(y):
    """0 for y <= 1/2 and exp(-1/(y - 1/2)) above: C-infinity, flat at 1/2."""
    t = np.asarray(y, dtype=float) - 0.5
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


# kind -> (domain, N, Lipschitz bound, metric, map on an (m, M) array)
_TABLE: dict[str, tuple[str, int, float, str, Callable[[np.ndarray], np.ndarray]]] = {
    "identity": ("interval", 1, 1.0, "euclidean", lambda u: u),
    "identity2": ("torus2", 2, 1.0, "euclidean", lambda u: u),
    "projection": ("skew", 1, 1.0, "torus", lambda u: u),
    "circle": ("interval", 2, 2.0 * math.pi, "euclidean",
               lambda u: np.concatenate([np.cos(2 * np.pi * u), np.sin(2 * np.pi * u)], axis=1)),
    # the constant map is 0-Lipschitz; any positive bound is valid
    "constant": ("torus2", 2, 1.0, "euclidean",
                 lambda u: np.full((u.shape[0], 2), 0.5)),
    "line": ("torus2", 2, math.sqrt(5.0), "euclidean",
             lambda u: np.stack([u[:, 0], 2.0 * u[:, 0]], axis=1)),
    # |d/dx x^2| <= 2 on the unit square
    "parabola": ("torus2", 2, math.sqrt(5.0), "euclidean",
                 lambda u: np.stack([u[:, 0], u[:, 0] ** 2], axis=1)),
    # rank 1 where y <= 1/2, rank 2 where y > 1/2; sup of the bump derivative is 4/e^2 < 1
    "piecewise": ("torus2", 2, 1.0, "euclidean",
                  lambda u: np.stack([u[:, 0], _bump(u[:, 1])], axis=1)),
}

OBSERVABLES = tuple(_TABLE)
SMOOTH_KINDS = ("constant", "line", "identity2", "parabola", "piecewise")


@dataclass(frozen=True)
class Observable:
    kind: str
    domain: str
    dim: int
    lipschitz: float
    metric: str
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def __post_init__(self):
        if not (0 < self.lipschitz < math.inf):
            raise ValueError("Lipschitz bound must be positive and finite")
        if self.metric not in ("euclidean", "torus"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.metric == "torus" and self.dim != 1:
            raise ValueError("the torus metric is only used for one-dimensional targets")

    @property
    def domain_dim(self) -> int:
        return _DOMAIN_DIM[self.domain]

    def evaluate_coords(self, coords: np.ndarray) -> np.ndarray:
        """Vectorized evaluation on phase coordinates; returns shape (m, N)."""
        u = np.asarray(coords, dtype=float)
        if u.ndim == 1:
            u = u.reshape(-1, self.domain_dim)
        if u.shape[1] != self.domain_dim:
            raise DimensionMismatch(
                f"{self.kind} expects {self.domain_dim} phase coordinates, got {u.shape[1]}")
        return self.func(u)

    def evaluate(self, s) -> np.ndarray:
        if not isinstance(s, _DOMAIN_TYPE[self.domain]):
            raise PhaseSpaceMismatch(
                f"observable {self.kind!r} is defined on {self.domain}, got {type(s).__name__}")
        return self.evaluate_coords(state_coords(s)[None, :])[0]

    def domain_distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Distance between phase coordinates (fiber distance on the torus for skew)."""
        d = np.abs(np.asarray(a, float) - np.asarray(b, float))
        if self.domain == "skew":
            return np.minimum(d, 1.0 - d).reshape(d.shape[0], -1)[:, 0]
        return np.sqrt((d.reshape(d.shape[0], -1) ** 2).sum(axis=1))


def make_observable(kind: str) -> Observable:
    try:
        domain, n, lip, metric, func = _TABLE[kind]
    except KeyError:
        raise ValueError(f"unknown observable {kind!r}; expected one of {OBSERVABLES}") from None
    return Observable(kind, domain, n, lip, metric, func)


def evaluate(obs: Observable, s) -> np.ndarray:
    return obs.evaluate(s)


def distance(metric: str, a, b) -> np.ndarray:
    """Row-wise distance between point arrays of shape (..., N)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if metric == "torus":
        d = np.abs(a - b)
        d = np.minimum(d, 1.0 - d)
        return d[..., 0] if d.ndim and d.shape[-1] == 1 else d
    diff = a - b
    if diff.shape[-1] == 1:
        return np.abs(diff[..., 0])
    return np.sqrt(np.einsum("...i,...i->...", diff, diff))


def obs_distance(obs: Observable, a, b):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape[-1] != obs.dim or b.shape[-1] != obs.dim:
        raise DimensionMismatch(f"{obs.kind} points have {obs.dim} coordinates")
    d = distance(obs.metric, a, b)
    return float(d) if np.ndim(d) == 0 else d


# --------------------------------------------------------------------------
# Jacobian rank
# --------------------------------------------------------------------------


def _jacobian(obs: Observable, x: np.ndarray, h: float) -> np.ndarray:
    m = x.shape[0]
    probes = np.concatenate([x + h * np.eye(m), x - h * np.eye(m)], axis=0)
    vals = obs.func(probes)
    return ((vals[:m] - vals[m:]) / (2.0 * h)).T  # (N, M)


def jacobian_rank(obs: Observable, x, h: float = 1e-5, tol: float = 1e-6,
                  floor: float = 1e-9) -> int:
    """Numerical rank of the central-difference Jacobian of ``obs`` at ``x``.

    Singular values above ``tol`` times the largest one are counted; a largest
    singular value below ``floor`` gives rank 0.
    """
    if h <= 0 or not 0 < tol < 1:
        raise ValueError("need h > 0 and 0 < tol < 1")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[0] != obs.domain_dim:
        raise DimensionMismatch(f"{obs.kind} takes points of R^{obs.domain_dim}")
    s = np.linalg.svd(_jacobian(obs, x, h), compute_uv=False)
    if s.size == 0 or s[0] < floor:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


@dataclass(frozen=True)
class RankField:
    xs: np.ndarray
    ys: np.ndarray
    ranks: np.ndarray  # (len(ys), len(xs))
    h: float
    tol: float


def rank_field(obs: Observable, lo=(0.0, 0.0), hi=(1.0, 1.0), shape=(21, 21),
               h: float = 1e-5, tol: float = 1e-6) -> RankField:
    """Jacobian rank on a regular grid over the rectangle [lo, hi] of R^2."""
    if obs.domain_dim != 2:
        raise DimensionMismatch("rank fields are drawn over two-dimensional domains")
    xs = np.linspace(lo[0], hi[0], shape[0])
    ys = np.linspace(lo[1], hi[1], shape[1])
    ranks = np.array([[jacobian_rank(obs, (x, y), h, tol) for x in xs] for y in ys], dtype=int)
    return RankField(xs, ys, ranks, h, tol)
