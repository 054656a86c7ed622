"""Empirical pushforward measures and pointwise-dimension estimates.

A :class:`PointCloud` holds samples of f_*mu behind a uniform grid index.  Ball
masses over a whole radius grid are computed from one candidate gather at the
largest radius, so a probe costs one index query regardless of grid length.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import SystemSpec, iter_orbit, sample_ensemble
from .errors import DimensionMismatch, InsufficientDataError, UndefinedRatioError
from .observables import Observable, distance

__all__ = [
    "DEFAULT_RADII",
    "MIN_COUNT",
    "BURN_IN",
    "ESS_SUP_QUANTILE",
    "GridIndex",
    "PointCloud",
    "MassProfile",
    "DimEstimate",
    "MeasureDimension",
    "pushforward_cloud",
    "ball_mass",
    "mass_profile",
    "local_dimension",
    "measure_dimension",
    "choose_probes",
    "maximal_separated_set",
    "wdr_ratio",
    "slope_dispersion",
]

DEFAULT_RADII = 2.0 ** -np.arange(4, 15)
MIN_COUNT = 50
BURN_IN = 1000
ESS_SUP_QUANTILE = 95.0


class GridIndex:
    """Points bucketed into cubic cells of edge ``cell``, sorted by cell key.

    For the torus metric (one-dimensional, points in [0, 1)) the cells wrap.
    """

    def __init__(self, points: np.ndarray, metric: str, cell: float):
        self.metric = metric
        m, n = points.shape
        if metric == "torus":
            self.shape = np.array([max(1, int(np.floor(1.0 / cell)))])
            self.cell = 1.0 / self.shape[0]
            self.lo = np.zeros(1)
        else:
            self.lo = points.min(axis=0)
            extent = points.max(axis=0) - self.lo
            self.cell = float(cell)
            self.shape = (np.floor(extent / self.cell) + 1).astype(np.int64)
        cells = self._cell_of(points)
        keys = np.ravel_multi_index(tuple(cells.T), tuple(self.shape))
        order = np.argsort(keys, kind="stable")
        self.order = order
        self.keys = keys[order]
        self.points = points[order]

    def _cell_of(self, pts: np.ndarray) -> np.ndarray:
        c = np.floor((pts - self.lo) / self.cell).astype(np.int64)
        return np.clip(c, 0, self.shape - 1)

    def _slices(self, key_lo: np.ndarray, key_hi: np.ndarray) -> np.ndarray:
        a = np.searchsorted(self.keys, key_lo, side="left")
        b = np.searchsorted(self.keys, key_hi, side="right")
        keep = b > a
        a, b = a[keep], b[keep]
        if a.size == 0:
            return np.empty(0, dtype=np.int64)
        if a.size == 1:
            return np.arange(a[0], b[0])
        lens = b - a
        starts = np.repeat(a - np.concatenate([[0], np.cumsum(lens)[:-1]]), lens)
        return starts + np.arange(lens.sum())

    def candidates(self, y: np.ndarray, r: float) -> np.ndarray:
        """Positions (in sorted order) of a superset of the points within r of y."""
        shape = self.shape
        if self.metric == "torus":
            n = int(shape[0])
            c0 = int(np.floor((y[0] - r) / self.cell)) - 1
            c1 = int(np.floor((y[0] + r) / self.cell)) + 1
            if c1 - c0 + 1 >= n:
                return np.arange(self.keys.size)
            c0 %= n
            c1 %= n
            if c0 <= c1:
                return self._slices(np.array([c0]), np.array([c1]))
            return self._slices(np.array([c0, 0]), np.array([n - 1, c1]))
        c0 = np.floor((y - r - self.lo) / self.cell).astype(np.int64) - 1
        c1 = np.floor((y + r - self.lo) / self.cell).astype(np.int64) + 1
        c0 = np.maximum(c0, 0)
        c1 = np.minimum(c1, shape - 1)
        if np.any(c0 > c1):
            return np.empty(0, dtype=np.int64)
        if shape.size == 1:
            return self._slices(c0, c1)
        # one contiguous key run per row along the last axis
        heads = np.stack(np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(c0[:-1], c1[:-1])],
                                     indexing="ij"), axis=-1).reshape(-1, shape.size - 1)
        lo = np.concatenate([heads, np.full((heads.shape[0], 1), c0[-1])], axis=1)
        hi = np.concatenate([heads, np.full((heads.shape[0], 1), c1[-1])], axis=1)
        return self._slices(np.ravel_multi_index(tuple(lo.T), tuple(shape)),
                            np.ravel_multi_index(tuple(hi.T), tuple(shape)))


class PointCloud:
    """M samples of a measure on R^N (or T^1) with a grid index.

    Immutable after construction.  ``cell`` is the grid edge; by default the
    smallest radius of the default grid, widened to the typical point spacing
    so that the cell count stays proportional to M.
    """

    def __init__(self, points, metric: str = "euclidean", cell: float | None = None,
                 provenance: dict | None = None):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] < 1:
            raise ValueError("a point cloud needs at least one point")
        if pts.shape[1] > 3:
            raise DimensionMismatch("dimension estimation is limited to N <= 3")
        if metric == "torus" and pts.shape[1] != 1:
            raise DimensionMismatch("torus clouds are one-dimensional")
        self.points = pts
        self.metric = metric
        self.provenance = dict(provenance or {})
        m, n = pts.shape
        if cell is None:
            extent = float(np.max(pts.max(axis=0) - pts.min(axis=0))) if metric != "torus" else 1.0
            cell = max(float(DEFAULT_RADII[-1]), extent * m ** (-1.0 / n))
        self.index = GridIndex(pts, metric, cell)

    @property
    def M(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def _point(self, y) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if y.shape != (self.dim,):
            raise DimensionMismatch(f"cloud points have {self.dim} coordinates")
        return y

    def counts(self, y, radii) -> np.ndarray:
        """Number of points at distance < r from y, for every r in ``radii``."""
        y = self._point(y)
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        cand = self.index.candidates(y, float(radii.max()))
        d = np.sort(distance(self.metric, self.index.points[cand], y))
        return np.searchsorted(d, radii, side="left")

    def scan_counts(self, y, radii) -> np.ndarray:
        """Linear-scan reference for :meth:`counts`."""
        y = self._point(y)
        d = distance(self.metric, self.points, y)
        return np.array([int(np.count_nonzero(d < r)) for r in np.atleast_1d(radii)])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(self.dim)])
            w.writerows([[repr(float(v)) for v in row] for row in self.points])

    @classmethod
    def from_csv(cls, path, metric: str = "euclidean", cell: float | None = None) -> "PointCloud":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        return cls(np.array(rows[1:], dtype=float), metric, cell)


def pushforward_cloud(spec: SystemSpec, obs: Observable, M: int, seed: int,
                      mode: str = "iid", burn_in: int = BURN_IN,
                      cell: float | None = None) -> PointCloud:
    """Sample f_*mu by mapping invariant samples (iid) or one long orbit (orbit)."""
    if M < 1:
        raise ValueError("M must be at least 1")
    if mode == "iid":
        coords = sample_ensemble(spec, seed, M).coords
    elif mode == "orbit":
        x0 = sample_ensemble(spec, seed, 1).states()[0]
        coords = np.concatenate([b for _, b in iter_orbit(spec, x0, burn_in + M - 1)])[burn_in:]
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    prov = {"system": spec.kind, "observable": obs.kind, "seed": seed, "mode": mode}
    return PointCloud(obs.evaluate_coords(coords), obs.metric, cell, prov)


def ball_mass(cloud: PointCloud, y, r: float) -> float:
    if r <= 0:
        raise ValueError("r must be positive")
    return float(cloud.counts(y, [r])[0]) / cloud.M


@dataclass(frozen=True)
class MassProfile:
    center: np.ndarray
    radii: np.ndarray
    counts: np.ndarray
    total: int

    @property
    def fractions(self) -> np.ndarray:
        return self.counts / self.total

    def rows(self) -> list[tuple]:
        return [(float(r), int(c), float(c) / self.total) for r, c in zip(self.radii, self.counts)]


def mass_profile(cloud: PointCloud, y, radii=DEFAULT_RADII) -> MassProfile:
    radii = np.asarray(radii, dtype=float)
    y = cloud._point(y)
    return MassProfile(y, radii, cloud.counts(y, radii), cloud.M)


@dataclass(frozen=True)
class DimEstimate:
    """Slope of log ball mass against log r over radii passing the count floor."""

    slope: float
    lower: float
    upper: float
    n_radii: int
    min_count: int
    flagged: bool = False

    FIELDS = ("slope", "lower", "upper", "n_radii", "min_count", "flagged")

    def row(self) -> tuple:
        return (self.slope, self.lower, self.upper, self.n_radii, self.min_count, int(self.flagged))

    @classmethod
    def from_row(cls, row) -> "DimEstimate":
        s, lo, hi, n, mc, fl = row
        return cls(float(s), float(lo), float(hi), int(n), int(mc), bool(int(fl)))


def _dim_from_profile(prof: MassProfile, min_count: int, dim: int) -> DimEstimate:
    usable = prof.counts >= min_count
    n = int(usable.sum())
    if n < 3:
        largest = float(prof.radii[usable].max()) if n else None
        raise InsufficientDataError(
            f"only {n} radii hold at least {min_count} points (need 3)", largest_usable=largest)
    order = np.argsort(prof.radii[usable])
    xs = np.log(prof.radii[usable][order])
    ys = np.log(prof.fractions[usable][order])
    xm = xs - xs.mean()
    slope = float(xm @ (ys - ys.mean()) / (xm @ xm))
    pair = np.diff(ys) / np.diff(xs)
    lower = min(float(pair.min()), slope)
    upper = max(float(pair.max()), slope)
    flagged = not (-0.5 <= slope <= dim + 0.5)
    return DimEstimate(slope, lower, upper, n, min_count, flagged)


def local_dimension(cloud: PointCloud, y, radii=DEFAULT_RADII,
                    min_count: int = MIN_COUNT) -> DimEstimate:
    return _dim_from_profile(mass_profile(cloud, y, radii), min_count, cloud.dim)


def choose_probes(cloud: PointCloud, n: int, seed: int) -> np.ndarray:
    """n distinct cloud members drawn uniformly."""
    rng = np.random.default_rng(seed)
    idx = rng.choice(cloud.M, size=min(n, cloud.M), replace=False)
    return cloud.points[np.sort(idx)]


@dataclass(frozen=True)
class MeasureDimension:
    """Percentile surrogates for ess-sup of lower/upper local dimensions."""

    hausdorff: float
    packing: float
    quantile: float
    estimates: list[DimEstimate] = field(repr=False)


def measure_dimension(cloud: PointCloud, probes, radii=DEFAULT_RADII,
                      min_count: int = MIN_COUNT,
                      quantile: float = ESS_SUP_QUANTILE) -> MeasureDimension:
    probes = np.asarray(probes, dtype=float).reshape(-1, cloud.dim)
    if probes.shape[0] < 30:
        raise ValueError("at least 30 probes are needed for the ess-sup surrogate")
    est = [local_dimension(cloud, y, radii, min_count) for y in probes]
    return MeasureDimension(float(np.percentile([e.lower for e in est], quantile)),
                            float(np.percentile([e.upper for e in est], quantile)),
                            quantile, est)


def slope_dispersion(estimates: Sequence[DimEstimate]) -> float:
    """Sample standard deviation of per-probe slopes (exact-dimensionality diagnostic)."""
    return float(np.std([e.slope for e in estimates], ddof=1))


def maximal_separated_set(points, r: float, metric: str = "euclidean") -> list[int]:
    """Greedy r-separated subset, scanned in input order.

    Selected points are pairwise at distance >= r and every input point lies
    within distance < r of a selected one.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    chosen: list[int] = []
    sel = np.empty((0, pts.shape[1]))
    for i, p in enumerate(pts):
        if sel.shape[0] == 0 or np.all(distance(metric, sel, p) >= r):
            chosen.append(i)
            sel = np.vstack([sel, p])
    return chosen


def wdr_ratio(cloud: PointCloud, y, r: float, eta: float, eps: float) -> tuple[float, bool]:
    """mass(B(y, eta r)) / mass(B(y, r)) and whether it is at most r^-eps."""
    if not 0 < r < 1 or eta <= 1 or eps <= 0:
        raise ValueError("need 0 < r < 1, eta > 1 and eps > 0")
    inner, outer = cloud.counts(y, [r, eta * r])
    if inner == 0:
        raise UndefinedRatioError(f"ball of radius {r} around {y} is empty")
    ratio = float(outer) / float(inner)
    return ratio, ratio <= r ** (-eps)
