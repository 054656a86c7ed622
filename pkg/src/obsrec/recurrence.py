"""Return times for observations and recurrence-rate estimation.

A return time is the first k > p with d(f(T^k x), f(x)) < r (open ball).  All
radii of a grid, and all exclusion windows p of a schedule, are served by a
single streamed orbit: a radius is hit at the first k where the running
minimum of the distance sequence (restricted to k > p) drops below it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import SystemSpec, iter_orbit
from .errors import InsufficientDataError
from .observables import Observable, distance

__all__ = [
    "DEFAULT_RADII",
    "DEFAULT_P_SCHEDULE",
    "DEFAULT_HORIZON",
    "STABILITY_THRESHOLD",
    "ReturnTimeProfile",
    "RateEstimate",
    "RecurrenceRate",
    "return_time",
    "return_profile",
    "return_profiles",
    "rate_estimate",
    "recurrence_rate",
    "boshernitzan_statistic",
]

DEFAULT_RADII = 2.0 ** -np.arange(4, 15)
DEFAULT_P_SCHEDULE = (0, 10, 100, 1000)
DEFAULT_HORIZON = 10**6
STABILITY_THRESHOLD = 0.05


@dataclass(frozen=True)
class ReturnTimeProfile:
    """Return times over a decreasing radius grid at one exclusion window ``p``.

    ``tau[i] == -1`` marks radius ``i`` as censored (no return up to ``horizon``).
    """

    p: int
    radii: np.ndarray
    tau: np.ndarray
    horizon: int

    @property
    def censored(self) -> np.ndarray:
        return self.tau < 0

    def rows(self) -> list[tuple]:
        return [(self.p, float(r), int(t) if t >= 0 else None, bool(t < 0))
                for r, t in zip(self.radii, self.tau)]

    @classmethod
    def from_rows(cls, rows, horizon: int) -> "ReturnTimeProfile":
        rows = list(rows)
        p = {int(r[0]) for r in rows}
        if len(p) != 1:
            raise ValueError("rows mix several exclusion windows")
        radii = np.array([float(r[1]) for r in rows])
        tau = np.array([-1 if r[3] else int(r[2]) for r in rows], dtype=np.int64)
        return cls(p.pop(), radii, tau, horizon)


@dataclass(frozen=True)
class RateEstimate:
    """Scaling of return times: slope of log(tau - p) against -log r.

    ``lower``/``upper`` are the smallest/largest slopes between adjacent usable
    radii (finite-scale stand-ins for liminf/limsup).  Negative values are
    clamped to 0 and ``clamped`` is set.
    """

    p: int
    slope: float
    lower: float
    upper: float
    stderr: float
    n_radii: int
    censor_frac: float
    clamped: bool = False

    FIELDS = ("p", "slope", "lower", "upper", "stderr", "n_radii", "censor_frac")

    def row(self) -> tuple:
        return (self.p, self.slope, self.lower, self.upper, self.stderr, self.n_radii,
                self.censor_frac)

    @classmethod
    def from_row(cls, row) -> "RateEstimate":
        p, slope, lo, hi, se, n, cf = row
        return cls(int(p), float(slope), float(lo), float(hi), float(se), int(n), float(cf))


@dataclass(frozen=True)
class RecurrenceRate:
    per_p: list[RateEstimate]
    final: RateEstimate
    unstable: bool
    profiles: list[ReturnTimeProfile] = field(default_factory=list, repr=False)


def _check_radii(radii) -> np.ndarray:
    radii = np.asarray(radii, dtype=float).ravel()
    if radii.size == 0 or np.any(radii <= 0):
        raise ValueError("radii must be positive")
    if np.any(np.diff(radii) >= 0):
        raise ValueError("radii must be strictly decreasing")
    return radii


def _scan(spec: SystemSpec, obs: Observable, x, radii: np.ndarray, ps: np.ndarray,
          H: int) -> np.ndarray:
    """tau[j, i] for exclusion window ps[j] and radius radii[i]; -1 when censored."""
    nr = radii.size
    tau = np.full((ps.size, nr), -1, dtype=np.int64)
    nxt = np.zeros(ps.size, dtype=np.int64)
    ref = None
    for k0, block in iter_orbit(spec, x, H):
        vals = obs.evaluate_coords(block)
        if ref is None:
            ref = vals[0]
        d = distance(obs.metric, vals, ref)
        m = d.shape[0]
        for j, p in enumerate(ps):
            if nxt[j] == nr:
                continue
            start = max(0, int(p) + 1 - k0)
            if start >= m:
                continue
            running = np.minimum.accumulate(d[start:])
            todo = radii[nxt[j]:]
            idx = np.searchsorted(-running, -todo, side="right")
            hit = idx < running.size
            nhit = int(hit.sum())
            tau[j, nxt[j]:nxt[j] + nhit] = k0 + start + idx[:nhit]
            nxt[j] += nhit
        if np.all(nxt == nr):
            break
    return tau


def return_time(spec: SystemSpec, obs: Observable, x, r: float, p: int = 0,
                H: int = DEFAULT_HORIZON) -> int | None:
    """First k in (p, H] with the observation back within r; None if censored."""
    if r <= 0:
        raise ValueError("r must be positive")
    if H <= p:
        raise ValueError(f"horizon {H} must exceed p = {p}")
    t = int(_scan(spec, obs, x, np.array([float(r)]), np.array([p]), H)[0, 0])
    return None if t < 0 else t


def return_profiles(spec: SystemSpec, obs: Observable, x, radii=DEFAULT_RADII,
                    ps=DEFAULT_P_SCHEDULE, H: int = DEFAULT_HORIZON) -> list[ReturnTimeProfile]:
    """Profiles for every p of a schedule from one orbit traversal."""
    radii = _check_radii(radii)
    ps = np.asarray(ps, dtype=np.int64).ravel()
    if ps.size == 0 or np.any(ps < 0):
        raise ValueError("p values must be non-negative integers")
    if H <= ps.max():
        raise ValueError(f"horizon {H} must exceed max p = {int(ps.max())}")
    tau = _scan(spec, obs, x, radii, ps, H)
    return [ReturnTimeProfile(int(p), radii, tau[j], H) for j, p in enumerate(ps)]


def return_profile(spec: SystemSpec, obs: Observable, x, radii=DEFAULT_RADII, p: int = 0,
                   H: int = DEFAULT_HORIZON) -> ReturnTimeProfile:
    return return_profiles(spec, obs, x, radii, (p,), H)[0]


def _slopes(xs: np.ndarray, ys: np.ndarray):
    """OLS slope, its standard error, and adjacent-pair slopes."""
    xm = xs - xs.mean()
    sxx = float(xm @ xm)
    slope = float(xm @ (ys - ys.mean())) / sxx
    resid = ys - ys.mean() - slope * xm
    n = xs.size
    stderr = float(np.sqrt((resid @ resid) / (n - 2) / sxx)) if n > 2 else float("nan")
    pair = np.diff(ys) / np.diff(xs)
    return slope, stderr, pair


def rate_estimate(profile: ReturnTimeProfile) -> RateEstimate:
    ok = ~profile.censored
    n = int(ok.sum())
    if n < 3:
        raise InsufficientDataError(
            f"only {n} uncensored radii at p={profile.p} (need 3)",
            largest_usable=float(profile.radii[ok][0]) if n else None)
    xs = -np.log(profile.radii[ok])
    ys = np.log((profile.tau[ok] - profile.p).astype(float))
    slope, stderr, pair = _slopes(xs, ys)
    lower = min(float(pair.min()), slope)
    upper = max(float(pair.max()), slope)
    clamped = lower < 0
    if clamped:
        slope, lower, upper = max(slope, 0.0), 0.0, max(upper, 0.0)
    return RateEstimate(profile.p, slope, lower, upper, stderr, n,
                        float(profile.censored.mean()), clamped)


def recurrence_rate(spec: SystemSpec, obs: Observable, x, radii=DEFAULT_RADII,
                    p_schedule=DEFAULT_P_SCHEDULE, H: int = DEFAULT_HORIZON,
                    threshold: float = STABILITY_THRESHOLD) -> RecurrenceRate:
    """Rate estimates along an increasing p schedule plus a stabilized final value.

    The final estimate is the one at the largest p whose slope moved by less than
    ``threshold`` from the previous p; without any such p the largest-p estimate
    is returned and ``unstable`` is set.
    """
    ps = np.asarray(p_schedule, dtype=np.int64)
    if np.any(np.diff(ps) <= 0):
        raise ValueError("p_schedule must be strictly increasing")
    profiles = return_profiles(spec, obs, x, radii, ps, H)
    per_p = [rate_estimate(pr) for pr in profiles]
    settled = [i for i in range(1, len(per_p))
               if abs(per_p[i].slope - per_p[i - 1].slope) < threshold]
    if settled:
        return RecurrenceRate(per_p, per_p[settled[-1]], False, profiles)
    return RecurrenceRate(per_p, per_p[-1], True, profiles)


def boshernitzan_statistic(spec: SystemSpec, obs: Observable, x, alpha: float,
                           n_max: int) -> float:
    """min over 1 <= n <= n_max of n^(1/alpha) d(f(T^n x), f(x))."""
    if alpha <= 0 or n_max < 1:
        raise ValueError("need alpha > 0 and n_max >= 1")
    best = np.inf
    ref = None
    for k0, block in iter_orbit(spec, x, n_max):
        vals = obs.evaluate_coords(block)
        if ref is None:
            ref = vals[0]
            vals, k0 = vals[1:], 1
        if vals.shape[0] == 0:
            continue
        n = np.arange(k0, k0 + vals.shape[0], dtype=float)
        d = distance(obs.metric, vals, ref)
        best = min(best, float(np.min(n ** (1.0 / alpha) * d)))
    return best
