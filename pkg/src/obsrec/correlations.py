"""Monte Carlo decay-of-correlations profiles and a super-polynomial decay check."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .dynamics import Ensemble, SystemSpec, sample_ensemble

__all__ = [
    "TestFunction",
    "TEST_FUNCTIONS",
    "make_test_function",
    "DecayProfile",
    "Verdict",
    "correlation",
    "decay_profile",
    "fit_ratio",
    "superpoly_check",
    "DEFAULT_P_LIST",
]

DEFAULT_P_LIST = (1, 2, 4, 8)
NOISE_FACTOR = 3.0
MIN_LAGS = 5


@dataclass(frozen=True)
class TestFunction:
    """A Lipschitz function of the primary phase coordinate (x, or the fiber y).

    ``norm`` is the Lipschitz norm sup|phi| + Lip(phi).
    """

    __test__ = False  # not a pytest class

    kind: str
    sup: float
    lip: float
    func: Callable[[np.ndarray], np.ndarray]

    @property
    def norm(self) -> float:
        return self.sup + self.lip

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.func(u)


_TF = {
    "coordinate": (1.0, 1.0, lambda u: u),
    "cosine": (1.0, 2.0 * math.pi, lambda u: np.cos(2.0 * np.pi * u)),
    "tent": (1.0, 2.0, lambda u: np.abs(2.0 * u - 1.0)),
}
TEST_FUNCTIONS = tuple(_TF)


def make_test_function(kind: str) -> TestFunction:
    try:
        sup, lip, f = _TF[kind]
    except KeyError:
        raise ValueError(f"unknown test function {kind!r}; expected one of {TEST_FUNCTIONS}") from None
    return TestFunction(kind, sup, lip, f)


def _primary(ens: Ensemble) -> np.ndarray:
    c = ens.coords
    return c if c.ndim == 1 else c[:, 0]


def _cov(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    prod = (a - a.mean()) * (b - b.mean())
    return abs(float(prod.mean())), float(prod.std(ddof=1) / math.sqrt(a.size))


def correlation(spec: SystemSpec, phi: TestFunction, psi: TestFunction, n: int, M: int,
                seed: int) -> tuple[float, float]:
    """|E[phi(T^n X) psi(X)] - E[phi] E[psi]| over M invariant samples, with its standard error."""
    if n < 0:
        raise ValueError("lag must be non-negative")
    if M < 1000:
        raise ValueError("need at least 1000 samples")
    ens = sample_ensemble(spec, seed, M)
    b = psi(_primary(ens))
    a = phi(_primary(ens.advance(n)))
    return _cov(a, b)


@dataclass(frozen=True)
class DecayProfile:
    lags: np.ndarray
    c_hat: np.ndarray
    stderr: np.ndarray
    M: int
    norm_product: float

    @property
    def theta_hat(self) -> np.ndarray:
        return self.c_hat / self.norm_product

    @property
    def noise_floor(self) -> float:
        return NOISE_FACTOR * float(self.stderr.max())

    @property
    def above_floor(self) -> np.ndarray:
        return self.c_hat > self.noise_floor

    def rows(self) -> list[tuple]:
        return [(int(n), float(c), float(s), float(t))
                for n, c, s, t in zip(self.lags, self.c_hat, self.stderr, self.theta_hat)]


def decay_profile(spec: SystemSpec, phi: TestFunction, psi: TestFunction, n_max: int, M: int,
                  seed: int) -> DecayProfile:
    """Correlations at lags 0..n_max, all lags sharing one sample set."""
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    if M < 1000:
        raise ValueError("need at least 1000 samples")
    ens = sample_ensemble(spec, seed, M)
    b = psi(_primary(ens))
    c_hat, se = [], []
    for _ in range(n_max + 1):
        c, s = _cov(phi(_primary(ens)), b)
        c_hat.append(c)
        se.append(s)
        ens = ens.advance(1)
    return DecayProfile(np.arange(n_max + 1), np.array(c_hat), np.array(se), M,
                        phi.norm * psi.norm)


def fit_ratio(profile: DecayProfile) -> float:
    """rho of a least-squares fit c_hat(n) ~ c rho^n over lags above the noise floor."""
    ok = profile.above_floor
    if ok.sum() < 2:
        return float("nan")
    slope = np.polyfit(profile.lags[ok], np.log(profile.c_hat[ok]), 1)[0]
    return float(np.exp(slope))


@dataclass(frozen=True)
class Verdict:
    p: float
    trend_slope: float
    ci_low: float
    ci_high: float
    verdict: str

    def row(self) -> tuple:
        return (self.p, self.trend_slope, self.ci_low, self.ci_high, self.verdict)


def superpoly_check(profile: DecayProfile, p_list=DEFAULT_P_LIST,
                    confidence: float = 0.95) -> list[Verdict]:
    """Per exponent p, the sign of the linear trend of log(c_hat(n) n^p) in n.

    Uses lags n >= 1 above the noise floor.  "decaying" needs the whole
    two-sided confidence interval of the trend below zero; fewer than five
    usable lags gives "indeterminate".
    """
    ok = profile.above_floor & (profile.lags >= 1)
    nan = float("nan")
    if ok.sum() < MIN_LAGS:
        return [Verdict(p, nan, nan, nan, "indeterminate") for p in p_list]
    n = profile.lags[ok].astype(float)
    logc = np.log(profile.c_hat[ok])
    out = []
    for p in p_list:
        res = stats.linregress(n, logc + p * np.log(n))
        half = stats.t.ppf(0.5 + confidence / 2.0, n.size - 2) * res.stderr
        lo, hi = res.slope - half, res.slope + half
        out.append(Verdict(p, float(res.slope), float(lo), float(hi),
                           "decaying" if hi < 0 else "not decaying"))
    return out
