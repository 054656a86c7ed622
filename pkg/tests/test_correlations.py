from __future__ import annotations

import numpy as np
import pytest

from obsrec.correlations import (DecayProfile, correlation, decay_profile, fit_ratio,
                                 make_test_function, superpoly_check)
from obsrec.dynamics import SystemSpec

TRIPLING = SystemSpec("tripling")
IDENTITY = SystemSpec("identity")
COORD = make_test_function("coordinate")
COS = make_test_function("cosine")


def test_variance_at_lag_zero():
    c, se = correlation(TRIPLING, COORD, COORD, 0, 10**5, 1)
    assert abs(c - 1 / 12) < 3 * se


def test_cosine_orthogonality():
    c, se = correlation(TRIPLING, COS, COS, 1, 10**5, 2)
    assert c < 3 * se


@pytest.mark.parametrize("n", [0, 3, 50])
def test_identity_does_not_decay(n):
    c, se = correlation(IDENTITY, COORD, COORD, n, 10**5, 3)
    assert abs(c - 1 / 12) < 3 * se


def test_correlation_preconditions():
    with pytest.raises(ValueError):
        correlation(TRIPLING, COORD, COORD, 1, 999, 0)
    with pytest.raises(ValueError):
        correlation(TRIPLING, COORD, COORD, -1, 10**4, 0)
    with pytest.raises(ValueError):
        make_test_function("sawtooth")


def test_tripling_profile_ratio():
    prof = decay_profile(TRIPLING, COORD, COORD, 12, 10**5, 4)
    assert 0.25 <= fit_ratio(prof) <= 0.45


def test_identity_profile_ratio():
    prof = decay_profile(IDENTITY, COORD, COORD, 12, 10**4, 5)
    assert fit_ratio(prof) >= 0.99
    assert all(v.verdict == "not decaying" for v in superpoly_check(prof))


def test_profile_shape_and_determinism():
    a = decay_profile(TRIPLING, COORD, COS, 2, 2000, 6)
    b = decay_profile(TRIPLING, COORD, COS, 2, 2000, 6)
    assert len(a.lags) == 3 and len(a.rows()) == 3
    assert np.array_equal(a.c_hat, b.c_hat) and np.array_equal(a.stderr, b.stderr)


def test_profile_bounds_and_theta():
    tent = make_test_function("tent")
    prof = decay_profile(TRIPLING, tent, COS, 8, 10**4, 7)
    bound = 2 * tent.sup * COS.sup + 5 * prof.stderr
    assert np.all(prof.c_hat <= bound)
    assert np.all(prof.theta_hat >= 0)
    assert np.allclose(prof.theta_hat * tent.norm * COS.norm, prof.c_hat)


def test_symmetric_at_lag_zero():
    a = decay_profile(TRIPLING, COORD, COS, 2, 5000, 8)
    b = decay_profile(TRIPLING, COS, COORD, 2, 5000, 8)
    assert abs(a.c_hat[0] - b.c_hat[0]) < 1e-12


def test_tripling_verdicts_small_p():
    prof = decay_profile(TRIPLING, COORD, COORD, 12, 10**6, 0)
    verdicts = {v.p: v for v in superpoly_check(prof, (1, 2, 4))}
    for p in (1, 2, 4):
        assert verdicts[p].verdict == "decaying", verdicts[p]


def test_noise_profile_indeterminate():
    rng = np.random.default_rng(9)
    se = np.full(13, 1e-3)
    prof = DecayProfile(np.arange(13), np.abs(rng.normal(0, 1e-3, 13)), se, 10**6, 4.0)
    assert all(v.verdict == "indeterminate" for v in superpoly_check(prof))


def test_verdict_confidence_interval_contains_slope():
    prof = decay_profile(IDENTITY, COORD, COORD, 12, 10**4, 1)
    for v in superpoly_check(prof):
        assert v.ci_low <= v.trend_slope <= v.ci_high
