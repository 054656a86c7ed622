from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from obsrec.dynamics import (IntervalState, SkewState, SymbolStream, SystemSpec, TorusState,
                             iter_orbit, orbit_observed, sample_ensemble, sample_invariant,
                             step, visit_count)
from obsrec.errors import AllocationLimitError, PhaseSpaceMismatch
from obsrec.observables import make_observable

TRIPLING = SystemSpec("tripling")
CAT = SystemSpec("cat")
SKEW = SystemSpec("skew")
IDENTITY = SystemSpec("identity")


def test_tripling_step():
    assert step(TRIPLING, IntervalState(0.2)).x == pytest.approx(0.6, abs=1e-15)


def test_cat_step():
    s = step(CAT, TorusState(0.5, 0.5))
    assert (s.x, s.y) == (0.5, 0.0)


def test_skew_step_outside_cylinder_keeps_fiber():
    s = SkewState(SymbolStream(7, prefix=(0, 1)), 0.3)
    t = step(SKEW, s)
    assert t.y == 0.3
    assert t.omega.cursor == 1 and t.omega.first == 1


def test_skew_step_inside_cylinder_rotates():
    s = SkewState(SymbolStream(7, prefix=(1,)), 0.3)
    assert step(SKEW, s).y == pytest.approx((0.3 + SKEW.alpha) % 1.0)


def test_phase_space_mismatch():
    with pytest.raises(PhaseSpaceMismatch):
        step(CAT, IntervalState(0.1))
    with pytest.raises(PhaseSpaceMismatch):
        step(SKEW, TorusState(0.1, 0.2))


def test_spec_rejects_rational_alpha_and_degenerate_bias():
    with pytest.raises(ValueError):
        SystemSpec("skew", alpha=0.375)
    with pytest.raises(ValueError):
        SystemSpec("skew", bernoulli=1.0)
    with pytest.raises(ValueError):
        SystemSpec("doubling")


def test_state_ranges():
    with pytest.raises(ValueError):
        IntervalState(1.0)
    with pytest.raises(ValueError):
        TorusState(0.2, -0.1)


def test_sample_invariant_examples():
    xs = sample_invariant(TRIPLING, 3, 4)
    assert len(xs) == 4 and all(0.0 <= s.x < 1.0 for s in xs)
    assert len(sample_invariant(IDENTITY, 0, 1)) == 1
    ens = sample_ensemble(SKEW, 11, 10**4)
    frac = ens.first_symbols().mean()
    assert abs(frac - 0.5) < 3 * np.sqrt(0.25 / 10**4)


def test_sampling_is_deterministic():
    a = sample_ensemble(CAT, 5, 100).coords
    b = sample_ensemble(CAT, 5, 100).coords
    assert np.array_equal(a, b)


@pytest.mark.parametrize("spec", [TRIPLING, CAT, SKEW, IDENTITY], ids=lambda s: s.kind)
def test_invariance_ks(spec):
    ens = sample_ensemble(spec, 21, 10**5)
    moved = ens.advance(1)
    a = ens.coords.reshape(len(ens), -1)
    b = moved.coords.reshape(len(ens), -1)
    m = a.shape[0]
    crit = 1.628 * np.sqrt(2.0 / m)  # two-sample KS, 1% level
    for j in range(a.shape[1]):
        assert stats.ks_2samp(a[:, j], b[:, j]).statistic < crit


@pytest.mark.parametrize("spec", [TRIPLING, CAT, SKEW], ids=lambda s: s.kind)
def test_orbits_are_bit_identical(spec):
    x0 = sample_invariant(spec, 2, 1)[0]
    a = np.concatenate([b for _, b in iter_orbit(spec, x0, 5000, chunk=777)])
    b = np.concatenate([b for _, b in iter_orbit(spec, x0, 5000)])
    assert np.array_equal(a, b)


@pytest.mark.parametrize("spec", [TRIPLING, CAT, SKEW], ids=lambda s: s.kind)
def test_step_matches_orbit(spec):
    s = sample_invariant(spec, 4, 1)[0]
    orbit = np.concatenate([b for _, b in iter_orbit(spec, s, 20)])
    ens = sample_ensemble(spec, 4, 1)
    for k in range(1, 21):
        s = step(spec, s)
        ens = ens.advance(1)
        y = s.y if spec.kind == "skew" else (s.x if spec.kind == "tripling" else (s.x, s.y))
        assert np.array_equal(np.ravel(orbit[k]), np.ravel(y))
        assert np.array_equal(np.ravel(ens.coords[0]), np.ravel(y))


def test_visit_count_examples():
    assert visit_count(SKEW, SymbolStream(1), 0) == 0
    assert visit_count(SKEW, SymbolStream(1, prefix=(1, 1, 0, 1)), 3) == 2
    k = 10**5
    q = visit_count(SKEW, SymbolStream(99), k)
    assert abs(q / k - 0.5) < 3 * np.sqrt(0.25 / k)


@pytest.mark.parametrize("key", range(5))
def test_visit_count_grows(key):
    assert visit_count(SKEW, SymbolStream(key), 10**5) > 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**62), st.integers(0, 200), st.integers(0, 200))
def test_visit_count_monotone(key, k1, k2):
    w = SymbolStream(key)
    lo, hi = sorted((k1, k2))
    assert visit_count(SKEW, w, lo) <= visit_count(SKEW, w, hi)


def test_symbol_stream_cursor_consistency():
    w = SymbolStream(12345)
    assert np.array_equal(w.shift(3).symbols(0, 10), w.symbols(3, 10))


def test_orbit_observed_examples():
    buf = orbit_observed(IDENTITY, make_observable("identity"), IntervalState(0.37), 5)
    assert len(buf) == 6 and np.all(buf.values == 0.37)
    buf = orbit_observed(TRIPLING, make_observable("identity"), IntervalState(0.1), 2)
    assert np.allclose(buf.values[:, 0], [0.1, 0.3, 0.9], atol=1e-14)
    s = SkewState(SymbolStream(3, prefix=(0,)), 0.42)
    buf = orbit_observed(SKEW, make_observable("projection"), s, 1)
    assert buf.values[0, 0] == buf.values[1, 0] == 0.42


def test_orbit_observed_allocation_limit():
    with pytest.raises(AllocationLimitError):
        orbit_observed(TRIPLING, make_observable("identity"), IntervalState(0.1), 100,
                       max_entries=50)


def test_spec_mapping_round_trip():
    spec = SystemSpec("skew", bernoulli=0.3, seed=4)
    assert SystemSpec.from_mapping(spec.to_mapping()) == spec
    assert SystemSpec.from_mapping({"kind": "skew", "alpha": "golden"}).alpha == SKEW.alpha
