"""End-to-end acceptance checks; one summary line per criterion is printed at the end."""
from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from obsrec.correlations import decay_profile, fit_ratio, make_test_function, superpoly_check
from obsrec.dimension import PointCloud, ball_mass, maximal_separated_set
from obsrec.diophantine import (RotationNumber, approx_exponent, circle_norm, k0_scan,
                                m_n_eps, m_n_eps_table)
from obsrec.dynamics import SystemSpec, iter_orbit, sample_invariant
from obsrec.experiments import preset, run_experiment, write_report
from obsrec.observables import distance, jacobian_rank, make_observable
from obsrec.recurrence import DEFAULT_RADII, return_profile, return_profiles, return_time

E1 = pytest.mark.criterion(1, "E1 equality on a mixing system")
E2 = pytest.mark.criterion(2, "E2 Lipschitz non-trivial observable")
E3 = pytest.mark.criterion(3, "E3 instantaneous vs non-instantaneous return")
E4 = pytest.mark.criterion(4, "E4 strict inequality")
E5 = pytest.mark.criterion(5, "E5 rank of the differential")
C6 = pytest.mark.criterion(6, "correlation decay")
C7 = pytest.mark.criterion(7, "Diophantine chain")
C8 = pytest.mark.criterion(8, "property suite")


@pytest.fixture(scope="module")
def reports():
    return {name: run_experiment(preset(name)) for name in ("E1", "E2", "E3", "E4", "E5")}


def _median(values):
    return float(np.median(values))


def _final_rates(report):
    return [est.slope for _, _, est, final in report.rates if final]


def _dim_slopes(report, group=None):
    return [e.slope for g, _, e in report.dims if group is None or g == group]


# ---------------------------------------------------------------- 1


@E1
def test_e1_rate_and_dimension(reports, check):
    rep = reports["E1"]
    assert rep.config.starts == 30 and rep.config.horizon == 10**6
    assert rep.config.p_schedule == (0, 10, 100, 1000)
    assert np.allclose(rep.config.radii, 2.0 ** -np.arange(4, 15))
    rate, dim = _median(_final_rates(rep)), _median(_dim_slopes(rep))
    oks = [check("median rate slope", rate, "[0.85, 1.15]", 0.85 <= rate <= 1.15),
           check("median local-dimension slope", dim, "[0.85, 1.15]", 0.85 <= dim <= 1.15),
           check("|rate - dim|", abs(rate - dim), "<= 0.15", abs(rate - dim) <= 0.15)]
    assert all(oks)


# ---------------------------------------------------------------- 2


@E2
def test_e2_circle_embedding(reports, check):
    rep = reports["E2"]
    rate, dim = _median(_final_rates(rep)), _median(_dim_slopes(rep))
    oks = [check("median rate slope", rate, "[0.85, 1.15]", 0.85 <= rate <= 1.15),
           check("median local-dimension slope", dim, "[0.85, 1.15]", 0.85 <= dim <= 1.15)]
    assert all(oks)


# ---------------------------------------------------------------- 3


@E3
def test_e3a_instant_return(reports, check):
    rep = reports["E3"]
    p0_rows = [row for _, _, row in rep.profiles if row[0] == 0]
    starts = {s for _, s, _ in rep.profiles}
    taus = {row[2] for row in p0_rows}
    slopes = [est.slope for _, _, est, _ in rep.rates if est.p == 0]
    oks = [check("starts outside A", len(starts), "== 20", len(starts) == 20),
           check("distinct tau at p=0", sorted(taus), "== [1] exact", taus == {1}),
           check("max rate slope at p=0", max(slopes), "== 0 exact", max(slopes) == 0.0)]
    assert all(oks)


@E3
def test_e3b_non_instant_rate(reports, check):
    rep = reports["E3"]
    slopes = [est.slope for _, _, est, _ in rep.rates if est.p == 1000]
    med = _median(slopes)
    assert check("median rate slope at p=1000", med, ">= 0.8", med >= 0.8)


@E3
def test_e3c_fiber_dimension(reports, check):
    rep = reports["E3"]
    assert rep.config.cloud_size == 10**5
    dim = _median(_dim_slopes(rep))
    assert check("median local-dimension slope", dim, "[0.9, 1.1]", 0.9 <= dim <= 1.1)


# ---------------------------------------------------------------- 4


@E4
def test_e4_strict_gap(reports, check):
    rep = reports["E4"]
    taus = {row[2] for _, _, row in rep.profiles if row[0] == 0}
    rates = [est.slope for _, _, est, _ in rep.rates]
    dim = _median(_dim_slopes(rep))
    oks = [check("distinct tau at p=0", sorted(taus), "== [1] exact", taus == {1}),
           check("max rate slope (all p)", max(rates), "== 0 exact", max(rates) == 0.0),
           check("median local-dimension slope", dim, "[0.85, 1.15]", 0.85 <= dim <= 1.15),
           check("dim - rate", dim - max(rates), "> 0", dim - max(rates) > 0)]
    assert all(oks)


# ---------------------------------------------------------------- 5

RANGES = {"constant": (-0.05, 0.05, 0), "line": (0.85, 1.15, 1), "identity2": (1.8, 2.2, 2),
          "parabola": (0.85, 1.15, 1)}


@E5
@pytest.mark.parametrize("kind", list(RANGES))
def test_e5_dimension_equals_rank(reports, check, kind):
    rep = reports["E5"]
    lo, hi, rank = RANGES[kind]
    slopes = _dim_slopes(rep, kind)
    med = _median(slopes)
    pts = np.random.default_rng(2024).random((100, 2))
    ranks = [jacobian_rank(make_observable(kind), x) for x in pts]
    oks = [check(f"{kind}: probes", len(slopes), "== 50", len(slopes) == 50),
           check(f"{kind}: median slope", med, f"[{lo}, {hi}]", lo <= med <= hi),
           check(f"{kind}: jacobian_rank at 100 points", sorted(set(ranks)), f"== [{rank}] exact",
                 set(ranks) == {rank})]
    assert all(oks)


# ---------------------------------------------------------------- 6

COORD = make_test_function("coordinate")


@pytest.fixture(scope="module")
def tripling_profile():
    return decay_profile(SystemSpec("tripling"), COORD, COORD, 12, 10**6, 0)


@C6
def test_c6_fitted_ratio(tripling_profile, check):
    rho = fit_ratio(tripling_profile)
    assert check("fitted ratio", rho, "[0.25, 0.45]", 0.25 <= rho <= 0.45)


@C6
@pytest.mark.parametrize("p", [1, 2, 4, 8])
def test_c6_tripling_superpolynomial(tripling_profile, check, p):
    (v,) = superpoly_check(tripling_profile, (p,))
    assert check(f"tripling verdict p={p} (trend {v.trend_slope:.3g}, CI high {v.ci_high:.3g})",
                 v.verdict, "== decaying", v.verdict == "decaying")


@C6
def test_c6_identity_not_decaying(check):
    prof = decay_profile(SystemSpec("identity"), COORD, COORD, 12, 10**6, 0)
    verdicts = {v.verdict for v in superpoly_check(prof, (1, 2, 4, 8))}
    assert check("identity verdicts", sorted(verdicts), "== [not decaying]",
                 verdicts == {"not decaying"})


# ---------------------------------------------------------------- 7


@C7
def test_c7_diophantine_chain(check):
    golden = RotationNumber.golden()
    k0 = k0_scan(golden, 0.5, 10**6)
    ns = np.arange(k0, 10**4 + 1)
    table = m_n_eps_table(golden, ns, 0.5, k0)
    spot = [m_n_eps(golden, int(n), 0.5, k0) for n in (k0, 100, 1000, 10**4)]
    delta = approx_exponent(golden, 10**6)
    oks = [check("k0", k0, "found", k0 >= 1),
           check("min over n of m_n_eps(n) - n", int((table - ns).min()), ">= 0 exact",
                 bool(np.all(table >= ns))),
           check("table vs single scans", spot, "agree",
                 spot == [int(table[n - k0]) for n in (k0, 100, 1000, 10**4)]),
           check("approx_exponent(golden, 1e6)", delta, "[1.0, 1.05]", 1.0 <= delta <= 1.05)]
    assert all(oks)


# ---------------------------------------------------------------- 8

PAIRS = [(SystemSpec("tripling"), "identity"), (SystemSpec("cat"), "identity2"),
         (SystemSpec("skew"), "projection"), (SystemSpec("tripling"), "circle"),
         (SystemSpec("identity"), "identity")]


@C8
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), idx=st.integers(0, len(PAIRS) - 1))
def test_c8_tau_exceeds_p_and_monotone(seed, idx):
    spec, kind = PAIRS[idx]
    x = sample_invariant(spec, seed, 1)[0]
    profs = return_profiles(spec, make_observable(kind), x, DEFAULT_RADII[:8], (0, 5, 50), 50000)
    big = np.iinfo(np.int64).max
    prev = None
    for pr in profs:
        t = np.where(pr.censored, big, pr.tau)
        assert np.all(pr.tau[~pr.censored] > pr.p)
        assert np.all(np.diff(t) >= 0)
        if prev is not None:
            assert np.all(t >= prev)
        prev = t


@C8
def test_c8_profile_matches_oracle(check):
    rng = np.random.default_rng(100)
    mismatches = 0
    for case in range(100):
        spec, kind = PAIRS[case % len(PAIRS)]
        obs = make_observable(kind)
        x = sample_invariant(spec, int(rng.integers(1 << 30)), 1)[0]
        p, H = int(rng.integers(0, 10)), int(rng.integers(100, 2000))
        radii = np.sort(rng.uniform(1e-3, 0.4, 4))[::-1]
        vals = np.concatenate([obs.evaluate_coords(b) for _, b in iter_orbit(spec, x, H)])
        d = distance(obs.metric, vals, vals[0])
        prof = return_profile(spec, obs, x, radii, p, H)
        for r, t in zip(radii, prof.tau):
            hits = np.nonzero(d[p + 1:] < r)[0]
            expect = int(hits[0]) + p + 1 if hits.size else None
            got = None if t < 0 else int(t)
            mismatches += got != expect or return_time(spec, obs, x, r, p, H) != expect
    assert check("profile vs brute-force oracle mismatches (100 cases)", mismatches, "== 0",
                 mismatches == 0)


@C8
def test_c8_ball_mass_monotone_and_indexed(check):
    rng = np.random.default_rng(101)
    clouds = [PointCloud(rng.random(20000)), PointCloud(rng.random((20000, 2))),
              PointCloud(rng.random(20000), metric="torus")]
    radii = np.array([0.2, 0.05, 0.01, 0.002])
    bad_index = bad_mono = 0
    for q in range(1000):
        cloud = clouds[q % 3]
        y = rng.random(cloud.dim)
        bad_index += not np.array_equal(cloud.counts(y, radii), cloud.scan_counts(y, radii))
        masses = [ball_mass(cloud, y, r) for r in radii[::-1]]
        bad_mono += bool(np.any(np.diff(masses) < 0))
    oks = [check("index vs scan mismatches (1000 queries)", bad_index, "== 0", bad_index == 0),
           check("ball_mass monotonicity violations", bad_mono, "== 0", bad_mono == 0)]
    assert all(oks)


@C8
@pytest.mark.parametrize("dim", [1, 2])
def test_c8_maximal_separated_set(dim):
    pts = np.random.default_rng(102 + dim).random((1000, dim))
    r = 0.05
    chosen = pts[maximal_separated_set(pts, r)]
    pair = np.sqrt(((chosen[:, None] - chosen[None, :]) ** 2).sum(-1))
    np.fill_diagonal(pair, np.inf)
    assert np.all(pair >= r)
    assert np.all(np.sqrt(((pts[:, None] - chosen[None, :]) ** 2).sum(-1)).min(1) < r)


@C8
@settings(max_examples=200, deadline=None)
@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_c8_circle_norm(t):
    v = circle_norm(t)
    tol = 1e-12 * max(1.0, abs(t))
    assert abs(circle_norm(-t) - v) <= tol and abs(circle_norm(t + 1) - v) <= tol


@C8
def test_c8_byte_identical_reruns(tmp_path, reports, check):
    cfg = replace(preset("E3"), out_dir=str(tmp_path / "a"))
    run_experiment(cfg)
    write_report(reports["E3"], str(tmp_path / "b"))
    names = ("rates.csv", "profiles.csv", "dims.csv", "report.json")
    same = [(tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in names]
    assert check("identical output files", sum(same), f"== {len(names)}", all(same))
