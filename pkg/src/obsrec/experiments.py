"""Experiment configurations, the E1-E5 catalog, and report assembly."""
from __future__ import annotations

import configparser
import csv
import json
import os
import platform
import re
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from . import __version__
from .dimension import choose_probes, local_dimension, pushforward_cloud
from .dynamics import SystemSpec, sample_ensemble
from .errors import ConfigError, ObsrecError
from .observables import OBSERVABLES, jacobian_rank, make_observable
from .recurrence import RateEstimate, recurrence_rate

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "Check",
    "StageError",
    "CATALOG",
    "list_experiments",
    "preset",
    "load_config",
    "parse_radii",
    "run_experiment",
    "write_report",
]

OCTAVE_RADII = tuple(2.0 ** -np.arange(4, 15))
QUARTER_OCTAVE_RADII = tuple(2.0 ** -(np.arange(16, 29) / 4.0))
SMOOTH_MAPS = ("constant", "line", "identity2", "parabola")
EXPECTED_RANK = {"constant": 0, "line": 1, "identity2": 2, "parabola": 1}


class StageError(ObsrecError):
    """A module error raised inside a named experiment stage."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:  # re-raised with the stage attached
        raise StageError(name, exc) from exc


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    system: SystemSpec
    observable: str = "identity"
    radii: tuple[float, ...] = OCTAVE_RADII
    dim_radii: tuple[float, ...] = OCTAVE_RADII
    p_schedule: tuple[int, ...] = (0, 10, 100, 1000)
    horizon: int = 10**6
    cloud_size: int = 10**5
    probes: int = 30
    starts: int = 30
    seed: int = 0
    min_count: int = 50
    workers: int = 1
    out_dir: str | None = None
    start_filter: str = "any"
    mode: str = "iid"
    observables: tuple[str, ...] = ()
    rank_points: int = 100

    def validate(self) -> "ExperimentConfig":
        def need(cond, fld, msg):
            if not cond:
                raise ConfigError(fld, msg)

        for fld in ("radii", "dim_radii"):
            r = np.asarray(getattr(self, fld), dtype=float)
            need(r.size > 0, fld, "must not be empty")
            need(bool(np.all(r > 0)), fld, "every radius must be positive")
            need(bool(np.all(np.diff(r) < 0)), fld, "radii must be strictly decreasing")
        ps = np.asarray(self.p_schedule)
        need(ps.size > 0 and bool(np.all(ps >= 0)), "p_schedule", "entries must be >= 0")
        need(bool(np.all(np.diff(ps) > 0)), "p_schedule", "must be strictly increasing")
        need(self.horizon > int(ps.max()), "horizon", "must exceed the largest p")
        need(self.cloud_size >= 1, "cloud_size", "must be at least 1")
        need(self.probes >= 1, "probes", "must be at least 1")
        need(self.starts >= 1, "starts", "must be at least 1")
        need(self.min_count >= 1, "min_count", "must be at least 1")
        need(self.workers >= 1, "workers", "must be at least 1")
        need(self.rank_points >= 1, "rank_points", "must be at least 1")
        need(self.start_filter in ("any", "outside_A"), "start_filter", "any | outside_A")
        need(self.mode in ("iid", "orbit"), "mode", "iid | orbit")
        for kind in (self.observable, *self.observables):
            need(kind in OBSERVABLES, "observable", f"unknown observable {kind!r}")
        if self.start_filter == "outside_A":
            need(self.system.kind == "skew", "start_filter", "outside_A needs the skew system")
        return self

    def echo(self) -> dict[str, Any]:
        return {
            "name": self.name, "system": self.system.to_mapping(), "observable": self.observable,
            "observables": list(self.observables), "radii": [repr(float(r)) for r in self.radii],
            "dim_radii": [repr(float(r)) for r in self.dim_radii],
            "p_schedule": list(self.p_schedule), "horizon": self.horizon,
            "cloud_size": self.cloud_size, "probes": self.probes, "starts": self.starts,
            "seed": self.seed, "min_count": self.min_count, "start_filter": self.start_filter,
            "mode": self.mode, "rank_points": self.rank_points,
        }


_GRID = re.compile(r"^\s*2\^(-?\d+(?:\.\d+)?)\s*\.\.\s*2\^(-?\d+(?:\.\d+)?)\s*(?::\s*(\d+))?\s*$")


def parse_radii(text: str) -> tuple[float, ...]:
    """``2^-4..2^-14`` (one radius per octave), ``2^-4..2^-7:4`` (four per octave),
    or a comma-separated list of numbers."""
    m = _GRID.match(text)
    if m:
        a, b = float(m.group(1)), float(m.group(2))
        per = int(m.group(3) or 1)
        n = int(round(abs(b - a) * per))
        exps = np.linspace(a, b, n + 1)
        return tuple(float(2.0**e) for e in exps)
    return tuple(float(t) for t in text.split(",") if t.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(float(t)) for t in text.split(",") if t.strip())


def load_config(path: str) -> ExperimentConfig:
    """Read an INI-style key = value file.

    Sections and keys::

        [experiment]  name, base (E1..E5 preset to start from), starts, probes, seed,
                      workers, out_dir, start_filter, rank_points
        [system]      kind, alpha (number or "golden"), bernoulli, seed
        [observable]  kind, kinds (comma list, smooth-map experiments)
        [recurrence]  radii, p_schedule, horizon
        [dimension]   radii, cloud_size, min_count, mode
    """
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ConfigError("path", f"cannot read {path}")

    def get(section, key):
        return cp.get(section, key) if cp.has_option(section, key) else None

    base_name = get("experiment", "base")
    try:
        cfg = preset(base_name) if base_name else ExperimentConfig("custom", SystemSpec("tripling"))
    except KeyError:
        raise ConfigError("base", f"unknown preset {base_name!r}") from None
    kw: dict[str, Any] = {}
    fields = [
        ("experiment", "name", "name", str), ("experiment", "starts", "starts", int),
        ("experiment", "probes", "probes", int), ("experiment", "seed", "seed", int),
        ("experiment", "workers", "workers", int), ("experiment", "out_dir", "out_dir", str),
        ("experiment", "start_filter", "start_filter", str),
        ("experiment", "rank_points", "rank_points", int),
        ("observable", "kind", "observable", str),
        ("observable", "kinds", "observables",
         lambda s: tuple(t.strip() for t in s.split(",") if t.strip())),
        ("recurrence", "radii", "radii", parse_radii),
        ("recurrence", "p_schedule", "p_schedule", _ints),
        ("recurrence", "horizon", "horizon", lambda s: int(float(s))),
        ("dimension", "radii", "dim_radii", parse_radii),
        ("dimension", "cloud_size", "cloud_size", lambda s: int(float(s))),
        ("dimension", "min_count", "min_count", int), ("dimension", "mode", "mode", str),
    ]
    for section, key, attr, conv in fields:
        raw = get(section, key)
        if raw is None:
            continue
        try:
            kw[attr] = conv(raw.strip())
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}", str(exc)) from None
    if cp.has_section("system"):
        try:
            merged = {**cfg.system.to_mapping(), **dict(cp.items("system"))}
            kw["system"] = SystemSpec.from_mapping(merged)
        except (ValueError, KeyError) as exc:
            raise ConfigError("system", str(exc)) from None
    return replace(cfg, **kw).validate()


# --------------------------------------------------------------------------
# catalog
# --------------------------------------------------------------------------

CATALOG = (
    ("E1", "equality on a mixing system",
     "recurrence rate equals pointwise dimension under super-polynomial decay of correlations "
     "(tripling map, identity observable)"),
    ("E2", "Lipschitz non-trivial observable",
     "same equality for a Lipschitz observable into R^2 (circle embedding)"),
    ("E3", "instantaneous vs non-instantaneous return",
     "skew-product rotation: instantaneous rate 0 off the cylinder, non-instantaneous rate "
     "equals the fiber dimension 1"),
    ("E4", "strict inequality",
     "upper bound of recurrence rate by pointwise dimension can be strict (identity map)"),
    ("E5", "rank theorem",
     "pointwise dimension of a smooth image of Lebesgue measure equals the rank of the "
     "differential"),
)


def list_experiments() -> list[tuple[str, str, str]]:
    return list(CATALOG)


def preset(name: str) -> ExperimentConfig:
    name = name.upper()
    if name == "E1":
        return ExperimentConfig("E1", SystemSpec("tripling"), "identity")
    if name == "E2":
        return ExperimentConfig("E2", SystemSpec("tripling"), "circle")
    if name == "E3":
        return ExperimentConfig("E3", SystemSpec("skew"), "projection", starts=20,
                                start_filter="outside_A")
    if name == "E4":
        return ExperimentConfig("E4", SystemSpec("identity"), "identity")
    if name == "E5":
        return ExperimentConfig("E5", SystemSpec("cat"), "identity2", probes=50,
                                dim_radii=QUARTER_OCTAVE_RADII, observables=SMOOTH_MAPS)
    raise KeyError(name)


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: str
    passed: bool

    def as_dict(self):
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance,
                "passed": bool(self.passed)}


def _within(name, value, lo, hi) -> Check:
    return Check(name, float(value), f"[{lo}, {hi}]", bool(lo <= value <= hi))


def _at_most(name, value, hi) -> Check:
    return Check(name, float(value), f"<= {hi}", bool(value <= hi))


def _at_least(name, value, lo) -> Check:
    return Check(name, float(value), f">= {lo}", bool(value >= lo))


def _exact(name, value, target) -> Check:
    return Check(name, float(value), f"== {target} (exact)", bool(value == target))


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rates: list[tuple[str, int, RateEstimate, bool]] = field(default_factory=list)
    profiles: list[tuple[str, int, tuple]] = field(default_factory=list)
    dims: list[tuple[str, int, Any]] = field(default_factory=list)
    aggregates: dict[str, float] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> dict[str, Any]:
        return {
            "experiment": self.config.name,
            "passed": self.passed,
            "checks": [c.as_dict() for c in self.checks],
            "aggregates": {k: float(v) for k, v in sorted(self.aggregates.items())},
            "config": self.config.echo(),
            "provenance": {"obsrec": __version__, "numpy": np.__version__,
                           "python": platform.python_version()},
        }

    def summary_lines(self) -> list[str]:
        lines = [f"{self.config.name}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            lines.append(f"  [{'pass' if c.passed else 'FAIL'}] {c.name} = {c.value:.6g} "
                         f"(tolerance {c.tolerance})")
        return lines


RATE_HEADER = ("group", "start") + RateEstimate.FIELDS + ("final",)
PROFILE_HEADER = ("group", "start", "p", "r", "tau", "censored")
DIM_HEADER = ("group", "probe", "slope", "lower", "upper", "n_radii", "min_count", "flagged")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_report(report: ExperimentReport, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = {k: os.path.join(out_dir, f"{k}.csv") for k in ("rates", "profiles", "dims")}
    _write_csv(paths["rates"], RATE_HEADER,
               [(g, s, *est.row(), final) for g, s, est, final in report.rates])
    _write_csv(paths["profiles"], PROFILE_HEADER,
               [(g, s, *row) for g, s, row in report.profiles])
    _write_csv(paths["dims"], DIM_HEADER, [(g, i, *est.row()) for g, i, est in report.dims])
    summary = os.path.join(out_dir, "report.json")
    with open(summary, "w") as fh:
        json.dump(report.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    text = os.path.join(out_dir, "report.txt")
    with open(text, "w") as fh:
        fh.write("\n".join(report.summary_lines()) + "\n")
    return [*paths.values(), summary, text]


# --------------------------------------------------------------------------
# protocols
# --------------------------------------------------------------------------


def _rate_task(args):
    spec, obs_kind, state, radii, ps, H = args
    return recurrence_rate(spec, make_observable(obs_kind), state, radii, ps, H)


def _map(func, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _starts(cfg: ExperimentConfig) -> list:
    if cfg.start_filter == "any":
        return sample_ensemble(cfg.system, cfg.seed, cfg.starts).states()
    # condition on omega_0 = 0 by rejection
    out: list = []
    batch = 0
    while len(out) < cfg.starts:
        ens = sample_ensemble(cfg.system, cfg.seed + 7919 * batch, 4 * cfg.starts)
        out.extend(s for s in ens.states() if not s.in_cylinder)
        batch += 1
    return out[:cfg.starts]


def _rates(cfg: ExperimentConfig, report: ExperimentReport, group: str):
    with _stage("sampling start points"):
        starts = _starts(cfg)
    tasks = [(cfg.system, cfg.observable, s, np.asarray(cfg.radii), cfg.p_schedule, cfg.horizon)
             for s in starts]
    with _stage("return-time profiles"):
        results = _map(_rate_task, tasks, cfg.workers)
    for i, rr in enumerate(results):
        for est in rr.per_p:
            report.rates.append((group, i, est, est is rr.final))
        for prof in rr.profiles:
            for row in prof.rows():
                report.profiles.append((group, i, row))
    return results


def _dims(cfg: ExperimentConfig, report: ExperimentReport, group: str, obs_kind: str):
    with _stage(f"pushforward cloud ({obs_kind})"):
        cloud = pushforward_cloud(cfg.system, make_observable(obs_kind), cfg.cloud_size,
                                  cfg.seed + 1, cfg.mode)
        probes = choose_probes(cloud, cfg.probes, cfg.seed + 2)
    with _stage(f"local dimension ({obs_kind})"):
        est = [local_dimension(cloud, y, cfg.dim_radii, cfg.min_count) for y in probes]
    for i, e in enumerate(est):
        report.dims.append((group, i, e))
    return est, probes


def _rate_vs_dim(cfg: ExperimentConfig, report: ExperimentReport, tol: dict):
    results = _rates(cfg, report, cfg.observable)
    est, _ = _dims(cfg, report, cfg.observable, cfg.observable)
    rate = float(np.median([r.final.slope for r in results]))
    dim = float(np.median([e.slope for e in est]))
    report.aggregates.update({
        "median_rate": rate, "median_dim": dim,
        "rate_q25": float(np.percentile([r.final.slope for r in results], 25)),
        "rate_q75": float(np.percentile([r.final.slope for r in results], 75)),
        "unstable_fraction": float(np.mean([r.unstable for r in results])),
        "dim_dispersion": float(np.std([e.slope for e in est], ddof=1)) if len(est) > 1 else 0.0,
    })
    if "rate" in tol:
        report.checks.append(_within("median rate slope", rate, *tol["rate"]))
    if "dim" in tol:
        report.checks.append(_within("median local-dimension slope", dim, *tol["dim"]))
    if "gap" in tol:
        report.checks.append(_at_most("|median rate - median dim|", abs(rate - dim), tol["gap"]))
    report.checks.append(_at_most("median rate - median dim (rate <= dim + 0.1)",
                                  rate - dim, 0.1))
    return results, est


def _run_e3(cfg: ExperimentConfig, report: ExperimentReport):
    results = _rates(cfg, report, cfg.observable)
    ps = list(cfg.p_schedule)
    p0 = [r.profiles[ps.index(0)] for r in results] if 0 in ps else []
    if p0:
        worst = max(int(np.max(np.where(pr.tau < 0, 10**18, pr.tau))) for pr in p0)
        report.checks.append(_exact("max tau_(r,0) over starts and radii", worst, 1))
        s0 = max(r.per_p[ps.index(0)].slope for r in results)
        report.checks.append(_exact("max rate slope at p=0", s0, 0.0))
    big = max(ps)
    sb = float(np.median([r.per_p[-1].slope for r in results]))
    report.aggregates[f"median_rate_p{big}"] = sb
    report.checks.append(_at_least(f"median rate slope at p={big}", sb, 0.8))
    est, _ = _dims(cfg, report, cfg.observable, cfg.observable)
    dim = float(np.median([e.slope for e in est]))
    report.aggregates["median_dim"] = dim
    report.checks.append(_within("median local-dimension slope", dim, 0.9, 1.1))


def _run_e4(cfg: ExperimentConfig, report: ExperimentReport):
    results, est = _rate_vs_dim(cfg, report, {"dim": (0.85, 1.15)})
    p0 = [r.profiles[0] for r in results]
    worst = max(int(np.max(np.where(pr.tau < 0, 10**18, pr.tau - pr.p))) for pr in p0)
    report.checks.append(_exact("max tau_(r,0) over starts and radii", worst, 1))
    report.checks.append(_exact("max rate slope at p=0", max(r.per_p[0].slope for r in results),
                                0.0))
    gap = float(np.median([e.slope for e in est])) - max(r.final.slope for r in results)
    report.checks.append(Check("dimension minus rate (strict gap)", gap, "> 0", gap > 0))


def _run_e5(cfg: ExperimentConfig, report: ExperimentReport):
    ranges = {"constant": (-0.05, 0.05), "line": (0.85, 1.15), "identity2": (1.8, 2.2),
              "parabola": (0.85, 1.15)}
    rng = np.random.default_rng(cfg.seed + 3)
    pts = rng.random((cfg.rank_points, 2))
    for kind in cfg.observables or (cfg.observable,):
        est, probes = _dims(cfg, report, kind, kind)
        med = float(np.median([e.slope for e in est]))
        report.aggregates[f"median_dim_{kind}"] = med
        obs = make_observable(kind)
        with _stage(f"jacobian rank ({kind})"):
            ranks = np.array([jacobian_rank(obs, x) for x in pts])
        if kind in ranges:
            report.checks.append(_within(f"median slope, {kind}", med, *ranges[kind]))
            bad = int(np.count_nonzero(ranks != EXPECTED_RANK[kind]))
            report.checks.append(_exact(
                f"jacobian_rank mismatches vs {EXPECTED_RANK[kind]}, {kind}", bad, 0))
        else:
            report.aggregates[f"rank_mean_{kind}"] = float(ranks.mean())


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run one experiment; writes CSVs and the summary when ``out_dir`` is set."""
    cfg.validate()
    report = ExperimentReport(cfg)
    name = cfg.name.upper()
    if name in ("E1",):
        _rate_vs_dim(cfg, report, {"rate": (0.85, 1.15), "dim": (0.85, 1.15), "gap": 0.15})
    elif name == "E2":
        _rate_vs_dim(cfg, report, {"rate": (0.85, 1.15), "dim": (0.85, 1.15)})
    elif name == "E3":
        _run_e3(cfg, report)
    elif name == "E4":
        _run_e4(cfg, report)
    elif name == "E5":
        _run_e5(cfg, report)
    else:
        _rate_vs_dim(cfg, report, {})
    if cfg.out_dir:
        write_report(report, cfg.out_dir)
    return report
