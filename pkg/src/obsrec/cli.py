"""Command-line entry point: ``obsrec <subcommand> ...``.

Exit codes: 0 pass, 1 tolerance failure, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

import numpy as np

from .correlations import (DEFAULT_P_LIST, TEST_FUNCTIONS, decay_profile, fit_ratio,
                           make_test_function, superpoly_check)
from .dimension import choose_probes, local_dimension, pushforward_cloud
from .dynamics import KINDS, IntervalState, SystemSpec, TorusState, sample_ensemble
from .errors import ConfigError, InsufficientDataError
from .experiments import (DIM_HEADER, PROFILE_HEADER, RATE_HEADER, _fmt, list_experiments,
                          load_config, parse_radii, preset, run_experiment)
from .observables import OBSERVABLES, make_observable, rank_field
from .recurrence import recurrence_rate

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _emit(name: str, header, rows, out_dir: str | None) -> None:
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        fh = open(os.path.join(out_dir, name), "w", newline="")
    else:
        fh = sys.stdout
        print(f"# {name}", file=fh)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _config(fn, field: str):
    """Turn a ValueError while building inputs into a ConfigError for ``field``."""
    try:
        return fn()
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(field, str(exc)) from None


def _system(args) -> SystemSpec:
    mapping = {"kind": args.system, "seed": str(args.seed)}
    if args.alpha is not None:
        mapping["alpha"] = args.alpha
    if args.bernoulli is not None:
        mapping["bernoulli"] = args.bernoulli
    return _config(lambda: SystemSpec.from_mapping(mapping), "system")


def _radii(text: str, field: str = "radii") -> np.ndarray:
    r = _config(lambda: np.asarray(parse_radii(text), dtype=float), field)
    if r.size == 0 or np.any(r <= 0) or np.any(np.diff(r) >= 0):
        raise ConfigError(field, "radii must be positive and strictly decreasing")
    return r


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_list(args) -> int:
    for name, title, anchor in list_experiments():
        print(f"{name}\t{title}\t{anchor}")
    return EXIT_PASS


def cmd_run(args) -> int:
    target = args.target
    if os.path.isfile(target):
        cfg = load_config(target)
    else:
        try:
            cfg = preset(target)
        except KeyError:
            raise ConfigError("experiment", f"{target!r} is neither E1..E5 nor a config file") from None
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.horizon is not None:
        overrides["horizon"] = args.horizon
    overrides["out_dir"] = args.out_dir or cfg.out_dir or os.path.join("results", cfg.name)
    cfg = replace(cfg, **overrides).validate()
    report = run_experiment(cfg)
    print("\n".join(report.summary_lines()))
    print(f"outputs in {cfg.out_dir}")
    return EXIT_PASS if report.passed else EXIT_FAIL


def _starts(spec: SystemSpec, args) -> list:
    if args.start is None:
        return sample_ensemble(spec, args.seed, args.starts).states()
    vals = _config(lambda: [float(t) for t in args.start.split(",")], "start")
    if spec.phase == "interval" and len(vals) == 1:
        return [IntervalState(vals[0])]
    if spec.phase == "torus2" and len(vals) == 2:
        return [TorusState(vals[0], vals[1])]
    raise ConfigError("start", f"explicit starts need 1 (interval) or 2 (torus) numbers; "
                               f"{spec.kind} starts are sampled from --seed")


def cmd_return_times(args) -> int:
    spec = _system(args)
    obs = _config(lambda: make_observable(args.observable), "observable")
    radii = _radii(args.radii)
    ps = _config(lambda: tuple(int(t) for t in args.p.split(",")), "p")
    H = args.horizon or 10**6
    if H <= max(ps):
        raise ConfigError("horizon", "must exceed the largest p")
    rates, profiles = [], []
    for i, s in enumerate(_starts(spec, args)):
        rr = recurrence_rate(spec, obs, s, radii, ps, H)
        rates.extend((obs.kind, i, *e.row(), e is rr.final) for e in rr.per_p)
        profiles.extend((obs.kind, i, *row) for prof in rr.profiles for row in prof.rows())
    _emit("profiles.csv", PROFILE_HEADER, profiles, args.out_dir)
    _emit("rates.csv", RATE_HEADER, rates, args.out_dir)
    return EXIT_PASS


def cmd_local_dim(args) -> int:
    spec = _system(args)
    obs = _config(lambda: make_observable(args.observable), "observable")
    radii = _radii(args.radii)
    cloud = pushforward_cloud(spec, obs, args.cloud_size, args.seed + 1, args.mode)
    probes = choose_probes(cloud, args.probes, args.seed + 2)
    rows = []
    for i, y in enumerate(probes):
        try:
            rows.append((obs.kind, i, *local_dimension(cloud, y, radii, args.min_count).row()))
        except InsufficientDataError as exc:
            print(f"probe {i}: {exc}", file=sys.stderr)
    _emit("dims.csv", DIM_HEADER, rows, args.out_dir)
    return EXIT_PASS


def cmd_corr_decay(args) -> int:
    spec = _system(args)
    phi = _config(lambda: make_test_function(args.phi), "phi")
    psi = _config(lambda: make_test_function(args.psi), "psi")
    prof = decay_profile(spec, phi, psi, args.n_max, args.samples, args.seed)
    _emit("correlations.csv", ("n", "c_hat", "stderr", "theta_hat"), prof.rows(), args.out_dir)
    verdicts = superpoly_check(prof, DEFAULT_P_LIST)
    _emit("verdicts.csv", ("p", "trend_slope", "ci_low", "ci_high", "verdict"),
          [v.row() for v in verdicts], args.out_dir)
    print(f"fitted ratio {fit_ratio(prof):.6g}", file=sys.stderr)
    return EXIT_PASS


def cmd_rank_map(args) -> int:
    obs = _config(lambda: make_observable(args.observable), "observable")
    nx, ny = _config(lambda: tuple(int(t) for t in args.shape.split("x")), "shape")
    field = rank_field(obs, shape=(nx, ny), h=args.h, tol=args.tol)
    rows = [(float(x), float(y), int(field.ranks[j, i]))
            for j, y in enumerate(field.ys) for i, x in enumerate(field.xs)]
    _emit("ranks.csv", ("x", "y", "rank"), rows, args.out_dir)
    return EXIT_PASS


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="obsrec",
                                 description="Recurrence rates and dimensions of observations.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed_default=0):
        p.add_argument("--seed", type=int, default=seed_default)
        p.add_argument("--out-dir", default=None, help="write CSVs here (default: stdout)")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--horizon", type=int, default=None)

    def system(p, default="tripling"):
        p.add_argument("--system", choices=KINDS, default=default)
        p.add_argument("--alpha", default=None, help='rotation amount, or "golden"')
        p.add_argument("--bernoulli", default=None)

    p = sub.add_parser("run", help="run E1..E5 or a config file")
    p.add_argument("target")
    common(p, seed_default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("list", help="list the experiment catalog")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("return-times", help="return-time profiles and rate estimates")
    system(p)
    p.add_argument("--observable", choices=OBSERVABLES, default="identity")
    p.add_argument("--radii", default="2^-4..2^-14")
    p.add_argument("--p", default="0,10,100,1000", help="comma-separated p schedule")
    p.add_argument("--start", default=None, help="explicit start, e.g. 0.3 or 0.2,0.7")
    p.add_argument("--starts", type=int, default=1, help="sampled starts when --start is absent")
    common(p)
    p.set_defaults(func=cmd_return_times)

    p = sub.add_parser("local-dim", help="local dimension of a pushforward cloud")
    system(p)
    p.add_argument("--observable", choices=OBSERVABLES, default="identity")
    p.add_argument("--radii", default="2^-4..2^-14")
    p.add_argument("--cloud-size", type=int, default=10**5)
    p.add_argument("--probes", type=int, default=30)
    p.add_argument("--min-count", type=int, default=50)
    p.add_argument("--mode", choices=("iid", "orbit"), default="iid")
    common(p)
    p.set_defaults(func=cmd_local_dim)

    p = sub.add_parser("corr-decay", help="correlation decay profile and trend verdicts")
    system(p)
    p.add_argument("--phi", choices=TEST_FUNCTIONS, default="coordinate")
    p.add_argument("--psi", choices=TEST_FUNCTIONS, default="coordinate")
    p.add_argument("--n-max", type=int, default=12)
    p.add_argument("--samples", type=int, default=10**6)
    common(p)
    p.set_defaults(func=cmd_corr_decay)

    p = sub.add_parser("rank-map", help="Jacobian rank of a smooth observable on a grid")
    p.add_argument("--observable", choices=OBSERVABLES, default="piecewise")
    p.add_argument("--shape", default="21x21")
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-6)
    common(p)
    p.set_defaults(func=cmd_rank_map)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # any module failure is a runtime error
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
