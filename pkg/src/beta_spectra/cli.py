"""Command line entry point: ``beta-spectra <subcommand>``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import gbeta, prufer, sde, stats
from .potential import Coupling, Decaying, PotentialModel, compute_constants, sample_driving_path


def _load_config(args) -> ex.ExperimentConfig:
    if args.config:
        with open(args.config) as fh:
            d = json.load(fh)
        experiment = d.pop("experiment", args.experiment)
        if experiment is None:
            raise ex.ConfigError("experiment", "missing")
        cfg = ex.default_config(experiment, **d)
    else:
        if args.experiment is None:
            raise ex.ConfigError("experiment", "give --experiment or a config file")
        cfg = ex.default_config(args.experiment)
    if args.trials is not None:
        cfg.trials = args.trials
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    return cfg.validate()


def cmd_defaults(args) -> int:
    names = [args.experiment] if args.experiment else list(ex.EXPERIMENTS)
    out = {name: ex.default_config(name).to_dict() for name in names}
    json.dump(out if len(names) > 1 else out[names[0]], sys.stdout, indent=2)
    print()
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args)
    result = ex.run(cfg, figures=not args.no_figures)
    for c in result.report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']} = {c['value']:.6g}")
    return 0 if result.passed else 1


def cmd_simulate_operator(args) -> int:
    E0 = args.E0
    L = args.L if args.L else prufer.choose_length(E0, args.m, args.beta_phase)
    h = args.h or prufer.default_step(E0)
    windows = []
    for i in range(args.trials):
        seed = ex.trial_seed(args.seed, i)
        path = sample_driving_path(seed, L, h)
        family = Decaying() if args.decaying else Coupling(args.alpha, L)
        model = PotentialModel(family, ex.ExperimentConfig(k=args.k).shape)
        windows.append((seed, prufer.locate_atoms(path, model, E0, L, args.W)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prufer.write_window_csv(out / "atoms.csv", windows, alpha=None if args.decaying else args.alpha)
    print(out / "atoms.csv")
    return 0


def cmd_simulate_sde(args) -> int:
    params = [float(v) for v in args.params.split(",")]
    shape = ex.ExperimentConfig(k=args.k).shape
    consts = compute_constants(shape, args.E0)
    seed = args.seed
    if args.kind == "schtau":
        noise = sde.sample_noise(seed, 1.0, args.step, n_paths=args.paths)
        paths = sde.simulate_schtau(consts, params, noise)
    elif args.kind == "carousel":
        noise = sde.sample_carousel_noise(seed, args.h0, args.delta_cutoff, n_paths=args.paths)
        paths = sde.simulate_carousel(consts.D_E0, params, noise, args.delta_cutoff)
    else:
        beta = args.beta or consts.beta
        horizon = args.horizon or sde.sine_beta_min_horizon(beta) + 1.0
        noise = sde.sample_noise(seed, horizon, args.step, n_paths=args.paths, with_b=False)
        paths = sde.simulate_sine_beta(beta, params, noise, horizon)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sde.write_sde_csv(out / "sde.csv", sde.sde_rows(paths, [f"{seed}:{j}" for j in range(args.paths)]))
    print(out / "sde.csv")
    return 0


def cmd_sample_gbeta(args) -> int:
    samples = []
    for i in range(args.trials):
        seed = ex.trial_seed(args.seed, i)
        if args.W:
            s = gbeta.bulk_window_sample(args.n, args.beta, seed, args.W, args.mu)
        else:
            T = gbeta.sample_gbeta_tridiagonal(args.n, args.beta, seed)
            s = gbeta.bulk_rescale(gbeta.tridiagonal_eigenvalues(T), args.n, args.mu)
        samples.append((seed, s))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gbeta.write_bulk_csv(out / "gbeta.csv", samples, args.beta)
    print(out / "gbeta.csv")
    return 0


def _read_batch(path, column) -> stats.AtomBatch:
    groups = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            groups.setdefault(row["seed"], []).append(float(row[column]))
    return stats.AtomBatch(Path(path).name, list(groups.values()))


def cmd_stats(args) -> int:
    column = args.column
    a = _read_batch(args.atoms, column)
    if args.statistic == "gaps":
        g = stats.gaps_near_zero(a, args.count)
        rep = stats.Report("gap_mean", float(np.mean(g.gaps)) if g.gaps.size else float("nan"),
                           a.source, std_error=float(np.std(g.gaps, ddof=1) / math.sqrt(g.gaps.size))
                           if g.gaps.size > 1 else None, trials=g.used,
                           params={"count": args.count, "skip_rate": g.skip_rate})
    elif args.statistic == "counting":
        n = stats.counting(a, args.lam)
        rep = stats.Report("mean_count", float(n.mean()), a.source,
                           std_error=float(n.std(ddof=1) / math.sqrt(n.size)) if n.size > 1 else None,
                           trials=int(n.size), params={"lambda": args.lam})
    else:
        if not args.other:
            raise ex.ConfigError("other", "KS needs a second atom file")
        b = _read_batch(args.other, args.other_column or column)
        ga, gb = stats.gaps_near_zero(a, args.count), stats.gaps_near_zero(b, args.count)
        rep = stats.Report("ks_central_gaps", stats.ks_distance(ga.gaps, gb.gaps), a.source,
                           b.source, trials=min(ga.used, gb.used), params={"count": args.count})
    print(rep.to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="beta-spectra", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("defaults", help="print default configurations")
    d.add_argument("--experiment", choices=ex.EXPERIMENTS)
    d.set_defaults(func=cmd_defaults)

    r = sub.add_parser("run", help="run a composite experiment")
    r.add_argument("config", nargs="?", help="JSON configuration file")
    r.add_argument("--experiment", choices=ex.EXPERIMENTS)
    r.add_argument("--trials", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--workers", type=int)
    r.add_argument("--no-figures", action="store_true")
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("simulate-operator", help="atoms of the random operator near E0")
    o.add_argument("--alpha", type=float, default=1.0)
    o.add_argument("--E0", type=float, default=1.0)
    o.add_argument("--m", type=int, default=200)
    o.add_argument("--beta-phase", type=float, default=0.0)
    o.add_argument("--L", type=float)
    o.add_argument("--W", type=float, default=3 * math.pi)
    o.add_argument("--k", type=int, default=1)
    o.add_argument("--h", type=float)
    o.add_argument("--decaying", action="store_true")
    o.add_argument("--trials", type=int, default=1)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--out", default="out")
    o.set_defaults(func=cmd_simulate_operator)

    s = sub.add_parser("simulate-sde", help="simulate one of the limiting phase SDEs")
    s.add_argument("--kind", choices=["schtau", "carousel", "sinebeta"], required=True)
    s.add_argument("--params", required=True, help="comma-separated c or lambda values")
    s.add_argument("--E0", type=float, default=1.0)
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--beta", type=float)
    s.add_argument("--paths", type=int, default=100)
    s.add_argument("--step", type=float, default=1e-3)
    s.add_argument("--h0", type=float, default=1e-3)
    s.add_argument("--delta-cutoff", type=float, default=1e-4)
    s.add_argument("--horizon", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_simulate_sde)

    g = sub.add_parser("sample-gbeta", help="bulk-rescaled Gaussian beta-ensemble samples")
    g.add_argument("--n", type=int, default=400)
    g.add_argument("--beta", type=float, default=2.0)
    g.add_argument("--mu", type=float, default=0.0)
    g.add_argument("--W", type=float, help="keep only halved atoms within [-W, W]")
    g.add_argument("--trials", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="out")
    g.set_defaults(func=cmd_sample_gbeta)

    st = sub.add_parser("stats", help="statistics of an atoms CSV")
    st.add_argument("atoms")
    st.add_argument("--statistic", choices=["gaps", "counting", "ks"], default="gaps")
    st.add_argument("--column", default="atom_x")
    st.add_argument("--other")
    st.add_argument("--other-column")
    st.add_argument("--count", type=int, default=2)
    st.add_argument("--lam", type=float, default=4 * math.pi)
    st.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ex.ConfigError as err:
        parser.error(f"invalid configuration key {err}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
