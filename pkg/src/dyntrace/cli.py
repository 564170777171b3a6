"""Command-line front end for the experiment engine.

Subcommands map to experiments (``synth``, ``triangles``, ``connectivity``,
``moments``) plus ``sweep`` for budget/seed grids.  Flags may also be read
from a key=value config file via ``--config``; explicit flags win.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .harness import (
    ESTIMATORS,
    EXPERIMENTS,
    ExperimentConfig,
    run_experiment,
    write_records,
)


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value file with flag defaults")
    parser.add_argument("--estimator", choices=ESTIMATORS, default="deltashift_auto")
    parser.add_argument("--budget", type=int, default=10_000, help="total matvec budget Q")
    parser.add_argument("--steps", type=int, default=100, help="number of time steps m")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--n", type=int, default=500, help="problem dimension")
    parser.add_argument("--ell", type=int, default=None, help="probes per update step")
    parser.add_argument("--ell0", type=int, default=None, help="probes for the first step")
    parser.add_argument("--gamma", type=float, default=0.1, help="fixed damping factor")
    parser.add_argument("--restart-every", type=int, default=20, metavar="Q_STEPS")
    parser.add_argument("--first-fraction", type=float, default=1.0 / 3.0)
    parser.add_argument(
        "--count-mode", choices=("base_matvecs", "oracle_calls"), default="base_matvecs"
    )
    parser.add_argument("--truth-mode", choices=("auto", "exact", "reference"), default="auto")
    parser.add_argument(
        "--dspp-reuse",
        action="store_true",
        help="share the current-matrix sketch between the two Hutch++ calls",
    )
    parser.add_argument("--out", help="output CSV path", default=None)


def _add_graph_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--graph", help="edge-list file for the base graph", default=None)
    parser.add_argument(
        "--format", dest="graph_format", choices=("snap", "matrix-market"), default="snap"
    )
    parser.add_argument("--edge-prob", type=float, default=0.05, dest="base_edge_prob")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyntrace",
        description="Dynamic trace estimation experiments over matrix-vector oracles",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="synthetic dense matrix sequences")
    _add_common_flags(p_synth)
    p_synth.add_argument("--perturb", choices=("low", "high", "stationary"), default="low")
    p_synth.add_argument("--psd-rank", type=int, default=25)
    p_synth.add_argument("--psd-scale", type=float, default=0.05)

    p_tri = sub.add_parser("triangles", help="triangle counting under clique dynamics")
    _add_common_flags(p_tri)
    _add_graph_flags(p_tri)
    p_tri.add_argument("--clique-min", type=int, default=10)
    p_tri.add_argument("--clique-max", type=int, default=150)
    p_tri.add_argument("--delete-after", type=int, default=75)

    p_conn = sub.add_parser("connectivity", help="natural connectivity under edge additions")
    _add_common_flags(p_conn)
    _add_graph_flags(p_conn)
    p_conn.add_argument("--lanczos-k", type=int, default=15)

    p_mom = sub.add_parser("moments", help="Chebyshev moment tracking of a drifting operator")
    _add_common_flags(p_mom)
    p_mom.add_argument("--degrees", default="1,2,3,4,5", help="comma-separated degrees")
    p_mom.add_argument("--power-iters", type=int, default=50)
    p_mom.add_argument("--margin", type=float, default=1.05, dest="scale_margin")

    p_sweep = sub.add_parser("sweep", help="grid of budgets and seeds for one experiment")
    _add_common_flags(p_sweep)
    _add_graph_flags(p_sweep)
    p_sweep.add_argument("--experiment", choices=EXPERIMENTS, default="synth")
    p_sweep.add_argument("--budgets", default=None, help="comma-separated budget list")
    p_sweep.add_argument("--seeds", default="0", help="comma list or lo:hi range of seeds")
    p_sweep.add_argument("--perturb", choices=("low", "high", "stationary"), default="low")
    p_sweep.add_argument("--outdir", default="results")

    return parser


def _apply_config_file(args: argparse.Namespace, argv: list[str]) -> argparse.Namespace:
    """Fill parsed args from a key=value file; explicit flags keep priority."""
    if not getattr(args, "config", None):
        return args
    path = Path(args.config)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    explicit = set()
    for token in argv:
        if token.startswith("--"):
            explicit.add(token[2:].split("=", 1)[0].replace("-", "_"))
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {text!r}")
        key, _, value = text.partition("=")
        key = key.strip().replace("-", "_")
        if key not in explicit:
            setattr(args, key, value.strip())
    return args


def _to_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def _config_from_args(args: argparse.Namespace, experiment: str) -> ExperimentConfig:
    def coerced(name, cast, default):
        value = getattr(args, name, default)
        if value is None:
            return default if default is not None else None
        return cast(value) if not isinstance(value, cast) else value

    return ExperimentConfig(
        experiment=experiment,
        estimator=args.estimator,
        budget=int(args.budget),
        steps=int(args.steps),
        seed=int(args.seed),
        n=int(args.n),
        count_mode=args.count_mode,
        ell=None if args.ell is None else int(args.ell),
        ell0=None if args.ell0 is None else int(args.ell0),
        gamma=float(args.gamma),
        restart_every=int(args.restart_every),
        first_fraction=float(args.first_fraction),
        dspp_reuse=_to_bool(getattr(args, "dspp_reuse", False)),
        perturb=getattr(args, "perturb", "low"),
        psd_rank=coerced("psd_rank", int, 25),
        psd_scale=coerced("psd_scale", float, 0.05),
        graph=getattr(args, "graph", None),
        graph_format=getattr(args, "graph_format", "snap"),
        base_edge_prob=coerced("base_edge_prob", float, 0.05),
        clique_min=coerced("clique_min", int, 10),
        clique_max=coerced("clique_max", int, 150),
        delete_after=coerced("delete_after", int, 75),
        lanczos_k=coerced("lanczos_k", int, 15),
        cheb_degree=coerced("cheb_degree", int, 1),
        power_iters=coerced("power_iters", int, 50),
        scale_margin=coerced("scale_margin", float, 1.05),
        truth_mode=args.truth_mode,
        out=args.out,
    )


def _run_and_write(config: ExperimentConfig) -> list:
    records = run_experiment(config)
    if config.out:
        write_records(records, config.out, config)
        print(f"wrote {len(records)} records to {config.out}")
    else:
        final = records[-1]
        print(
            f"{config.experiment}/{config.estimator}: final estimate {final.estimate:.6g}"
            + (f", truth {final.ground_truth:.6g}" if final.ground_truth is not None else "")
        )
    return records


def _parse_seeds(spec: str) -> list[int]:
    if ":" in spec:
        lo, _, hi = spec.partition(":")
        return list(range(int(lo), int(hi)))
    return [int(s) for s in spec.split(",") if s]


def _cmd_moments(args: argparse.Namespace) -> int:
    degrees = [int(d) for d in str(args.degrees).split(",") if d]
    summary = []
    for q in degrees:
        config = _config_from_args(args, "moments")
        config.cheb_degree = q
        if args.out:
            stem = Path(args.out)
            config.out = str(stem.with_name(f"{stem.stem}_T{q}{stem.suffix or '.csv'}"))
        records = _run_and_write(config)
        rels = [r.rel_error for r in records if r.rel_error is not None]
        summary.append((q, float(np.mean(rels)) if rels else float("nan")))
    print("degree  mean_rel_error")
    for q, err in summary:
        print(f"T_{q}     {err:.3e}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    budgets = (
        [int(b) for b in str(args.budgets).split(",") if b]
        if args.budgets
        else [int(args.budget)]
    )
    seeds = _parse_seeds(str(args.seeds))
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = ["experiment,estimator,budget,seed,mean_abs_error,mean_rel_error"]
    for budget in budgets:
        for seed in seeds:
            config = _config_from_args(args, args.experiment)
            config.budget = budget
            config.seed = seed
            name = f"{args.experiment}_{config.estimator}_Q{budget}_seed{seed}.csv"
            config.out = str(outdir / name)
            records = run_experiment(config)
            write_records(records, config.out, config)
            abss = [r.abs_error for r in records if r.abs_error is not None]
            rels = [r.rel_error for r in records if r.rel_error is not None]
            rows.append(
                f"{args.experiment},{config.estimator},{budget},{seed},"
                f"{np.mean(abss) if abss else ''},{np.mean(rels) if rels else ''}"
            )
            print(f"wrote {config.out}")
    summary_path = outdir / "summary.csv"
    summary_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"wrote {summary_path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config_file(args, argv)
        if args.command == "moments":
            return _cmd_moments(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        config = _config_from_args(args, args.command)
        _run_and_write(config)
        return 0
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
