"""`relexi` command line: train, benchmark, eval, prepare-dns."""

from __future__ import annotations

import argparse
import json
from pathlib import Path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="relexi",
        description="eddy-viscosity control training on a desk-scale LES")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a full training loop")
    p_train.add_argument("--config", required=True, help="run config file")
    p_train.add_argument("--quiet", action="store_true")
    p_train.add_argument("--reward-literal", action="store_true",
                         help="audit: use the unbounded sign-flipped reward")

    p_bench = sub.add_parser("benchmark", help="weak/strong scaling study")
    p_bench.add_argument("--config", required=True)
    p_bench.add_argument("--mode", choices=("weak", "strong"), default="weak")
    p_bench.add_argument("--envs", default="1,2,4,8",
                         help="comma list of environment counts (weak mode)")
    p_bench.add_argument("--cores", default="1,2,4",
                         help="comma list of cores per env (strong mode)")
    p_bench.add_argument("--reps", type=int, default=12)
    p_bench.add_argument("--checkpoint", default=None)
    p_bench.add_argument("--out", default=None, help="CSV output path")

    p_eval = sub.add_parser("eval", help="hold-out comparison vs constant Cs")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--out", default=None, help="JSON report path")

    p_dns = sub.add_parser("prepare-dns", help="generate the reference dataset")
    p_dns.add_argument("--preset", default="24dof")
    p_dns.add_argument("--seed", type=int, default=1)
    p_dns.add_argument("--out", default=None, help="dataset path "
                       "(default: the preset's dataset path)")

    args = parser.parse_args(argv)
    return _dispatch(args)


def _dispatch(args) -> int:
    from .config import from_preset, load_config

    if args.command == "train":
        from dataclasses import replace
        from .orchestrator import train_run
        cfg = load_config(args.config)
        if args.reward_literal:
            cfg = replace(cfg, reward_literal=True)
        result = train_run(cfg, quiet=args.quiet)
        print(f"checkpoint: {result.checkpoint_path}")
        print(f"metrics:    {result.metrics_path}")
        return 0

    if args.command == "benchmark":
        from .orchestrator import benchmark_scaling, write_benchmark_csv
        cfg = load_config(args.config)
        envs = [int(x) for x in args.envs.split(",") if x.strip()]
        cores = [int(x) for x in args.cores.split(",") if x.strip()]
        rows = benchmark_scaling(cfg, envs, args.mode,
                                 checkpoint_path=args.checkpoint,
                                 repetitions=args.reps, cores_list=cores)
        out = Path(args.out or Path(cfg.out_dir) / f"benchmark_{args.mode}.csv")
        out.parent.mkdir(parents=True, exist_ok=True)
        write_benchmark_csv(rows, out)
        for row in rows:
            print(f"{row['n_envs']:4d} envs x {row['cores_per_env']} cores: "
                  f"t={row['t_mean_s']:.3f}s  speedup={row['speedup']:.2f}  "
                  f"efficiency={row['efficiency']:.2%}")
        print(f"wrote {out}")
        return 0

    if args.command == "eval":
        from .orchestrator import evaluate
        cfg = load_config(args.config)
        report = evaluate(args.checkpoint, cfg)
        out = Path(args.out or Path(cfg.out_dir) / "eval.json")
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w") as fh:
            json.dump(report, fh, indent=2)
        tr = report["trained"]
        print(f"{'model':>12s}  {'mean error':>10s}  {'return_norm':>11s}")
        print(f"{'trained':>12s}  {tr['mean_spectrum_error']:10.4f}  "
              f"{tr['return_norm']:11.4f}")
        for cs, row in report["constant"].items():
            err = row["mean_spectrum_error"]
            err_s = f"{err:10.4f}" if err is not None and err == err else "       inf"
            print(f"{'Cs=' + cs:>12s}  {err_s}  {row['return_norm']:11.4f}")
        print(f"wrote {out}")
        return 0

    if args.command == "prepare-dns":
        from .sim.dataset import generate_dns_dataset, save_dataset
        cfg = from_preset(args.preset, seed=args.seed)
        ds = generate_dns_dataset(cfg.dns_grid(), cfg.grid(), cfg.dns_solver(),
                                  cfg.dns_snapshots, args.seed)
        out = Path(args.out or cfg.dataset)
        out.parent.mkdir(parents=True, exist_ok=True)
        save_dataset(ds, out)
        print(f"wrote {out}: {ds.n_states} states "
              f"(hold-out index {ds.holdout_index}), "
              f"u_rms={ds.meta['u_rms']:.3f}, "
              f"spin-up {ds.meta['spinup_time']:g} time units")
        return 0

    return 1


if __name__ == "__main__":
    raise SystemExit(main())
