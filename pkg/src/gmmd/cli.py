"""Command-line entry points: distance evaluation, bias-potential reports,
mean-field-game gap sweeps, and config-driven experiment runs."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .bias_potential import BiasModel, entropy_gap_check, fit, sample_model
from .discrepancy import OptimizerConfig, barron_gmmd, flow_gmmd_lower, mmd_rkhs
from .harness import (
    ExperimentConfig,
    ResultTable,
    emit,
    game_from_params,
    run_experiment,
    target_from_params,
)
from .measures import DistributionSpec, EmpiricalMeasure, RngSeed
from .mfg_lq import nash_gap, solve_mfg_lq
from .test_classes import KernelSpec, TestClassSpec


def _load_measure(path: str) -> EmpiricalMeasure:
    with open(path) as fh:
        return EmpiricalMeasure.from_csv(fh.read())


def _cmd_dist(args) -> int:
    X = _load_measure(args.x)
    Y = _load_measure(args.y)
    cfg = OptimizerConfig(seed=RngSeed(args.seed))
    witness_doc = None
    if args.cls == "rkhs":
        if args.kernel == "gaussian":
            kernel = KernelSpec.gaussian(args.lengthscale)
        elif args.kernel == "linear_plus_one":
            kernel = KernelSpec.linear_plus_one()
        else:
            print(f"unsupported kernel {args.kernel!r}", file=sys.stderr)
            return 2
        res = mmd_rkhs(X, Y, kernel, flavor=args.flavor)
    elif args.cls == "barron":
        res = barron_gmmd(X, Y, cfg)
        witness_doc = {"omega": res.witness.omega.tolist(), "b": res.witness.b}
    elif args.cls == "flow":
        res = flow_gmmd_lower(X, Y, (X.dim + 2, args.layers), cfg)
        witness_doc = json.loads(res.witness.to_json())
    else:
        print(f"unknown class {args.cls!r}", file=sys.stderr)
        return 2
    print(f"{res.value!r},{res.estimator_kind}")
    if args.witness and witness_doc is not None:
        print(json.dumps(witness_doc))
    return 0


def _parse_base(text: str) -> DistributionSpec:
    parts = text.split(":")
    if parts[0] == "uniform" and len(parts) == 3:
        return DistributionSpec.uniform_box([float(parts[1])], [float(parts[2])])
    if parts[0] == "gaussian" and len(parts) == 3:
        return DistributionSpec.gaussian([float(parts[1])], [float(parts[2])])
    raise ValueError(f"cannot parse base distribution {text!r}")


def _cmd_biaspot(args) -> int:
    base = _parse_base(args.base)
    params = {}
    if args.target_neurons:
        with open(args.target_neurons) as fh:
            params["target"] = json.load(fh)
    true_V = target_from_params(params)
    true_model = BiasModel.build(base, true_V)
    rows = []
    for rep in range(args.reps):
        s = RngSeed(args.seed).child(3, rep)
        nu = sample_model(true_model, args.n, s.child(0)).measure
        opt = OptimizerConfig(seed=s.child(1))
        model = fit(nu, base, true_V, opt)
        gap = entropy_gap_check(model, true_V, nu, TestClassSpec.barron_ball(),
                                s.child(2), opt=opt)
        rows.append({"rep": rep, "lhs": gap.lhs, "rhs": gap.rhs,
                     "epsilon": gap.epsilon, "error": ""})
    table = ResultTable(columns=("rep", "lhs", "rhs", "epsilon", "error"), rows=rows,
                        meta={"base": args.base, "n": args.n, "seed": args.seed})
    emit(table, "csv", args.out)
    print(args.out)
    return 0


def _cmd_mfg(args) -> int:
    params = {}
    if args.config:
        try:
            import tomllib
        except ModuleNotFoundError:  # Python 3.10
            import tomli as tomllib

        with open(args.config, "rb") as fh:
            params = tomllib.load(fh)
    game = game_from_params(params)
    sol = solve_mfg_lq(game, steps=max(args.steps, 200))
    rows = []
    for i_n, n in enumerate(int(v) for v in args.nsweep.split(",")):
        res = nash_gap(game, sol, n, args.reps, RngSeed(args.seed).child(4, i_n),
                       steps=args.steps)
        rows.append({"n": n, "reps": args.reps, "gap": res.gap_estimate, "se": res.se,
                     "cost": res.cost_mf_strategy, "error": ""})
    table = ResultTable(columns=("n", "reps", "gap", "se", "cost", "error"), rows=rows,
                        meta={"seed": args.seed})
    emit(table, "csv", args.out)
    print(args.out)
    return 0


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.from_toml(args.config)
    threads = args.threads
    if threads is None:
        env = os.environ.get("GMMD_THREADS")
        threads = int(env) if env else None
    table = run_experiment(cfg, threads=threads)
    outdir = args.out or "."
    os.makedirs(outdir, exist_ok=True)
    csv_path = os.path.join(outdir, f"{cfg.out}.csv")
    emit(table, "csv", csv_path)
    wrote = [csv_path]
    if cfg.experiment in ("iid_rate", "dim_sweep", "mv_rate", "mfg_gap"):
        y = "gap" if cfg.experiment == "mfg_gap" else "mean"
        group = "d" if cfg.experiment in ("iid_rate", "dim_sweep") else None
        svg_path = os.path.join(outdir, f"{cfg.out}.svg")
        try:
            emit(table, "svg", svg_path, x_col="n", y_col=y, group_col=group)
            wrote.append(svg_path)
        except ValueError:
            pass
    for p in wrote:
        print(p)
    return 0 if table.ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gmmd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_dist = sub.add_parser("dist", help="distance between two sample CSV files")
    p_dist.add_argument("--class", dest="cls", required=True,
                        choices=("rkhs", "barron", "flow"))
    p_dist.add_argument("--x", required=True)
    p_dist.add_argument("--y", required=True)
    p_dist.add_argument("--kernel", default="gaussian")
    p_dist.add_argument("--lengthscale", type=float, default=1.0)
    p_dist.add_argument("--flavor", default="biased", choices=("biased", "unbiased"))
    p_dist.add_argument("--layers", type=int, default=4)
    p_dist.add_argument("--seed", type=int, default=0)
    p_dist.add_argument("--witness", action="store_true")
    p_dist.set_defaults(func=_cmd_dist)

    p_bias = sub.add_parser("biaspot", help="bias-potential entropy report")
    p_bias.add_argument("--base", default="uniform:-1:1")
    p_bias.add_argument("--target-neurons", default=None)
    p_bias.add_argument("--n", type=int, default=4096)
    p_bias.add_argument("--reps", type=int, default=20)
    p_bias.add_argument("--seed", type=int, default=0)
    p_bias.add_argument("--out", default="report.csv")
    p_bias.set_defaults(func=_cmd_biaspot)

    p_mfg = sub.add_parser("mfg", help="mean-field-game deviation-gap sweep")
    p_mfg.add_argument("--config", default=None)
    p_mfg.add_argument("--nsweep", default="16,64,256,1024")
    p_mfg.add_argument("--reps", type=int, default=64)
    p_mfg.add_argument("--steps", type=int, default=200)
    p_mfg.add_argument("--seed", type=int, default=0)
    p_mfg.add_argument("--out", default="gaps.csv")
    p_mfg.set_defaults(func=_cmd_mfg)

    p_run = sub.add_parser("run", help="run a TOML-configured experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--threads", type=int, default=None)
    p_run.set_defaults(func=_cmd_run)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
