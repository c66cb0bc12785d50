"""Command-line entry point: ``minnorm <command> --config run.yaml --out results/``.

Exit codes: 0 success, 1 invalid input or config, 2 numerical failure,
3 file-system error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import experiments, fileio, verify
from .errors import InputError, NumericalError
from .features import fit_expansion
from .ols import RegressionDataset

log = logging.getLogger("minnorm")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


def _out_dir(args, cfg) -> Path:
    if args.out is not None:
        return Path(args.out)
    if cfg.output_dir is not None:
        return cfg.output_dir
    return Path("results")


def _load(command, args):
    if args.config is None:
        if command == "verify":
            doc = {"seeds": {"suites": 0}}
            return cfgmod.parse_config(command, doc, None, args.seed_override)
        raise InputError(f"{command} needs --config")
    return cfgmod.load_config(command, args.config, args.seed_override)


def cmd_expand_features(args) -> int:
    cfg = _load("expand-features", args)
    out = _out_dir(args, cfg)
    table = fileio.read_table(cfg.input)
    if cfg.outcome not in table:
        raise InputError(f"{cfg.input}: outcome column {cfg.outcome!r} not found")
    specs = [c.spec() for c in cfg.columns]
    if any(s.name == cfg.outcome for s in specs):
        raise InputError(f"outcome column {cfg.outcome!r} is also listed as a covariate")
    fx = fit_expansion(table, specs, cfg.expansion_plan())
    seed = cfg.seeds.jitter
    names = fx.names + [cfg.outcome]
    X = fx.transform(table, jitter_seed=[seed, 0])
    fileio.write_csv(out / "expanded_train.csv", names, [*X.T, table[cfg.outcome]])
    if cfg.eval_input is not None:
        ev = fileio.read_table(cfg.eval_input)
        if cfg.outcome not in ev:
            raise InputError(f"{cfg.eval_input}: outcome column {cfg.outcome!r} not found")
        Xe = fx.transform(ev, jitter_seed=[seed, 1])
        fileio.write_csv(out / "expanded_eval.csv", names, [*Xe.T, ev[cfg.outcome]])
    prov = fx.columns
    fileio.write_csv(
        out / "provenance.csv",
        ["column", "kind", "sources", "detail"],
        [[c.name for c in prov], [c.kind for c in prov], ["+".join(c.sources) for c in prov],
         [c.detail for c in prov]],
    )
    print(f"expanded {len(specs)} covariates into {len(fx.names)} columns "
          f"({X.shape[0]} rows) -> {out}")
    return EXIT_OK


def _read_regression(path, outcome, columns=None) -> RegressionDataset:
    t = fileio.read_table(path)
    if outcome not in t:
        raise InputError(f"{path}: outcome column {outcome!r} not found")
    names = [c for c in t if c != outcome]
    if columns is not None and names != columns:
        raise InputError(f"{path}: covariate columns differ from the training file")
    return RegressionDataset(fileio.table_matrix(t, names), t[outcome], tuple(names))


def cmd_ols_curve(args) -> int:
    cfg = _load("ols-curve", args)
    out = _out_dir(args, cfg)
    train = _read_regression(cfg.train, cfg.outcome)
    eval_ = _read_regression(cfg.eval, cfg.outcome, list(train.column_names))
    keep_first = 0
    if cfg.intercept_column is not None:
        if train.column_names[0] != cfg.intercept_column:
            raise InputError(f"intercept column {cfg.intercept_column!r} must be the first covariate")
        keep_first = 1
    for m in cfg.evaluation.m:
        if m > eval_.n:
            raise InputError(f"evaluation.m: subset size {m} exceeds the {eval_.n} evaluation rows")
    grid = cfgmod.grid_values(cfg.grid, train.k)
    plans = [experiments.EvalPlan(m, cfg.evaluation.num_draws, cfg.seeds.eval_draws) for m in cfg.evaluation.m]
    sweep = experiments.ols_descent_curve(
        train, eval_, grid, plans, num_orderings=cfg.orderings, ordering_seed=cfg.seeds.ordering,
        keep_first=keep_first, threads=args.threads, tol=cfg.rank_tol,
    )
    for m in cfg.evaluation.m:
        c = sweep.curve(m)
        fileio.write_csv(
            out / f"ols_curve_m{m}.csv",
            ["complexity", "in_rmse", "out_rmse", "coef_norm", "n_orderings"],
            [c.complexity, c.in_rmse, c.out_rmse, c.coef_norm, c.n_models],
        )
    n_ord, n_grid = sweep.in_rmse.shape
    cols = [np.repeat(np.arange(n_ord), n_grid), np.tile(sweep.grid, n_ord),
            sweep.in_rmse.ravel(), sweep.coef_norm.ravel()]
    header = ["ordering", "complexity", "in_rmse", "coef_norm"]
    for m in cfg.evaluation.m:
        cols.append(sweep.out_rmse[m].ravel())
        header.append(f"out_rmse_m{m}")
    fileio.write_csv(out / "ols_curve_per_ordering.csv", header, cols)
    if args.chart:
        from . import plotting

        for m in cfg.evaluation.m:
            plotting.plot_descent(sweep.curve(m), out / f"ols_curve_m{m}.svg", threshold=train.n,
                                  title=f"m = {m}", log_y=True)
        plotting.plot_norm(sweep.curve(cfg.evaluation.m[0]), out / "ols_norm.svg", threshold=train.n)
    print(f"ols curve: {len(grid)} complexities x {cfg.orderings} orderings, n={train.n} -> {out}")
    return EXIT_OK


def _read_panel(pc):
    if pc.format == "wide":
        return fileio.read_panel_wide(pc.path, pc.target, pc.T, pc.S, pc.unit_col, pc.donors, pc.first_period)
    return fileio.read_panel_long(pc.path, pc.target, pc.T, pc.S, pc.unit_col, pc.period_col,
                                  pc.value_col, pc.donors, pc.first_period)


def cmd_sc_curve(args) -> int:
    cfg = _load("sc-curve", args)
    out = _out_dir(args, cfg)
    panel = _read_panel(cfg.panel)
    grid = cfgmod.grid_values(cfg.grid, panel.N)
    curve = experiments.sc_descent_curve(
        panel, grid, cap=cfg.cap, seed=cfg.seeds.subset_sampling,
        settings=cfg.solver.settings(), threads=args.threads,
    )
    fileio.write_csv(
        out / "sc_curve.csv",
        ["complexity", "train_rmse", "out_rmse", "n_subsets"],
        [curve.complexity, curve.in_rmse, curve.out_rmse, curve.n_models],
    )
    if args.chart:
        from . import plotting

        plotting.plot_descent(curve, out / "sc_curve.svg", in_label="training", out_label="out-of-time")
    print(f"sc curve: {len(grid)} complexities, {int(curve.n_models.sum())} donor subsets -> {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load("verify", args)
    out = _out_dir(args, cfg)
    c = cfg.counts
    plan = verify.VerifyPlan(
        seed=cfg.seeds.suites, prop1=c.prop1, prop2=c.prop2, prop3=c.prop3, prop4=c.prop4,
        qp=c.qp, tiebreak=c.tiebreak, mc_draws=cfg.mc_draws, rank_deficient=cfg.rank_deficient,
    )
    results = verify.run_all(plan, cfg.solver.settings())
    rep = verify.report(results)
    fileio.atomic_write_text(out / "verify_report.json", json.dumps(rep, indent=2, default=float) + "\n")
    print(verify.format_report(results))
    return EXIT_OK if rep["passed"] else EXIT_NUMERICAL


COMMANDS = {
    "expand-features": (cmd_expand_features, "expand a covariate table into binned dummies and interactions"),
    "ols-curve": (cmd_ols_curve, "min-norm regression risk curve over random column orderings"),
    "sc-curve": (cmd_sc_curve, "min-norm synthetic control risk curve over donor subsets"),
    "verify": (cmd_verify, "run the randomised model-averaging verification suites"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="minnorm", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", type=Path, help="YAML or JSON run configuration")
        s.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
        s.add_argument("--seed-override", type=int, help="replace every seed in the config")
        s.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
        s.add_argument("--chart", action=argparse.BooleanOptionalAction, default=True,
                       help="also render SVG charts")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    func = COMMANDS[args.command][0]
    try:
        return func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
