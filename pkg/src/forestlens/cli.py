"""Command-line entry point.

Subcommands follow the pipeline: ``forest`` trains and saves an ensemble,
``vite`` draws its heatmaps, ``miret`` fits a surrogate (or exports the LP),
``eval`` scores a saved surrogate and ``tune`` runs the grid search. Every
run records its arguments and artifacts in ``manifest.json`` inside the
output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, bnb
from .dataset import SplitSpec, load_split
from .evaluation import evaluate, format_report, reports_csv
from .forest import dump_forest, load_forest, train_forest
from .metrics import FULL_LEVEL, OBSERVED, compute_statistics, level_frequency
from .miret import BASIC, STRENGTHENED, MiretHyperparams, build
from .milp import write_lp
from .surrogate import decode, dump_surrogate, load_surrogate, render_surrogate
from .tuning import (ForestConfig, SolverConfig, TuneGrid, cross_validate, gamma_from_percentile,
                     parse_percentile)
from .vite import (HIDE, SHOW_PERCENT, HeatmapSpec, level_heatmap_csv, render_level_heatmap,
                   render_representative_tree, representative_tree_csv)

OUT_ENV = "FORESTLENS_OUT"


class UsageError(Exception):
    pass


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _percentiles(text):
    return [parse_percentile(v) for v in text.split(",") if v.strip()]


def build_parser():
    p = argparse.ArgumentParser(prog="forestlens", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", required=True, help="CSV file with a header row")
    common.add_argument("--label", required=True, help="name of the label column")
    common.add_argument("--out", default=None,
                        help=f"output directory (default: ${OUT_ENV} or ./out)")
    common.add_argument("--seed", type=int, default=0, help="seed for splitting and bootstrapping")
    common.add_argument("--train-fraction", type=float, default=0.8)
    common.add_argument("--depth", type=int, default=2)
    common.add_argument("--n-trees", type=int, default=100)
    common.add_argument("--forest", default=None, help="reuse a saved forest instead of training one")

    sub.add_parser("forest", parents=[common], help="train and save a forest")

    v = sub.add_parser("vite", parents=[common], help="feature-usage heatmaps")
    v.add_argument("--mode", choices=[OBSERVED, FULL_LEVEL], default=OBSERVED,
                   help="level-frequency denominator")
    v.add_argument("--hide-labels", action="store_true", help="omit percentages in cells")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--formulation", choices=[BASIC, STRENGTHENED], default=STRENGTHENED)
    solver.add_argument("--m-bar", type=float, default=1.0,
                        help="co-location proximity level; 0 disables the pairing rows")
    solver.add_argument("--epsilon", type=float, default=1e-3)
    solver.add_argument("--time-limit", type=float, default=600.0)
    solver.add_argument("--solver-seed", type=int, default=0)

    m = sub.add_parser("miret", parents=[common, solver], help="fit a surrogate tree")
    m.add_argument("--alpha", type=float, default=0.2)
    g = m.add_mutually_exclusive_group()
    g.add_argument("--percentile", type=parse_percentile, default="zero",
                   help='h in (0, 100], a fraction like 100/3, or "zero"')
    g.add_argument("--gamma", type=_floats, default=None, help="explicit per-level thresholds")
    m.add_argument("--export-lp", action="store_true", help="write the model and stop")

    e = sub.add_parser("eval", parents=[common], help="score a saved surrogate")
    e.add_argument("--surrogate", default=None)

    t = sub.add_parser("tune", parents=[common, solver], help="cross-validated grid search")
    t.add_argument("--alphas", type=_floats, default=[0.2, 0.4, 0.5, 0.6, 0.8])
    t.add_argument("--percentiles", type=_percentiles, default=["zero", 50.0, 100 / 3, 25.0])
    t.add_argument("--folds", type=int, default=4)
    t.add_argument("--budget", type=float, default=None,
                   help="total solver seconds shared by all folds (overrides --time-limit)")
    return p


def _validate(a):
    errs = []
    if not Path(a.data).is_file():
        errs.append(f"data file not found: {a.data}")
    if a.depth < 1:
        errs.append("--depth must be at least 1")
    if a.n_trees < 1:
        errs.append("--n-trees must be at least 1")
    if not 0 < a.train_fraction < 1:
        errs.append("--train-fraction must lie in (0, 1)")
    if a.forest is not None and not Path(a.forest).is_file():
        errs.append(f"forest file not found: {a.forest}")
    if a.command in ("miret", "tune"):
        if a.time_limit <= 0:
            errs.append("--time-limit must be positive")
        if not 0 <= a.m_bar <= 1:
            errs.append("--m-bar must lie in [0, 1]")
        if a.epsilon <= 0:
            errs.append("--epsilon must be positive")
    if a.command == "miret":
        if a.alpha < 0:
            errs.append("--alpha must be non-negative")
        if a.gamma is not None and len(a.gamma) not in (1, a.depth):
            errs.append(f"--gamma needs 1 or {a.depth} values")
    if a.command == "eval":
        if a.surrogate is None:
            errs.append("eval needs --surrogate")
        elif not Path(a.surrogate).is_file():
            errs.append(f"surrogate file not found: {a.surrogate}")
    if a.command == "tune":
        if a.folds < 2:
            errs.append("--folds must be at least 2")
        if a.budget is not None and a.budget <= 0:
            errs.append("--budget must be positive")
    if errs:
        raise UsageError(errs)


class _Run:
    def __init__(self, args):
        self.args = args
        out = args.out or os.environ.get(OUT_ENV) or "out"
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts = []
        self.extra = {}

    def write(self, name, text):
        path = self.out / name
        path.write_text(text)
        self.artifacts.append(name)
        return path

    def data(self):
        return load_split(self.args.data, self.args.label,
                          SplitSpec(self.args.train_fraction, self.args.seed))

    def forest(self, train):
        a = self.args
        if a.forest:
            f = load_forest(a.forest)
            if f.depth != a.depth:
                raise UsageError([f"saved forest has depth {f.depth}, --depth is {a.depth}"])
            return f
        return train_forest(train, a.depth, a.n_trees, a.seed)

    def manifest(self):
        path = self.out / "manifest.json"
        doc = json.loads(path.read_text()) if path.exists() else {"runs": {}}
        args = {k: v for k, v in vars(self.args).items() if k != "func"}
        doc["tool"] = f"forestlens {__version__}"
        doc["runs"][self.args.command] = {"args": args, "artifacts": self.artifacts, **self.extra}
        path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def cmd_forest(run):
    train, _, _ = run.data()
    forest = run.forest(train)
    run.write("forest.csv", dump_forest(forest))
    print(f"forest: {forest.n_trees} trees of depth {forest.depth} -> {run.out / 'forest.csv'}")


def cmd_vite(run):
    a = run.args
    train, _, _ = run.data()
    forest = run.forest(train)
    names = train.feature_names
    spec = HeatmapSpec(cell_labels=HIDE if a.hide_labels else SHOW_PERCENT)
    freq = level_frequency(forest, train.n_features, a.mode)
    stats = compute_statistics(forest, train)
    run.write("level_heatmap.svg", render_level_heatmap(freq, names, spec))
    run.write("level_heatmap.csv", level_heatmap_csv(freq, names))
    run.write("representative_tree.svg",
              render_representative_tree(stats.node_freq, stats.ranges, forest.depth, names, spec))
    run.write("representative_tree.csv",
              representative_tree_csv(stats.node_freq, stats.ranges, names))
    print(f"vite: heatmaps written to {run.out}")


def _hyper(a, stats):
    gamma = a.gamma if a.gamma is not None else gamma_from_percentile(stats.level_freq, a.percentile)
    if a.gamma is not None and len(gamma) == 1:
        gamma = gamma[0]
    return MiretHyperparams(alpha=a.alpha, gamma=gamma, m_bar=a.m_bar or None,
                            epsilon=a.epsilon, time_limit=a.time_limit,
                            formulation=a.formulation)


def cmd_miret(run):
    a = run.args
    train, _, _ = run.data()
    forest = run.forest(train)
    if not a.forest:
        run.write("forest.csv", dump_forest(forest))
    stats = compute_statistics(forest, train)
    hp = _hyper(a, stats)
    run.extra["gamma"] = np.atleast_1d(hp.gammas(a.depth)).tolist()
    model = build(train, stats, hp)
    if a.export_lp:
        run.write("model.lp", write_lp(model))
        print(f"miret: {model.n_vars} variables, {model.n_rows} rows -> {run.out / 'model.lp'}")
        return 0
    rep, x = bnb.solve(model, a.time_limit, seed=a.solver_seed)
    rep.write_log(run.out / "solve_log.csv")
    run.artifacts.append("solve_log.csv")
    run.extra["solver"] = {"status": rep.status, "objective": rep.objective, "bound": rep.bound,
                           "gap": rep.gap, "time": rep.time, "nodes": rep.nodes}
    if x is None:
        print(f"miret: solver status {rep.status}, no surrogate found", file=sys.stderr)
        return 1
    tree = decode(model, x)
    run.write("surrogate.csv", dump_surrogate(tree))
    run.write("surrogate.svg", render_surrogate(tree, train.feature_names, train.features,
                                                stats.yhat))
    print(f"miret: status {rep.status}, objective {rep.objective:.6g}, gap {rep.gap:.2f}%, "
          f"{rep.nodes} nodes in {rep.time:.1f}s")
    return 0


def cmd_eval(run):
    a = run.args
    train, test, _ = run.data()
    forest = run.forest(train)
    tree = load_surrogate(a.surrogate)
    if tree.n_features != train.n_features or tree.depth != forest.depth:
        raise UsageError(["surrogate does not match the data or forest"])
    name = Path(a.data).stem
    reps = [evaluate(tree, forest, d, dataset=name, split=s)
            for s, d in (("train", train), ("test", test))]
    run.write("eval.csv", reports_csv(reps))
    for r in reps:
        print(format_report(r))
    return 0


def cmd_tune(run):
    a = run.args
    train, _, _ = run.data()
    grid = TuneGrid(tuple(a.alphas), tuple(a.percentiles), a.folds)
    scfg = SolverConfig(budget=a.budget or 0.0, time_limit=None if a.budget else a.time_limit,
                        m_bar=a.m_bar or None, epsilon=a.epsilon,
                        formulation=a.formulation, seed=a.solver_seed)
    res = cross_validate(train, ForestConfig(a.depth, a.n_trees, a.seed), grid, scfg,
                         fold_seed=a.seed)
    run.write("tune_grid.csv", res.grid_csv())
    run.extra["selected"] = {"alpha": res.alpha, "h": res.h}
    print(f"tune: selected alpha={res.alpha} h={res.h}")
    return 0


COMMANDS = {"forest": cmd_forest, "vite": cmd_vite, "miret": cmd_miret,
            "eval": cmd_eval, "tune": cmd_tune}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _validate(args)
        run = _Run(args)
        code = COMMANDS[args.command](run) or 0
    except UsageError as exc:
        for msg in exc.args[0]:
            print(f"forestlens {args.command}: error: {msg}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"forestlens {args.command}: error: {exc}", file=sys.stderr)
        return 1
    run.manifest()
    return code


if __name__ == "__main__":
    sys.exit(main())
