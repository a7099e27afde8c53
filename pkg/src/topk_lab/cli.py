"""``topk-lab`` command line."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from topk_lab import experiments as ex
from topk_lab.core import derive_seed, seeded_rng
from topk_lab.gradcheck import run_all
from topk_lab.model import init_params, read_params, write_params
from topk_lab.synthdata import CircleMixtureSpec, sample_dataset, write_dataset
from topk_lab.trainer import TrainConfig, evaluate, train


def _csv_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _print_table(rows) -> None:
    print(f"{'sweep':>8} {'loss':<11} {'top1 %':>22} {'top2 %':>22}")
    for r in rows:
        t1 = f"{100 * r.top1_mean:6.2f} [{100 * r.top1_min:6.2f},{100 * r.top1_max:6.2f}]"
        t2 = f"{100 * r.top2_mean:6.2f} [{100 * r.top2_min:6.2f},{100 * r.top2_max:6.2f}]"
        print(f"{r.sweep:>8} {r.loss:<11} {t1:>22} {t2:>22}")


def cmd_experiment(args) -> int:
    if args.config:
        base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if base.setdefault("experiment", args.command) != args.command:
            raise SystemExit(f"config is for {base['experiment']}, not {args.command}")
        cfg = ex.ExperimentConfig.from_dict(base)
    else:
        cfg = ex.ExperimentConfig(args.command)
    overrides = {}
    if args.seeds is not None:
        overrides["seeds"] = tuple(range(args.seeds))
    if args.losses:
        overrides["losses"] = tuple(_csv_list(args.losses))
    if args.sweep:
        overrides["sweep"] = tuple(float(v) for v in _csv_list(args.sweep))
    if args.epochs is not None:
        overrides["train"] = replace(cfg.train, epochs=args.epochs)
    out = args.out or cfg.output_dir or f"results/{args.command}"
    cfg = replace(cfg, output_dir=str(out), **overrides)

    trials = ex.run_trials(cfg, jobs=args.jobs)
    summaries = [t.summary for t in trials]
    rows = ex.write_outputs(cfg, summaries, out)
    if args.save_models:
        (Path(out) / "models").mkdir(parents=True, exist_ok=True)
        for t in trials:
            if t.params is not None:
                s = t.summary
                write_params(t.params, Path(out) / "models" / f"{s.sweep_value}_{s.loss}_{s.seed}.csv")
    _print_table(rows)
    return 0


def cmd_raster(args) -> int:
    params = read_params(args.model)
    d = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    if "experiment" in d:
        # an experiment config.json: the sweep value picks the data spec
        cfg = ex.ExperimentConfig.from_dict(d)
        if args.sweep is None and cfg.experiment != "exp3":
            raise SystemExit("raster: --sweep is required with an experiment config")
        spec = cfg.data_spec(args.sweep)
    else:
        spec = CircleMixtureSpec.from_dict(d)
    raster = ex.rasterize_boundary(params, spec, args.grid)
    ex.emit_figure_data(raster, args.out)
    return 0


def cmd_train(args) -> int:
    spec = CircleMixtureSpec.from_dict(json.loads(Path(args.spec).read_text(encoding="utf-8")))
    train_set = sample_dataset(spec, seeded_rng(derive_seed(args.seed, 0)))
    eval_set = sample_dataset(spec, seeded_rng(derive_seed(args.seed, 1)))
    params = init_params(seeded_rng(derive_seed(args.seed, 2)), spec.n_classes, args.hidden)
    lr = args.lr if args.lr is not None else (0.5 if args.hidden is None else 0.2)
    momentum = args.momentum if args.momentum is not None else (0.0 if args.hidden is None else 0.9)
    cfg = TrainConfig(loss=args.loss, k=args.k, epochs=args.epochs, learning_rate=lr,
                      momentum=momentum, seed=derive_seed(args.seed, 3))
    params, hist = train(params, train_set, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_params(params, out / "model.csv")
    hist.write_csv(out / "history.csv")
    write_dataset(train_set, out / "train.csv")
    write_dataset(eval_set, out / "eval.csv")
    curve = evaluate(params, eval_set)
    print(" ".join(f"top{k}={100 * curve.at(k):.2f}%" for k in range(1, len(curve.per_k) + 1)))
    return 0


def cmd_check_grads(args) -> int:
    reports = run_all(args.instances, seed=args.seed)
    for r in reports:
        print(r.line())
    return 0 if all(r.passed for r in reports) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topk-lab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("exp1", "exp2", "exp3"):
        p = sub.add_parser(name, help=f"run {name} sweep")
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seeds", type=int, help="use seeds 0..N-1")
        p.add_argument("--losses", help="comma-separated subset of ce,grouping,transition")
        p.add_argument("--sweep", help="comma-separated sweep values")
        p.add_argument("--epochs", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--save-models", action="store_true", help="write every trained model checkpoint")
        p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("raster", help="rasterize top-1/top-2 predictions along the circle")
    p.add_argument("--model", required=True, help="parameter checkpoint CSV")
    p.add_argument("--spec", required=True, help="JSON circle-mixture spec or experiment config.json")
    p.add_argument("--sweep", type=float, help="sweep value, when --spec is an experiment config")
    p.add_argument("--out", required=True)
    p.add_argument("--grid", type=int, default=720)
    p.set_defaults(func=cmd_raster)

    p = sub.add_parser("train", help="train one model and write checkpoint, history and data")
    p.add_argument("--spec", required=True, help="JSON circle-mixture spec")
    p.add_argument("--loss", default="ce", choices=ex.LOSS_ORDER)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--hidden", type=int, help="hidden width (omit for the linear model)")
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("check-grads", help="run the finite-difference gradient suites")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check_grads)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
