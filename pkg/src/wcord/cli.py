"""Command-line interface.

Verbs: gen-data, train-teacher, distill, sweep, eval, probe, sinkhorn,
report. Outputs are files and stdout tables; nothing interactive. Exit
codes: 0 success, 2 usage or config error, 3 training divergence, 4 solver
underflow. WCORD_SEED overrides the config seed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .data import Dataset, gen_clusters, load_csv, save_csv, split_views, train_test_split
from .errors import (
    ConfigError,
    ContractError,
    CsvParseError,
    DomainError,
    SolverUnderflowError,
    TrainingDivergedError,
    WcordError,
)
from .nets import MlpSpec, load_model, save_model
from .ot import SinkhornConfig, auto_epsilon, solve_transport, uniform_marginal
from .train import DistillConfig, distill_student, evaluate, linear_probe, train_teacher

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_UNDERFLOW = 4


def _resolve_data(cfg: dict):
    """Returns (train, test) datasets per the config's data section.

    With two_view enabled the returned objects are TwoViewDataset instances
    (teacher consumes view A, student view B).
    """
    data = cfg["data"]
    if data["generate"]["enabled"]:
        g = data["generate"]
        full = gen_clusters(g["k"], g["n_per"], g["dim"], float(g["spread"]), g["seed"])
        train, test = train_test_split(full, float(g["test_fraction"]), g["seed"])
    else:
        if not data["train_csv"] or not data["test_csv"]:
            raise ConfigError("/data/train_csv", "provide train_csv/test_csv or enable data.generate")
        train = load_csv(data["train_csv"])
        test = load_csv(data["test_csv"])
    if data["two_view"]["enabled"]:
        d_a = data["two_view"]["d_a"]
        train = split_views(train, d_a)
        test = split_views(test, d_a)
    return train, test


def _teacher_view(ds) -> Dataset:
    if isinstance(ds, Dataset):
        return ds
    return Dataset(ds.view_a, ds.y, ds.ids, split=ds.split)


def _spec_from(cfg_section: dict, in_dim: int, n_classes: int) -> MlpSpec:
    return MlpSpec(in_dim, tuple(cfg_section["hidden"]), cfg_section["embedding"], n_classes)


def _require_out_dir(cfg: dict) -> Path:
    if not cfg["out_dir"]:
        raise ConfigError("/out_dir", "an output directory is required")
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run(out: Path, cfg: dict, report, model) -> None:
    cfgmod.dump_effective(cfg, out / "effective-config.json")
    report.write_csv(out / "report.csv")
    save_model(model, out / "model.bin")
    meta = {"wall_clock_s": report.wall_clock_s, "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S")}
    with open(out / "run_meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def cmd_gen_data(args) -> int:
    full = gen_clusters(args.k, args.n_per, args.dim, args.spread, args.seed)
    train, test = train_test_split(full, args.test_fraction, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(train, out / "train.csv")
    save_csv(test, out / "test.csv")
    print(
        f"wrote {len(train)} train rows and {len(test)} test rows "
        f"({args.k} classes, dim {args.dim}) under {out}"
    )
    return EXIT_OK


def cmd_train_teacher(args) -> int:
    cfg = cfgmod.load_config(args.config)
    out = _require_out_dir(cfg)
    train, test = _resolve_data(cfg)
    train_t, test_t = _teacher_view(train), _teacher_view(test)
    spec = _spec_from(cfg["teacher_spec"], train_t.dim, train_t.n_classes)
    dcfg = cfgmod.to_distill_config(cfg)
    model, report = train_teacher(train_t, test_t, spec, dcfg)
    _write_run(out, cfg, report, model)
    print(f"teacher final_test_acc={report.final_test_acc!r} -> {out}")
    return EXIT_OK


def cmd_distill(args) -> int:
    cfg = cfgmod.load_config(args.config)
    out = _require_out_dir(cfg)
    if not cfg["teacher"]["model"]:
        raise ConfigError("/teacher/model", "distill needs a trained teacher model path")
    teacher = load_model(cfg["teacher"]["model"], frozen=True)
    train, test = _resolve_data(cfg)
    student_in = train.view_b.shape[1] if not isinstance(train, Dataset) else train.dim
    n_classes = int(train.y.max()) + 1
    student_spec = _spec_from(cfg["student_spec"], student_in, n_classes)
    dcfg = cfgmod.to_distill_config(cfg)
    student, report = distill_student(train, test, teacher, student_spec, dcfg, cfg["objective"])
    _write_run(out, cfg, report, student)
    print(f"{cfg['objective']} final_test_acc={report.final_test_acc!r} -> {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = cfgmod.load_config(args.config)
    grid = [float(v) for v in args.lambda2.split(",") if v != ""]
    if not grid:
        raise ConfigError("/distill/lambda2", "empty sweep grid")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not base["teacher"]["model"]:
        raise ConfigError("/teacher/model", "sweep needs a trained teacher model path")
    teacher = load_model(base["teacher"]["model"], frozen=True)
    train, test = _resolve_data(base)
    student_in = train.view_b.shape[1] if not isinstance(train, Dataset) else train.dim
    n_classes = int(train.y.max()) + 1
    student_spec = _spec_from(base["student_spec"], student_in, n_classes)

    rows = []
    for lam in grid:
        accs = []
        for i in range(args.seeds):
            cell = json.loads(json.dumps(base))
            cell["distill"]["lambda2"] = lam
            cell["seed"] = base["seed"] + i
            dcfg = cfgmod.to_distill_config(cell)
            cell_dir = out / "cells" / f"lambda2_{lam:g}_seed_{cell['seed']}"
            cell_dir.mkdir(parents=True, exist_ok=True)
            student, report = distill_student(
                train, test, teacher, student_spec, dcfg, cell["objective"]
            )
            _write_run(cell_dir, cell, report, student)
            accs.append(report.final_test_acc)
        accs = np.asarray(accs)
        std = float(accs.std(ddof=1)) if len(accs) > 1 else 0.0
        rows.append((lam, len(accs), float(accs.mean()), std))

    with open(out / "sweep.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("lambda2,n_seeds,mean_acc,std_acc\n")
        for lam, n, mean, std in rows:
            fh.write(f"{lam!r},{n},{mean!r},{std!r}\n")
    print(f"{'lambda2':>10} {'n':>4} {'mean':>10} {'std':>10}")
    for lam, n, mean, std in rows:
        print(f"{lam:>10g} {n:>4} {mean:>10.4f} {std:>10.4f}")
    print(f"sweep table -> {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model, frozen=True)
    ds = load_csv(args.data)
    print(f"accuracy={evaluate(model, ds)!r}")
    return EXIT_OK


def cmd_probe(args) -> int:
    model = load_model(args.model, frozen=True)
    train = load_csv(args.train)
    test = load_csv(args.test)
    acc = linear_probe(model, train, test, epochs=args.epochs, lr=args.lr, seed=args.seed)
    print(f"probe_accuracy={acc!r}")
    return EXIT_OK


def _load_matrix(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(c) for c in line.split(",")])
            except ValueError as exc:
                raise CsvParseError(f"{path}: line {lineno}: {exc}") from None
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise CsvParseError(f"{path}: expected a rectangular numeric matrix")
    return np.asarray(rows)


def _load_vector(path) -> np.ndarray:
    return _load_matrix(path).reshape(-1)


def cmd_sinkhorn(args) -> int:
    cost = _load_matrix(args.cost)
    n, m = cost.shape
    u = _load_vector(args.mu) if args.mu else uniform_marginal(n)
    v = _load_vector(args.nu) if args.nu else uniform_marginal(m)
    eps = args.epsilon if args.epsilon is not None else auto_epsilon(float(cost.mean()))
    cfg = SinkhornConfig(eps, args.outer, args.inner, args.tol)
    plan, w = solve_transport(cost, u, v, cfg)
    print(f"W={w!r}")
    print(f"max_marginal_residual={plan.residual!r}")
    print(f"outer_iterations={plan.outer_used}")
    print(f"converged={str(plan.converged).lower()}")
    if args.plan_out:
        with open(args.plan_out, "w", encoding="utf-8", newline="\n") as fh:
            for row in plan.pi:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")
        print(f"plan -> {args.plan_out}")
    return EXIT_OK


def cmd_report(args) -> int:
    groups: dict[str, list[float]] = {}
    failed = []
    for run_dir in args.run_dirs:
        run = Path(run_dir)
        cfg_path = run / "effective-config.json"
        csv_path = run / "report.csv"
        if not cfg_path.is_file() or not csv_path.is_file():
            failed.append(str(run))
            continue
        with open(cfg_path, "r", encoding="utf-8") as fh:
            objective = json.load(fh).get("objective", "unknown")
        lines = csv_path.read_text(encoding="utf-8").splitlines()
        if len(lines) < 2:
            failed.append(str(run))
            continue
        final_acc = float(lines[-1].split(",")[5])
        groups.setdefault(objective, []).append(final_acc)

    print("| objective | runs | mean_acc | std_acc |")
    print("|---|---|---|---|")
    rows = []
    for objective in sorted(groups):
        accs = np.asarray(groups[objective])
        std = float(accs.std(ddof=1)) if len(accs) > 1 else 0.0
        rows.append((objective, len(accs), float(accs.mean()), std))
        print(f"| {objective} | {len(accs)} | {accs.mean():.4f} | {std:.4f} |")
    for run in failed:
        print(f"| FAILED:{run} | 0 | - | - |")
    if args.csv_out:
        with open(args.csv_out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("objective,runs,mean_acc,std_acc\n")
            for objective, n, mean, std in rows:
                fh.write(f"{objective},{n},{mean!r},{std!r}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wcord", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a clustered synthetic dataset")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n-per", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--spread", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--test-fraction", type=float, default=0.5)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-teacher", help="pretrain and freeze a teacher")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("distill", help="distill a student under an objective")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("sweep", help="lambda2 x seeds ablation grid")
    p.add_argument("--config", required=True)
    p.add_argument("--lambda2", required=True, help="comma-separated weights")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="accuracy of a saved model on a CSV dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("probe", help="linear probe on a saved model's embeddings")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lr", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("sinkhorn", help="solve a transport problem from a cost CSV")
    p.add_argument("--cost", required=True)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--outer", type=int, default=50)
    p.add_argument("--inner", type=int, default=25)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--mu", default=None)
    p.add_argument("--nu", default=None)
    p.add_argument("--plan-out", default=None)
    p.set_defaults(func=cmd_sinkhorn)

    p = sub.add_parser("report", help="aggregate run directories into a table")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--csv-out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_DIVERGED
    except SolverUnderflowError as exc:
        print(f"solver underflow: {exc}", file=sys.stderr)
        return EXIT_UNDERFLOW
    except (CsvParseError, ContractError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except WcordError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
