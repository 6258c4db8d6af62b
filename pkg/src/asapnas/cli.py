"""Command line interface: ``asapnas {search,simulate,evaluate,compare,presets}``.

Every output file is a function of (config, seed) only; wall-clock timings go
to ``<out>/logs/``.  Layout under ``--out`` (default: the config's ``output``)::

    search/<run>/seed_<s>/trace.csv        deterministic trace (epoch_ops column)
    search/<run>/seed_<s>/genotype.txt
    search/<run>/seed_<s>/summary.csv      metric,value
    simulate/seed_<s>/N<N>_delta<d>_gap<g>.csv
    simulate/seed_<s>/summary.csv
    evaluate/results.csv
    compare/<run>/seed_<s>/{trace.csv,genotype.txt}
    compare/runs.csv, compare/table.csv, compare/trace_<metric>.csv
    logs/...                               wall-clock traces and timings

Exit status is 0 only if every requested run finished and wrote its files.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .cell import Genotype, GenotypeError
from .config import PRESETS, ConfigError, RunConfig, load_config
from .data import Dataset, make_dataset
from .engine import (SearchDiverged, evaluate_child, random_genotype, search,
                     train_linear)
from .pac import pac_grid

CSV_VERSION = "v1"


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def load_data(cfg: RunConfig, seed: int) -> tuple[Dataset, Dataset]:
    """Search data and a disjoint holdout drawn from the same distribution."""
    ds = cfg.section("dataset")
    data_seed = seed if ds["seed"] is None else ds["seed"]
    full = make_dataset(ds["kind"], ds["n"] + ds["test_n"], ds["d"], ds["classes"],
                        ds["noise"], data_seed)
    idx = np.arange(len(full))
    return full.subset(idx[:ds["n"]]), full.subset(idx[ds["n"]:])


# --------------------------------------------------------------------------
# workers (module level so a process pool can pickle them)
# --------------------------------------------------------------------------


def _search_job(cfg: RunConfig, seed: int, run_dir: str, log_path: str,
                with_child: bool, random_baseline: bool = False) -> dict:
    data, holdout = load_data(cfg, seed)
    sc = cfg.search_config(seed)
    t0 = time.perf_counter()
    res = search(sc, data)
    seconds = time.perf_counter() - t0
    out = Path(run_dir)
    out.mkdir(parents=True, exist_ok=True)
    res.trace.to_csv(out / "trace.csv")
    res.genotype.save(out / "genotype.txt")
    Path(log_path).parent.mkdir(parents=True, exist_ok=True)
    res.trace.to_csv(log_path, timing=True)
    tr = res.trace
    summary = {
        "csv_version": CSV_VERSION,
        "seed": seed,
        "pruner": sc.pruner,
        "epochs_run": len(tr),
        "converged": res.converged,
        "final_temperature": res.final_temperature,
        "final_entropy": float(tr.column("entropy")[-1]),
        "final_sparsity": float(tr.column("sparsity")[-1]),
        "soft_val_acc": res.soft_val_acc,
        "hard_val_acc": res.hard_val_acc,
        "hard_prune_drop": res.hard_prune_drop,
        "total_epoch_ops": int(tr.column("epoch_ops").sum()),
        "sparsity_curve": ";".join(repr(float(s)) for s in tr.column("sparsity")),
        "val_acc_curve": ";".join(repr(float(s)) for s in tr.column("val_acc")),
    }
    if with_child:
        opset = sc.opset()
        summary["child_test_acc"] = evaluate_child(res.genotype, opset, data, holdout,
                                                cfg.child_config(), seed)
    if random_baseline:
        opset = sc.opset()
        rnd = random_genotype(opset, sc.B, np.random.default_rng(seed), sc.top_k)
        summary["random_test_acc"] = evaluate_child(rnd, opset, data, holdout,
                                                 cfg.child_config(), seed)
    write_rows(out / "summary.csv", ["metric", "value"], summary.items())
    return {"summary": summary, "seconds": seconds,
            "epoch_seconds": [r.epoch_seconds for r in tr.records],
            "columns": {k: tr.column(k).tolist()
                        for k in ("entropy", "val_acc", "sparsity", "epoch_ops", "temperature")}}


def _run_jobs(fn, jobs: list[tuple], workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *j) for j in jobs]
        return [f.result() for f in futures]


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_search(cfg: RunConfig, out: Path, workers: int = 1) -> int:
    name = cfg.run_name
    jobs = [(cfg, s, str(out / "search" / name / f"seed_{s}"),
             str(out / "logs" / f"search_{name}_seed_{s}_trace.csv"), False)
            for s in cfg.seeds]
    results = _run_jobs(_search_job, jobs, workers)
    for r in results:
        s = r["summary"]
        print(f"search {name} seed {s['seed']}: epochs={s['epochs_run']} "
              f"converged={s['converged']} entropy={s['final_entropy']:.4f} "
              f"val_acc={s['soft_val_acc']:.4f} hard_val_acc={s['hard_val_acc']:.4f}")
    write_rows(out / "logs" / f"search_{name}_timing.csv", ["seed", "search_seconds"],
               [(r["summary"]["seed"], r["seconds"]) for r in results])
    return 0


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    sim = cfg.section("simulate")
    for seed in cfg.seeds:
        base = out / "simulate" / f"seed_{seed}"
        base.mkdir(parents=True, exist_ok=True)

        def dump(row, batch, base=base):
            batch.to_csv(base / f"N{row.N}_delta{row.delta!r}_gap{row.gap!r}.csv")

        t0 = time.perf_counter()
        rows = pac_grid(sim["Ns"], sim["deltas"], sim["gaps"], sim["trials"], sim["noise"],
                        sim["eta_L"], seed, sim["max_steps"], sigma=sim["sigma"],
                        on_batch=dump)
        write_rows(base / "summary.csv",
                   ["N", "delta", "gap", "trials", "failures", "error_rate", "p_value",
                    "mean_steps", "max_steps", "non_converged", "passed"],
                   [(r.N, r.delta, r.gap, r.trials, r.failures, r.error_rate, r.p_value,
                     r.mean_steps, r.max_steps, r.non_converged, r.passed) for r in rows])
        write_rows(out / "logs" / f"simulate_seed_{seed}_timing.csv", ["seconds"],
                   [(time.perf_counter() - t0,)])
        for r in rows:
            print(f"simulate seed {seed} N={r.N} delta={r.delta} gap={r.gap}: "
                  f"rate={r.error_rate:.4f} p={r.p_value:.3g} "
                  f"{'ok' if r.passed else 'EXCEEDS delta'}")
    return 0


def cmd_evaluate(cfg: RunConfig, genotype_path: Path, out: Path) -> int:
    opset = cfg.search_config(cfg.seeds[0]).opset()
    text = Path(genotype_path).read_text()
    try:
        genotype = Genotype.from_text(text, opset.names)
    except GenotypeError as exc:
        err = GenotypeError(f"{genotype_path}: {exc}")
        err.line = exc.line
        raise err from None
    rows = []
    for seed in cfg.seeds:
        data, holdout = load_data(cfg, seed)
        acc = evaluate_child(genotype, opset, data, holdout, cfg.child_config(), seed)
        lin = train_linear(data, holdout, cfg.child_config(), seed)
        rows.append((seed, acc, lin))
        print(f"evaluate seed {seed}: test_acc={acc:.4f} linear_baseline={lin:.4f}")
    write_rows(out / "evaluate" / "results.csv", ["seed", "test_acc", "linear_baseline"], rows)
    return 0


TRACE_METRICS = ("entropy", "val_acc", "sparsity", "epoch_ops", "temperature")


def cmd_compare(cfg: RunConfig, out: Path, workers: int = 1) -> int:
    runs = cfg.section("compare")["runs"]
    if len(cfg.seeds) < 5:
        raise ConfigError(f"compare needs at least 5 seeds, got {len(cfg.seeds)}", None,
                          cfg.source)
    base = out / "compare"
    unique = list(dict.fromkeys(runs))
    jobs = [(cfg.with_preset(name), s, str(base / name / f"seed_{s}"),
             str(out / "logs" / f"compare_{name}_seed_{s}_trace.csv"), True, name == unique[0])
            for name in unique for s in cfg.seeds]
    results = dict(zip([(j[0].run_name, j[1]) for j in jobs], _run_jobs(_search_job, jobs, workers)))

    per_run = []
    timing = []
    for name in unique:
        for s in cfg.seeds:
            r = results[(name, s)]
            m = r["summary"]
            per_run.append((name, m["pruner"], s, m["child_test_acc"],
                            results[(unique[0], s)]["summary"]["random_test_acc"],
                            m["final_entropy"], m["soft_val_acc"], m["hard_val_acc"],
                            m["hard_prune_drop"], m["epochs_run"], m["converged"],
                            m["total_epoch_ops"]))
            timing.append((name, s, r["seconds"], float(np.mean(r["epoch_seconds"]))))
    write_rows(base / "runs.csv",
               ["run", "pruner", "seed", "child_test_acc", "random_test_acc", "final_entropy",
                "soft_val_acc", "hard_val_acc", "hard_prune_drop", "epochs_run", "converged",
                "total_epoch_ops"], per_run)

    def stats(name, key):
        v = np.array([results[(name, s)]["summary"][key] for s in cfg.seeds], dtype=float)
        return float(v.mean()), float(v.std())

    table = []
    for name in runs:
        row = [name, PRESETS[name]["pruner"]["kind"], len(cfg.seeds)]
        for key in ("child_test_acc", "final_entropy", "hard_prune_drop", "total_epoch_ops"):
            row += stats(name, key)
        table.append(row)
    table.append(["random_genotype", "none", len(cfg.seeds), *stats(unique[0], "random_test_acc"),
                  float("nan"), float("nan"), float("nan"), float("nan"), float("nan"),
                  float("nan")])
    write_rows(base / "table.csv",
               ["run", "pruner", "seeds", "child_test_acc_mean", "child_test_acc_std",
                "final_entropy_mean", "final_entropy_std", "hard_prune_drop_mean",
                "hard_prune_drop_std", "epoch_ops_mean", "epoch_ops_std"], table)

    cols = [(name, s) for name in unique for s in cfg.seeds]
    n_epochs = max(len(results[c]["columns"]["entropy"]) for c in cols)
    for metric in TRACE_METRICS:
        rows = []
        for e in range(n_epochs):
            vals = [results[c]["columns"][metric] for c in cols]
            rows.append([e] + [v[e] if e < len(v) else "" for v in vals])
        write_rows(base / f"trace_{metric}.csv",
                   ["epoch"] + [f"{n}_seed_{s}" for n, s in cols], rows)

    write_rows(out / "logs" / "compare_timing.csv",
               ["run", "seed", "search_seconds", "mean_epoch_seconds"], timing)
    for row in table:
        print(f"compare {row[0]}: child_acc={row[3]:.4f}+-{row[4]:.4f} "
              f"entropy={row[5]:.4f}+-{row[6]:.4f}")
    return 0


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def _seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma separated ints, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asapnas",
                                description="Anneal-and-prune architecture search on toy data.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, type=Path,
                        help="YAML run configuration")
        sp.add_argument("--out", type=Path, default=None,
                        help="output directory (default: the config's 'output')")
        sp.add_argument("--seeds", type=_seeds, default=None,
                        help="comma separated seeds, overriding the config")

    for name, hlp in (("search", "run one search per seed"),
                      ("compare", "run several presets on identical seeds and data")):
        sp = sub.add_parser(name, help=hlp)
        common(sp)
        sp.add_argument("--jobs", type=int, default=1, help="worker processes (seed-level)")
    common(sub.add_parser("simulate", help="PAC validation on synthetic gradient streams"))
    sp = sub.add_parser("evaluate", help="train a fixed genotype from scratch")
    common(sp)
    sp.add_argument("--genotype", required=True, type=Path, help="genotype text file")
    sub.add_parser("presets", help="print the built-in presets as YAML")
    return p


REQUIRED = {"search": ("dataset",), "compare": ("dataset", "compare"),
            "evaluate": ("dataset",), "simulate": ("simulate",)}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        print(yaml.safe_dump(PRESETS, sort_keys=True), end="")
        return 0
    try:
        cfg = load_config(args.config, REQUIRED[args.command])
        if args.seeds is not None:
            cfg.values["seeds"] = args.seeds
        out = args.out if args.out is not None else Path(cfg.output)
        if args.command == "search":
            return cmd_search(cfg, out, args.jobs)
        if args.command == "compare":
            return cmd_compare(cfg, out, args.jobs)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        return cmd_evaluate(cfg, args.genotype, out)
    except (ConfigError, GenotypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SearchDiverged as exc:
        print(f"error: search diverged: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
