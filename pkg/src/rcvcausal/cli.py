"""Command line front end: generate / discover / metrics / validate / suite.

Datasets travel as CSV (header row of variable names, one row per step),
coefficient stacks as blank-line-separated per-lag CSV blocks, reports as
JSON and graphs as DOT. Every run with file outputs writes a manifest
(resolved config, seeds, input digests, timestamps) before any artifact.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import multiprocessing as mp
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from rcvcausal import __version__
from rcvcausal.core import (
    CoefficientStack,
    TimeSeriesDataset,
    dataset_from_csv,
    dataset_to_csv,
    stack_from_csv,
    stack_to_csv,
    stack_to_graph,
)
from rcvcausal.framework import (
    METHOD_NAMES,
    PipelineConfig,
    PreprocessSpec,
    rcv_config_from_params,
    run_method,
    run_validation,
)
from rcvcausal.metrics import compare, timed_compare
from rcvcausal.rcv import rcv_discover
from rcvcausal.rng import derive_seed
from rcvcausal.synthgen import suite_config, simulate

_METRIC_FIELDS = ("shd", "f1", "f1_directed", "frobenius")
_GENERATOR_KEYS = (
    "n_vars", "t_len", "max_lag", "density", "nonlinear", "noise", "t_dof",
    "noise_scale", "trend", "fluctuation_scale", "coef_range",
)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _normalize_kind(kind: str) -> str:
    return kind.strip().lower().replace("(", "-").replace(")", "")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


class Manifest:
    """Run manifest, written before any output artifact."""

    def __init__(self, path: Path, subcommand: str, config: dict,
                 seeds: dict, inputs: list[Path]):
        self.path = path
        self.payload = {
            "subcommand": subcommand,
            "tool_version": __version__,
            "config": config,
            "seeds": seeds,
            "inputs": {str(p): _sha256(p) for p in inputs},
            "start_epoch_s": time.time(),
            "end_epoch_s": None,
        }
        self._write()

    def _write(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(
            json.dumps(self.payload, indent=2, sort_keys=True) + "\n"
        )

    def finish(self) -> None:
        self.payload["end_epoch_s"] = time.time()
        self._write()


def _method_params_from_args(args: argparse.Namespace) -> dict:
    params = {
        "max_lag": args.lags,
        "tau_max": args.lags,
        "prune": args.prune,
        "n_boot": args.n_boot,
        "k": args.folds,
        "tau_v": args.tau_v,
        "w": args.weight,
        "alpha_pc": args.alpha_pc,
        "alpha_mci": args.alpha_mci,
        "p_max": args.p_max,
    }
    if args.tau_c is not None:
        params["tau_c"] = args.tau_c
    return params


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args: argparse.Namespace) -> int:
    outdir = Path(args.outdir)
    overrides = _load_config(args.config)
    if args.kind:
        base = suite_config(args.kind)
        prefix = _normalize_kind(args.kind)
    else:
        from rcvcausal.synthgen import GeneratorConfig
        base = GeneratorConfig()
        prefix = "dataset"

    fields = {k: overrides[k] for k in _GENERATOR_KEYS if k in overrides}
    if args.n_vars is not None:
        fields["n_vars"] = args.n_vars
    if args.t_len is not None:
        fields["t_len"] = args.t_len
    if args.lags is not None:
        fields["max_lag"] = args.lags
    if args.density is not None:
        fields["density"] = args.density
    if "coef_range" in fields:
        fields["coef_range"] = tuple(fields["coef_range"])
    base = replace(base, **fields)

    manifest = Manifest(
        outdir / "manifest.json", "generate",
        {"kind": args.kind, "reps": args.reps,
         "generator": {**base.__dict__, "coef_range": list(base.coef_range)}},
        {"seed": args.seed}, [],
    )
    for i in range(args.reps):
        cfg = replace(base, seed=derive_seed(args.seed, i))
        gd = simulate(cfg)
        name = f"{prefix}_{i:02d}"
        (outdir / f"{name}.csv").write_text(dataset_to_csv(gd.data))
        (outdir / f"{name}.truth.csv").write_text(
            stack_to_csv(gd.truth, gd.data.names)
        )
    manifest.finish()
    return 0


# ---------------------------------------------------------------------------
# discover


def cmd_discover(args: argparse.Namespace) -> int:
    input_path = Path(args.input)
    data = dataset_from_csv(input_path.read_text())
    params = _method_params_from_args(args)
    out = Path(args.output)
    manifest = Manifest(
        out.parent / (out.name + ".manifest.json"), "discover",
        {"method": args.method, "params": params, "input": str(input_path),
         "output": str(out)},
        {"seed": args.seed}, [input_path],
    )

    if args.method.startswith("rcv-"):
        cfg = rcv_config_from_params(args.method, params)
        stack, report = rcv_discover(data, cfg)
        if args.report:
            Path(args.report).write_text(
                json.dumps(report.to_dict(), indent=2) + "\n"
            )
    else:
        stack = run_method(args.method, data, params, seed=args.seed)

    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(stack_to_csv(stack, data.names))
    if args.graph:
        graph = stack_to_graph(stack)
        Path(args.graph).write_text(graph.to_dot(data.names))
    manifest.finish()
    return 0


# ---------------------------------------------------------------------------
# metrics


def cmd_metrics(args: argparse.Namespace) -> int:
    truth, _ = stack_from_csv(Path(args.truth).read_text())
    est, _ = stack_from_csv(Path(args.est).read_text())
    report = timed_compare(truth, est)
    for name in _METRIC_FIELDS + ("runtime_s",):
        print(f"{name}: {getattr(report, name)}")
    if args.json:
        json_path = Path(args.json)
        manifest = Manifest(
            json_path.parent / (json_path.name + ".manifest.json"), "metrics",
            {"truth": args.truth, "est": args.est},
            {}, [Path(args.truth), Path(args.est)],
        )
        json_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
        manifest.finish()
    return 0


# ---------------------------------------------------------------------------
# validate


def cmd_validate(args: argparse.Namespace) -> int:
    cfg_dict = _load_config(args.config)
    pre = PreprocessSpec(**cfg_dict.get("preprocess", {}))
    pipeline_cfg = PipelineConfig(
        method=cfg_dict.get("method", args.method or "rcv-varlingam"),
        method_params=cfg_dict.get("method_params", {}),
        preprocess=pre,
        analyze_properties=cfg_dict.get("analyze_properties", True),
        seed=cfg_dict.get("seed", args.seed),
    )
    real_path = Path(args.real)
    abm_dir = Path(args.abm)
    abm_paths = sorted(
        p for p in abm_dir.glob("*.csv") if not p.name.endswith(".truth.csv")
    )
    outdir = Path(args.outdir)
    manifest = Manifest(
        outdir / "manifest.json", "validate",
        {"method": pipeline_cfg.method,
         "method_params": pipeline_cfg.method_params,
         "real": str(real_path), "abm": [str(p) for p in abm_paths]},
        {"seed": pipeline_cfg.seed}, [real_path] + abm_paths,
    )

    real = dataset_from_csv(real_path.read_text(), allow_missing=True)
    abm_runs = [
        dataset_from_csv(p.read_text(), allow_missing=True) for p in abm_paths
    ]
    report = run_validation(real, abm_runs, pipeline_cfg)

    (outdir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n"
    )
    named = [("real", report.real_stack)] + [
        (f"abm_{i:02d}", st) for i, st in enumerate(report.abm_stacks)
    ]
    for name, stack in named:
        (outdir / f"heatmap_{name}.csv").write_text(
            stack_to_csv(stack, real.names)
        )
        (outdir / f"graph_{name}.dot").write_text(
            stack_to_graph(stack).to_dot(real.names)
        )
    manifest.finish()
    return 0


# ---------------------------------------------------------------------------
# suite


def _cell_worker(queue: "mp.SimpleQueue", method: str, params: dict,
                 seed: int, values: np.ndarray, names: tuple[str, ...],
                 truth_mats: tuple[np.ndarray, ...]) -> None:
    try:
        data = TimeSeriesDataset(values=values, names=names)
        t0 = time.perf_counter()
        stack = run_method(method, data, params, seed=seed)
        runtime = time.perf_counter() - t0
        truth = CoefficientStack(mats=truth_mats)
        report = compare(truth, stack, runtime_s=runtime)
        queue.put({"ok": True, **report.to_dict()})
    except Exception as err:  # noqa: BLE001 - reported as an error row
        queue.put({"ok": False, "error": f"{type(err).__name__}: {err}"})


def _run_cells(cells: list[dict], jobs: int, timeout: float) -> list[dict]:
    """Run suite cells in worker processes with a per-cell timeout."""
    pending = list(cells)
    running: list[tuple[mp.Process, "mp.SimpleQueue", dict, float]] = []
    results: dict[int, dict] = {}
    while pending or running:
        while pending and len(running) < jobs:
            cell = pending.pop(0)
            queue: "mp.SimpleQueue" = mp.SimpleQueue()
            proc = mp.Process(
                target=_cell_worker,
                args=(queue, cell["method"], cell["params"], cell["seed"],
                      cell["values"], cell["names"], cell["truth"]),
            )
            proc.start()
            running.append((proc, queue, cell, time.monotonic()))
        still = []
        for proc, queue, cell, started in running:
            if not proc.is_alive():
                proc.join()
                if queue.empty():
                    results[cell["index"]] = {
                        "ok": False,
                        "error": f"worker exited with code {proc.exitcode}",
                    }
                else:
                    results[cell["index"]] = queue.get()
            elif time.monotonic() - started > timeout:
                proc.terminate()
                proc.join()
                results[cell["index"]] = {"ok": False, "error": "timed out"}
            else:
                still.append((proc, queue, cell, started))
        running = still
        if running:
            time.sleep(0.01)
    return [results[i] for i in range(len(cells))]


def cmd_suite(args: argparse.Namespace) -> int:
    outdir = Path(args.outdir)
    overrides = _load_config(args.config)
    base = suite_config(args.kind)
    gen_over = {
        k: v for k, v in overrides.get("generator", {}).items()
        if k in _GENERATOR_KEYS
    }
    if "coef_range" in gen_over:
        gen_over["coef_range"] = tuple(gen_over["coef_range"])
    base = replace(base, **gen_over)

    if args.methods.strip().lower() == "all":
        methods = list(METHOD_NAMES)
    else:
        methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHOD_NAMES]
    if unknown:
        print(f"error: unknown methods {unknown}", file=sys.stderr)
        return 2

    params = _method_params_from_args(args)
    params.update(overrides.get("method_params", {}))

    manifest = Manifest(
        outdir / "manifest.json", "suite",
        {"kind": args.kind, "reps": args.reps, "methods": methods,
         "params": params, "timeout_s": args.timeout, "jobs": args.jobs,
         "generator": {**base.__dict__, "coef_range": list(base.coef_range)}},
        {"seed": args.seed}, [],
    )

    data_dir = outdir / "datasets"
    data_dir.mkdir(parents=True, exist_ok=True)
    generated = []
    for i in range(args.reps):
        cfg = replace(base, seed=derive_seed(args.seed, i))
        gd = simulate(cfg)
        name = f"{_normalize_kind(args.kind)}_{i:02d}"
        (data_dir / f"{name}.csv").write_text(dataset_to_csv(gd.data))
        (data_dir / f"{name}.truth.csv").write_text(
            stack_to_csv(gd.truth, gd.data.names)
        )
        generated.append((name, gd))

    cells = []
    for name, gd in generated:
        for method in methods:
            cells.append({
                "index": len(cells),
                "dataset": name,
                "method": method,
                "params": params,
                "seed": gd.config.seed,
                "values": np.array(gd.data.values),
                "names": gd.data.names,
                "truth": gd.truth.mats,
            })
    outcomes = _run_cells(cells, jobs=max(1, args.jobs), timeout=args.timeout)

    rows = []
    for cell, outcome in zip(cells, outcomes):
        row = {"dataset": cell["dataset"], "method": cell["method"]}
        if outcome.get("ok"):
            for f in _METRIC_FIELDS + ("runtime_s",):
                row[f] = outcome[f]
            row["error"] = ""
        else:
            for f in _METRIC_FIELDS + ("runtime_s",):
                row[f] = ""
            row["error"] = outcome.get("error", "unknown failure")
        rows.append(row)
    rows.sort(key=lambda r: (r["dataset"], r["method"]))

    header = ["dataset", "method", *_METRIC_FIELDS, "runtime_s", "error"]
    with (outdir / "results.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        writer.writerows(rows)

    with (outdir / "summary.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        summary_header = ["method"]
        for f in _METRIC_FIELDS:
            summary_header += [f"{f}_mean", f"{f}_std"]
        summary_header += ["runtime_mean_s", "n_ok", "n_error"]
        writer.writerow(summary_header)
        for method in sorted(set(methods)):
            ok_rows = [r for r in rows
                       if r["method"] == method and not r["error"]]
            n_err = sum(
                1 for r in rows if r["method"] == method and r["error"]
            )
            out_row: list = [method]
            for f in _METRIC_FIELDS:
                vals = [float(r[f]) for r in ok_rows]
                out_row += (
                    [float(np.mean(vals)), float(np.std(vals))]
                    if vals else ["", ""]
                )
            runtimes = [float(r["runtime_s"]) for r in ok_rows]
            out_row.append(float(np.mean(runtimes)) if runtimes else "")
            out_row += [len(ok_rows), n_err]
            writer.writerow(out_row)

    manifest.finish()
    n_errors = sum(1 for r in rows if r["error"])
    if args.max_failures is not None and n_errors > args.max_failures:
        print(f"error: {n_errors} failed cells (max {args.max_failures})",
              file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_method_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lags", type=int, default=1,
                   help="VAR lag order / PCMCI tau_max (default 1)")
    p.add_argument("--folds", type=int, default=7,
                   help="RCV fold count k (default 7)")
    p.add_argument("--tau-c", dest="tau_c", type=float, default=None,
                   help="RCV consistency threshold "
                        "(default 0.4 varlingam base, 0.7 pcmci base)")
    p.add_argument("--tau-v", dest="tau_v", type=float, default=0.4,
                   help="RCV variability threshold (default 0.4)")
    p.add_argument("--weight", type=float, default=0.0,
                   help="RCV adjustment weight w (default 0)")
    p.add_argument("--alpha-pc", dest="alpha_pc", type=float, default=0.2,
                   help="PC-step significance level (default 0.2)")
    p.add_argument("--alpha-mci", dest="alpha_mci", type=float, default=0.05,
                   help="MCI-step significance level (default 0.05)")
    p.add_argument("--p-max", dest="p_max", type=int, default=3,
                   help="max PC conditioning-set size (default 3)")
    p.add_argument("--n-boot", dest="n_boot", type=int, default=20,
                   help="bootstrap resample count (default 20)")
    p.add_argument("--prune", type=float, default=0.05,
                   help="VAR-LiNGAM coefficient prune threshold (default 0.05)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rcvcausal",
        description="Robust cross-validated causal discovery toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("generate", help="generate ground-truthed datasets")
    p.add_argument("--kind", default=None,
                   help="suite preset, e.g. linear, dense, var-scale-20")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--outdir", required=True)
    p.add_argument("--n-vars", dest="n_vars", type=int, default=None)
    p.add_argument("--t-len", dest="t_len", type=int, default=None)
    p.add_argument("--lags", type=int, default=None)
    p.add_argument("--density", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None,
                   help="JSON file with GeneratorConfig overrides")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("discover", help="run one discovery method on a CSV")
    p.add_argument("--method", required=True, choices=METHOD_NAMES)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="stack CSV path")
    p.add_argument("--graph", default=None, help="optional DOT output")
    p.add_argument("--report", default=None,
                   help="optional RCV per-edge report JSON")
    p.add_argument("--seed", type=int, default=0)
    _add_method_flags(p)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("metrics", help="compare two stack CSVs")
    p.add_argument("--truth", required=True)
    p.add_argument("--est", required=True)
    p.add_argument("--json", default=None, help="optional JSON report path")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("validate", help="four-stage ABM validation pipeline")
    p.add_argument("--config", default=None,
                   help="JSON pipeline config (method, method_params, "
                        "preprocess, analyze_properties, seed)")
    p.add_argument("--real", required=True)
    p.add_argument("--abm", required=True, help="directory of ABM run CSVs")
    p.add_argument("--outdir", required=True)
    p.add_argument("--method", default=None, choices=METHOD_NAMES)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("suite", help="generate datasets and run a method grid")
    p.add_argument("--kind", required=True)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--methods", default="all",
                   help="comma-separated method list or 'all'")
    p.add_argument("--outdir", required=True)
    p.add_argument("--timeout", type=float, default=3600.0,
                   help="per-cell timeout in seconds (default 3600)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-failures", dest="max_failures", type=int,
                   default=None, help="fail the run when error rows exceed "
                                      "this count (default: unlimited)")
    p.add_argument("--config", default=None,
                   help="JSON with 'generator' and 'method_params' overrides")
    _add_method_flags(p)
    p.set_defaults(func=cmd_suite)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as err:  # noqa: BLE001 - single CLI error surface
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
