"""Command-line entry point: ``bhpsensor <command> --config <json> --out <dir>``.

Commands follow the workflow generate -> condition -> train -> evaluate ->
transfer.  Every command writes its outputs atomically and finishes with a
``manifest.json`` listing inputs and outputs with SHA-256 hashes.

Exit codes: 0 success, 1 domain or I/O error, 2 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import matplotlib
import numpy as np
import pandas as pd
import scipy

from . import __version__
from . import conditioning as C
from . import synthgen, training, transfer
from .errors import InvalidConfig, IoFailure, SoftSensorError
from .evaluation import as_row, evaluate, report_name, result_table, scatter_report, timeseries_report
from .models import load_model, save_model
from .welldata import load_csv, save_csv

log = logging.getLogger("bhpsensor")

PARTITIONS = ("trainval", "test1", "test2")
EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# file helpers


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(obj, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(json.dumps(obj, indent=1, sort_keys=True, default=str) + "\n", encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc


def write_partition(frame: pd.DataFrame, path) -> None:
    """Conditioned records with every column, floats at full precision."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    out = frame.copy()
    out["date"] = out["date"].dt.strftime("%Y-%m-%d")
    try:
        out.to_csv(tmp, index=False, float_format="%.17g", lineterminator="\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_partition(path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype={"well_id": str, "quality_flags": str}, keep_default_na=False,
                            na_values={c: [""] for c in C.INPUT_CANDIDATES + ("bhp", "bht", "open_hours")})
    except FileNotFoundError as exc:
        raise IoFailure(f"missing partition file {path}") from exc
    frame["date"] = pd.to_datetime(frame["date"])
    return frame


def read_partitions(directory) -> dict[str, pd.DataFrame]:
    directory = Path(directory)
    return {name: read_partition(directory / f"{name}.csv") for name in PARTITIONS}


class Run:
    """Collects inputs and outputs for the manifest of one command."""

    def __init__(self, args, command: str):
        self.args = args
        self.command = command
        self.out = Path(args.out)
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []
        self.extra: dict = {}
        self.t0 = time.perf_counter()
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IoFailure(str(exc)) from exc

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(p)
        return p

    def used(self, *paths) -> None:
        self.inputs.extend(Path(p) for p in paths)

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "argv": sys.argv[1:],
            "config": self.args.config,
            "seed": self.args.seed,
            "inputs": {str(p): sha256(p) for p in sorted(set(self.inputs)) if p.is_file()},
            "outputs": {p.relative_to(self.out).as_posix(): sha256(p) for p in sorted(set(self.outputs))},
            "wall_clock_s": round(time.perf_counter() - self.t0, 3),
            "versions": {"bhpsensor": __version__, "python": platform.python_version(), "numpy": np.__version__,
                         "pandas": pd.__version__, "scipy": scipy.__version__,
                         "matplotlib": matplotlib.__version__},
            **self.extra,
        }
        write_json(manifest, self.out / "manifest.json")


def _config(args, required: bool) -> dict:
    if args.config is None:
        if required:
            raise UsageError(f"{args.command} needs --config")
        return {}
    return read_json(args.config)


# --------------------------------------------------------------------------
# commands


def cmd_generate(args) -> None:
    raw = _config(args, required=True)
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = synthgen.GenConfig.from_dict(raw)
    run = Run(args, "generate")
    run.used(args.config)
    ds, ledger = synthgen.generate(cfg)
    name = cfg.name
    save_csv(ds, run.path(f"{name}.csv"))
    ledger_path = run.path(f"{name}_faults.json")
    tmp = ledger_path.with_name(ledger_path.name + ".tmp")
    ledger.to_json(tmp)
    os.replace(tmp, ledger_path)
    write_json(cfg.to_dict(), run.path("generate_config.json"))
    write_json({"props": ds.meta.get("props")}, run.path(f"{name}_wells.json"))
    log.info("generated %d records for %d wells; planted faults %s", len(ds), len(ds.well_ids), ledger.counts())
    run.extra["counts"] = {"records": len(ds), "wells": len(ds.well_ids), "faults": ledger.counts()}
    run.finish()


def cmd_condition(args) -> None:
    raw = _config(args, required=False)
    if args.input is None:
        raise UsageError("condition needs --input <field csv>")
    field_id = raw.pop("field_id", None)
    if args.seed is not None:
        raw["split_seed"] = args.seed
    cfg = C.ConditioningConfig.from_dict(raw)
    run = Run(args, "condition")
    run.used(args.input, *([args.config] if args.config else []))
    ds = load_csv(args.input, field_id=field_id)
    result = C.condition(ds, cfg)
    for name in PARTITIONS:
        write_partition(result.partitions[name], run.path(f"{name}.csv"))
    write_json(result.report, run.path("conditioning_report.json"))
    write_json({"field_id": result.field_id, "split": result.split.to_dict(), "config": cfg.to_dict()},
               run.path("split.json"))
    counts = {k: len(v) for k, v in result.partitions.items()}
    log.info("partition sizes %s; removed %s", counts, result.report.get("removed_counts"))
    run.extra["counts"] = counts
    run.finish()


def _spaces(raw: dict) -> list[training.SearchSpace]:
    items = raw.get("spaces", [raw] if "family" in raw else [])
    if not items:
        raise InvalidConfig("train config needs a search space ('family'/'grids') or a 'spaces' list")
    return [training.SearchSpace.from_dict(s) for s in items]


def cmd_train(args) -> None:
    raw = _config(args, required=True)
    if args.input is None:
        raise UsageError("train needs --input <conditioned dir>")
    spaces = _spaces(raw)
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    runs = int(raw.get("runs", training.DEFAULT_RUNS))
    k = int(raw.get("k", 5))
    top_n = int(raw.get("top_n", 3))
    run = Run(args, "train")
    run.used(args.config, *(Path(args.input) / f"{p}.csv" for p in PARTITIONS))
    trainval = read_partition(Path(args.input) / "trainval.csv")
    folds = training.kfold_by_well(trainval, k, seed)
    (run.out / "models").mkdir(exist_ok=True)
    all_results, timings, shortlist = [], {}, {}
    for space in spaces:
        ranked = training.grid_search(space, trainval, folds, runs=runs, seed=seed, jobs=args.jobs)
        all_results += ranked
        for r in ranked:
            timings[r.config_id] = round(r.runtime_s, 3)
        for i, r in enumerate(ranked[:top_n]):
            label = f"{training.FAMILY_LABELS[space.family]}{i + 1}"
            model = training.fit_model(r.config, trainval, seed=seed)
            model.meta = {**model.meta, "label": label, "field_id": raw.get("field_id", ""),
                          "cv": {"mape": r.mean("mape"), "mape_std": r.std("mape")}}
            save_model(model, run.path(f"models/{label}.json"))
            shortlist[label] = r.config_id
    write_json({"folds": folds, "seed": seed, "runs": runs, "shortlist": shortlist,
                "results": [r.to_dict() for r in all_results]}, run.path("cv_results.json"))
    training.write_cv_table(training.rank(all_results), run.path("cv_table.csv"))
    log.info("evaluated %d configurations; shortlist %s", len(all_results), shortlist)
    run.extra["timings_s"] = timings
    run.finish()


def _model_paths(args) -> list[Path]:
    paths = []
    for m in args.model or []:
        p = Path(m)
        paths += sorted(p.glob("*.json")) if p.is_dir() else [p]
    if not paths:
        raise UsageError("no models given (--model <file or dir>)")
    return paths


def _model_label(model, path: Path) -> str:
    return str(model.meta.get("label") or path.stem)


def cmd_evaluate(args) -> None:
    raw = _config(args, required=False)
    if args.input is None:
        raise UsageError("evaluate needs --input <conditioned dir>")
    datasets = raw.get("datasets", ["test1", "test2"])
    n_series = int(raw.get("series_wells", 2))
    run = Run(args, "evaluate")
    model_paths = _model_paths(args)
    run.used(*model_paths, *(Path(args.input) / f"{d}.csv" for d in datasets))
    field_id = raw.get("field_id") or _field_from_split(Path(args.input))
    models = [(p, load_model(p)) for p in model_paths]
    reports = {}
    for dataset in datasets:
        frame = read_partition(Path(args.input) / f"{dataset}.csv")
        rows, n = [], 0
        for path, model in models:
            label = _model_label(model, path)
            data = training.windows_for(model, frame)
            if len(data) == 0:
                raise SoftSensorError(f"{dataset}: no windows for model {label}")
            pred = model.predict(data.x)
            rep = evaluate(pred, data.y, data.well_ids)
            reports[f"{dataset}/{label}"] = rep.to_dict()
            stem = report_name(field_id, dataset, label, "scatter")
            scatter_report(pred, data.y, run.out / stem, title=f"{label} {dataset}")
            run.outputs += [run.out / f"{stem}.csv", run.out / f"{stem}.svg"]
            for well in sorted(set(data.well_ids.tolist()))[:n_series]:
                sel = data.well_ids == well
                stem = report_name(field_id, f"{dataset}-{well}", label, "series")
                timeseries_report(data.dates[sel], data.y[sel], {label: pred[sel]}, run.out / stem,
                                  title=f"{well} {label}")
                run.outputs += [run.out / f"{stem}.csv", run.out / f"{stem}.svg"]
            stem = report_name(field_id, dataset, label, "table")
            result_table([as_row(label, rep)], run.path(f"{stem}.csv"), title=dataset, n_samples=len(data))
            rows.append(as_row(label, rep))
            n = len(data)
        stem = report_name(field_id, dataset, "all", "table")
        result_table(rows, run.path(f"{stem}.csv"), title=dataset, n_samples=n)
    write_json(reports, run.path("eval_reports.json"))
    log.info("evaluated %d models on %s", len(models), datasets)
    run.finish()


def _field_from_split(directory: Path) -> str:
    split = directory / "split.json"
    if split.is_file():
        return json.loads(split.read_text(encoding="utf-8")).get("field_id", "field")
    return "field"


TRANSFER_LABELS = {"fine_tune": "w/ Fine Tuning", "new_layer": "w/ New Layer"}


def cmd_transfer(args) -> None:
    raw = _config(args, required=True)
    if args.input is None or not args.model:
        raise UsageError("transfer needs --model <base json> and --input <conditioned field dir>")
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    runs = int(raw.get("runs", 1))
    datasets = raw.get("datasets", ["test1", "test2"])
    adapter = list(raw.get("input_adapter", []))
    specs = [transfer.TransferSpec.from_dict({"input_adapter": adapter, **s})
             for s in raw.get("strategies", [{"strategy": "new_layer"}, {"strategy": "fine_tune"}])]
    run = Run(args, "transfer")
    model_paths = _model_paths(args)
    parts = read_partitions(args.input)
    run.used(args.config, *model_paths, *(Path(args.input) / f"{p}.csv" for p in PARTITIONS))
    field_id = raw.get("field_id") or _field_from_split(Path(args.input))
    train_frame = parts["trainval"]
    (run.out / "models").mkdir(exist_ok=True)
    evals: dict[str, dict[str, list]] = {d: {} for d in datasets}
    checks = {}
    for path in model_paths:
        base = load_model(path)
        name = _model_label(base, path)
        variants = [(f"{name} w/o TL", lambda s, b=base: b)]
        for spec in specs:
            variants.append((f"{name} {TRANSFER_LABELS[spec.strategy]}",
                             lambda s, b=base, sp=spec: transfer.transfer(b, sp, train_frame, seed=s)))
        if raw.get("include_scratch", True):
            cfg = training.ModelConfig.from_dict(base.meta["config"])
            fs = cfg.feature_set + "".join(f"+{c}" for c in adapter if c not in base.feature_set.columns)
            cfg = training.ModelConfig(cfg.config_id, cfg.family, fs, cfg.scaler, cfg.hyper)
            variants.append((f"{name} {field_id} only", lambda s, c=cfg: training.fit_model(c, train_frame, seed=s)))
        for label, make in variants:
            for r in range(runs):
                s = training.run_seed(seed, r, 0)
                model = make(s)
                if "w/ New Layer" in label:
                    checks[f"{label} run {r}"] = transfer.frozen_unchanged(base, model)
                if model is not base:
                    model.meta = {**model.meta, "label": label}
                    safe = label.replace("/", "").replace(" ", "_")
                    save_model(model, run.path(f"models/{safe}_run{r}.json"))
                for d in datasets:
                    evals[d].setdefault(label, []).append(training.evaluate_model(model, parts[d]))
    if not all(checks.values()):
        raise SoftSensorError(f"frozen base parameters changed: {checks}")
    for d in datasets:
        rows = [as_row(label, {m: [e[m] for e in evs] for m in ("mape", "smape", "nrmse")})
                for label, evs in evals[d].items()]
        n = next(iter(evals[d].values()))[0]["n"]
        result_table(rows, run.path(report_name(field_id, d, "transfer", "table") + ".csv"), title=d, n_samples=n,
                     sort=False)
    write_json({"evaluations": evals, "frozen_base_checks": checks}, run.path("transfer_report.json"))
    run.extra["frozen_base_checks"] = checks
    run.finish()


COMMANDS = {"generate": cmd_generate, "condition": cmd_condition, "train": cmd_train, "evaluate": cmd_evaluate,
            "transfer": cmd_transfer}


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("--jobs must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bhpsensor", description="Data-driven bottomhole pressure soft sensor")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "generate": "synthesize a field with planted faults",
        "condition": "clean, filter and partition a field file",
        "train": "cross-validated grid search and shortlist fitting",
        "evaluate": "metrics, scatter and time-series reports on test partitions",
        "transfer": "adapt a base model to another field",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=_u64, default=None, help="override the configured seed")
        p.add_argument("--jobs", type=_positive, default=1, help="worker processes (results do not depend on it)")
        if name != "generate":
            p.add_argument("--input", help="field CSV (condition) or conditioned directory")
        if name in ("evaluate", "transfer"):
            p.add_argument("--model", nargs="+", help="model JSON files or directories")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"bhpsensor: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SoftSensorError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_DOMAIN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
