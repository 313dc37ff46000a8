"""Experiment orchestration: the dataset x shift x method x seed matrix,
learning-rate-bound sensitivity sweeps, adaptive-rate trace export, and CSV /
markdown summaries.

Outputs under ``output_dir``:

* ``summary.csv``     one aggregated row per (shift, method)
* ``summary.md``      markdown table (methods as columns, shifts as rows)
* ``steps/<dataset>_<shift>_<method>_<seed>.csv``   per-step traces
* ``manifest.json``   config echo, config hash, cell status list

All outputs are fully rewritten on every invocation and byte-deterministic
given the config; wall-time fields are populated only in timing mode so that
repeated runs stay byte-identical.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import hashlib
import json
import os
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .asap import DEFAULT_BOUNDS, LrBounds, learning_rate
from .data import DatasetSpec, LabeledPool, make_pool, split_pool
from .errors import ConfigError
from .methods import MethodConfig, run_adapter
from .model import ModelParams, accuracy, pretrain
from .shift import LabelShiftStream, ShiftSchedule, default_endpoints, normalize_kind

SCHEMA_VERSION = 1
SUMMARY_COLUMNS = (
    "schema_version",
    "dataset",
    "shift",
    "method",
    "n_seeds",
    "mean_acc",
    "std_acc",
    "mean_wall_sec",
    "std_wall_sec",
    "status",
)
STEP_COLUMNS = ("schema_version", "t", "accuracy", "eta", "shift_e", "wall_nanos", "est_dist")
TRACE_COLUMNS = ("schema_version", "t", "shift_e", "eta", "shift_kind")
SWEEP_COLUMNS = ("schema_version", "vary", "value", "mean_acc", "std_acc", "status")


def child_seed(*parts) -> int:
    """Mix integers and string tags into a reproducible 32-bit seed."""
    entropy = [zlib.crc32(p.encode()) if isinstance(p, str) else int(p) for p in parts]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


@dataclass
class PretrainSettings:
    epochs: int = 30
    lr: float = 0.1
    batch_size: int = 64

    def validate(self) -> None:
        if self.epochs < 0 or self.lr <= 0 or self.batch_size < 1:
            raise ValueError("pretrain needs epochs >= 0, lr > 0, batch_size >= 1")


@dataclass
class RunConfig:
    """Full experiment description; mirrors the JSON config file key-for-key."""

    dataset: DatasetSpec
    horizon: int = 400
    batch_size: int = 64
    shifts: tuple = ("lin", "sin", "squ", "ber")
    methods: tuple = ()
    seeds: tuple = (1, 2, 3, 4, 5)
    holdout_fraction: float = 0.2
    pretrain: PretrainSettings = field(default_factory=PretrainSettings)
    output_dir: str = "runs/out"

    def validate(self) -> None:
        self.dataset.validate()
        self.pretrain.validate()
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.shifts:
            raise ValueError("shifts must be non-empty")
        self.shifts = tuple(normalize_kind(k) for k in self.shifts)
        if not self.methods:
            raise ValueError("methods must be non-empty")
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ValueError(f"method labels must be distinct, got {labels}")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        self.seeds = tuple(int(s) for s in self.seeds)
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if any(s < 0 for s in self.seeds):
            raise ValueError("seeds must be non-negative")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must be in (0, 1)")

    def to_dict(self) -> dict:
        doc = {
            "dataset": _dataclass_dict(self.dataset),
            "horizon": self.horizon,
            "batch_size": self.batch_size,
            "shifts": list(self.shifts),
            "methods": [_dataclass_dict(m) for m in self.methods],
            "seeds": list(self.seeds),
            "holdout_fraction": self.holdout_fraction,
            "pretrain": _dataclass_dict(self.pretrain),
            "output_dir": self.output_dir,
        }
        return doc

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _dataclass_dict(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        if not f.init:
            continue
        value = getattr(obj, f.name)
        if isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def _build_strict(cls, doc: dict, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def config_from_dict(doc: dict) -> RunConfig:
    """Parse a config document; unknown keys anywhere are errors."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in config")
    if "dataset" not in doc:
        raise ConfigError("config needs a dataset section")
    if "methods" not in doc or not isinstance(doc["methods"], list):
        raise ConfigError("config needs a methods list")
    parsed = dict(doc)
    parsed["dataset"] = _build_strict(DatasetSpec, doc["dataset"], "dataset")
    parsed["methods"] = tuple(
        _build_strict(MethodConfig, m, f"methods[{i}]") for i, m in enumerate(doc["methods"])
    )
    if "pretrain" in doc:
        parsed["pretrain"] = _build_strict(PretrainSettings, doc["pretrain"], "pretrain")
    if "shifts" in doc:
        parsed["shifts"] = tuple(doc["shifts"])
    if "seeds" in doc:
        parsed["seeds"] = tuple(doc["seeds"])
    config = _build_strict(RunConfig, parsed, "config")
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return config


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


@dataclass
class SummaryRow:
    """Aggregate over seeds for one (shift, method) cell block."""

    dataset: str
    shift: str
    method: str
    n_seeds: int
    mean_acc: float | None  # percent
    std_acc: float | None
    mean_wall_sec: float | None
    std_wall_sec: float | None
    status: str  # ok | partial | failed


@dataclass
class CellResult:
    shift: str
    method: str
    seed: int
    records: list | None
    error: str | None
    cell_seconds: float

    @property
    def ok(self) -> bool:
        return self.error is None

    def mean_accuracy(self) -> float:
        return float(np.mean([r.accuracy for r in self.records]))

    def wall_seconds(self) -> float:
        return float(sum(r.wall_nanos for r in self.records)) / 1e9


@dataclass
class MatrixResult:
    config: RunConfig
    rows: list
    cells: list
    timing: bool

    @property
    def failures(self) -> list:
        return [c for c in self.cells if not c.ok]


@dataclass
class SeedContext:
    """Shared per-seed state: pool split and the pretrained model."""

    seed: int
    train: LabeledPool
    holdout: LabeledPool
    params: ModelParams
    holdout_accuracy: float


def build_seed_context(config: RunConfig, seed: int) -> SeedContext:
    spec = dataclasses.replace(
        config.dataset, seed=child_seed(config.dataset.seed, seed, "pool")
    )
    pool = make_pool(spec)
    train, holdout = split_pool(pool, config.holdout_fraction, seed=child_seed(seed, "split"))
    params = pretrain(
        train,
        epochs=config.pretrain.epochs,
        lr=config.pretrain.lr,
        batch_size=config.pretrain.batch_size,
        seed=child_seed(seed, "pretrain"),
    )
    return SeedContext(
        seed=seed,
        train=train,
        holdout=holdout,
        params=params,
        holdout_accuracy=accuracy(params, holdout.inputs, holdout.labels),
    )


def build_stream(config: RunConfig, ctx: SeedContext, shift_kind: str) -> LabelShiftStream:
    p0, pT = default_endpoints(ctx.train.num_classes, seed=child_seed(ctx.seed, "endpoints"))
    schedule = ShiftSchedule(
        kind=shift_kind,
        horizon=config.horizon,
        p0=p0,
        pT=pT,
        seed=child_seed(ctx.seed, "schedule"),
    )
    return LabelShiftStream(
        pool=ctx.train,
        schedule=schedule,
        batch_size=config.batch_size,
        seed=child_seed(ctx.seed, "stream"),
    )


def run_cell(config: RunConfig, ctx: SeedContext, shift_kind: str, method: MethodConfig) -> CellResult:
    tic = time.perf_counter()
    try:
        stream = build_stream(config, ctx, shift_kind)
        adapter = method.build(
            ctx.params, batch_size=config.batch_size, seed=child_seed(ctx.seed, "buffer")
        )
        records = run_adapter(adapter, ctx.holdout, stream)
        return CellResult(shift_kind, method.label, ctx.seed, records, None, time.perf_counter() - tic)
    except Exception as exc:  # cell failures must not abort the matrix
        return CellResult(
            shift_kind, method.label, ctx.seed, None, f"{type(exc).__name__}: {exc}", time.perf_counter() - tic
        )


def build_contexts(config: RunConfig, workers: int = 1) -> dict:
    """Per-seed contexts (pool split + pretrained model), errors captured."""

    def _context(seed: int):
        try:
            return seed, build_seed_context(config, seed), None
        except Exception as exc:
            return seed, None, f"{type(exc).__name__}: {exc}"

    if workers > 1 and len(config.seeds) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as ex:
            contexts = list(ex.map(_context, config.seeds))
    else:
        contexts = [_context(s) for s in config.seeds]
    return {seed: (ctx, err) for seed, ctx, err in contexts}


def run_matrix(
    config: RunConfig,
    parallel: int | None = None,
    timing: bool = False,
    write: bool = True,
    contexts: dict | None = None,
) -> MatrixResult:
    """Run the full shift x method x seed matrix.

    ``timing`` forces serial execution and populates wall-time fields;
    otherwise cells may run on a bounded worker pool and the wall columns are
    left empty so outputs stay byte-deterministic.  ``contexts`` lets callers
    reuse pretrained seed contexts (pretraining is a pure function of the
    config and seed, so reuse cannot change results).
    """
    config.validate()
    workers = 1 if timing else max(1, parallel or os.cpu_count() or 1)
    ctx_by_seed = contexts if contexts is not None else build_contexts(config, workers)

    tasks = [(shift, seed) for shift in config.shifts for seed in config.seeds]

    def _run_task(task):
        shift, seed = task
        ctx, err = ctx_by_seed[seed]
        if err is not None:
            return [
                CellResult(shift, m.label, seed, None, f"seed context failed: {err}", 0.0)
                for m in config.methods
            ]
        return [run_cell(config, ctx, shift, m) for m in config.methods]

    if workers > 1 and len(tasks) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as ex:
            nested = list(ex.map(_run_task, tasks))
    else:
        nested = [_run_task(t) for t in tasks]
    cells = [cell for group in nested for cell in group]

    rows = aggregate_rows(config, cells, timing)
    result = MatrixResult(config=config, rows=rows, cells=cells, timing=timing)
    if write:
        write_outputs(result)
    return result


def aggregate_rows(config: RunConfig, cells: list, timing: bool) -> list:
    by_key = {}
    for cell in cells:
        by_key.setdefault((cell.shift, cell.method), []).append(cell)
    rows = []
    for shift in config.shifts:
        for method in config.methods:
            group = by_key.get((shift, method.label), [])
            good = [c for c in group if c.ok]
            status = "ok" if len(good) == len(group) else ("partial" if good else "failed")
            if good:
                accs = [100.0 * c.mean_accuracy() for c in good]
                mean_acc, std_acc = float(np.mean(accs)), float(np.std(accs))
                if timing:
                    walls = [c.wall_seconds() for c in good]
                    mean_wall, std_wall = float(np.mean(walls)), float(np.std(walls))
                else:
                    mean_wall = std_wall = None
            else:
                mean_acc = std_acc = mean_wall = std_wall = None
            rows.append(
                SummaryRow(
                    dataset=config.dataset.label,
                    shift=shift,
                    method=method.label,
                    n_seeds=len(good),
                    mean_acc=mean_acc,
                    std_acc=std_acc,
                    mean_wall_sec=mean_wall,
                    std_wall_sec=std_wall,
                    status=status,
                )
            )
    return rows


# -- output writers ----------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_summary_csv(path: Path, rows: list) -> None:
    _write_csv(
        path,
        SUMMARY_COLUMNS,
        [
            (
                SCHEMA_VERSION,
                r.dataset,
                r.shift,
                r.method,
                r.n_seeds,
                r.mean_acc,
                r.std_acc,
                r.mean_wall_sec,
                r.std_wall_sec,
                r.status,
            )
            for r in rows
        ],
    )


def read_summary_csv(path) -> list:
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not text or text[0].split(",") != list(SUMMARY_COLUMNS):
        raise ConfigError(f"{path} is not a summary.csv (header mismatch)")
    rows = []
    for line in text[1:]:
        parts = line.split(",")
        rows.append(
            SummaryRow(
                dataset=parts[1],
                shift=parts[2],
                method=parts[3],
                n_seeds=int(parts[4]),
                mean_acc=float(parts[5]) if parts[5] else None,
                std_acc=float(parts[6]) if parts[6] else None,
                mean_wall_sec=float(parts[7]) if parts[7] else None,
                std_wall_sec=float(parts[8]) if parts[8] else None,
                status=parts[9],
            )
        )
    return rows


def _dist_cell(dist) -> str:
    if dist is None:
        return ""
    return ";".join(repr(float(v)) for v in dist)


def write_steps_csv(path: Path, records: list, timing: bool) -> None:
    _write_csv(
        path,
        STEP_COLUMNS,
        [
            (
                SCHEMA_VERSION,
                r.t,
                r.accuracy,
                r.eta,
                r.shift_e,
                r.wall_nanos if timing else None,
                _dist_cell(r.estimated_dist),
            )
            for r in records
        ],
    )


def write_outputs(result: MatrixResult) -> None:
    out = Path(result.config.output_dir)
    steps_dir = out / "steps"
    steps_dir.mkdir(parents=True, exist_ok=True)
    write_summary_csv(out / "summary.csv", result.rows)
    (out / "summary.md").write_text(render_summary(result.rows), encoding="utf-8")
    dataset = result.config.dataset.label
    for cell in sorted(result.cells, key=lambda c: (c.shift, c.method, c.seed)):
        if not cell.ok:
            continue
        name = f"{dataset}_{cell.shift}_{cell.method}_{cell.seed}.csv"
        write_steps_csv(steps_dir / name, cell.records, result.timing)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "config": result.config.to_dict(),
        "config_sha256": result.config.digest(),
        "timing": result.timing,
        "cells": [
            {
                "shift": c.shift,
                "method": c.method,
                "seed": c.seed,
                "status": "ok" if c.ok else "failed",
                "error": c.error,
            }
            for c in sorted(result.cells, key=lambda c: (c.shift, c.method, c.seed))
        ],
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def render_summary(rows: list) -> str:
    """Markdown tables, one per dataset: methods as columns, shifts as rows,
    cells ``mean±std`` in percent; best mean per row bolded (ties share it)."""
    if not rows:
        raise ValueError("no summary rows to render")
    datasets = []
    for r in rows:
        if r.dataset not in datasets:
            datasets.append(r.dataset)
    blocks = []
    for dataset in datasets:
        subset = [r for r in rows if r.dataset == dataset]
        methods, shifts = [], []
        for r in subset:
            if r.method not in methods:
                methods.append(r.method)
            if r.shift not in shifts:
                shifts.append(r.shift)
        lines = [f"### {dataset}", ""]
        lines.append("| shift | " + " | ".join(methods) + " |")
        lines.append("|---" * (len(methods) + 1) + "|")
        for shift in shifts:
            cells = {r.method: r for r in subset if r.shift == shift}
            means = [
                cells[m].mean_acc for m in methods if m in cells and cells[m].mean_acc is not None
            ]
            best = max(means) if means else None
            rendered = []
            for m in methods:
                r = cells.get(m)
                if r is None or r.mean_acc is None:
                    rendered.append(r.status if r else "-")
                    continue
                text = f"{r.mean_acc:.2f}±{r.std_acc:.2f}"
                if best is not None and r.mean_acc == best:
                    text = f"**{text}**"
                rendered.append(text)
            lines.append(f"| {shift} | " + " | ".join(rendered) + " |")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


# -- sensitivity sweep -------------------------------------------------------


def sensitivity_sweep(
    config: RunConfig,
    vary: str,
    values,
    parallel: int | None = None,
    write: bool = True,
) -> list:
    """Re-run the matrix for each bound value, varying one adaptive-rate bound.

    Only the adaptive-rate methods are executed (baselines do not depend on
    the bounds).  Returns (value, mean_acc, std_acc, status) tuples where the
    mean is taken over each seed's across-shift mean accuracy.  Values whose
    bounds are infeasible (eta_min > eta_max) are reported as rejected.
    """
    if vary not in ("eta_min", "eta_max"):
        raise ConfigError(f"vary must be eta_min or eta_max, got {vary!r}")
    values = [float(v) for v in values]
    if not values:
        raise ConfigError("values must be non-empty")
    if any(v <= 0 for v in values):
        raise ConfigError("values must be positive")
    if sorted(values) != values:
        raise ConfigError("values must be sorted ascending")
    asap_methods = [m for m in config.methods if m.kind == "asap"]
    if not asap_methods:
        raise ConfigError("sweep requires an asap method in the config")
    base = asap_methods[0]
    config.validate()
    workers = max(1, parallel or os.cpu_count() or 1)
    # pretraining does not depend on the bounds, so contexts are shared
    contexts = build_contexts(config, workers)

    out_rows = []
    for value in values:
        bounds_kw = {"eta_min": base.eta_min, "eta_max": base.eta_max, "ridge": base.ridge}
        bounds_kw[vary] = value
        try:
            method = MethodConfig(kind="asap", name=base.label, **bounds_kw)
        except ValueError:
            out_rows.append((value, None, None, "rejected"))
            continue
        derived = dataclasses.replace(config, methods=(method,))
        result = run_matrix(derived, parallel=parallel, timing=False, write=False, contexts=contexts)
        per_seed = []
        for seed in derived.seeds:
            accs = [
                c.mean_accuracy()
                for c in result.cells
                if c.seed == seed and c.ok
            ]
            if accs:
                per_seed.append(100.0 * float(np.mean(accs)))
        if per_seed:
            status = "ok" if not result.failures else "partial"
            out_rows.append((value, float(np.mean(per_seed)), float(np.std(per_seed)), status))
        else:
            out_rows.append((value, None, None, "failed"))

    if write:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(
            out / f"sweep_{vary}.csv",
            SWEEP_COLUMNS,
            [(SCHEMA_VERSION, vary, v, m, s, st) for v, m, s, st in out_rows],
        )
    return out_rows


# -- adaptive-rate trace -----------------------------------------------------


def export_lr_trace(records: list, shift_kind: str) -> list:
    """Rows (t, shift_e, eta, shift_kind) from an adaptive-rate run.

    The eta column is exactly reproducible from shift_e via the bounded
    linear mapping.  Records without adaptive-rate fields are rejected.
    """
    shift_kind = normalize_kind(shift_kind)
    rows = []
    for r in records:
        if r.eta is None or r.shift_e is None:
            raise ValueError("trace export needs records from an adaptive-rate (asap) run")
        rows.append((r.t, r.shift_e, r.eta, shift_kind))
    if not rows:
        raise ValueError("no records to export")
    return rows


def write_lr_trace(path, records: list, shift_kind: str) -> None:
    rows = export_lr_trace(records, shift_kind)
    _write_csv(
        Path(path),
        TRACE_COLUMNS,
        [(SCHEMA_VERSION, t, e, eta, kind) for t, e, eta, kind in rows],
    )


def recompute_eta(shift_e: float, bounds: LrBounds = DEFAULT_BOUNDS) -> float:
    """Re-derive the applied rate from a traced shift estimate (audit helper)."""
    return learning_rate(shift_e, bounds)
