"""Experiment orchestration: sweeps, Pareto tables, drift and subgroup
sensitivity reports, and CSV plot data."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from .data import Dataset, SubgroupSpec, build_subgroups
from .errors import ConfigurationError
from .metrics import RunReport, build_report, local_di, pareto_front, worst_k_di
from .trainers import Algorithm, TrainConfig, TrainedModel, train

log = logging.getLogger(__name__)

DEFAULT_LAMBDAS = tuple(float(v) for v in np.linspace(0.0, 5.0, 20))
DEFAULT_TAUS = tuple(float(v) for v in np.linspace(0.001, 1.0, 10))
TABLE1_WIDTHS = (5.0, 10.0, 15.0, 20.0)


@dataclass(frozen=True)
class SweepSpec:
    lambdas: tuple = DEFAULT_LAMBDAS
    taus: tuple = DEFAULT_TAUS
    algorithms: tuple = (Algorithm.ROAD,)
    seeds: tuple = (0,)
    base: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        for name in ("lambdas", "taus", "algorithms", "seeds"):
            value = tuple(getattr(self, name))
            if not value:
                raise ConfigurationError(f"sweep grid {name!r} is empty")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "algorithms", tuple(Algorithm(a) for a in self.algorithms))

    def cells(self) -> List[Dict[str, Any]]:
        """Grid cells. tau only varies for the reweighted algorithms and
        lambda only for the fair ones, so no cell is a duplicate run."""
        out = []
        for algo in self.algorithms:
            lams = (0.0,) if algo is Algorithm.BIASED else self.lambdas
            taus = self.taus if algo in (Algorithm.ROAD, Algorithm.BROAD) else (self.base.tau,)
            for lam in lams:
                for tau in taus:
                    cell = f"{algo.value}|lambda={float(lam)!r}|tau={float(tau)!r}"
                    out.append({"cell_id": cell, "algorithm": algo, "lambda_g": float(lam), "tau": float(tau)})
        return out

    def size(self) -> int:
        return len(self.cells()) * len(self.seeds)


def cell_seed(base_seed: int, cell_id: str) -> int:
    digest = hashlib.sha256(f"{base_seed}:{cell_id}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass
class ExperimentRecord:
    run_id: str
    cell_id: str
    seed: int
    report: Optional[RunReport]
    wall_time: float
    preprocessing: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_flat(self) -> Dict[str, Any]:
        out = {"run_id": self.run_id, "cell_id": self.cell_id, "seed": self.seed,
               "status": "ok" if self.ok else "error", "wall_time": self.wall_time}
        if self.error is not None:
            out["error"] = self.error
        if self.report is not None:
            out.update(self.report.to_flat())
        for k, v in self.preprocessing.items():
            out[f"preprocessing.{k}"] = v
        return out

    @classmethod
    def from_flat(cls, flat: Mapping[str, Any]) -> "ExperimentRecord":
        report = RunReport.from_flat(flat) if flat.get("status") == "ok" else None
        pre = {k[len("preprocessing."):]: v for k, v in flat.items() if k.startswith("preprocessing.")}
        return cls(flat["run_id"], flat["cell_id"], flat["seed"], report, flat["wall_time"], pre, flat.get("error"))


def load_records(path) -> List[ExperimentRecord]:
    if not os.path.exists(path):
        return []
    with open(path, encoding="utf-8") as fh:
        return [ExperimentRecord.from_flat(json.loads(line)) for line in fh if line.strip()]


def evaluate(model: TrainedModel, test: Dataset, subgroups, ks=(1, 3)) -> RunReport:
    """Metrics for ``model`` on ``test``.

    ``subgroups`` is a SubgroupSpec or an already built list. The training
    standardizer, if the model carries one, is reapplied to the raw test
    features first.
    """
    test = _prepare(model, test)
    groups = build_subgroups(test, subgroups) if isinstance(subgroups, SubgroupSpec) else subgroups
    pred = model.predict(test)
    weights = model.sample_weights(test, pred.scores) if model.adversary is not None else None
    return build_report(pred, test.labels, test.sensitive, groups, ks=ks, weights=weights,
                        config=model.config.to_dict())


def _prepare(model: TrainedModel, ds: Dataset) -> Dataset:
    if model.column_names and tuple(ds.column_names) != tuple(model.column_names):
        diff = sorted(set(ds.column_names) ^ set(model.column_names))
        raise ConfigurationError(
            f"feature schema mismatch: model has {list(model.column_names)}, data has {list(ds.column_names)}"
            + (f" (differing: {diff})" if diff else " (order differs)")
        )
    return model.standardizer.apply(ds) if model.standardizer is not None else ds


# ---------------------------------------------------------------- sweeps

_WORKER: Dict[str, Any] = {}


def _init_worker(train_ds, test_ds, subgroups, preprocessing):
    _WORKER.update(train=train_ds, test=test_ds, subgroups=subgroups, preprocessing=preprocessing)


def _run_one(job) -> Dict[str, Any]:
    cell, seed, base = job
    run_id = f"{cell['cell_id']}|seed={seed}"
    start = time.perf_counter()
    try:
        cfg = replace(base, algorithm=cell["algorithm"], lambda_g=cell["lambda_g"], tau=cell["tau"],
                      seed=cell_seed(seed, cell["cell_id"]))
        with warnings.catch_warnings():
            # expected here: the tau floor on the lowest grid value (the record echoes the floored tau)
            # and dropped subgroups, which run_sweep already reported once
            warnings.simplefilter("ignore", RuntimeWarning)
            model = train(_WORKER["train"], cfg)
            report = evaluate(model, _WORKER["test"], _WORKER["subgroups"])
        rec = ExperimentRecord(run_id, cell["cell_id"], seed, report, 0.0, dict(_WORKER["preprocessing"]))
    except Exception as exc:  # a failing cell is recorded, the sweep goes on
        rec = ExperimentRecord(run_id, cell["cell_id"], seed, None, 0.0, dict(_WORKER["preprocessing"]),
                               error=f"{type(exc).__name__}: {exc}")
    rec.wall_time = time.perf_counter() - start
    return rec.to_flat()


def run_sweep(spec: SweepSpec, train_ds: Dataset, test_ds: Dataset, subgroups: SubgroupSpec,
              out_path=None, workers: int = 1, preprocessing: Optional[Mapping] = None) -> List[ExperimentRecord]:
    """Train and evaluate every (cell, seed). Records are appended to
    ``out_path`` as they finish; runs already recorded there as ok are skipped.

    Returns the records of this invocation (skipped runs not included).
    """
    build_subgroups(test_ds, subgroups)  # fail before launching anything
    done = {r.run_id for r in load_records(out_path) if r.ok} if out_path else set()
    jobs = [(cell, seed, spec.base) for cell in spec.cells() for seed in spec.seeds
            if f"{cell['cell_id']}|seed={seed}" not in done]
    log.info("sweep: %d runs in the grid, %d already done, %d to run", spec.size(), spec.size() - len(jobs), len(jobs))
    pre = dict(preprocessing or {})
    results: List[ExperimentRecord] = []
    sink = open(out_path, "a", encoding="utf-8") if out_path else None
    try:
        def emit(flat):
            results.append(ExperimentRecord.from_flat(flat))
            if sink:
                sink.write(json.dumps(flat, sort_keys=True) + "\n")
                sink.flush()

        if workers <= 1:
            _init_worker(train_ds, test_ds, subgroups, pre)
            for job in jobs:
                emit(_run_one(job))
        else:
            with ProcessPoolExecutor(workers, initializer=_init_worker,
                                     initargs=(train_ds, test_ds, subgroups, pre)) as pool:
                # map keeps job order, so serial and parallel files agree line by line
                for flat in pool.map(_run_one, jobs):
                    emit(flat)
    finally:
        if sink:
            sink.close()
    failed = [r for r in results if not r.ok]
    if failed:
        log.warning("sweep: %d of %d runs failed", len(failed), len(results))
    return results


def _flat(rec) -> Mapping[str, Any]:
    if isinstance(rec, ExperimentRecord):
        return rec.to_flat()
    if isinstance(rec, RunReport):
        return rec.to_flat()
    return rec


def pareto_report(records: Iterable, constraint_di: float = 0.05, x_metric: str = "worst_1_di",
                  y_metric: str = "accuracy") -> List[Dict[str, Any]]:
    """Pareto front of the ok records whose global DI is within the budget."""
    rows = []
    for rec in map(_flat, records):
        if rec.get("status", "ok") != "ok":
            continue
        missing = [k for k in (x_metric, y_metric, "global_di") if k not in rec]
        if missing:
            raise ConfigurationError(f"record {rec.get('run_id', '?')} lacks {missing}")
        rows.append({"tag": rec.get("run_id", ""), x_metric: rec[x_metric], y_metric: rec[y_metric],
                     "global_di": rec["global_di"]})
    front = pareto_front(rows, lambda r: r["global_di"] <= constraint_di, x=x_metric, y=y_metric)
    if not front:
        warnings.warn(f"no record satisfies global_di <= {constraint_di}", RuntimeWarning, stacklevel=2)
    return front


def drift_eval(model: TrainedModel, test_sets: Mapping[str, Dataset], subgroups) -> Dict[str, RunReport]:
    """One report per named set. ``subgroups`` is one spec for all sets or a
    mapping from set name to spec."""
    out = {}
    for name, ds in test_sets.items():
        spec = subgroups[name] if isinstance(subgroups, Mapping) else subgroups
        out[name] = evaluate(model, ds, spec)
    return out


def subgroup_sensitivity(model: TrainedModel, test: Dataset, widths: Sequence[float] = TABLE1_WIDTHS,
                         variants: Sequence[Optional[Mapping[str, float]]] = (None, {"gender": 0}, {"gender": 1}),
                         bin_column: str = "age", min_size: int = 1) -> List[Dict[str, Any]]:
    """worst-1-DI per subgroup definition, population variant major.

    With the defaults this is the 12-row layout: widths 5..20 on the whole
    population, then on gender=0, then on gender=1. A definition with no
    usable subgroup gets ``worst_1_di = None`` and a note.
    """
    test = _prepare(model, test)
    test.column_index(bin_column)
    hard = model.predict(test).hard  # computed once; every definition re-aggregates it
    rows = []
    for variant in variants:
        where = dict(variant or {})
        population = ", ".join(f"{k}={v:g}" for k, v in where.items()) or "all"
        for width in widths:
            row = {"definition": len(rows), "bin_width": float(width), "population": population,
                   "n_subgroups": 0, "worst_1_di": None, "note": ""}
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    groups = build_subgroups(test, SubgroupSpec(bin_column, width, (), min_size, where))
            except ConfigurationError as exc:
                row["note"] = f"undefined: {exc}"
            else:
                row["n_subgroups"] = len(groups)
                row["worst_1_di"] = worst_k_di(local_di(hard, test.sensitive, groups), 1)
            rows.append(row)
    return rows


# ------------------------------------------------------------- plot data

PLOT_COLUMNS = {
    "local_di_bars": ("subgroup_id", "n", "di", "mean_r"),
    "pareto_xy": ("worst_1_di", "accuracy", "tag"),
    "r_histogram": ("bin_lo", "bin_hi", "count"),
    "tau_curve": ("tau", "lambda_quartile", "lambda_g", "worst_1_di"),
}


def plot_rows(kind: str, source) -> List[Dict[str, Any]]:
    if kind not in PLOT_COLUMNS:
        raise ConfigurationError(f"unknown plot kind {kind!r}; choose from {sorted(PLOT_COLUMNS)}")
    if kind in ("local_di_bars", "r_histogram"):
        rep = source if isinstance(source, RunReport) else RunReport.from_flat(_flat(source))
        if kind == "local_di_bars":
            if not rep.local_di:
                raise ConfigurationError("report has no local DI values")
            return [{"subgroup_id": gid, "n": rep.subgroup_sizes.get(gid, ""), "di": di,
                     "mean_r": rep.mean_r.get(gid, "")} for gid, di in rep.local_di.items()]
        if not rep.r_histogram:
            raise ConfigurationError("report has no r histogram (model without weights?)")
        edges, counts = rep.r_histogram["edges"], rep.r_histogram["counts"]
        return [{"bin_lo": lo, "bin_hi": hi, "count": c} for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
    flats = [_flat(r) for r in source]
    flats = [r for r in flats if r.get("status", "ok") == "ok"]
    if kind == "pareto_xy":
        for r in flats:
            if "worst_1_di" not in r or "accuracy" not in r:
                raise ConfigurationError("pareto_xy needs worst_1_di and accuracy")
        rows = [{"worst_1_di": r["worst_1_di"], "accuracy": r["accuracy"], "tag": r.get("tag", r.get("run_id", ""))}
                for r in flats]
        return sorted(rows, key=lambda r: (r["worst_1_di"], -r["accuracy"]))
    return _tau_curve(flats)


def _tau_curve(flats) -> List[Dict[str, Any]]:
    for r in flats:
        for key in ("config.tau", "config.lambda_g", "worst_1_di"):
            if key not in r:
                raise ConfigurationError(f"tau_curve needs {key!r} in every record")
    if not flats:
        return []
    lams = sorted({r["config.lambda_g"] for r in flats})
    lo, hi = lams[0], lams[-1]
    picks = {}
    for q in (0.0, 0.25, 0.5, 0.75, 1.0):
        target = lo + q * (hi - lo)
        picks[q] = min(lams, key=lambda v: (abs(v - target), v))
    rows = []
    for tau in sorted({r["config.tau"] for r in flats}):
        for q, lam in picks.items():
            vals = [r["worst_1_di"] for r in flats if r["config.tau"] == tau and r["config.lambda_g"] == lam]
            if vals:
                rows.append({"tau": tau, "lambda_quartile": q, "lambda_g": lam, "worst_1_di": float(np.mean(vals))})
    return rows


def emit_plotdata(source, kind: str, path) -> int:
    """Write the CSV for ``kind``; returns the number of data rows."""
    rows = plot_rows(kind, source)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=PLOT_COLUMNS[kind])
        writer.writeheader()
        writer.writerows(rows)
    return len(rows)
