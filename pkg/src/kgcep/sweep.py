"""Hyperparameter sweeps: train a model grid, score each model with LP and CEP, correlate."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cep import ClusterConfig, evaluate_cep
from .datagen import ShapeSpec, generate, save_generated
from .kg import KGError, KnowledgeGraph, derive_labels, load_kg
from .lp import LPConfig, evaluate_lp
from .model import TrainConfig, save_model
from .stats import correlate
from .train import TrainingDiverged, train

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

GRID_AXES = ("k", "gamma", "model_kind", "typed", "learning_rate", "replicas", "seed")
LP_METRICS = ("MRR", "MRank")
CEP_METRICS = ("aMean", "wMean")


@dataclass(frozen=True)
class SweepSpec:
    dataset: str = ""
    dataset_name: str = "dataset"
    generate: dict | None = None
    grid: dict = field(default_factory=lambda: {
        "k": [16, 32, 64], "gamma": [1.0, 2.0, 4.0], "model_kind": ["transE"],
        "typed": [True], "learning_rate": [0.01], "replicas": [1], "seed": [0, 1, 2]})
    max_epochs: int = 200
    eval_every: int = 25
    targets: tuple = ()
    cep: ClusterConfig = ClusterConfig()
    lp: LPConfig = LPConfig()
    output: str = "sweep-out"

    def __post_init__(self):
        unknown = set(self.grid) - set(GRID_AXES)
        if unknown:
            raise ValueError(f"unknown grid axes {sorted(unknown)}")
        grid = {a: list(self.grid.get(a, [getattr(TrainConfig(), a)])) for a in GRID_AXES}
        if any(len(v) == 0 for v in grid.values()):
            raise ValueError("every grid axis needs at least one value")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "targets", tuple(self.targets))
        if not self.dataset and not self.generate:
            raise ValueError("sweep needs a dataset path or a [dataset.generate] section")

    def configs(self) -> list[TrainConfig]:
        """Train configs in grid order (first axis slowest)."""
        out = []
        for values in itertools.product(*(self.grid[a] for a in GRID_AXES)):
            kw = dict(zip(GRID_AXES, values))
            out.append(TrainConfig(k=int(kw["k"]), gamma=float(kw["gamma"]),
                                   model_kind=str(kw["model_kind"]), typed=bool(kw["typed"]),
                                   learning_rate=float(kw["learning_rate"]),
                                   replicas=int(kw["replicas"]), seed=int(kw["seed"]),
                                   max_epochs=self.max_epochs, eval_every=self.eval_every))
        return out

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset, "dataset_name": self.dataset_name, "generate": self.generate,
            "grid": self.grid, "max_epochs": self.max_epochs, "eval_every": self.eval_every,
            "targets": list(self.targets),
            "cep": {"multiplier": self.cep.multiplier, "max_iterations": self.cep.max_iterations,
                    "init": self.cep.init, "n_init": self.cep.n_init},
            "lp": {"candidate_scope": self.lp.candidate_scope, "filter_mode": self.lp.filter_mode,
                   "sides": self.lp.sides, "hits": list(self.lp.hits_levels)},
            "output": self.output,
        }

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("output")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def load_sweep_spec(path: str, output: str | None = None) -> SweepSpec:
    """Read a TOML sweep file; relative dataset/output paths resolve against its directory."""
    with open(path, "rb") as f:
        raw = tomllib.load(f)
    base = os.path.dirname(os.path.abspath(path))
    ds = raw.get("dataset", {})
    dataset = ds.get("path", "")
    if dataset and not os.path.isabs(dataset):
        dataset = os.path.join(base, dataset)
    grid = dict(raw.get("grid", {}))
    training = raw.get("training", {})
    cep_raw = raw.get("cep", {})
    lp_raw = raw.get("lp", {})
    out = output or raw.get("output", {}).get("dir", "sweep-out")
    if not os.path.isabs(out) and output is None:
        out = os.path.join(base, out)
    return SweepSpec(
        dataset=dataset,
        dataset_name=ds.get("name", os.path.basename(dataset.rstrip("/")) or "dataset"),
        generate=ds.get("generate"),
        grid=grid,
        max_epochs=int(training.get("max_epochs", 200)),
        eval_every=int(training.get("eval_every", 25)),
        targets=tuple(cep_raw.get("targets", ())),
        cep=ClusterConfig(multiplier=int(cep_raw.get("multiplier", 4)),
                          max_iterations=int(cep_raw.get("max_iterations", 100)),
                          init=cep_raw.get("init", "kmeans++"),
                          n_init=int(cep_raw.get("n_init", 10))),
        lp=LPConfig(candidate_scope=lp_raw.get("candidate_scope"),
                    filter_mode=lp_raw.get("filter_mode", "raw"),
                    sides=lp_raw.get("sides", "both"),
                    hits_levels=tuple(lp_raw.get("hits", (10,)))),
        output=out,
    )


@dataclass
class SweepRow:
    model_id: str
    config: TrainConfig
    status: str = "ok"
    reason: str = ""
    lp: dict | None = None
    cep: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"model_id": self.model_id, "config": self.config.to_dict(), "status": self.status,
                "reason": self.reason, "lp": self.lp, "cep": self.cep}

    @classmethod
    def from_dict(cls, d: dict) -> "SweepRow":
        return cls(d["model_id"], TrainConfig(**d["config"]), d["status"], d["reason"], d["lp"], d["cep"])


@dataclass
class SweepTable:
    rows: list
    dataset_name: str = "dataset"
    targets: tuple = ()
    hits_levels: tuple = (10,)
    provenance: dict = field(default_factory=dict)

    def ok_rows(self) -> list:
        return [r for r in self.rows if r.status == "ok"]

    def series(self, lp_metric: str, cep_metric: str, target: str) -> tuple[list, list]:
        """Index-aligned LP and CEP series over successful rows."""
        lp_key = {"MRR": "mrr", "MRank": "mrank"}[lp_metric]
        cep_key = {"aMean": "aMean", "wMean": "wMean"}[cep_metric]
        xs, ys = [], []
        for r in self.ok_rows():
            xs.append(r.lp[lp_key])
            ys.append(r.cep[target][cep_key])
        return xs, ys


def model_id(config: TrainConfig, dataset_digest: str) -> str:
    payload = json.dumps({"config": config.to_dict(), "dataset": dataset_digest}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _run_row(kg: KnowledgeGraph, config: TrainConfig, mid: str, targets, lp_config: LPConfig,
             cep_config: ClusterConfig, models_dir: str | None) -> SweepRow:
    row = SweepRow(mid, config)
    try:
        model, tlog = train(kg, config)
        if models_dir:
            save_model(model, os.path.join(models_dir, f"{mid}.bin"), config, kg.dictionary.digest())
        row.lp = evaluate_lp(model, kg, "TST", lp_config).to_dict()
        names = kg.dictionary.entity_names
        for t in targets:
            labels = derive_labels(kg, t)
            rep = evaluate_cep(model, labels, replace(cep_config, seed=config.seed),
                               label_names=[names[e] for e in labels.label_entities], relation_name=t)
            row.cep[t] = rep.to_dict()
    except (TrainingDiverged, ValueError, ArithmeticError) as exc:
        row.status, row.reason = "failed", f"{type(exc).__name__}: {exc}"
        row.lp, row.cep = None, {}
    return row


def _row_worker(args):
    dataset, config, mid, targets, lp_config, cep_config, models_dir = args
    return _run_row(_WORKER_KG.get(dataset) or _load_worker_kg(dataset), config, mid, targets,
                    lp_config, cep_config, models_dir)


_WORKER_KG: dict = {}


def _load_worker_kg(dataset):
    _WORKER_KG[dataset] = load_kg(dataset)
    return _WORKER_KG[dataset]


def prepare_dataset(spec: SweepSpec) -> tuple[str, KnowledgeGraph]:
    """Load the sweep dataset, generating it under the output directory if requested."""
    path = spec.dataset
    if spec.generate:
        gen_kw = dict(spec.generate)
        shape = gen_kw.pop("shape", "ontology-like")
        shape = {"ontology": "ontology-like", "ehr": "ehr-like"}.get(shape, shape)
        shape_spec = ShapeSpec.ehr(**gen_kw) if shape == "ehr-like" else ShapeSpec(shape=shape, **gen_kw)
        path = os.path.join(spec.output, "dataset")
        if not os.path.exists(os.path.join(path, "manifest.json")):
            save_generated(generate(shape_spec), path)
    try:
        kg = load_kg(path)
    except (OSError, KGError) as exc:
        raise KGError(f"cannot load dataset {path!r}: {exc}") from exc
    return path, kg


def run_sweep(spec: SweepSpec, threads: int = 1, progress=None) -> SweepTable:
    """Train and evaluate every grid point; rows already on disk are reused.

    Rows come back in grid order whatever the worker count. A row whose
    training or evaluation fails is recorded with its reason.
    """
    try:
        os.makedirs(os.path.join(spec.output, "models"), exist_ok=True)
        os.makedirs(os.path.join(spec.output, "reports"), exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {spec.output!r}: {exc}") from exc
    path, kg = prepare_dataset(spec)
    digest = kg.digest()
    targets = spec.targets
    known = {r.name for r in kg.dictionary.relations}
    missing = [t for t in targets if t not in known]
    if missing:
        raise KGError(f"target relations not in dataset: {missing}")
    configs = spec.configs()
    ids = [model_id(c, digest) for c in configs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate grid points")
    reports_dir = os.path.join(spec.output, "reports")
    models_dir = os.path.join(spec.output, "models")
    rows: list = [None] * len(configs)
    todo = []
    for i, mid in enumerate(ids):
        p = os.path.join(reports_dir, f"{mid}.json")
        if os.path.exists(p):
            with open(p, encoding="utf-8") as f:
                rows[i] = SweepRow.from_dict(json.load(f))
        else:
            todo.append(i)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    log.info("sweep: %d grid points, %d reused, %d to run", len(configs), len(configs) - len(todo), len(todo))

    def finish(i, row):
        rows[i] = row
        with open(os.path.join(reports_dir, f"{row.model_id}.json"), "w", encoding="utf-8") as f:
            json.dump(row.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        if progress:
            progress(i, row)

    if threads <= 1 or len(todo) <= 1:
        for i in todo:
            finish(i, _run_row(kg, configs[i], ids[i], targets, spec.lp, spec.cep, models_dir))
    else:
        jobs = [(path, configs[i], ids[i], targets, spec.lp, spec.cep, models_dir) for i in todo]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for i, row in zip(todo, pool.map(_row_worker, jobs)):
                finish(i, row)
    provenance = {"dataset_digest": digest, "spec_digest": spec.digest(), "dataset_path": path,
                  "started": started, "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    return SweepTable(rows, spec.dataset_name, targets, spec.lp.hits_levels, provenance)


# --- reporting --------------------------------------------------------------

CONFIG_COLUMNS = ("k", "gamma", "model_kind", "typed", "learning_rate", "replicas", "seed", "max_epochs")


def sweep_columns(targets, hits_levels) -> list[str]:
    cols = ["model_id", *CONFIG_COLUMNS, "status", "mrank", "mrr"]
    cols += [f"hits@{n}" for n in hits_levels]
    for t in targets:
        cols += [f"aMean:{t}", f"wMean:{t}"]
    cols.append("reason")
    return cols


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def sweep_csv(table: SweepTable) -> str:
    cols = sweep_columns(table.targets, table.hits_levels)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(cols)
    for r in table.rows:
        cfg = r.config.to_dict()
        rec = {c: cfg[c] for c in CONFIG_COLUMNS}
        rec.update(model_id=r.model_id, status=r.status, reason=r.reason)
        if r.status == "ok":
            rec.update(mrank=r.lp["mrank"], mrr=r.lp["mrr"])
            for n in table.hits_levels:
                rec[f"hits@{n}"] = r.lp["hits"][str(n)]
            for t in table.targets:
                rec[f"aMean:{t}"] = r.cep[t]["aMean"]
                rec[f"wMean:{t}"] = r.cep[t]["wMean"]
        w.writerow([_fmt(rec.get(c)) for c in cols])
    return out.getvalue()


def load_sweep_csv(text: str, dataset_name: str = "dataset") -> SweepTable:
    """Rebuild a table (metrics only) from :func:`sweep_csv` output."""
    reader = csv.DictReader(io.StringIO(text))
    fields = reader.fieldnames or []
    targets = tuple(c.split(":", 1)[1] for c in fields if c.startswith("aMean:"))
    hits = tuple(int(c.split("@")[1]) for c in fields if c.startswith("hits@"))
    rows = []
    for rec in reader:
        cfg = TrainConfig(k=int(rec["k"]), gamma=float(rec["gamma"]), model_kind=rec["model_kind"],
                          typed=rec["typed"] == "true", learning_rate=float(rec["learning_rate"]),
                          replicas=int(rec["replicas"]), seed=int(rec["seed"]),
                          max_epochs=int(rec["max_epochs"]))
        row = SweepRow(rec["model_id"], cfg, rec["status"], rec.get("reason", ""))
        if row.status == "ok":
            row.lp = {"mrank": float(rec["mrank"]), "mrr": float(rec["mrr"]),
                      "hits": {str(n): float(rec[f"hits@{n}"]) for n in hits}}
            row.cep = {t: {"aMean": float(rec[f"aMean:{t}"]), "wMean": float(rec[f"wMean:{t}"])}
                       for t in targets}
        rows.append(row)
    return SweepTable(rows, dataset_name, targets, hits)


def correlate_reports(table: SweepTable, lp_metric: str, cep_metric: str, target: str | None = None):
    """``(pearson, spearman)`` between an LP metric and a CEP metric; ``None`` marks undefined."""
    if lp_metric not in LP_METRICS or cep_metric not in CEP_METRICS:
        raise ValueError(f"unknown metric pair {lp_metric}/{cep_metric}")
    target = target or table.targets[0]
    xs, ys = table.series(lp_metric, cep_metric, target)
    if len(xs) < 2:
        raise ValueError("need at least two successful rows to correlate")
    return correlate(xs, ys)


CORRELATION_COLUMNS = ("dataset", "target_label", "lp_metric",
                       "pearson_aMean", "pearson_wMean", "spearman_aMean", "spearman_wMean")


def correlation_rows(table: SweepTable) -> list[dict]:
    rows = []
    for t in table.targets:
        for lp_metric in LP_METRICS:
            pa, sa = correlate_reports(table, lp_metric, "aMean", t)
            pw, sw = correlate_reports(table, lp_metric, "wMean", t)
            rows.append({"dataset": table.dataset_name, "target_label": t, "lp_metric": lp_metric,
                         "pearson_aMean": pa, "pearson_wMean": pw,
                         "spearman_aMean": sa, "spearman_wMean": sw})
    return rows


def correlation_csv(table: SweepTable) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CORRELATION_COLUMNS)
    for rec in correlation_rows(table):
        w.writerow([("undefined" if rec[c] is None else _fmt(rec[c])) for c in CORRELATION_COLUMNS])
    return out.getvalue()


def emit_reports(table: SweepTable, out_dir: str) -> dict:
    """Write ``sweep.csv``, ``correlations.csv`` and ``reports/sweep.json``; return their paths."""
    if not table.rows:
        raise ValueError("empty sweep table")
    os.makedirs(os.path.join(out_dir, "reports"), exist_ok=True)
    paths = {"sweep": os.path.join(out_dir, "sweep.csv"),
             "correlations": os.path.join(out_dir, "correlations.csv"),
             "bundle": os.path.join(out_dir, "reports", "sweep.json")}
    with open(paths["sweep"], "w", encoding="utf-8", newline="") as f:
        f.write(sweep_csv(table))
    corr = None
    if len(table.ok_rows()) >= 2 and table.targets:
        corr = correlation_rows(table)
        with open(paths["correlations"], "w", encoding="utf-8", newline="") as f:
            f.write(correlation_csv(table))
    else:
        paths.pop("correlations")
    bundle = {"dataset": table.dataset_name, "targets": list(table.targets),
              "provenance": table.provenance, "rows": [r.to_dict() for r in table.rows],
              "correlations": corr}
    with open(paths["bundle"], "w", encoding="utf-8") as f:
        json.dump(bundle, f, indent=2, sort_keys=True)
        f.write("\n")
    return paths


def aggregate_correlations(tables) -> str:
    """One correlation CSV covering several sweeps."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CORRELATION_COLUMNS)
    for table in tables:
        for rec in correlation_rows(table):
            w.writerow([("undefined" if rec[c] is None else _fmt(rec[c])) for c in CORRELATION_COLUMNS])
    return out.getvalue()
