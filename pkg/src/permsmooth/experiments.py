"""Simulation sweeps, CSV ingestion, holdout evaluation and reporting.

Every random quantity of replicate ``r`` is drawn from
``derive_rng(master_seed, r, stream)``, so reports do not depend on how
replicates are scheduled over threads.

Report rows have the fixed column order :data:`ROW_COLUMNS`.  For each
method the grid cell with the smallest mean MSE over replicates is the
reported ("best") cell; rows with ``replicate == "all"`` summarise it.
Raw per-cell results are kept in :attr:`MetricsReport.cells`.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import models as sm
from .baselines import (
    SpectralConfig,
    block_mean_tensor,
    exhaustive_lse,
    spectral_kmeans_labels,
    spectral_usvt,
)
from .borda import borda_denoise, holdout_mask, max_permutation_loss
from .models import NoiseSpec, derive_rng
from .tensor import DenseTensor, apply_permutation, mse, unfold, refold

__all__ = [
    "ROW_COLUMNS",
    "CELL_COLUMNS",
    "METHODS",
    "ConfigError",
    "IngestError",
    "ExperimentConfig",
    "MetricsReport",
    "run_simulation",
    "ingest_csv",
    "export_csv",
    "holdout_evaluate",
    "emit_report",
    "emit_cells",
    "load_report",
]

ROW_COLUMNS = ("method", "model", "dims", "replicate", "k", "l", "mse", "mse_stderr",
               "perm_loss", "wall_time", "params")
CELL_COLUMNS = ("method", "replicate", "cell", "k", "l", "mse", "perm_loss")
METHODS = ("borda", "blocklse", "spectral", "oracle")
MAX_DEGREE = 6


class ConfigError(ValueError):
    pass


class IngestError(ValueError):
    pass


def _dims_str(dims) -> str:
    return "x".join(str(int(d)) for d in dims)


@dataclass
class ExperimentConfig:
    """Declarative simulation setup.

    ``k_grid`` entries are ints (same count on every mode) or per-mode
    tuples; with ``per_mode_grid`` the integer entries are expanded into the
    Cartesian product over modes.  ``lse_k_grid`` defaults to ``k_grid``.
    Spectral cells are ``(mode, threshold)`` for explicit ``spectral_thresholds``
    and otherwise ``(mode, rank)`` with ``rank in 0..spectral_max_rank``,
    i.e. the cutoff placed at the rank-th singular value.
    """

    model_id: int | None = 1
    symmetric: bool = True
    expression: str | None = None
    dims: tuple = (50, 50, 50)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    methods: tuple = ("borda",)
    k_grid: tuple = tuple(range(1, 16))
    l_grid: tuple = (0, 1, 2, 3)
    per_mode_grid: bool = False
    lse_k_grid: tuple | None = None
    spectral_modes: tuple = (1,)
    spectral_thresholds: tuple | None = None
    spectral_max_rank: int = 10
    shared_permutation: bool | None = None
    replicates: int = 1
    master_seed: int = 0
    threads: int = 1
    kmeans_restarts: int = 50
    output: str | None = None

    def __post_init__(self):
        if isinstance(self.noise, dict):
            self.noise = NoiseSpec(**self.noise)
        self.dims = tuple(int(d) for d in self.dims)
        self.methods = tuple(self.methods)
        self.k_grid = tuple(tuple(k) if isinstance(k, (list, tuple)) else int(k) for k in self.k_grid)
        if self.lse_k_grid is not None:
            self.lse_k_grid = tuple(tuple(k) if isinstance(k, (list, tuple)) else int(k)
                                    for k in self.lse_k_grid)
        self.l_grid = tuple(int(l) for l in self.l_grid)
        self.spectral_modes = tuple(int(m) for m in self.spectral_modes)
        if self.spectral_thresholds is not None:
            self.spectral_thresholds = tuple(float(t) for t in self.spectral_thresholds)
        self.validate()

    def validate(self) -> None:
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if self.expression is None and self.model_id not in range(1, 6):
            raise ConfigError("model_id must be 1..5 unless an expression is given")
        if not self.dims or min(self.dims) < 1:
            raise ConfigError("dims must be positive")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}")
        for blocks in self.block_grid() + self.block_grid(lse=True):
            if len(blocks) != len(self.dims) or any(not 1 <= k <= d for k, d in zip(blocks, self.dims)):
                raise ConfigError(f"block counts {blocks} outside [1, dims]")
        if not self.l_grid or any(not 0 <= l <= MAX_DEGREE for l in self.l_grid):
            raise ConfigError(f"degrees must lie in [0, {MAX_DEGREE}]")
        if any(not 1 <= m <= len(self.dims) for m in self.spectral_modes):
            raise ConfigError("spectral mode out of range")
        if self.threads < 1:
            raise ConfigError("threads must be positive")

    def generative_function(self) -> sm.GenerativeFunction:
        if self.expression is not None:
            return sm.parse_expression(self.expression, arity=len(self.dims))
        return sm.builtin_model(self.model_id, self.symmetric)

    @property
    def model_label(self) -> str:
        if self.expression is not None:
            return self.expression
        return f"{'sym' if self.symmetric else 'nonsym'}{self.model_id}"

    @property
    def shared(self) -> bool:
        if self.shared_permutation is not None:
            return self.shared_permutation
        return self.symmetric and len(set(self.dims)) == 1

    def block_grid(self, lse: bool = False) -> list[tuple[int, ...]]:
        grid = self.lse_k_grid if (lse and self.lse_k_grid is not None) else self.k_grid
        m = len(self.dims)
        ints = [k for k in grid if isinstance(k, int)]
        out = [tuple(k) for k in grid if not isinstance(k, int)]
        if self.per_mode_grid:
            out += list(itertools.product(ints, repeat=m))
        else:
            out += [(k,) * m for k in ints]
        return out

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["noise"] = dataclasses.asdict(self.noise)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class MetricsReport:
    config: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    cells: list = field(default_factory=list)

    @property
    def summary(self) -> list[dict]:
        return [r for r in self.rows if r["replicate"] == "all"]

    def replicate_rows(self, method: str | None = None) -> list[dict]:
        return [r for r in self.rows if r["replicate"] != "all"
                and (method is None or r["method"] == method)]

    def mean_mse(self, method: str) -> float:
        for r in self.summary:
            if r["method"] == method:
                return r["mse"]
        raise KeyError(method)


# --- per-replicate evaluation ----------------------------------------------------

def _blocks_str(blocks) -> str:
    return _dims_str(blocks)


def _cell(method, replicate, key, k, l, err, ploss, params=""):
    return {"method": method, "replicate": replicate, "cell": key, "k": k, "l": l,
            "mse": float(err), "perm_loss": ploss, "params": params}


def _run_replicate(cfg: ExperimentConfig, theta: DenseTensor, r: int) -> tuple[list, dict]:
    perms = sm.sample_permutations(cfg.dims, derive_rng(cfg.master_seed, r, sm.STREAM_PERMUTATION),
                                   symmetric=cfg.shared)
    truth = apply_permutation(theta, perms)
    Y = sm.add_noise(truth, cfg.noise, derive_rng(cfg.master_seed, r, sm.STREAM_NOISE))
    cells, timing = [], {}
    for method in cfg.methods:
        t0 = time.perf_counter()
        if method in ("borda", "oracle"):
            for l in cfg.l_grid:
                for blocks in cfg.block_grid():
                    if method == "borda":
                        res = borda_denoise(Y, blocks, l, symmetric=cfg.shared)
                    else:
                        res = exhaustive_lse(Y, blocks, l)
                    cells.append(_cell(method, r, f"k={_blocks_str(blocks)};l={l}",
                                       _blocks_str(blocks), l, mse(res.estimate, truth),
                                       max_permutation_loss(perms, res.perms)))
        elif method == "blocklse":
            seed = int(derive_rng(cfg.master_seed, r, sm.STREAM_METHOD).integers(2**31))
            grid = cfg.block_grid(lse=True)
            labels = {}
            for l_mode in range(len(cfg.dims)):
                for k in sorted({b[l_mode] for b in grid}):
                    labels[l_mode, k] = spectral_kmeans_labels(Y, l_mode + 1, k, seed,
                                                               cfg.kmeans_restarts)
            for blocks in grid:
                est = block_mean_tensor(Y, [labels[i, k] for i, k in enumerate(blocks)])
                cells.append(_cell(method, r, f"k={_blocks_str(blocks)};l=0", _blocks_str(blocks),
                                   0, mse(est, truth), None))
        elif method == "spectral":
            for mode in cfg.spectral_modes:
                U, s, Vt = np.linalg.svd(unfold(Y, mode), full_matrices=False)
                if cfg.spectral_thresholds is not None:
                    choices = [("threshold", t, s >= t) for t in cfg.spectral_thresholds]
                else:
                    ranks = range(0, min(cfg.spectral_max_rank, s.size) + 1)
                    choices = [("rank", q, np.arange(s.size) < q) for q in ranks]
                for kind, value, keep in choices:
                    approx = refold((U[:, keep] * s[keep]) @ Vt[keep], mode, cfg.dims)
                    cutoff = float(s[keep][-1]) if keep.any() else float(s[0]) * (1 + 1e-12)
                    key = f"mode={mode};{kind}={value:g}"
                    cells.append(_cell(method, r, key, "", "", mse(DenseTensor(approx), truth),
                                       None, f"{key};cutoff={cutoff!r}"))
        timing[method] = time.perf_counter() - t0
    return cells, timing


def _stderr(values: Sequence[float]) -> float:
    if len(values) < 2:
        return float("nan")
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def _mean_or_none(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def run_simulation(cfg: ExperimentConfig) -> MetricsReport:
    """Run every method over its grid on ``cfg.replicates`` synthetic datasets."""
    cfg.validate()
    theta = sm.evaluate_signal(cfg.generative_function(), cfg.dims)
    if cfg.threads == 1:
        results = [_run_replicate(cfg, theta, r) for r in range(cfg.replicates)]
    else:
        with ThreadPoolExecutor(cfg.threads) as pool:
            results = list(pool.map(lambda r: _run_replicate(cfg, theta, r), range(cfg.replicates)))
    cells = sorted((c for cs, _ in results for c in cs),
                   key=lambda c: (METHODS.index(c["method"]), c["replicate"]))
    dims = _dims_str(cfg.dims)
    rows = []
    for method in cfg.methods:
        mine = [c for c in cells if c["method"] == method]
        keys = list(dict.fromkeys(c["cell"] for c in mine))
        by_key = {k: [c for c in mine if c["cell"] == k] for k in keys}
        best = min(keys, key=lambda k: (np.mean([c["mse"] for c in by_key[k]]), keys.index(k)))
        chosen = by_key[best]
        for c in chosen:
            rows.append({"method": method, "model": cfg.model_label, "dims": dims,
                         "replicate": c["replicate"], "k": c["k"], "l": c["l"], "mse": c["mse"],
                         "mse_stderr": None, "perm_loss": c["perm_loss"],
                         "wall_time": results[c["replicate"]][1][method], "params": c["params"] or best})
        errs = [c["mse"] for c in chosen]
        se = _stderr(errs)
        rows.append({"method": method, "model": cfg.model_label, "dims": dims, "replicate": "all",
                     "k": chosen[0]["k"], "l": chosen[0]["l"], "mse": float(np.mean(errs)),
                     "mse_stderr": None if math.isnan(se) else se,
                     "perm_loss": _mean_or_none([c["perm_loss"] for c in chosen]),
                     "wall_time": float(np.mean([results[c["replicate"]][1][method] for c in chosen])),
                     "params": best})
    return MetricsReport(cfg.to_dict(), rows, cells)


# --- real data --------------------------------------------------------------------

def ingest_csv(path: str | Path, mode_columns: Sequence[str], value_column: str,
               dims: Sequence[int], transform: str = "none", missing: str = "mask") -> DenseTensor:
    """Build a tensor from ``(index..., value)`` records.

    Indices are 1-based.  Duplicate index tuples are summed before
    ``transform`` (``none`` or ``log1p``) is applied.  Cells without records
    are unobserved (``missing="mask"``) or zero (``missing="zero"``).
    """
    if transform not in ("none", "log1p"):
        raise ValueError(f"unknown transform {transform!r}")
    if missing not in ("mask", "zero"):
        raise ValueError(f"unknown missing policy {missing!r}")
    dims = tuple(int(d) for d in dims)
    if len(mode_columns) != len(dims):
        raise ValueError("one mode column per dimension is required")
    total = np.zeros(dims)
    seen = np.zeros(dims, dtype=bool)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is not None:
            header = [h.strip() for h in header]
            try:
                cols = [header.index(c) for c in mode_columns]
                vcol = header.index(value_column)
            except ValueError as exc:
                raise IngestError(f"{path}: line 1: missing column ({exc})") from None
            for row in reader:
                line = reader.line_num
                if not row or all(not c.strip() for c in row):
                    continue
                try:
                    idx = tuple(int(row[c]) - 1 for c in cols)
                    value = float(row[vcol])
                except (ValueError, IndexError):
                    raise IngestError(f"{path}: line {line}: malformed row {row!r}") from None
                if any(not 0 <= i < d for i, d in zip(idx, dims)):
                    raise IngestError(f"{path}: line {line}: index {tuple(i + 1 for i in idx)} outside dims {dims}")
                if not math.isfinite(value):
                    raise IngestError(f"{path}: line {line}: non-finite value")
                total[idx] += value
                seen[idx] = True
    if transform == "log1p":
        total = np.where(seen, np.log1p(total), 0.0)
    if missing == "zero":
        return DenseTensor(total)
    return DenseTensor(total, seen)


def export_csv(T: DenseTensor, path: str | Path, mode_columns: Sequence[str] | None = None,
               value_column: str = "value") -> None:
    """Write observed entries as ``(index..., value)`` rows (1-based indices)."""
    mode_columns = list(mode_columns or [f"i{l + 1}" for l in range(T.order)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(mode_columns + [value_column])
        for idx in zip(*np.nonzero(T.observed)):
            w.writerow([int(i) + 1 for i in idx] + [repr(float(T.values[idx]))])


# --- holdout --------------------------------------------------------------------------

def _fit_predict(train: DenseTensor, method: str, params: dict) -> DenseTensor:
    if method == "borda":
        return borda_denoise(train, params["blocks"], int(params.get("degree", 2)),
                             params.get("symmetric")).estimate
    if method == "blocklse":
        blocks = params["blocks"]
        if isinstance(blocks, int):
            blocks = (blocks,) * train.order
        seed = int(params.get("seed", 0))
        labels = [spectral_kmeans_labels(train, l + 1, k, seed, int(params.get("n_init", 50)))
                  for l, k in enumerate(blocks)]
        return block_mean_tensor(train, labels)
    if method == "spectral":
        return spectral_usvt(train, SpectralConfig(int(params.get("mode", 1)), params.get("threshold")))
    raise ValueError(f"unknown method {method!r}")


def holdout_evaluate(Y: DenseTensor, method: str, params: dict, holdout_fraction: float = 0.2,
                     runs: int = 5, rng: np.random.Generator | int = 0,
                     threads: int = 1) -> MetricsReport:
    """Random-holdout prediction error of one method at fixed parameters.

    An integer ``rng`` is a master seed: run ``i`` uses
    ``derive_rng(seed, STREAM_HOLDOUT, i)``, so two methods evaluated with the
    same seed see identical holdout masks.  ``threads`` only applies to an
    integer seed (a shared generator is consumed sequentially).
    """
    if not 0 < holdout_fraction < 1:
        raise ValueError("holdout fraction must be strictly between 0 and 1")
    if runs < 1:
        raise ValueError("runs must be positive")
    label = json.dumps({k: (list(v) if isinstance(v, tuple) else v) for k, v in params.items()},
                       sort_keys=True)
    k = params.get("blocks", "")
    k = _dims_str(k) if isinstance(k, (tuple, list)) else k
    seeded = isinstance(rng, (int, np.integer))
    masks = None if seeded else [holdout_mask(Y, holdout_fraction, rng) for _ in range(runs)]

    def one(run):
        held = (holdout_mask(Y, holdout_fraction, derive_rng(int(rng), sm.STREAM_HOLDOUT, run))
                if seeded else masks[run])
        train = DenseTensor(Y.values, Y.observed & ~held)
        t0 = time.perf_counter()
        pred = _fit_predict(train, method, params)
        diff = (pred.values - Y.values)[held]
        return {"method": method, "model": "data", "dims": _dims_str(Y.dims), "replicate": run,
                "k": k, "l": params.get("degree", 0 if method == "blocklse" else ""),
                "mse": float(np.dot(diff, diff) / diff.size), "mse_stderr": None,
                "perm_loss": None, "wall_time": time.perf_counter() - t0, "params": label}

    if threads > 1 and seeded:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(one, range(runs)))
    else:
        rows = [one(run) for run in range(runs)]
    errs = [r["mse"] for r in rows]
    se = _stderr(errs)
    rows.append({**rows[0], "replicate": "all", "mse": float(np.mean(errs)),
                 "mse_stderr": None if math.isnan(se) else se,
                 "wall_time": float(np.mean([r["wall_time"] for r in rows]))})
    config = {"method": method, "params": json.loads(label), "holdout_fraction": holdout_fraction,
              "runs": runs, "seed": int(rng) if isinstance(rng, (int, np.integer)) else None}
    return MetricsReport(config, rows, [])


# --- reports --------------------------------------------------------------------------

def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_report(report: MetricsReport, path: str | Path, fmt: str = "csv") -> None:
    """Write rows as CSV (columns :data:`ROW_COLUMNS`) or everything as JSON."""
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(ROW_COLUMNS)
            for row in report.rows:
                w.writerow([_csv_value(row.get(c)) for c in ROW_COLUMNS])
    elif fmt == "json":
        payload = {"config": report.config, "seed": report.config.get("master_seed",
                                                                        report.config.get("seed")),
                   "columns": list(ROW_COLUMNS), "rows": report.rows, "cells": report.cells,
                   "summary": report.summary}
        Path(path).write_text(json.dumps(payload, indent=1, default=_json_default))
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def emit_cells(report: MetricsReport, path: str | Path) -> None:
    """Raw per-cell results as CSV, for plotting MSE against k or l."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CELL_COLUMNS)
        for c in report.cells:
            w.writerow([_csv_value(c.get(col)) for col in CELL_COLUMNS])


def load_report(path: str | Path) -> MetricsReport:
    data = json.loads(Path(path).read_text())
    return MetricsReport(data["config"], data["rows"], data["cells"])


def _json_default(o: Any):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o).__name__)
