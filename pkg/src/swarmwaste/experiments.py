"""Parameter sweeps, baseline comparisons and standardized regression."""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .engine import RunConfig, run_day
from .scenario import Scenario

log = logging.getLogger(__name__)

SWEEP_PARAMS = ("n_robots", "evaporation_rate", "exploitation_rate", "carriable_waste", "n_deposits")
DEFAULT_VALUES = {
    "n_robots": (20, 35, 50),
    "evaporation_rate": (0.05, 0.15, 0.30),
    "exploitation_rate": (0.6, 0.75, 0.9),
    "carriable_waste": (6.0, 12.0, 18.0),
    "n_deposits": (2, 3, 5),
}
DEFAULT_PREDICTORS = ("n_robots", "carriable_waste", "n_deposits")
RESPONSES = ("aut_pct", "ftb_pct")
CSV_COLUMNS = ("cell", "replication", *SWEEP_PARAMS, "seed", "aut_pct", "ftb_pct", "error")


def derive_seed(base_seed: int, cell: int, replication: int) -> int:
    """Stable 63-bit run seed, independent of execution order."""
    digest = hashlib.sha256(f"{base_seed}:{cell}:{replication}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass
class SweepSpec:
    scenario: Scenario
    values: Mapping[str, Sequence] = field(default_factory=lambda: dict(DEFAULT_VALUES))
    replications: int = 10
    base_seed: int = 0
    base_config: RunConfig = field(default_factory=RunConfig)
    parallelism: int = 1

    def __post_init__(self):
        values = {k: tuple(self.values.get(k, (getattr(self.base_config, k),)))
                  for k in SWEEP_PARAMS}
        unknown = set(self.values) - set(SWEEP_PARAMS)
        if unknown:
            raise ValueError(f"unknown sweep parameter(s): {', '.join(sorted(unknown))}")
        for k, v in values.items():
            if not v:
                raise ValueError(f"empty value list for {k}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        self.values = values

    def cells(self) -> list[dict[str, Any]]:
        return [dict(zip(SWEEP_PARAMS, combo))
                for combo in itertools.product(*(self.values[k] for k in SWEEP_PARAMS))]


@dataclass(frozen=True)
class SweepRow:
    cell: int
    replication: int
    params: Mapping[str, Any]
    seed: int
    aut_pct: float
    ftb_pct: float
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error

    def as_dict(self) -> dict[str, Any]:
        return {"cell": self.cell, "replication": self.replication, **self.params,
                "seed": self.seed, "aut_pct": self.aut_pct, "ftb_pct": self.ftb_pct,
                "error": self.error}


def _run_one(job):
    cell, rep, params, seed, config, scenario = job
    try:
        m = run_day(replace(config, seed=seed, **params), scenario)
        return SweepRow(cell, rep, params, seed, m.aut_pct, m.ftb_pct)
    except Exception as exc:  # recorded per row, the sweep goes on
        return SweepRow(cell, rep, params, seed, math.nan, math.nan, f"{type(exc).__name__}: {exc}")


@dataclass
class SweepResult:
    rows: list[SweepRow]

    @property
    def failures(self) -> list[SweepRow]:
        return [r for r in self.rows if not r.ok]

    def cell_summary(self) -> list[dict[str, Any]]:
        """Mean, sample standard deviation, min and max per grid cell."""
        out = []
        for cell, group in itertools.groupby(sorted(self.rows, key=lambda r: (r.cell, r.replication)),
                                             key=lambda r: r.cell):
            group = list(group)
            good = [r for r in group if r.ok]
            entry = {"cell": cell, **group[0].params, "runs": len(group), "failures": len(group) - len(good)}
            for key in RESPONSES:
                vals = [getattr(r, key) for r in good]
                entry[f"{key}_mean"] = statistics.fmean(vals) if vals else math.nan
                entry[f"{key}_sd"] = statistics.stdev(vals) if len(vals) > 1 else 0.0
                entry[f"{key}_min"] = min(vals) if vals else math.nan
                entry[f"{key}_max"] = max(vals) if vals else math.nan
            out.append(entry)
        return out

    def to_csv(self, header: dict | None = None) -> str:
        buf = io.StringIO()
        if header is not None:
            buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            d = r.as_dict()
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in d.items()})
        return buf.getvalue()

    def summary_json(self, header: dict | None = None) -> str:
        doc = {"cells": self.cell_summary(), "rows": len(self.rows), "failures": len(self.failures),
               "failed_runs": [r.as_dict() for r in self.failures]}
        if header is not None:
            doc = {"provenance": header, **doc}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    def heatmap_csv(self) -> str:
        """Per-cell means laid out for exploitation x evaporation panels."""
        buf = io.StringIO()
        cols = ("n_robots", "carriable_waste", "n_deposits", "exploitation_rate", "evaporation_rate",
                "aut_pct_mean", "ftb_pct_mean")
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for c in sorted(self.cell_summary(), key=lambda c: tuple(c[k] for k in cols[:5])):
            w.writerow(c)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SweepResult":
        lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
        rows = []
        for d in csv.DictReader(lines):
            params = {"n_robots": int(d["n_robots"]), "evaporation_rate": float(d["evaporation_rate"]),
                      "exploitation_rate": float(d["exploitation_rate"]),
                      "carriable_waste": float(d["carriable_waste"]), "n_deposits": int(d["n_deposits"])}
            rows.append(SweepRow(int(d["cell"]), int(d["replication"]), params, int(d["seed"]),
                                 float(d["aut_pct"]), float(d["ftb_pct"]), d.get("error") or ""))
        return cls(rows)


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Run every (cell, replication) of the grid.

    Each run's seed comes from :func:`derive_seed`, so the result does not
    depend on ``parallelism`` or on completion order.
    """
    jobs = []
    for i, params in enumerate(spec.cells()):
        for rep in range(spec.replications):
            jobs.append((i, rep, params, derive_seed(spec.base_seed, i, rep), spec.base_config,
                         spec.scenario))
    if spec.parallelism == 1:
        rows = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=spec.parallelism) as pool:
            rows = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * spec.parallelism))))
    rows.sort(key=lambda r: (r.cell, r.replication))
    result = SweepResult(rows)
    if result.failures:
        log.warning("%d of %d runs failed", len(result.failures), len(rows))
    return result


# -- regression ------------------------------------------------------------

class RegressionError(ValueError):
    pass


@dataclass(frozen=True)
class RegressionReport:
    response: str
    predictors: tuple[str, ...]
    betas: Mapping[str, float]
    r_squared: float
    n: int
    excluded: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {"response": self.response, "predictors": list(self.predictors),
                "betas": dict(self.betas), "r_squared": self.r_squared, "n": self.n,
                "excluded": self.excluded}


def _row_value(row, key):
    if isinstance(row, SweepRow):
        return row.params[key] if key in row.params else getattr(row, key)
    return row[key]


def standardized_regression(rows: Iterable, predictors: Sequence[str] = DEFAULT_PREDICTORS,
                            response: str = "aut_pct") -> RegressionReport:
    """Ordinary least squares on z-scored predictors and response.

    Rows whose response or predictors are not finite (failed runs) are
    dropped and counted in ``excluded``.
    """
    predictors = tuple(predictors)
    data, excluded = [], 0
    for row in rows:
        vals = [float(_row_value(row, k)) for k in (*predictors, response)]
        if all(math.isfinite(v) for v in vals):
            data.append(vals)
        else:
            excluded += 1
    if excluded:
        log.info("regression on %s: excluded %d non-finite rows", response, excluded)
    n, p = len(data), len(predictors)
    if n < p + 2:
        raise RegressionError(f"need at least {p + 2} rows for {p} predictors (got {n})")
    a = np.asarray(data)
    sd = a.std(axis=0, ddof=1)
    for k, s in zip((*predictors, response), sd):
        if s == 0:
            raise RegressionError(f"{k} has zero variance")
    z = (a - a.mean(axis=0)) / sd
    x, y = z[:, :p], z[:, p]
    if np.linalg.matrix_rank(x) < p:
        raise RegressionError("predictors are rank deficient")
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ beta
    r2 = 1.0 - float(resid @ resid) / float(y @ y)
    return RegressionReport(response, predictors, dict(zip(predictors, map(float, beta))), r2, n,
                            excluded)


# -- baselines -------------------------------------------------------------

@dataclass
class BaselineReport:
    seeds: list[int]
    runs: dict[str, list[dict[str, float]]]

    def stats(self) -> dict[str, dict[str, float]]:
        out = {}
        for mode, ms in self.runs.items():
            entry = {}
            for key in RESPONSES:
                vals = [m[key] for m in ms]
                entry[f"{key}_mean"] = statistics.fmean(vals)
                entry[f"{key}_sd"] = statistics.stdev(vals) if len(vals) > 1 else 0.0
            out[mode] = entry
        return out

    def wins(self, better: str, worse: str, key: str) -> int:
        return sum(a[key] < b[key] for a, b in zip(self.runs[better], self.runs[worse]))

    def sign_test(self, a: str, b: str, key: str) -> float:
        """Two-sided sign-test p-value for paired runs (ties dropped)."""
        lo = self.wins(a, b, key)
        hi = self.wins(b, a, key)
        if lo + hi == 0:
            return 1.0
        return float(stats.binomtest(lo, lo + hi, 0.5).pvalue)

    def to_dict(self) -> dict[str, Any]:
        modes = list(self.runs)
        pairs = {}
        for a, b in itertools.combinations(modes, 2):
            for key in RESPONSES:
                pairs[f"{a}_vs_{b}_{key}"] = {
                    f"{a}_wins": self.wins(a, b, key), f"{b}_wins": self.wins(b, a, key),
                    "sign_test_p": self.sign_test(a, b, key)}
        return {"seeds": self.seeds, "stats": self.stats(), "pairwise": pairs, "runs": self.runs}


def _run_mode(job):
    config, scenario = job
    m = run_day(config, scenario)
    return {"aut_pct": m.aut_pct, "ftb_pct": m.ftb_pct}


def compare_baselines(scenario: Scenario, mpf_config: RunConfig, cpf_config: RunConfig,
                      truck_config: RunConfig, replications: int = 10, base_seed: int = 0,
                      parallelism: int = 1) -> BaselineReport:
    """Run the three collection modes on the same paired seeds."""
    if cpf_config.n_deposits != 1:
        raise ValueError("CPF configuration must use a single deposit")
    if truck_config.mode != "TRUCK":
        raise ValueError("truck configuration must use TRUCK mode")
    seeds = [derive_seed(base_seed, 0, i) for i in range(replications)]
    configs = {"MPF": mpf_config, "CPF": cpf_config, "TRUCK": truck_config}
    jobs = [(replace(cfg, seed=s), scenario) for cfg in configs.values() for s in seeds]
    if parallelism == 1:
        results = [_run_mode(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_run_mode, jobs))
    runs = {mode: results[i * replications:(i + 1) * replications] for i, mode in enumerate(configs)}
    return BaselineReport(seeds, runs)
