"""Monte-Carlo sweeps over random channels comparing allocators and baselines."""
from __future__ import annotations

import copy
import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .baseline import throughput_fairness, time_fairness
from .dcp import solve_dcp
from .errors import EligibilityError, InputError, LcwraError
from .fitcurve import perturb_parameters
from .model import Allocation, Scenario, evaluate_allocation
from .ranking import solve_ranking
from .serialization import builtin_path, draw_channel, fmt, read_json, scenario_from_dict

log = logging.getLogger(__name__)

SCHEMES = ("dcp", "ranking", "time_fair", "throughput_fair", "dcp_imperfect")
PARAMETERS = ("e_max", "t_max", "k_users")
_BUDGET_KEYS = {"e_max": "e_max_j", "t_max": "t_max_s", "p_max": "p_max_w"}

__all__ = ["SweepConfig", "CellResult", "MonteCarloSummary", "draw_channel", "run_sweep",
           "build_scenario", "load_sweep", "reproduce_fixed", "reproduce_vehicular", "SCHEMES"]


@dataclass(frozen=True)
class SweepConfig:
    """A one-parameter sweep over a scenario template.

    ``paired`` holds budget values that move together with the swept one
    (``{"p_max": [...]}``), one entry per sweep value.
    """

    name: str
    base: dict
    parameter: str
    values: tuple
    runs: int = 10
    seed: int = 0
    schemes: tuple = ("dcp", "time_fair", "throughput_fair")
    paired: dict = field(default_factory=dict)
    imperfect_fraction: float = 0.1
    epsilon: float = 1e-9
    outer_tol: float = 1e-6
    max_outer: int = 100

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if self.parameter not in PARAMETERS:
            raise InputError(f"parameter must be one of {PARAMETERS}, got {self.parameter!r}")
        if self.runs < 1:
            raise InputError("runs must be >= 1")
        if not self.values:
            raise InputError("at least one sweep value is required")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise InputError("sweep values must be strictly increasing")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise InputError(f"unknown schemes {bad}; choose from {SCHEMES}")
        for key, vals in self.paired.items():
            if key not in _BUDGET_KEYS or key == self.parameter:
                raise InputError(f"cannot pair budget {key!r}")
            if len(vals) != len(self.values):
                raise InputError(f"paired {key} has {len(vals)} values, expected {len(self.values)}")
        if self.parameter == "k_users":
            n = len(self.base["users"])
            if any(int(v) != v or not 1 <= v <= n for v in self.values):
                raise InputError(f"k_users values must be integers in [1, {n}]")

    @classmethod
    def from_dict(cls, d: Mapping) -> "SweepConfig":
        base = d["base"]
        if isinstance(base, str):
            base = read_json(builtin_path(base))
        known = {"name", "parameter", "values", "runs", "seed", "schemes", "paired",
                 "imperfect_fraction", "epsilon", "outer_tol", "max_outer"}
        extra = set(d) - known - {"base"}
        if extra:
            raise InputError(f"unknown sweep keys: {sorted(extra)}")
        kw = {k: d[k] for k in known if k in d}
        kw.setdefault("name", "sweep")
        return cls(base=base, **kw)

    def to_dict(self) -> dict:
        return {"name": self.name, "base": self.base, "parameter": self.parameter,
                "values": list(self.values), "runs": self.runs, "seed": self.seed,
                "schemes": list(self.schemes), "paired": {k: list(v) for k, v in self.paired.items()},
                "imperfect_fraction": self.imperfect_fraction, "epsilon": self.epsilon,
                "outer_tol": self.outer_tol, "max_outer": self.max_outer}


@dataclass(frozen=True)
class CellResult:
    """One (sweep index, run, scheme) outcome; ``status`` is ok, skipped or error."""

    index: int
    run: int
    scheme: str
    status: str
    objective: float = math.nan
    samples: tuple = ()
    message: str = ""


@dataclass
class MonteCarloSummary:
    config: SweepConfig
    task_ids: tuple
    cells: list

    def cell(self, index: int, run: int, scheme: str) -> CellResult:
        for c in self.cells:
            if (c.index, c.run, c.scheme) == (index, run, scheme):
                return c
        raise KeyError((index, run, scheme))

    def per_run(self, index: int, scheme: str) -> np.ndarray:
        """Objectives for every run (nan where the cell did not succeed)."""
        out = np.full(self.config.runs, np.nan)
        for c in self.cells:
            if c.index == index and c.scheme == scheme and c.status == "ok":
                out[c.run] = c.objective
        return out

    def rows(self) -> list[dict]:
        rows = []
        cfg = self.config
        for i, value in enumerate(cfg.values):
            for scheme in cfg.schemes:
                cells = [c for c in self.cells if c.index == i and c.scheme == scheme]
                ok = [c for c in cells if c.status == "ok"]
                objs = np.array([c.objective for c in ok])
                row = {"parameter": cfg.parameter, "value": value, "scheme": scheme,
                       "runs_ok": len(ok), "runs_skipped": sum(c.status == "skipped" for c in cells),
                       "runs_failed": sum(c.status == "error" for c in cells),
                       "mean_objective": float(objs.mean()) if ok else math.nan,
                       "std_objective": float(objs.std()) if ok else math.nan}
                for j, tid in enumerate(self.task_ids):
                    row[f"mean_samples_{tid}"] = (float(np.mean([c.samples[j] for c in ok]))
                                                  if ok else math.nan)
                rows.append(row)
        return rows

    def mean(self, index: int, scheme: str) -> float:
        v = self.per_run(index, scheme)
        return float(np.nanmean(v)) if np.isfinite(v).any() else math.nan

    def to_csv(self) -> str:
        rows = self.rows()
        cols = ["parameter", "value", "scheme", "runs_ok", "runs_skipped", "runs_failed",
                "mean_objective", "std_objective"] + [f"mean_samples_{t}" for t in self.task_ids]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([fmt(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "task_ids": list(self.task_ids),
                "rows": self.rows(),
                "cells": [{"index": c.index, "run": c.run, "scheme": c.scheme, "status": c.status,
                           "objective": c.objective, "samples": list(c.samples),
                           "message": c.message} for c in self.cells]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "MonteCarloSummary":
        cells = [CellResult(c["index"], c["run"], c["scheme"], c["status"], c["objective"],
                            tuple(c["samples"]), c["message"]) for c in d["cells"]]
        return cls(SweepConfig.from_dict(d["config"]), tuple(d["task_ids"]), cells)


def _channel_rng(seed: int, run: int) -> np.random.Generator:
    # channels depend on the run only, so every sweep point (and every user
    # subset) of a run sees the same realisation
    return np.random.default_rng(np.random.SeedSequence([seed, run, 0]))


def _cell_rng(seed: int, index: int, run: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index, run, 1]))


def _draw_gains(base: Mapping, seed: int, run: int) -> dict[str, float]:
    rng = _channel_rng(seed, run)
    pathloss = 10.0 ** (float(base.get("pathloss_db", -90.0)) / 10.0)
    return {u["id"]: draw_channel(rng, pathloss) for u in base["users"]
            if u.get("channel") == "random"}


def build_scenario(config: SweepConfig, index: int, run: int) -> Scenario:
    """Scenario at sweep point ``index`` with the channels of ``run``."""
    d = copy.deepcopy(config.base)
    value = config.values[index]
    if config.parameter == "k_users":
        keep = [u["id"] for u in d["users"][: int(value)]]
        d["users"] = d["users"][: int(value)]
        tasks = []
        for t in d["tasks"]:
            t["users"] = [x for x in t["users"] if x in keep]
            if t["users"]:
                tasks.append(t)
        d["tasks"] = tasks
    else:
        d["budgets"][_BUDGET_KEYS[config.parameter]] = float(value)
    for key, vals in config.paired.items():
        d["budgets"][_BUDGET_KEYS[key]] = float(vals[index])
    return scenario_from_dict(d, gains=_draw_gains(config.base, config.seed, run))


def _solve(scheme: str, sc: Scenario, config: SweepConfig, rng) -> Allocation:
    if scheme == "ranking":
        return solve_ranking(sc, config.epsilon)[0]
    if scheme == "dcp":
        return solve_dcp(sc, config.outer_tol, config.max_outer)[0]
    if scheme == "time_fair":
        return time_fairness(sc)
    if scheme == "throughput_fair":
        return throughput_fairness(sc)
    # optimize under perturbed curve parameters, score under the true ones
    tasks = [perturb_parameters(t, config.imperfect_fraction, rng) for t in sc.tasks]
    noisy = Scenario(tasks, sc.users, sc.radio, sc.budgets, allow_overlap=sc.allow_overlap)
    alloc = solve_dcp(noisy, config.outer_tol, config.max_outer)[0]
    return evaluate_allocation(sc, alloc.time, alloc.energy)


def _run_cell(config: SweepConfig, index: int, run: int) -> list[CellResult]:
    sc = build_scenario(config, index, run)
    out = []
    for scheme in config.schemes:
        if scheme == "ranking" and not sc.ranking_eligible:
            out.append(CellResult(index, run, scheme, "skipped",
                                  message="ranking needs e_max >= t_max * p_max"))
            continue
        try:
            alloc = _solve(scheme, sc, config, _cell_rng(config.seed, index, run))
        except (LcwraError, ArithmeticError, ValueError) as exc:
            out.append(CellResult(index, run, scheme, "error", message=f"{type(exc).__name__}: {exc}"))
            continue
        samples = tuple(int(alloc.integer_samples_per_task[t.task_id]) for t in sc.tasks)
        out.append(CellResult(index, run, scheme, "ok", float(alloc.objective), samples))
    return out


def _run_cell_args(args):
    return _run_cell(*args)


def run_sweep(config: SweepConfig, *, workers: int = 1) -> MonteCarloSummary:
    """Run every (sweep value, run) cell for all schemes.

    Results do not depend on ``workers``: each cell draws from its own
    seeded streams.
    """
    jobs = [(config, i, r) for i in range(len(config.values)) for r in range(config.runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_cell_args, jobs))
    else:
        results = [_run_cell(*j) for j in jobs]
    cells = [c for res in results for c in res]
    skipped = sum(c.status == "skipped" for c in cells)
    if skipped:
        log.warning("%s: %d ranking cell(s) skipped at points with e_max < t_max * p_max",
                    config.name, skipped)
    for c in cells:
        if c.status == "error":
            log.warning("%s: value=%s run=%d %s failed: %s", config.name,
                        config.values[c.index], c.run, c.scheme, c.message)
    task_ids = tuple(t["id"] for t in config.base["tasks"])
    if config.parameter == "k_users":
        # keep every task id that survives at some sweep point
        task_ids = tuple(t.task_id for t in build_scenario(config, len(config.values) - 1, 0).tasks)
    return MonteCarloSummary(config, task_ids, cells)


def load_sweep(name_or_path) -> SweepConfig:
    """Load a bundled sweep by name or a sweep JSON file."""
    try:
        path = builtin_path(str(name_or_path))
    except FileNotFoundError:
        path = name_or_path
    d = read_json(path)
    if "parameter" not in d:
        raise InputError(f"{name_or_path} is not a sweep configuration")
    return SweepConfig.from_dict(d)


def reproduce_fixed(name: str, epsilon: float = 1e-9) -> dict:
    """Solve a bundled single scenario with the ranking rule and with equal time.

    Returns per-scheme slot times, floored sample counts and objectives.
    """
    d = read_json(builtin_path(name))
    if "parameter" in d:
        raise InputError(f"{name} is a sweep configuration")
    sc = scenario_from_dict(d)
    out = {}
    for scheme, alloc in (("lcwra", solve_ranking(sc, epsilon)[0]), ("time_fair", time_fairness(sc))):
        out[scheme] = {
            "time_s": {u: alloc.time[u] for u in sorted(alloc.time)},
            "samples": {t.task_id: int(alloc.integer_samples_per_task[t.task_id]) for t in sc.tasks},
            "objective": alloc.objective,
        }
    return out


def reproduce_vehicular(epsilon: float = 1e-9) -> dict:
    """:func:`reproduce_fixed` on the bundled two-vehicle scenario."""
    return reproduce_fixed("vehicular", epsilon)
