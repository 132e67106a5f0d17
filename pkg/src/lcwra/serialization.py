"""JSON/CSV formats: scenario files, curve points, allocation tables, reports.

Scenario JSON (units in the key names)::

    {
      "radio":   {"bandwidth_hz": 180000, "noise_psd_dbm_hz": -130, "alpha": 1},
      "budgets": {"t_max_s": 50, "e_max_j": 1.0, "p_max_w": 0.06},
      "pathloss_db": -90,
      "users": [{"id": "u1", "channel_gain_db": -90, "bits_per_sample": 6276,
                 "dataset_size": 3000},
                {"id": "u2", "channel": "random", ...},
                {"id": "v1", "fixed_rate_samples_per_s": 10, ...}],
      "tasks": [{"id": "cnn", "a": 7.3, "b": 0.69, "c": 300, "users": ["u1"]}]
    }

``noise_power_w`` and ``channel_gain`` (linear) are accepted in place of the
dB forms; ``scenario_to_dict`` emits the linear forms so a round trip is
exact.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import __version__
from .errors import InputError
from .fitcurve import ErrorCurvePoint
from .model import (Allocation, Budgets, LearningErrorModel, RadioParams, Scenario,
                    UserLink, db_to_linear, dbm_per_hz_to_watts)

DATA = resources.files("lcwra") / "data"


def load_schema(name: str) -> dict:
    return json.loads((DATA / f"{name}.schema.json").read_text())


def validate(instance: Any, schema_name: str):
    import jsonschema

    try:
        jsonschema.validate(instance, load_schema(schema_name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"{schema_name} schema violation at {where}: {exc.message}") from None


def draw_channel(rng: np.random.Generator, pathloss: float, size=None):
    """Power gain ``|h|^2`` of a circularly-symmetric complex Gaussian channel.

    Real and imaginary parts each have variance ``pathloss / 2``, so the
    gain is exponential with mean ``pathloss``.
    """
    if not pathloss > 0:
        raise InputError("path loss must be > 0 (linear)")
    z = rng.normal(0.0, math.sqrt(pathloss / 2.0), size=(2,) if size is None else (size, 2))
    g = (z * z).sum(axis=-1)
    return float(g) if size is None else g


def scenario_from_dict(d: Mapping, *, rng: np.random.Generator | None = None,
                       gains: Mapping[str, float] | None = None,
                       validate_schema: bool = True) -> Scenario:
    """Build a :class:`Scenario`, drawing ``"channel": "random"`` users.

    Random gains come from ``gains`` when given (keyed by user id), else
    from ``rng`` with the file's ``pathloss_db`` (default -90 dB).
    """
    if validate_schema:
        validate(d, "scenario")
    r = d["radio"]
    bw = float(r["bandwidth_hz"])
    if "noise_power_w" in r:
        noise = float(r["noise_power_w"])
    else:
        noise = dbm_per_hz_to_watts(float(r["noise_psd_dbm_hz"]), bw)
    radio = RadioParams(bw, noise, float(r.get("alpha", 1.0)))
    b = d["budgets"]
    budgets = Budgets(float(b["t_max_s"]), float(b["e_max_j"]), float(b["p_max_w"]))
    pathloss = db_to_linear(float(d.get("pathloss_db", -90.0)))
    users = []
    for u in d["users"]:
        bits = float(u["bits_per_sample"])
        fixed = u.get("fixed_rate_samples_per_s")
        if "channel_gain" in u:
            gain = float(u["channel_gain"])
        elif "channel_gain_db" in u:
            gain = db_to_linear(float(u["channel_gain_db"]))
        elif u.get("channel") == "random":
            if gains is not None and u["id"] in gains:
                gain = float(gains[u["id"]])
            elif rng is not None:
                gain = draw_channel(rng, pathloss)
            else:
                raise InputError(f"user {u['id']} has a random channel; supply a seed")
        elif fixed is not None:
            gain = 0.0
        else:
            raise InputError(f"user {u['id']}: no channel given")
        users.append(UserLink(str(u["id"]), gain, bits, float(u["dataset_size"]),
                              None if fixed is None else float(fixed) * bits))
    tasks = [LearningErrorModel(str(t["id"]), float(t["a"]), float(t["b"]), float(t.get("c", 0.0)),
                                tuple(str(x) for x in t["users"])) for t in d["tasks"]]
    return Scenario(tasks, users, radio, budgets, allow_overlap=bool(d.get("allow_overlap", False)))


def scenario_to_dict(sc: Scenario) -> dict:
    users = []
    for u in sc.users:
        row = {"id": u.user_id, "channel_gain": u.channel_gain,
               "bits_per_sample": u.bits_per_sample, "dataset_size": u.dataset_size}
        if u.fixed_rate is not None:
            row["fixed_rate_samples_per_s"] = u.fixed_rate / u.bits_per_sample
        users.append(row)
    out = {
        "radio": {"bandwidth_hz": sc.radio.bandwidth, "noise_power_w": sc.radio.noise_power,
                  "alpha": sc.radio.alpha},
        "budgets": {"t_max_s": sc.budgets.t_max, "e_max_j": sc.budgets.e_max,
                    "p_max_w": sc.budgets.p_max},
        "users": users,
        "tasks": [{"id": t.task_id, "a": t.a, "b": t.b, "c": t.c, "users": list(t.users)}
                  for t in sc.tasks],
    }
    if sc.allow_overlap:
        out["allow_overlap"] = True
    return out


def builtin_path(name: str) -> Path:
    """Path of a bundled data file or named scenario/sweep."""
    for cand in (DATA / name, DATA / "scenarios" / name, DATA / "scenarios" / f"{name}.json"):
        if cand.is_file():
            return Path(str(cand))
    raise FileNotFoundError(name)


def builtin_names() -> list[str]:
    return sorted(p.name[:-5] for p in (DATA / "scenarios").iterdir() if p.name.endswith(".json"))


def read_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def read_curve_points(path) -> list[ErrorCurvePoint]:
    """Read ``v,err`` rows; errors carry the 1-based line number."""
    text = Path(path).read_text()
    if not text.strip():
        raise InputError(f"{path}: empty file")
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if [h.strip() for h in header] != ["v", "err"]:
        raise InputError(f"{path}: line 1: expected header 'v,err', got {','.join(header)!r}")
    points = []
    for lineno, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 2:
            raise InputError(f"{path}: line {lineno}: expected 2 columns, got {len(row)}")
        try:
            points.append(ErrorCurvePoint(float(row[0]), float(row[1])))
        except ValueError as exc:
            raise InputError(f"{path}: line {lineno}: {exc}") from None
    if not points:
        raise InputError(f"{path}: no data rows")
    return points


ALLOCATION_COLUMNS = ("user", "t_s", "E_J", "bits", "samples")


def allocation_csv(scenario: Scenario, alloc: Allocation) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ALLOCATION_COLUMNS)
    for u in scenario.users:
        uid = u.user_id
        bits = alloc.bits[uid]
        w.writerow([uid, fmt(alloc.time[uid]), fmt(alloc.energy[uid]), fmt(bits),
                    int(math.floor(bits / u.bits_per_sample + 1e-9))])
    return buf.getvalue()


def fmt(x: float) -> str:
    """Stable float text for CSV output."""
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return f"{x:.10g}"


@dataclass
class RunReport:
    command: list[str]
    config: dict
    result: dict
    traces: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__

    def to_dict(self) -> dict:
        return {"command": list(self.command), "config": self.config, "result": self.result,
                "traces": self.traces, "timings": self.timings, "seed": self.seed,
                "version": self.version}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        d = json.loads(text)
        return cls(command=d["command"], config=d["config"], result=d["result"],
                   traces=d.get("traces", {}), timings=d.get("timings", {}),
                   seed=d.get("seed"), version=d.get("version", __version__))


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
