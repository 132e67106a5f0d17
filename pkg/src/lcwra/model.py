"""Domain types and the closed-form rate and learning-curve equations.

All quantities are linear SI internally: seconds, joules, watts, bits,
hertz. A user's delivered bits over a slot of length ``t`` with energy ``e``
is the perspective of the Shannon rate,

    theta(t, e) = alpha * t * B * log2(1 + e * |h|^2 / (t * noise)),

and a task's predicted generalization error after ``v`` samples is the
inverse power law ``a * v**(-b)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, InputError, ValidationError

LN2 = math.log(2.0)
#: Times below this are treated as zero by the solvers.
T_FLOOR = 1e-9


def dbm_per_hz_to_watts(psd_dbm_hz: float, bandwidth: float) -> float:
    """Integrate a noise spectral density in dBm/Hz over ``bandwidth`` Hz."""
    return 10.0 ** ((psd_dbm_hz - 30.0) / 10.0) * bandwidth


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class LearningErrorModel:
    task_id: str
    a: float
    b: float
    c: float
    users: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        if not (self.a > 0 and self.b > 0):
            raise DomainError(f"task {self.task_id}: need a > 0 and b > 0")
        if not self.c >= 0:
            raise DomainError(f"task {self.task_id}: historical samples must be >= 0")
        if not self.users:
            raise DomainError(f"task {self.task_id}: empty user group")
        if len(set(self.users)) != len(self.users):
            raise DomainError(f"task {self.task_id}: duplicate users in group")

    def error_floor(self) -> float:
        """Error reached with historical samples only (``inf`` if none)."""
        return predicted_error(self, self.c) if self.c > 0 else math.inf


@dataclass(frozen=True)
class UserLink:
    user_id: str
    channel_gain: float
    bits_per_sample: float
    dataset_size: float
    fixed_rate: float | None = None

    def __post_init__(self):
        if not self.channel_gain >= 0:
            raise DomainError(f"user {self.user_id}: channel gain must be >= 0")
        if not self.bits_per_sample > 0:
            raise DomainError(f"user {self.user_id}: bits_per_sample must be > 0")
        if not self.dataset_size > 0:
            raise DomainError(f"user {self.user_id}: dataset_size must be > 0")
        if self.fixed_rate is not None and not self.fixed_rate > 0:
            raise DomainError(f"user {self.user_id}: fixed_rate must be > 0")

    @property
    def cap_bits(self) -> float:
        return self.dataset_size * self.bits_per_sample


@dataclass(frozen=True)
class RadioParams:
    bandwidth: float
    noise_power: float
    alpha: float = 1.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise DomainError("bandwidth must be > 0")
        if not self.noise_power > 0:
            raise DomainError("noise power must be > 0")
        if not 0 < self.alpha <= 1:
            raise DomainError("alpha must lie in (0, 1]")


@dataclass(frozen=True)
class Budgets:
    """Time, energy and peak-power budgets.

    ``t_max`` and ``e_max`` may be zero (a degenerate but well-defined
    instance); ``p_max`` must be positive.
    """

    t_max: float
    e_max: float
    p_max: float

    def __post_init__(self):
        if not (self.t_max >= 0 and self.e_max >= 0):
            raise DomainError("t_max and e_max must be >= 0")
        if not self.p_max > 0:
            raise DomainError("p_max must be > 0")


@dataclass(frozen=True)
class Scenario:
    tasks: tuple[LearningErrorModel, ...]
    users: tuple[UserLink, ...]
    radio: RadioParams
    budgets: Budgets
    allow_overlap: bool = False

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "users", tuple(self.users))
        ids = [u.user_id for u in self.users]
        if len(set(ids)) != len(ids):
            raise InputError("duplicate user ids")
        tids = [t.task_id for t in self.tasks]
        if not tids:
            raise InputError("scenario has no tasks")
        if len(set(tids)) != len(tids):
            raise InputError("duplicate task ids")
        known = set(ids)
        seen: dict[str, str] = {}
        for task in self.tasks:
            for uid in task.users:
                if uid not in known:
                    raise InputError(f"task {task.task_id} references unknown user {uid}")
                if uid in seen and not self.allow_overlap:
                    raise InputError(
                        f"user {uid} appears in tasks {seen[uid]} and {task.task_id}; "
                        "set allow_overlap to permit overlapping groups")
                seen.setdefault(uid, task.task_id)
        orphans = known - set(seen)
        if orphans:
            raise InputError(f"users not in any task group: {sorted(orphans)}")

    @property
    def ranking_eligible(self) -> bool:
        b = self.budgets
        return b.e_max >= b.t_max * b.p_max

    @property
    def overlapping(self) -> bool:
        n = sum(len(t.users) for t in self.tasks)
        return n != len({u for t in self.tasks for u in t.users})

    @cached_property
    def user_index(self) -> dict[str, int]:
        return {u.user_id: i for i, u in enumerate(self.users)}

    def link(self, user_id: str) -> UserLink:
        return self.users[self.user_index[user_id]]

    def task(self, task_id: str) -> LearningErrorModel:
        for t in self.tasks:
            if t.task_id == task_id:
                return t
        raise KeyError(task_id)

    # array views used by the vectorized solvers
    @cached_property
    def snr_per_joule(self) -> np.ndarray:
        """``|h|^2 / noise`` per user, i.e. SNR per watt of transmit power."""
        return np.array([u.channel_gain for u in self.users]) / self.radio.noise_power

    @cached_property
    def rate_scale(self) -> np.ndarray:
        """``alpha * B / ln 2`` broadcast per user (bits/s per nat)."""
        r = self.radio
        return np.full(len(self.users), r.alpha * r.bandwidth / LN2)

    @cached_property
    def fixed_rates(self) -> np.ndarray:
        """``alpha * fixed_rate`` per user, 0 where the Shannon rate applies."""
        a = self.radio.alpha
        return np.array([a * u.fixed_rate if u.fixed_rate else 0.0 for u in self.users])

    @cached_property
    def bits_per_sample(self) -> np.ndarray:
        return np.array([u.bits_per_sample for u in self.users])

    @cached_property
    def dataset_sizes(self) -> np.ndarray:
        return np.array([u.dataset_size for u in self.users])

    @cached_property
    def membership(self) -> np.ndarray:
        """``(M, K)`` 0/1 matrix of task groups."""
        m = np.zeros((len(self.tasks), len(self.users)))
        for i, t in enumerate(self.tasks):
            for uid in t.users:
                m[i, self.user_index[uid]] = 1.0
        return m


@dataclass(frozen=True)
class Allocation:
    time: dict[str, float]
    energy: dict[str, float]
    bits: dict[str, float]
    samples_per_task: dict[str, float]
    objective: float
    integer_samples_per_task: dict[str, int] = field(default_factory=dict)
    task_errors: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "time": dict(self.time),
            "energy": dict(self.energy),
            "bits": dict(self.bits),
            "samples_per_task": dict(self.samples_per_task),
            "integer_samples_per_task": dict(self.integer_samples_per_task),
            "task_errors": dict(self.task_errors),
            "objective": self.objective,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Allocation":
        return cls(
            time=dict(d["time"]), energy=dict(d["energy"]), bits=dict(d["bits"]),
            samples_per_task=dict(d["samples_per_task"]),
            objective=d["objective"],
            integer_samples_per_task={k: int(v) for k, v in d.get("integer_samples_per_task", {}).items()},
            task_errors=dict(d.get("task_errors", {})),
        )


def theta(t: float, e: float, link: UserLink, radio: RadioParams) -> float:
    """Bits delivered by ``link`` in a slot of ``t`` seconds using ``e`` joules."""
    if t < 0 or e < 0:
        raise DomainError(f"theta needs t >= 0 and e >= 0, got t={t}, e={e}")
    if link.fixed_rate is not None:
        return radio.alpha * t * link.fixed_rate
    if t == 0 or e == 0:
        return 0.0
    q = link.channel_gain / radio.noise_power
    snr = (e / t) * q
    if snr < 1e300:
        return radio.alpha * t * radio.bandwidth * math.log1p(snr) / LN2
    # t -> 0 with e fixed: log1p(snr) is log(e q) - log(t) to double precision
    return radio.alpha * radio.bandwidth * t * (math.log(e * q) - math.log(t)) / LN2


def theta_gradient(t: float, e: float, link: UserLink, radio: RadioParams) -> tuple[float, float]:
    """Partial derivatives ``(d theta/dt, d theta/de)`` at ``t > 0``."""
    if t <= 0:
        raise DomainError(f"theta gradient needs t > 0, got {t}")
    if e < 0:
        raise DomainError(f"theta gradient needs e >= 0, got {e}")
    if link.fixed_rate is not None:
        return radio.alpha * link.fixed_rate, 0.0
    q = link.channel_gain / radio.noise_power
    x = q * e / t
    c = radio.alpha * radio.bandwidth / LN2
    return c * (math.log1p(x) - x / (1.0 + x)), c * q / (1.0 + x)


def samples_for_task(task: LearningErrorModel, bits: Mapping[str, float],
                     users: Mapping[str, UserLink], integer: bool = False) -> float:
    """Training samples available to ``task``: new ones plus historical.

    With ``integer=True`` each user's contribution is floored before summing.
    """
    total = 0.0
    for uid in task.users:
        d = bits.get(uid, 0.0)
        if d < 0:
            raise DomainError(f"negative bits for user {uid}")
        n = d / users[uid].bits_per_sample
        total += math.floor(n + 1e-9) if integer else n
    return total + task.c


def predicted_error(task: LearningErrorModel, v: float) -> float:
    if v <= 0:
        raise DomainError(f"predicted error needs v > 0, got {v}")
    return task.a * v ** (-task.b)


def required_samples(task: LearningErrorModel, u: float) -> float:
    """New samples needed for ``task`` to reach error level ``u`` (never negative)."""
    if u <= 0:
        raise DomainError(f"error level must be > 0, got {u}")
    return max(0.0, (u / task.a) ** (-1.0 / task.b) - task.c)


def _budget_tol(x: float, rtol: float) -> float:
    return rtol * max(abs(x), 1.0)


def evaluate_allocation(scenario: Scenario, time: Mapping[str, float],
                        energy: Mapping[str, float], *, rtol: float = 1e-9,
                        truncate: bool = False, validate: bool = True) -> Allocation:
    """Compute bits, samples and the worst predicted error of an allocation.

    With ``truncate`` each user stops once its dataset is exhausted, so bits
    are clipped at the dataset size instead of being flagged. Raises
    :class:`ValidationError` listing every violated constraint when
    ``validate`` is set.
    """
    missing = [u.user_id for u in scenario.users if u.user_id not in time or u.user_id not in energy]
    if missing:
        raise InputError(f"allocation lacks users {missing}")
    b = scenario.budgets
    violations: list[str] = []
    t_sum = sum(time[u.user_id] for u in scenario.users)
    e_sum = sum(energy[u.user_id] for u in scenario.users)
    if t_sum > b.t_max + _budget_tol(b.t_max, rtol):
        violations.append(f"total time {t_sum:.9g} > t_max {b.t_max:.9g}")
    if e_sum > b.e_max + _budget_tol(b.e_max, rtol):
        violations.append(f"total energy {e_sum:.9g} > e_max {b.e_max:.9g}")

    bits: dict[str, float] = {}
    for u in scenario.users:
        t, e = time[u.user_id], energy[u.user_id]
        if t < 0 or e < 0:
            violations.append(f"user {u.user_id}: negative time or energy")
            t, e = max(t, 0.0), max(e, 0.0)
        if e > b.p_max * t + _budget_tol(b.p_max * b.t_max, rtol):
            violations.append(f"user {u.user_id}: power {e:.9g} J over {t:.9g} s exceeds p_max")
        d = theta(t, e, u, scenario.radio)
        if truncate:
            d = min(d, u.cap_bits)
        elif d / u.bits_per_sample > u.dataset_size + _budget_tol(u.dataset_size, rtol):
            violations.append(
                f"user {u.user_id}: {d / u.bits_per_sample:.9g} samples exceed dataset {u.dataset_size:.9g}")
        bits[u.user_id] = d

    if validate and violations:
        raise ValidationError(violations)

    links = {u.user_id: u for u in scenario.users}
    samples, ints, errs = {}, {}, {}
    for task in scenario.tasks:
        v = samples_for_task(task, bits, links)
        samples[task.task_id] = v
        ints[task.task_id] = int(samples_for_task(task, bits, links, integer=True))
        errs[task.task_id] = predicted_error(task, v) if v > 0 else math.inf
    return Allocation(
        time={k: float(v) for k, v in time.items()},
        energy={k: float(v) for k, v in energy.items()},
        bits=bits,
        samples_per_task=samples,
        objective=max(errs.values()),
        integer_samples_per_task=ints,
        task_errors=errs,
    )


def worst_error(scenario: Scenario, samples: Sequence[float]) -> float:
    """Worst predicted error for per-task sample totals ordered like ``scenario.tasks``."""
    out = 0.0
    for task, v in zip(scenario.tasks, samples):
        out = max(out, predicted_error(task, v) if v > 0 else math.inf)
    return out
