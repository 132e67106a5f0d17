"""Exact solver for the large-energy regime.

When ``e_max >= t_max * p_max`` every user transmits at peak power, rates
become constants and the min-max problem reduces to a bisection on the error
level ``u``. For a trial ``u`` each task independently needs
``(u/a)**(-1/b) - c`` new samples, and the fastest way to collect them is to
drain its users in decreasing order of samples per second.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (CapacityError, DomainError, EligibilityError, InfeasibleError,
                     UnsupportedStructureError, ValidationError)
from .model import (Allocation, Budgets, LearningErrorModel, RadioParams, Scenario,
                    UserLink, evaluate_allocation, required_samples)


@dataclass(frozen=True)
class RankedGroup:
    """Users of one task sorted by sample rate, fastest first.

    ``entries`` holds ``(user_id, rate in samples/s, dataset size)``; ties in
    rate are broken by ascending user id. Users with a dead channel are left
    out.
    """

    task_id: str
    entries: tuple[tuple[str, float, float], ...]

    @property
    def rates(self) -> np.ndarray:
        return np.array([e[1] for e in self.entries], dtype=float)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([e[2] for e in self.entries], dtype=float)

    @property
    def capacity(self) -> float:
        return float(sum(e[2] for e in self.entries))


@dataclass
class BisectionTrace:
    history: list[tuple[float, float, float, bool]] = field(default_factory=list)
    widenings: list[tuple[float, bool]] = field(default_factory=list)
    final_u: float = math.nan
    epsilon: float = math.nan

    def to_dict(self) -> dict:
        return {
            "history": [list(h) for h in self.history],
            "widenings": [list(w) for w in self.widenings],
            "final_u": self.final_u,
            "epsilon": self.epsilon,
        }


def check_eligible(budgets: Budgets):
    if budgets.e_max < budgets.t_max * budgets.p_max:
        raise EligibilityError(
            f"e_max={budgets.e_max:g} J < t_max*p_max={budgets.t_max * budgets.p_max:g} J: "
            "energy is binding, use the DCP solver")


def max_power_rate(link: UserLink, radio: RadioParams, budgets: Budgets) -> float:
    """Rate in bits/s when ``link`` transmits at peak power."""
    check_eligible(budgets)
    if link.fixed_rate is not None:
        return radio.alpha * link.fixed_rate
    snr = budgets.p_max * link.channel_gain / radio.noise_power
    return radio.alpha * radio.bandwidth * math.log2(1.0 + snr)


def ranked_group(scenario: Scenario, task: LearningErrorModel) -> RankedGroup:
    rows = []
    for uid in task.users:
        link = scenario.link(uid)
        rate = max_power_rate(link, scenario.radio, scenario.budgets)
        if rate > 0:
            rows.append((uid, rate / link.bits_per_sample, link.dataset_size))
    rows.sort(key=lambda r: (-r[1], r[0]))
    return RankedGroup(task.task_id, tuple(rows))


def solve_p3_task(group: RankedGroup, demand: float) -> np.ndarray:
    """Minimum-time schedule delivering ``demand`` samples from ``group``.

    Returns per-entry times aligned with ``group.entries``.

    Raises
    ------
    CapacityError
        The group's users hold fewer than ``demand`` samples.
    """
    n = len(group.entries)
    if demand <= 0:
        return np.zeros(n)
    if n == 0:
        raise CapacityError(f"task {group.task_id}: no usable users for demand {demand:g}",
                            task_id=group.task_id)
    z, unmet = kernels.greedy_fill(group.rates, group.sizes, float(demand))
    if unmet > 1e-12 * max(demand, 1.0):
        raise CapacityError(
            f"task {group.task_id}: demand {demand:.6g} samples exceeds capacity "
            f"{group.capacity:.6g}", task_id=group.task_id)
    return z


def min_total_time(scenario: Scenario, u_trial: float,
                   groups: list[RankedGroup] | None = None) -> tuple[float, dict[str, float]]:
    """Least total airtime reaching error level ``u_trial`` on every task.

    Raises :class:`CapacityError` when some task cannot reach ``u_trial`` at all.
    """
    if u_trial <= 0:
        raise DomainError(f"error level must be > 0, got {u_trial}")
    if scenario.overlapping:
        raise UnsupportedStructureError("ranking decomposition needs disjoint task groups")
    if groups is None:
        groups = [ranked_group(scenario, t) for t in scenario.tasks]
    times = {u.user_id: 0.0 for u in scenario.users}
    total = 0.0
    for task, group in zip(scenario.tasks, groups):
        z = solve_p3_task(group, required_samples(task, u_trial))
        for (uid, _, _), zi in zip(group.entries, z):
            times[uid] = float(zi)
            total += float(zi)
    return total, times


def _u_cap(scenario: Scenario) -> float:
    return max(t.a * max(t.c, 1.0) ** (-t.b) for t in scenario.tasks)


def solve_ranking(scenario: Scenario, epsilon: float = 1e-9, *,
                  check_eligibility: bool = True) -> tuple[Allocation, BisectionTrace]:
    """Optimal min-max allocation by bisection on the error level.

    Starts from ``[0, 1]`` and doubles the upper end (up to the error that
    one extra sample per task would give) if 1 is not reachable.
    """
    if epsilon <= 0:
        raise DomainError("epsilon must be > 0")
    if check_eligibility:
        check_eligible(scenario.budgets)
    if scenario.overlapping:
        raise UnsupportedStructureError("ranking decomposition needs disjoint task groups")
    groups = [ranked_group(scenario, t) for t in scenario.tasks]
    t_max = scenario.budgets.t_max
    slack = 1e-12 * max(t_max, 1.0)
    trace = BisectionTrace(epsilon=epsilon)

    def feasible(u):
        try:
            total, times = min_total_time(scenario, u, groups)
        except CapacityError as exc:
            return False, None, exc
        return total <= t_max + slack, times, None

    u_lo, u_hi = 0.0, 1.0
    cap = _u_cap(scenario)
    ok, times, exc = feasible(u_hi)
    trace.widenings.append((u_hi, ok))
    while not ok:
        if u_hi >= cap:
            binding = exc.task_id if exc is not None else _binding_task(scenario, groups, u_hi)
            raise InfeasibleError(
                f"no allocation reaches error {u_hi:.6g}; binding task {binding}", task_id=binding)
        u_lo = u_hi
        u_hi = min(2.0 * u_hi, cap)
        ok, times, exc = feasible(u_hi)
        trace.widenings.append((u_hi, ok))

    while u_hi - u_lo >= epsilon:
        u = 0.5 * (u_lo + u_hi)
        ok, t_trial, _ = feasible(u)
        trace.history.append((u_lo, u_hi, u, ok))
        if ok:
            u_hi, times = u, t_trial
        else:
            u_lo = u
    trace.final_u = u_hi

    p_max = scenario.budgets.p_max
    energy = {uid: p_max * t for uid, t in times.items()}
    if sum(energy.values()) > scenario.budgets.e_max * (1 + 1e-12):
        raise ValidationError([f"peak-power energy {sum(energy.values()):.6g} J exceeds "
                               f"e_max {scenario.budgets.e_max:.6g} J"])
    return evaluate_allocation(scenario, times, energy), trace


def _binding_task(scenario, groups, u):
    """Task needing the most airtime at level ``u``."""
    worst, worst_t = None, -1.0
    for task, g in zip(scenario.tasks, groups):
        try:
            t = float(solve_p3_task(g, required_samples(task, u)).sum())
        except CapacityError:
            return task.task_id
        if t > worst_t:
            worst, worst_t = task.task_id, t
    return worst


def lp_oracle_p3_task(group: RankedGroup, demand: float, method: str = "vertex") -> float:
    """Optimal total time of one task's subproblem via a generic LP route.

    ``method="vertex"`` enumerates every basic solution of the LP (at most
    one variable strictly between its bounds); ``method="highs"`` hands the
    LP to scipy's HiGHS solver. Neither uses the rate ordering. Returns
    ``inf`` when the demand cannot be met.
    """
    n = len(group.entries)
    if n > 20:
        raise DomainError("LP oracle is limited to groups of at most 20 users")
    if demand <= 0:
        return 0.0
    U = np.array([e[1] for e in group.entries], dtype=float)
    V = np.array([e[2] for e in group.entries], dtype=float)
    if method == "highs":
        from scipy.optimize import linprog
        res = linprog(np.ones(n), A_ub=-U[None, :], b_ub=[-demand],
                      bounds=list(zip(np.zeros(n), V / U)), method="highs")
        return float(res.fun) if res.status == 0 else math.inf
    if method != "vertex":
        raise ValueError(f"unknown LP oracle method {method!r}")

    tol = 1e-12 * max(demand, 1.0)
    best = math.inf
    tfull = V / U
    # vertices with every variable at a bound
    masks = _bit_table(n)
    served = masks @ V
    spent = masks @ tfull
    ok = served >= demand - tol
    if ok.any():
        best = float(spent[ok].min())
    # vertices with the demand constraint tight and one free variable
    if n >= 1:
        sub = _bit_table(n - 1)
        for j in range(n):
            others = np.delete(np.arange(n), j)
            s_o = sub @ V[others]
            t_o = sub @ tfull[others]
            zj = (demand - s_o) / U[j]
            valid = (zj >= -tol / U[j]) & (zj <= tfull[j] + tol / U[j])
            if valid.any():
                best = min(best, float((t_o + np.clip(zj, 0.0, tfull[j]))[valid].min()))
    return best


def _bit_table(n: int) -> np.ndarray:
    idx = np.arange(2 ** n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(float)
