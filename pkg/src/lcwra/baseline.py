"""Comparison schemes: equal airtime and equal delivered bits."""
from __future__ import annotations

import math

from .errors import DegenerateScenarioError
from .model import Allocation, Scenario, evaluate_allocation, theta


def _truncate_to_caps(scenario: Scenario, time: dict, energy: dict):
    """Stop each user once its dataset is sent; the rest of its slot idles.

    Shrinking a slot and its energy by a common factor shrinks the bits by
    the same factor, so the reported (effective) slot stays on the same
    power level.
    """
    for u in scenario.users:
        d = theta(time[u.user_id], energy[u.user_id], u, scenario.radio)
        if d > u.cap_bits:
            lam = u.cap_bits / d
            time[u.user_id] *= lam
            energy[u.user_id] *= lam
    return time, energy


def time_fairness(scenario: Scenario) -> Allocation:
    """Every user gets ``t_max / K`` seconds and an equal energy share."""
    b = scenario.budgets
    K = len(scenario.users)
    t = b.t_max / K
    e = min(b.p_max * t, b.e_max / K)
    time = {u.user_id: t for u in scenario.users}
    energy = {u.user_id: e for u in scenario.users}
    time, energy = _truncate_to_caps(scenario, time, energy)
    return evaluate_allocation(scenario, time, energy)


def common_power_rate(scenario: Scenario, user, power: float) -> float:
    r = scenario.radio
    if user.fixed_rate is not None:
        return r.alpha * user.fixed_rate
    return r.alpha * r.bandwidth * math.log2(1.0 + power * user.channel_gain / r.noise_power)


def throughput_fairness(scenario: Scenario) -> Allocation:
    """Slots inversely proportional to rate so every user delivers equal bits.

    All users transmit at ``min(p_max, e_max / t_max)``, i.e. peak power
    capped by a time-proportional share of the energy budget. Users with a
    dead channel get no slot.
    """
    b = scenario.budgets
    power = min(b.p_max, b.e_max / b.t_max) if b.t_max > 0 else b.p_max
    rates = {u.user_id: common_power_rate(scenario, u, power) for u in scenario.users}
    live = [uid for uid, r in rates.items() if r > 0]
    if not live:
        raise DegenerateScenarioError("every user has zero rate; throughput fairness undefined")
    inv_sum = sum(1.0 / rates[uid] for uid in live)
    time = {u.user_id: 0.0 for u in scenario.users}
    for uid in live:
        time[uid] = b.t_max / (rates[uid] * inv_sum)
    energy = {uid: power * t for uid, t in time.items()}
    time, energy = _truncate_to_caps(scenario, time, energy)
    return evaluate_allocation(scenario, time, energy)
