"""Shared scenario factories."""
import math

import numpy as np
import pytest

from lcwra.model import (Budgets, LearningErrorModel, RadioParams, Scenario, UserLink,
                         dbm_per_hz_to_watts)

NOISE = dbm_per_hz_to_watts(-130.0, 180e3)
RADIO = RadioParams(180e3, NOISE)


def random_p1_scenario(rng: np.random.Generator, *, eligible: bool = False,
                       cap_range=(0.05, 0.6)) -> Scenario:
    """2-5 users in up to 3 disjoint groups, caps set to a share of each user's best-case haul.

    With ``eligible`` the energy budget covers peak power for the whole frame.
    """
    K = int(rng.integers(2, 6))
    M = int(rng.integers(1, min(K, 3) + 1))
    groups = np.array_split(rng.permutation(K), M)
    t_max = float(rng.uniform(10, 100))
    p_max = float(rng.uniform(0.01, 0.1))
    e_max = float(rng.uniform(1.0, 2.0) if eligible else rng.uniform(0.2, 1.5)) * t_max * p_max
    users = []
    for k in range(K):
        gain = float(rng.exponential(1e-9))
        bits = float(rng.choice([324.0, 6276.0, 2000.0]))
        rate = 180e3 * math.log2(1 + p_max * gain / NOISE) / bits
        size = float(max(5.0, rate * t_max * rng.uniform(*cap_range)))
        users.append(UserLink(f"u{k}", gain, bits, size))
    tasks = [LearningErrorModel(f"m{i}", float(rng.uniform(2, 8)), float(rng.uniform(0.3, 0.9)),
                                float(rng.uniform(0, 300)), tuple(f"u{k}" for k in sorted(g)))
             for i, g in enumerate(groups)]
    return Scenario(tasks, users, RADIO, Budgets(t_max, e_max, p_max))


def two_task_scenario(t_max=50.0, e_max=10.0, p_max=0.03, gains=(1e-9, 1e-9, 1e-9, 1e-9),
                      sizes=(2000.0, 600.0, 600.0, 600.0)) -> Scenario:
    users = [UserLink("u1", gains[0], 6276.0, sizes[0])]
    users += [UserLink(f"u{i + 2}", g, 324.0, s) for i, (g, s) in enumerate(zip(gains[1:], sizes[1:]))]
    tasks = [LearningErrorModel("cnn", 7.3, 0.69, 300.0, ("u1",)),
             LearningErrorModel("svm", 6.24, 0.72, 200.0, tuple(u.user_id for u in users[1:]))]
    return Scenario(tasks, users, RADIO, Budgets(t_max, e_max, p_max))


def fixed_rate_scenario(t_max=16.0, rates=(10.0, 10.0), tasks=((3.95, 0.5), (3.11, 0.71)),
                        c=(0.0, 0.0), size=1000.0) -> Scenario:
    users = [UserLink(f"v{i + 1}", 0.0, 1.0, size, fixed_rate=r) for i, r in enumerate(rates)]
    models = [LearningErrorModel(f"m{i + 1}", a, b, ci, (f"v{i + 1}",))
              for i, ((a, b), ci) in enumerate(zip(tasks, c))]
    return Scenario(models, users, RADIO, Budgets(t_max, 1e6, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
