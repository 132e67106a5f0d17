import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcwra.errors import CapacityError, DomainError, EligibilityError, InfeasibleError, UnsupportedStructureError
from lcwra.model import Budgets, LearningErrorModel, Scenario, UserLink, predicted_error
from lcwra.ranking import (RankedGroup, lp_oracle_p3_task, max_power_rate, min_total_time,
                           ranked_group, solve_p3_task, solve_ranking)

from conftest import RADIO, fixed_rate_scenario, two_task_scenario


def group(*pairs):
    return RankedGroup("m", tuple((f"u{i}", U, V) for i, (U, V) in enumerate(pairs)))


class TestP3:
    def test_fastest_first(self):
        z = solve_p3_task(group((10, 30), (5, 100)), 50)
        np.testing.assert_allclose(z, [3.0, 4.0])
        assert z.sum() == pytest.approx(7.0)

    def test_single_entry(self):
        assert solve_p3_task(group((10, 1000)), 137)[0] == pytest.approx(13.7)

    def test_zero_demand(self):
        assert solve_p3_task(group((10, 30)), 0).tolist() == [0.0]

    def test_over_capacity(self):
        with pytest.raises(CapacityError):
            solve_p3_task(group((10, 30), (5, 100)), 131)

    def test_exact_capacity(self):
        assert solve_p3_task(group((10, 30), (5, 100)), 130).sum() == pytest.approx(23.0)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.floats(0.1, 100), st.floats(1, 1e4)), min_size=1, max_size=8),
           st.floats(0.0, 1.0))
    def test_matches_lp_vertices(self, pairs, share):
        g = group(*sorted(pairs, key=lambda p: -p[0]))
        demand = share * g.capacity
        total = float(solve_p3_task(g, demand).sum())
        assert total == pytest.approx(lp_oracle_p3_task(g, demand), rel=1e-9, abs=1e-12)

    @pytest.mark.parametrize("n", [2, 5, 9])
    def test_vertex_and_highs_agree(self, n, rng):
        g = group(*sorted(zip(rng.uniform(0.1, 100, n), rng.uniform(1, 1e4, n)), key=lambda p: -p[0]))
        d = 0.6 * g.capacity
        assert lp_oracle_p3_task(g, d, "vertex") == pytest.approx(lp_oracle_p3_task(g, d, "highs"), rel=1e-7)

    def test_oracle_infeasible(self):
        assert lp_oracle_p3_task(group((1, 1)), 2.0) == math.inf

    def test_oracle_limit(self):
        with pytest.raises(DomainError):
            lp_oracle_p3_task(group(*[(1, 1)] * 21), 1.0)


class TestGroups:
    def test_tie_break_by_id(self):
        sc = two_task_scenario(t_max=50, e_max=10, gains=(1e-9, 2e-9, 2e-9, 1e-9))
        g = ranked_group(sc, sc.tasks[1])
        assert [e[0] for e in g.entries] == ["u2", "u3", "u4"]

    def test_dead_channel_dropped(self):
        sc = two_task_scenario(gains=(1e-9, 0.0, 1e-9, 1e-9))
        assert "u2" not in [e[0] for e in ranked_group(sc, sc.tasks[1]).entries]

    def test_eligibility(self):
        sc = two_task_scenario(e_max=1.0)
        with pytest.raises(EligibilityError):
            max_power_rate(sc.users[0], sc.radio, sc.budgets)
        with pytest.raises(EligibilityError):
            solve_ranking(sc)


class TestSolve:
    def test_vehicular_reference(self):
        alloc, trace = solve_ranking(fixed_rate_scenario(), 1e-9)
        assert alloc.time["v1"] == pytest.approx(13.715, abs=2e-3)
        assert alloc.time["v2"] == pytest.approx(2.285, abs=2e-3)
        assert alloc.samples_per_task["m1"] == pytest.approx(137.15, abs=0.05)
        assert alloc.objective == pytest.approx(0.33728, abs=1e-4)
        assert trace.history and trace.final_u == pytest.approx(alloc.objective, abs=2e-9)

    def test_equalizes_errors(self):
        alloc, _ = solve_ranking(two_task_scenario(), 1e-12)
        errs = list(alloc.task_errors.values())
        assert max(errs) - min(errs) < 1e-8

    def test_uses_whole_frame(self):
        alloc, _ = solve_ranking(two_task_scenario(), 1e-12)
        assert sum(alloc.time.values()) == pytest.approx(50.0, rel=1e-9)

    def test_zero_frame(self):
        sc = fixed_rate_scenario(t_max=0.0, c=(10.0, 10.0))
        alloc, _ = solve_ranking(sc)
        assert alloc.objective == pytest.approx(max(3.95 * 10 ** -0.5, 3.11 * 10 ** -0.71))

    def test_zero_frame_no_history(self):
        with pytest.raises(InfeasibleError) as info:
            solve_ranking(fixed_rate_scenario(t_max=0.0))
        assert info.value.task_id in ("m1", "m2")

    def test_widens_above_one(self):
        sc = fixed_rate_scenario(t_max=0.01, tasks=((50.0, 0.5), (50.0, 0.5)), c=(1.0, 1.0))
        alloc, trace = solve_ranking(sc)
        assert len(trace.widenings) > 1
        assert alloc.objective > 1

    def test_overlap_rejected(self):
        users = [UserLink("u", 1e-9, 1, 100)]
        tasks = [LearningErrorModel("m", 1, 1, 0, ("u",)), LearningErrorModel("n", 1, 1, 0, ("u",))]
        sc = Scenario(tasks, users, RADIO, Budgets(1, 1, 1), allow_overlap=True)
        with pytest.raises(UnsupportedStructureError):
            solve_ranking(sc)

    def test_epsilon_positive(self):
        with pytest.raises(DomainError):
            solve_ranking(two_task_scenario(), 0.0)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(1.0, 200.0), st.floats(1.0, 200.0))
    def test_bisection_brackets_optimum(self, t1, t2):
        sc = fixed_rate_scenario(t_max=t1 + t2, size=1e9)
        alloc, _ = solve_ranking(sc, 1e-10)
        # no split of the frame does better
        grid = np.linspace(0, t1 + t2, 201)
        best = min(max(predicted_error(sc.tasks[0], 10 * x), predicted_error(sc.tasks[1], 10 * (t1 + t2 - x)))
                   for x in grid[1:-1])
        assert alloc.objective <= best + 1e-9

    def test_min_total_time_monotone(self):
        sc = two_task_scenario()
        totals = [min_total_time(sc, u)[0] for u in (0.05, 0.08, 0.1, 0.2)]
        assert all(x >= y for x, y in zip(totals, totals[1:]))
