import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcwra.errors import DomainError, InputError, ValidationError
from lcwra.model import (Allocation, Budgets, LearningErrorModel, RadioParams, Scenario, UserLink,
                         dbm_per_hz_to_watts, evaluate_allocation, predicted_error, required_samples,
                         samples_for_task, theta, theta_gradient, worst_error)

from conftest import RADIO, fixed_rate_scenario, two_task_scenario

B = 180e3
RADIO1 = RadioParams(B, 1.0)


def unit_link(gain=1.0, **kw):
    return UserLink("u", gain, kw.pop("bits", 1.0), kw.pop("size", 1e12), **kw)


def test_noise_integration():
    # -130 dBm/Hz over 180 kHz
    assert dbm_per_hz_to_watts(-130.0, 180e3) == pytest.approx(1e-16 * 180e3, rel=1e-12)


class TestTheta:
    def test_origin(self):
        assert theta(0.0, 0.0, unit_link(), RADIO1) == 0.0

    def test_unit_snr(self):
        assert theta(1.0, 1.0, unit_link(), RADIO1) == pytest.approx(180000.0, rel=1e-12)

    def test_snr_three(self):
        # e|h|^2/(t sigma^2) = 3 at t = 2
        assert theta(2.0, 6.0, unit_link(), RADIO1) == pytest.approx(720000.0, rel=1e-12)

    def test_alpha_scales(self):
        r = RadioParams(B, 1.0, alpha=0.5)
        assert theta(1.0, 1.0, unit_link(), r) == pytest.approx(90000.0, rel=1e-12)

    def test_fixed_rate(self):
        link = UserLink("v", 0.0, 1.0, 100.0, fixed_rate=10.0)
        assert theta(3.0, 0.0, link, RADIO1) == 30.0

    @pytest.mark.parametrize("t,e", [(-1.0, 0.0), (0.0, -1e-3)])
    def test_negative_rejected(self, t, e):
        with pytest.raises(DomainError):
            theta(t, e, unit_link(), RADIO1)


class TestThetaGradient:
    def test_zero_energy_branch(self):
        dt, de = theta_gradient(2.0, 0.0, unit_link(gain=3.0), RADIO1)
        assert dt == 0.0
        assert de == pytest.approx(B * 3.0 / math.log(2), rel=1e-12)

    def test_symbolic_value(self):
        dt, _ = theta_gradient(1.0, 1.0, unit_link(), RADIO1)
        assert dt == pytest.approx(B * (1 - 1 / (2 * math.log(2))), rel=1e-12)

    def test_t_zero_rejected(self):
        with pytest.raises(DomainError):
            theta_gradient(0.0, 1.0, unit_link(), RADIO1)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(1e-3, 100), st.floats(1e-2, 10), st.floats(1e-12, 1e-8))
    def test_central_differences(self, t, e, gain):
        link = UserLink("u", gain, 1.0, 1e12)
        dt, de = theta_gradient(t, e, link, RADIO)
        ht, he = 1e-6 * t, 1e-6 * e
        fd_t = (theta(t + ht, e, link, RADIO) - theta(t - ht, e, link, RADIO)) / (2 * ht)
        fd_e = (theta(t, e + he, link, RADIO) - theta(t, e - he, link, RADIO)) / (2 * he)
        assert dt == pytest.approx(fd_t, rel=1e-5, abs=1e-6 * abs(de) * e / t + 1e-9)
        assert de == pytest.approx(fd_e, rel=1e-5)


class TestSamples:
    def test_historical_plus_new(self):
        task = LearningErrorModel("cnn", 7.3, 0.69, 300, ("u1",))
        links = {"u1": UserLink("u1", 1e-9, 6276, 1e4)}
        assert samples_for_task(task, {"u1": 627600.0}, links) == pytest.approx(400.0)

    def test_zero_bits(self):
        task = LearningErrorModel("m", 1, 1, 5, ("u1", "u2"))
        links = {u: UserLink(u, 1e-9, 10, 10) for u in ("u1", "u2")}
        assert samples_for_task(task, {"u1": 0.0, "u2": 0.0}, links) == 5.0

    def test_floor_view(self):
        task = LearningErrorModel("m", 1, 1, 0, ("u1",))
        links = {"u1": UserLink("u1", 1e-9, 324, 100)}
        assert samples_for_task(task, {"u1": 324 * 10.5}, links) == pytest.approx(10.5)
        assert samples_for_task(task, {"u1": 324 * 10.5}, links, integer=True) == 10

    def test_floor_is_per_user(self):
        task = LearningErrorModel("m", 1, 1, 0, ("u1", "u2"))
        links = {u: UserLink(u, 1e-9, 1, 100) for u in ("u1", "u2")}
        assert samples_for_task(task, {"u1": 0.6, "u2": 0.6}, links, integer=True) == 0


class TestErrorCurve:
    @pytest.mark.parametrize("a,b,v,expected", [
        (1.0, 1.0, 10.0, 0.1),
        (7.3, 0.69, 300.0, 7.3 * 300 ** -0.69),
        (3.95, 0.5, 137.0, 3.95 / math.sqrt(137)),
    ])
    def test_predicted(self, a, b, v, expected):
        task = LearningErrorModel("m", a, b, 0, ("u",))
        assert predicted_error(task, v) == pytest.approx(expected, rel=1e-12)

    def test_reference_values(self):
        assert predicted_error(LearningErrorModel("m", 7.3, 0.69, 0, ("u",)), 300) == pytest.approx(0.1427, abs=5e-4)
        assert predicted_error(LearningErrorModel("m", 3.95, 0.5, 0, ("u",)), 137) == pytest.approx(0.3375, abs=1e-4)

    def test_nonpositive_v(self):
        with pytest.raises(DomainError):
            predicted_error(LearningErrorModel("m", 1, 1, 0, ("u",)), 0.0)

    def test_required_met_by_history(self):
        task = LearningErrorModel("m", 2.0, 0.5, 100, ("u",))
        assert required_samples(task, 2.0 * 100 ** -0.5) == 0.0
        assert required_samples(task, 0.5) == 0.0

    def test_required_values(self):
        assert required_samples(LearningErrorModel("m", 1, 1, 2, ("u",)), 0.1) == pytest.approx(8.0)
        assert required_samples(LearningErrorModel("m", 3.95, 0.5, 0, ("u",)), 0.3375) == pytest.approx(137, abs=0.1)

    def test_required_rejects_zero(self):
        with pytest.raises(DomainError):
            required_samples(LearningErrorModel("m", 1, 1, 0, ("u",)), 0.0)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.5, 10), st.floats(0.1, 1.5), st.floats(0, 500), st.floats(1e-4, 0.9))
    def test_inverse_pair(self, a, b, c, u):
        task = LearningErrorModel("m", a, b, c, ("u",))
        n = required_samples(task, u)
        if n > 0:
            assert predicted_error(task, n + c) == pytest.approx(u, rel=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.5, 10), st.floats(0.1, 1.5))
    def test_strictly_decreasing(self, a, b):
        task = LearningErrorModel("m", a, b, 0, ("u",))
        vals = [predicted_error(task, v) for v in np.geomspace(1, 1e6, 50)]
        assert all(x > y for x, y in zip(vals, vals[1:]))


class TestTypes:
    @pytest.mark.parametrize("kw", [dict(a=0), dict(b=-1), dict(c=-1), dict(users=())])
    def test_task_invariants(self, kw):
        args = dict(task_id="m", a=1.0, b=1.0, c=0.0, users=("u",))
        args.update(kw)
        with pytest.raises(DomainError):
            LearningErrorModel(**args)

    @pytest.mark.parametrize("args", [("u", -1, 1, 1), ("u", 1, 0, 1), ("u", 1, 1, 0), ("u", 1, 1, 1, -2.0)])
    def test_user_invariants(self, args):
        with pytest.raises(DomainError):
            UserLink(*args)

    @pytest.mark.parametrize("args", [(0, 1), (1, 0), (1, 1, 0), (1, 1, 1.5)])
    def test_radio_invariants(self, args):
        with pytest.raises(DomainError):
            RadioParams(*args)

    def test_budgets(self):
        with pytest.raises(DomainError):
            Budgets(1, 1, 0)
        with pytest.raises(DomainError):
            Budgets(-1, 1, 1)

    def test_unknown_user(self):
        with pytest.raises(InputError, match="unknown user"):
            Scenario([LearningErrorModel("m", 1, 1, 0, ("x",))], [UserLink("u", 1, 1, 1)], RADIO,
                     Budgets(1, 1, 1))

    def test_orphan_user(self):
        users = [UserLink("u", 1, 1, 1), UserLink("w", 1, 1, 1)]
        with pytest.raises(InputError, match="not in any task"):
            Scenario([LearningErrorModel("m", 1, 1, 0, ("u",))], users, RADIO, Budgets(1, 1, 1))

    def test_overlap_needs_opt_in(self):
        users = [UserLink("u", 1, 1, 1)]
        tasks = [LearningErrorModel("m", 1, 1, 0, ("u",)), LearningErrorModel("n", 1, 1, 0, ("u",))]
        with pytest.raises(InputError, match="allow_overlap"):
            Scenario(tasks, users, RADIO, Budgets(1, 1, 1))
        sc = Scenario(tasks, users, RADIO, Budgets(1, 1, 1), allow_overlap=True)
        assert sc.overlapping

    def test_eligibility_flag(self):
        assert two_task_scenario(t_max=50, e_max=1.5, p_max=0.03).ranking_eligible
        assert not two_task_scenario(t_max=50, e_max=1.49, p_max=0.03).ranking_eligible


class TestEvaluate:
    def test_all_zero_uses_history(self):
        sc = two_task_scenario()
        zero = {u.user_id: 0.0 for u in sc.users}
        alloc = evaluate_allocation(sc, zero, zero)
        assert alloc.objective == pytest.approx(max(7.3 * 300 ** -0.69, 6.24 * 200 ** -0.72))

    def test_fixed_rate_reference(self):
        sc = fixed_rate_scenario()
        alloc = evaluate_allocation(sc, {"v1": 13.7, "v2": 2.29}, {"v1": 0.0, "v2": 0.0})
        assert alloc.objective == pytest.approx(0.337, abs=1e-3)

    @pytest.mark.parametrize("field,value,match", [
        ("time", 60.0, "total time"),
        ("energy", 11.0, "total energy"),
    ])
    def test_budget_violations(self, field, value, match):
        sc = two_task_scenario()
        t = {u.user_id: 0.0 for u in sc.users}
        e = dict(t)
        (t if field == "time" else e)["u1"] = value
        if field == "energy":
            t["u1"] = 49.0
        with pytest.raises(ValidationError, match=match):
            evaluate_allocation(sc, t, e)

    def test_power_violation(self):
        sc = two_task_scenario(sizes=(1e9,) * 4)
        t = {u.user_id: 1.0 for u in sc.users}
        e = {u.user_id: 0.0 for u in sc.users}
        e["u2"] = 0.5
        with pytest.raises(ValidationError, match="p_max") as info:
            evaluate_allocation(sc, t, e)
        assert len(info.value.violations) == 1

    def test_cap_violation_and_truncation(self):
        sc = two_task_scenario(sizes=(1.0, 600, 600, 600))
        t = {u.user_id: 1.0 for u in sc.users}
        e = {u.user_id: 0.03 for u in sc.users}
        with pytest.raises(ValidationError, match="exceed dataset"):
            evaluate_allocation(sc, t, e)
        alloc = evaluate_allocation(sc, t, e, truncate=True)
        assert alloc.bits["u1"] == pytest.approx(6276.0)

    def test_objective_recomputable(self, rng):
        sc = two_task_scenario(sizes=(1e9,) * 4)
        t = dict(zip([u.user_id for u in sc.users], rng.uniform(0, 5, 4)))
        e = {k: 0.5 * 0.03 * v for k, v in t.items()}
        alloc = evaluate_allocation(sc, t, e)
        assert alloc.objective == worst_error(sc, [alloc.samples_per_task[x.task_id] for x in sc.tasks])
        assert Allocation.from_dict(alloc.to_dict()) == alloc

    def test_missing_user(self):
        sc = two_task_scenario()
        with pytest.raises(InputError):
            evaluate_allocation(sc, {"u1": 1.0}, {"u1": 0.0})
