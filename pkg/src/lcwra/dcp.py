"""Successive convex approximation solver for the general problem.

The dataset cap ``theta_k(t, e) <= |D_k| * D_k`` is the only nonconvex
constraint. Each outer iteration replaces ``theta_k`` in the cap by its
tangent plane at the current point, which over-estimates the concave
``theta_k``, so every iterate stays feasible and the worst error never
increases. The convex subproblem is solved in epigraph form: bisection on
the error level ``u``, each level tested by a phase-I log-barrier method
with damped Newton steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from . import kernels
from .errors import DomainError, SolverError, ValidationError
from .model import T_FLOOR, Allocation, Scenario, evaluate_allocation


@dataclass(frozen=True)
class SurrogateConstraint:
    user_id: str
    anchor: tuple[float, float]
    value_at_anchor: float
    gradient: tuple[float, float]
    cap: float

    def value(self, t, e):
        """Tangent-plane estimate of the user's bits at ``(t, e)``."""
        return (self.value_at_anchor + (t - self.anchor[0]) * self.gradient[0]
                + (e - self.anchor[1]) * self.gradient[1])


@dataclass(frozen=True)
class InnerStats:
    bisection_steps: int
    newton_steps: int
    max_violation: float
    stationarity: float
    objective: float


@dataclass
class DcpTrace:
    objectives: list[float] = field(default_factory=list)
    inner_stats: list[InnerStats] = field(default_factory=list)
    iterates: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    termination: str = "max_iterations"
    kkt_residual: float = math.nan

    def to_dict(self) -> dict:
        return {
            "objectives": list(self.objectives),
            "inner_stats": [vars(s) for s in self.inner_stats],
            "termination": self.termination,
            "kkt_residual": self.kkt_residual,
        }


@dataclass(frozen=True)
class InnerOptions:
    u_rtol: float = 1e-11
    gap_tol: float = 1e-10
    probe: float = 1e-6
    kkt_skip: float = 1e-7
    newton_tol: float = 1e-8
    mu: float = 20.0
    warm_factor: float = 10.0
    max_newton: int = 5000


def _check(scenario: Scenario):
    b = scenario.budgets
    if not (b.t_max > 0 and b.e_max > 0):
        raise DomainError("the DCP solver needs t_max > 0 and e_max > 0")


def _thetas(scenario, t, e):
    return kernels.theta_values(np.ascontiguousarray(t, dtype=float),
                                np.ascontiguousarray(e, dtype=float),
                                scenario.snr_per_joule, scenario.rate_scale,
                                scenario.fixed_rates)


def task_errors(scenario: Scenario, t, e) -> np.ndarray:
    v = scenario.membership @ (_thetas(scenario, t, e) / scenario.bits_per_sample)
    v = v + np.array([task.c for task in scenario.tasks])
    a = np.array([task.a for task in scenario.tasks])
    b = np.array([task.b for task in scenario.tasks])
    with np.errstate(divide="ignore"):
        return np.where(v > 0, a * np.power(np.maximum(v, 1e-300), -b), np.inf)


def initial_feasible_point(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Equal time split at the largest admissible energy, shrunk to fit the caps.

    Shrinking ``(t, e)`` by a common factor shrinks every user's bits by the
    same factor, so one scale factor restores all dataset caps.
    """
    _check(scenario)
    b = scenario.budgets
    K = len(scenario.users)
    t = np.full(K, b.t_max / K)
    e = np.minimum(b.p_max * t, b.e_max / K)
    bits = _thetas(scenario, t, e)
    caps = scenario.dataset_sizes * scenario.bits_per_sample
    with np.errstate(divide="ignore"):
        ratio = np.where(bits > 0, caps / bits, np.inf)
    scale = min(1.0, float(ratio.min()) * (1.0 - 1e-12))
    return _repair(scenario, t * scale, e * scale)


def build_surrogate(scenario: Scenario, t, e) -> list[SurrogateConstraint]:
    """Tangent planes of each user's bits at the anchor ``(t, e)``."""
    t = np.asarray(t, dtype=float)
    e = np.asarray(e, dtype=float)
    if np.any(t < 0) or np.any(e < 0):
        raise DomainError("surrogate anchor must be nonnegative")
    bad = (e > 0) & (t < T_FLOOR)
    if bad.any():
        raise DomainError("surrogate anchor has energy on a user with t < t_floor")
    tg = np.maximum(t, T_FLOOR)
    val0 = _thetas(scenario, t, e)
    _, d_t, d_e, *_ = kernels.theta_terms(tg, e, scenario.snr_per_joule,
                                          scenario.rate_scale, scenario.fixed_rates)
    out = []
    for k, user in enumerate(scenario.users):
        out.append(SurrogateConstraint(
            user_id=user.user_id, anchor=(float(t[k]), float(e[k])),
            value_at_anchor=float(val0[k]), gradient=(float(d_t[k]), float(d_e[k])),
            cap=user.cap_bits))
    return out


class _PhaseOne:
    """Phase-I barrier machinery for one convex subproblem (fixed surrogates)."""

    def __init__(self, scenario: Scenario, surrogates, opts: InnerOptions):
        b = scenario.budgets
        K = len(scenario.users)
        self.K = K
        self.sc = scenario
        self.opts = opts
        self.t_scale = b.t_max
        self.e_scale = b.e_max
        self.tau_floor = T_FLOOR / b.t_max
        G = np.zeros((2 + 2 * K, 2 * K))
        h = np.zeros(2 + 2 * K)
        G[0, :K] = 1.0
        h[0] = 1.0
        G[1, K:] = 1.0
        h[1] = 1.0
        ratio = b.e_max / (b.p_max * b.t_max)
        for k, s in enumerate(surrogates):
            G[2 + k, K + k] = ratio
            G[2 + k, k] = -1.0
            r = 2 + K + k
            G[r, k] = s.gradient[0] * b.t_max / s.cap
            G[r, K + k] = s.gradient[1] * b.e_max / s.cap
            h[r] = 1.0 - (s.value_at_anchor - s.gradient[0] * s.anchor[0]
                          - s.gradient[1] * s.anchor[1]) / s.cap
        self.G, self.h = G, h
        self.c = np.array([t.c for t in scenario.tasks])
        self.a = np.array([t.a for t in scenario.tasks])
        self.b = np.array([t.b for t in scenario.tasks])
        self.w_base = scenario.membership / scenario.bits_per_sample[None, :]
        self.m_total = G.shape[0] + len(scenario.tasks) + 2 * K
        self.newton_steps = 0

    def normalize(self, t, e):
        return np.concatenate((t / self.t_scale, e / self.e_scale))

    def center(self):
        K = self.K
        tau = np.full(K, 0.5 / K)
        b = self.sc.budgets
        eps = 0.5 * np.minimum(1.0 / K, b.p_max * b.t_max * tau / b.e_max)
        return np.concatenate((tau, eps))

    def interior(self, x, theta=1e-4):
        """Pull ``x`` slightly toward the center so hard bounds hold strictly."""
        return (1.0 - theta) * x + theta * self.center()

    def _max_step(self, y, dy):
        """Largest step (capped at 1) keeping every affine slack positive."""
        K = self.K
        x, dx = y[:2 * K], dy[:2 * K]
        r = np.concatenate((y[2 * K] - (self.G @ x - self.h), x[:K] - self.tau_floor, x[K:]))
        dr = np.concatenate((dy[2 * K] - self.G @ dx, dx))
        neg = dr < 0
        if not neg.any():
            return 1.0
        return min(1.0, 0.99 * float((-r[neg] / dr[neg]).min()))

    def feasible(self, u, x0):
        """Test whether error level ``u`` is attainable.

        Returns ``(True, x)`` with a strictly feasible witness, or
        ``(False, None)``.
        """
        req = (u / self.a) ** (-1.0 / self.b)
        task_w = np.ascontiguousarray(self.w_base / req[:, None])
        task_off = 1.0 - self.c / req
        sc, K = self.sc, self.K
        args = (self.G, self.h, task_w, task_off, self.t_scale, self.e_scale,
                sc.snr_per_joule, sc.rate_scale, sc.fixed_rates, self.tau_floor)
        y = np.concatenate((x0, [0.0]))
        _, fmax, _, _ = kernels.phase1_eval(y, False, *args, 0.0)
        if fmax < 0:
            return True, x0.copy()
        margin = min(0.1 * (1.0 + abs(fmax)), max(2.0 * abs(fmax), 1e-9))
        y[2 * K] = fmax + margin
        # a warm start close to feasibility does not need the early, flat
        # part of the central path
        weight = max(1.0, self.m_total / (self.opts.warm_factor * margin))
        opts = self.opts
        while True:
            for _ in range(200):
                phi, fmax, g, H = kernels.phase1_eval(y, True, *args, weight)
                self.newton_steps += 1
                if self.newton_steps > opts.max_newton:
                    raise SolverError("phase-I Newton budget exhausted",
                                      best=y[:2 * K].copy())
                try:
                    dy = np.linalg.solve(H, -g)
                except np.linalg.LinAlgError:
                    dy = -np.linalg.lstsq(H, g, rcond=None)[0]
                slope = float(g @ dy)
                if -slope / 2.0 <= opts.newton_tol:
                    break
                step = self._max_step(y, dy)
                # the barrier is only accurate to ~1e-8 near the boundary, so a
                # long run of halvings means we are centered as well as we can be
                floor_step = step * 1e-6
                while step > floor_step:
                    yn = y + step * dy
                    phin, fmaxn, _, _ = kernels.phase1_eval(yn, False, *args, weight)
                    if phin <= phi + 0.25 * step * slope:
                        break
                    step *= 0.5
                else:
                    break
                y = yn
                if fmaxn < 0:
                    return True, y[:2 * K].copy()
            gap = self.m_total / weight
            if y[2 * K] - 2.0 * gap > 0:
                return False, None
            if gap < opts.gap_tol:
                _, fmax, _, _ = kernels.phase1_eval(y, False, *args, weight)
                return (True, y[:2 * K].copy()) if fmax < 0 else (False, None)
            weight *= opts.mu


def _lower_bound(scenario: Scenario) -> float:
    """Worst error if every task could have all resources and all its data."""
    b = scenario.budgets
    K = len(scenario.users)
    t = np.full(K, b.t_max)
    e = np.full(K, min(b.e_max, b.p_max * b.t_max))
    most = np.minimum(_thetas(scenario, t, e) / scenario.bits_per_sample, scenario.dataset_sizes)
    v = scenario.membership @ most + np.array([task.c for task in scenario.tasks])
    a = np.array([task.a for task in scenario.tasks])
    bb = np.array([task.b for task in scenario.tasks])
    with np.errstate(divide="ignore"):
        errs = np.where(v > 0, a * np.power(np.maximum(v, 1e-300), -bb), np.inf)
    return float(errs.max())


def _snap(t, e):
    small = t < 10 * T_FLOOR
    t = np.where(small, 0.0, t)
    e = np.where(small, 0.0, e)
    return t, e


def solve_convex_subproblem(scenario: Scenario, surrogates, anchor=None,
                            options: InnerOptions | None = None):
    """Minimize the worst error with linearized dataset caps.

    ``anchor`` (the point the surrogates were built at) is feasible for the
    subproblem and is returned unchanged if nothing better is found.
    Returns ``(t, e, InnerStats)``.
    """
    _check(scenario)
    opts = options or InnerOptions()
    p1 = _PhaseOne(scenario, surrogates, opts)
    if anchor is None:
        anchor = (np.array([s.anchor[0] for s in surrogates]),
                  np.array([s.anchor[1] for s in surrogates]))
    t0, e0 = (np.asarray(a, dtype=float) for a in anchor)
    u_hi = float(task_errors(scenario, t0, e0).max())
    best_t, best_e = t0, e0
    witness = p1.interior(p1.normalize(t0, e0))
    u_lo = _lower_bound(scenario)
    steps = 0
    if math.isfinite(u_hi) and kkt_residual(scenario, t0, e0, surrogates) <= opts.kkt_skip:
        # the anchor already solves this convex subproblem
        viol = _max_violation(scenario, surrogates, t0, e0)
        return t0, e0, InnerStats(0, 0, viol, 0.0, u_hi)

    if not math.isfinite(u_hi):
        # anchor reaches no finite error: find any finite feasible level first
        u = max(u_lo, 1e-12) * 2.0
        while u < 1e12:
            steps += 1
            ok, x = p1.feasible(u, witness)
            if ok:
                witness = x
                t_new, e_new = _snap(x[:p1.K] * p1.t_scale, x[p1.K:] * p1.e_scale)
                best_t, best_e = t_new, e_new
                u_hi = float(task_errors(scenario, t_new, e_new).max())
                break
            u_lo = u
            u *= 2.0

    best_obj = float(task_errors(scenario, best_t, best_e).max())
    first = True
    while math.isfinite(u_hi) and u_hi - u_lo > opts.u_rtol * u_hi:
        steps += 1
        u = 0.5 * (u_lo + u_hi)
        if first:
            # near a fixed point the anchor is almost optimal; probe just below it
            u = max(u, u_hi * (1.0 - opts.probe))
            first = False
        ok, x = p1.feasible(u, witness)
        if not ok:
            u_lo = u
            continue
        witness = x
        t_new, e_new = _snap(x[:p1.K] * p1.t_scale, x[p1.K:] * p1.e_scale)
        obj = float(task_errors(scenario, t_new, e_new).max())
        # the snapped witness may score slightly above u; the bracket still shrinks
        u_hi = min(u, obj)
        if obj <= best_obj:
            best_t, best_e, best_obj = t_new, e_new, obj

    viol = _max_violation(scenario, surrogates, best_t, best_e)
    stat = kkt_residual(scenario, best_t, best_e, surrogates)
    return best_t, best_e, InnerStats(steps, p1.newton_steps, viol, stat, best_obj)


def _max_violation(scenario, surrogates, t, e) -> float:
    b = scenario.budgets
    v = [t.sum() / b.t_max - 1.0, e.sum() / b.e_max - 1.0]
    v += list((e - b.p_max * t) / (b.p_max * b.t_max))
    v += [s.value(t[k], e[k]) / s.cap - 1.0 for k, s in enumerate(surrogates)]
    return max(0.0, float(max(v)))


def kkt_residual(scenario: Scenario, t, e, surrogates=None) -> float:
    """KKT residual of the epigraph problem ``min u`` at ``(t, e)``.

    Nonnegative multipliers for all constraints are fitted by least squares
    against stationarity plus complementary slackness, so nearly active
    constraints need no hand-picked activity threshold. Everything is in
    normalized units (times over ``t_max``, energies over ``e_max``, caps
    and errors relative). With ``surrogates=None`` the exact caps are used.

    Rates are not differentiable at an idle user (``t = 0``). Their
    stationarity rows are left out of the fit; instead each idle user adds
    the largest first-order gain from switching it on along any ray of
    power up to ``p_max``, priced at the fitted multipliers.
    """
    b = scenario.budgets
    K = len(scenario.users)
    M = len(scenario.tasks)
    n = 2 * K + 1
    t = np.asarray(t, dtype=float)
    e = np.asarray(e, dtype=float)
    tg = np.maximum(t, T_FLOOR)
    _, d_t, d_e, *_ = kernels.theta_terms(tg, e, scenario.snr_per_joule,
                                          scenario.rate_scale, scenario.fixed_rates)
    val = _thetas(scenario, t, e)
    D = scenario.bits_per_sample
    v = scenario.membership @ (val / D) + np.array([x.c for x in scenario.tasks])
    errs = task_errors(scenario, t, e)
    u = float(errs.max())
    if not math.isfinite(u):
        return math.inf
    idle = (t < 10 * T_FLOOR) & (scenario.fixed_rates == 0)
    cols, slack = [], []

    def add(value, grad_x, grad_u=0.0):
        g = np.zeros(n)
        g[:2 * K] = grad_x
        g[2 * K] = grad_u
        cols.append(g)
        slack.append(min(value, 0.0))

    # d(err_m / u) / d(samples of task m)
    sens = np.array([task.b * errs[m] / (v[m] * u) for m, task in enumerate(scenario.tasks)])
    for m in range(M):
        gx = np.zeros(2 * K)
        mem = scenario.membership[m]
        gx[:K] = -sens[m] * mem * d_t * b.t_max / D
        gx[K:] = -sens[m] * mem * d_e * b.e_max / D
        add(errs[m] / u - 1.0, gx, -1.0)
    add(t.sum() / b.t_max - 1.0, np.r_[np.ones(K), np.zeros(K)])
    add(e.sum() / b.e_max - 1.0, np.r_[np.zeros(K), np.ones(K)])
    ratio = b.e_max / (b.p_max * b.t_max)
    for k in range(K):
        gx = np.zeros(2 * K)
        gx[K + k] = ratio
        gx[k] = -1.0
        add((e[k] - b.p_max * t[k]) / (b.p_max * b.t_max), gx)
        cap = scenario.users[k].cap_bits
        if surrogates is None:
            cval, gt, ge = val[k], d_t[k], d_e[k]
        else:
            sg = surrogates[k]
            cval, (gt, ge) = sg.value(t[k], e[k]), sg.gradient
        gx = np.zeros(2 * K)
        gx[k] = gt * b.t_max / cap
        gx[K + k] = ge * b.e_max / cap
        add(cval / cap - 1.0, gx)
        gx = np.zeros(2 * K)
        gx[k] = -1.0
        add(-t[k] / b.t_max, gx)
        gx = np.zeros(2 * K)
        gx[K + k] = -1.0
        add(-e[k] / b.e_max, gx)
    A = np.vstack((np.array(cols).T, np.diag(slack)))
    target = np.zeros(A.shape[0])
    target[2 * K] = -1.0
    keep = np.r_[~idle, ~idle, True, np.ones(len(slack), dtype=bool)]
    lam, res = nnls(A[keep], target[keep], maxiter=50 * A.shape[1])
    if not idle.any():
        return float(res)
    lam_t, lam_e = lam[M], lam[M + 1]
    gains = []
    for k in np.flatnonzero(idle):
        beta = float(lam[:M] @ (sens * scenario.membership[:, k])) / D[k]
        q, c = scenario.snr_per_joule[k], scenario.rate_scale[k]
        # per unit of normalized time along a ray of power rho:
        # beta * t_max * c * log(1 + q rho) - lam_t - lam_e * rho * t_max / e_max
        price = lam_e * b.t_max / b.e_max
        if q == 0:
            rho = 0.0
        elif price <= 0:
            rho = b.p_max
        else:
            rho = min(b.p_max, max(0.0, beta * b.t_max * c / price - 1.0 / q))
        gain = beta * b.t_max * c * math.log1p(q * rho) - lam_t - price * rho
        gains.append(max(gain, 0.0))
    return float(math.hypot(res, float(np.linalg.norm(gains))))


def _p1_feasible(scenario: Scenario, t, e) -> bool:
    """Exact feasibility for the original problem, no tolerance."""
    b = scenario.budgets
    if (t < 0).any() or (e < 0).any() or t.sum() > b.t_max or e.sum() > b.e_max:
        return False
    if (e > b.p_max * t).any():
        return False
    return bool((_thetas(scenario, t, e) <= scenario.dataset_sizes * scenario.bits_per_sample).all())


def _repair(scenario: Scenario, t, e):
    """Pull a trial point back inside the per-user constraints.

    Negative entries are clipped, energy is capped at peak power, a user
    over its cap has ``(t, e)`` scaled down onto it, and finally everything
    is scaled onto the budgets. Scaling a slot and its energy together
    scales its bits by the same factor, so no repair breaks another.
    """
    b = scenario.budgets
    t = np.maximum(t, 0.0)
    e = np.minimum(np.maximum(e, 0.0), b.p_max * t)
    caps = scenario.dataset_sizes * scenario.bits_per_sample
    over = _thetas(scenario, t, e) / caps
    # a little inside the cap so the exact check below is not at the mercy of rounding
    scale = np.where(over > 1.0, (1.0 - 1e-12) / np.maximum(over, 1.0), 1.0)
    t, e = t * scale, e * scale
    # iterates usually sit on the budgets, where the chord overshoots by rounding
    lam = min(1.0, b.t_max / max(t.sum(), 1e-300), b.e_max / max(e.sum(), 1e-300))
    if lam < 1.0:
        lam *= 1.0 - 1e-15
        t, e = t * lam, e * lam
    return t, e


def _extrapolate(scenario: Scenario, old, new, obj: float, max_doublings: int = 12):
    """Push past ``new`` along ``new - old`` while the objective keeps dropping.

    Consecutive iterates creep along caps whose violating side
    ``{theta > cap}`` is convex, so points beyond both on their chord stay
    close to feasible; small violations are repaired. Only exactly feasible,
    strictly better points are returned; otherwise ``None``.
    """
    dt, de = new[0] - old[0], new[1] - old[1]
    if not (np.any(dt) or np.any(de)):
        return None
    best = None
    beta = 1.0
    for _ in range(max_doublings):
        trial = _repair(scenario, new[0] + beta * dt, new[1] + beta * de)
        if not _p1_feasible(scenario, *trial):
            break
        val = float(task_errors(scenario, *trial).max())
        if not val < (obj if best is None else best[2]):
            break
        best = (trial[0], trial[1], val)
        beta *= 2.0
    return best


def solve_dcp(scenario: Scenario, outer_tol: float = 1e-6, max_outer: int = 100, *,
              kkt_tol: float | None = 1e-4, extrapolate: bool = True, start=None,
              options: InnerOptions | None = None) -> tuple[Allocation, DcpTrace]:
    """Iterate tangent-plane surrogates to a KKT point of the full problem.

    Every iterate is checked against the exact caps. Stops when the relative
    change of the worst error drops below ``outer_tol`` and the KKT residual
    is at most ``kkt_tol`` (``None`` skips that check); iterates creeping
    along a curved cap can stall in objective well before they are
    stationary. With ``extrapolate`` each step is followed by a safeguarded
    push along the last displacement (kept only if exactly feasible and
    strictly better), which speeds up that creeping. Otherwise returns the
    last iterate with ``termination="max_iterations"``.
    """
    _check(scenario)
    if outer_tol <= 0:
        raise DomainError("outer_tol must be > 0")
    trace = DcpTrace()
    if start is None:
        t, e = initial_feasible_point(scenario)
    else:
        t, e = (np.asarray(x, dtype=float) for x in start)
    ids = [u.user_id for u in scenario.users]

    def alloc_of(t, e):
        return evaluate_allocation(scenario, dict(zip(ids, t.tolist())), dict(zip(ids, e.tolist())))

    try:
        alloc = alloc_of(t, e)
    except ValidationError:
        trace.termination = "infeasible_start"
        raise
    trace.objectives.append(alloc.objective)
    trace.iterates.append((t.copy(), e.copy()))

    for _ in range(max_outer):
        surr = build_surrogate(scenario, t, e)
        t_new, e_new, stats = solve_convex_subproblem(scenario, surr, (t, e), options)
        alloc_new = alloc_of(t_new, e_new)
        if extrapolate and math.isfinite(alloc_new.objective):
            jump = _extrapolate(scenario, (t, e), (t_new, e_new), alloc_new.objective)
            if jump is not None:
                t_new, e_new = jump[0], jump[1]
                alloc_new = alloc_of(t_new, e_new)
        trace.inner_stats.append(stats)
        prev = trace.objectives[-1]
        cur = alloc_new.objective
        trace.objectives.append(cur)
        trace.iterates.append((t_new.copy(), e_new.copy()))
        t, e, alloc = t_new, e_new, alloc_new
        if math.isfinite(prev) and math.isfinite(cur):
            if abs(prev - cur) <= outer_tol * max(abs(prev), 1e-300):
                if kkt_tol is None or kkt_residual(scenario, t, e) <= kkt_tol:
                    trace.termination = "converged"
                    break
        elif not math.isfinite(prev) and not math.isfinite(cur):
            trace.termination = "converged"
            break
    trace.kkt_residual = kkt_residual(scenario, t, e)
    return alloc, trace
