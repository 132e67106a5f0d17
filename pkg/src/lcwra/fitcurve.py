"""Inverse power law learning-curve fitting.

Fits ``err ~ a * v**(-b)`` by least squares in error space using damped
Gauss-Newton; the log-log linear regression only seeds the iteration.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConvergenceError, DomainError, InputError
from .model import LearningErrorModel

PARAM_FLOOR = 1e-9


@dataclass(frozen=True)
class ErrorCurvePoint:
    v: float
    err: float

    def __post_init__(self):
        if not self.v > 0:
            raise InputError(f"sample count must be > 0, got {self.v}")
        if not 0 < self.err < 1:
            raise InputError(f"error must lie in (0, 1), got {self.err}")


@dataclass(frozen=True)
class FitResult:
    a: float
    b: float
    residual_sse: float
    iterations: int
    gradient_norm: float = 0.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class FitConfig:
    tol: float = 1e-10
    max_iter: int = 500
    multi_start: bool = False
    n_starts: int = 8
    seed: int = 0


def points_from_arrays(v: Iterable[float], err: Iterable[float]) -> list[ErrorCurvePoint]:
    return [ErrorCurvePoint(float(x), float(y)) for x, y in zip(v, err)]


def log_linear_guess(v: np.ndarray, err: np.ndarray) -> tuple[float, float]:
    """Regress ``log err`` on ``log v``; the slope is clamped to stay positive."""
    lv, le = np.log(v), np.log(err)
    slope, intercept = np.polyfit(lv, le, 1)
    b = max(-slope, 1e-3)
    # refit the intercept for the clamped slope
    a = math.exp(float(np.mean(le + b * lv))) if b != -slope else math.exp(intercept)
    return a, b


def _residual_jacobian(p, v, lv, err):
    a, b = p
    pw = v ** (-b)
    r = a * pw - err
    J = np.column_stack((pw, -a * pw * lv))
    return r, J


def _gauss_newton(p0, v, err, cfg: FitConfig) -> FitResult:
    lv = np.log(v)
    p = np.maximum(np.asarray(p0, dtype=float), PARAM_FLOOR)
    r, J = _residual_jacobian(p, v, lv, err)
    sse = float(r @ r)
    grad = 2.0 * J.T @ r
    for it in range(1, cfg.max_iter + 1):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= cfg.tol:
            return FitResult(float(p[0]), float(p[1]), sse, it - 1, gnorm)
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        lam = 1.0
        improved = False
        while lam > 1e-12:
            trial = np.maximum(p + lam * step, PARAM_FLOOR)
            rt, Jt = _residual_jacobian(trial, v, lv, err)
            st = float(rt @ rt)
            if st < sse:
                improved = True
                break
            # SSE flat to rounding: accept if the gradient still shrinks
            if st <= sse * (1 + 8 * np.finfo(float).eps) and \
                    np.linalg.norm(Jt.T @ rt) * 2.0 < gnorm:
                improved = True
                break
            lam *= 0.5
        if not improved:
            # no representable descent left: stationary to machine precision
            # when the predicted decrease is below the rounding level of the SSE
            pred = float(np.sum((J @ step) ** 2))
            if pred <= 1e3 * np.finfo(float).eps * max(sse, np.finfo(float).tiny):
                return FitResult(float(p[0]), float(p[1]), sse, it, gnorm)
            break
        p, r, J, sse = trial, rt, Jt, st
        grad = 2.0 * J.T @ r
    best = FitResult(float(p[0]), float(p[1]), sse, cfg.max_iter, float(np.linalg.norm(grad)))
    raise ConvergenceError(
        f"power-law fit did not reach gradient norm {cfg.tol:g} (got {best.gradient_norm:.3g})",
        best=best)


def fit_power_law(points: Sequence[ErrorCurvePoint], config: FitConfig | None = None) -> FitResult:
    """Least-squares fit of ``(a, b)`` to measured learning-curve points.

    Raises
    ------
    InputError
        Fewer than two distinct sample counts.
    ConvergenceError
        Gradient tolerance not met within ``config.max_iter`` iterations;
        ``.best`` holds the last iterate.
    """
    cfg = config or FitConfig()
    if len({p.v for p in points}) < 2:
        raise InputError("need at least two points with distinct sample counts")
    v = np.array([p.v for p in points], dtype=float)
    err = np.array([p.err for p in points], dtype=float)
    start = log_linear_guess(v, err)
    if not cfg.multi_start:
        return _gauss_newton(start, v, err, cfg)

    rng = np.random.default_rng(cfg.seed)
    starts = [start] + [
        (start[0] * math.exp(rng.normal(0, 0.5)), start[1] * math.exp(rng.normal(0, 0.3)))
        for _ in range(cfg.n_starts - 1)
    ]
    best, last_exc = None, None
    for s in starts:
        try:
            res = _gauss_newton(s, v, err, cfg)
        except ConvergenceError as exc:
            last_exc = exc
            continue
        if best is None or res.residual_sse < best.residual_sse:
            best = res
    if best is None:
        raise last_exc
    return best


def perturb_parameters(task: LearningErrorModel, fraction: float,
                       rng: np.random.Generator) -> LearningErrorModel:
    """Copy of ``task`` with ``a`` and ``b`` drawn uniformly within ``±fraction``."""
    if not 0 <= fraction < 1:
        raise DomainError(f"fraction must lie in [0, 1), got {fraction}")
    if fraction == 0:
        return task
    a = rng.uniform(task.a * (1 - fraction), task.a * (1 + fraction))
    b = rng.uniform(task.b * (1 - fraction), task.b * (1 + fraction))
    return dataclasses.replace(task, a=float(a), b=float(b))
