"""Pure numpy implementations of the hot kernels.

Mirrors ``_ckernels.pyx`` function for function; used when the compiled
extension is unavailable or ``LCWRA_PURE_PYTHON=1`` is set.
"""
import numpy as np


def theta_values(t, e, snr, scale, fixed):
    t = np.asarray(t, dtype=float)
    e = np.asarray(e, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0.0
    x = np.zeros_like(t)
    x[pos] = snr[pos] * e[pos] / t[pos]
    out[pos] = scale[pos] * t[pos] * np.log1p(x[pos])
    fx = fixed > 0.0
    out[fx] = fixed[fx] * t[fx]
    return out


def theta_terms(t, e, snr, scale, fixed):
    """Value, gradient and Hessian entries of the rate perspective per user.

    Requires ``t > 0`` elementwise. Returns six arrays
    ``(value, d_t, d_e, h_tt, h_te, h_ee)``.
    """
    t = np.asarray(t, dtype=float)
    e = np.asarray(e, dtype=float)
    x = snr * e / t
    lx = np.log1p(x)
    inv = 1.0 / (1.0 + x)
    value = scale * t * lx
    d_t = scale * (lx - x * inv)
    d_e = scale * snr * inv
    w = scale * inv * inv / t
    h_tt = -w * x * x
    h_te = w * snr * x
    h_ee = -w * snr * snr
    fx = fixed > 0.0
    if fx.any():
        value = np.where(fx, fixed * t, value)
        d_t = np.where(fx, fixed, d_t)
        zero = np.zeros_like(t)
        d_e = np.where(fx, zero, d_e)
        h_tt = np.where(fx, zero, h_tt)
        h_te = np.where(fx, zero, h_te)
        h_ee = np.where(fx, zero, h_ee)
    return value, d_t, d_e, h_tt, h_te, h_ee


def greedy_fill(rates, sizes, demand):
    """Serve ``demand`` samples through entries already sorted by rate.

    Returns ``(times, unmet)``; ``unmet > 0`` means the entries hold fewer
    samples than demanded.
    """
    rates = np.asarray(rates, dtype=float)
    sizes = np.asarray(sizes, dtype=float)
    z = np.zeros(rates.shape[0])
    remaining = float(demand)
    if remaining <= 0.0:
        return z, 0.0
    for i in range(rates.shape[0]):
        take = min(sizes[i], remaining)
        z[i] = take / rates[i]
        remaining -= rates[i] * z[i]
        if remaining <= 0.0:
            return z, 0.0
    return z, remaining


def phase1_eval(y, derivs, G, h, task_w, task_off, t_scale, e_scale,
                snr, scale, fixed, tau_floor, weight):
    """Log-barrier of the phase-I feasibility problem.

    ``y = (tau, eps, s)`` holds normalized times, normalized energies and the
    common slack. Returns ``(phi, fmax, grad, hess)``; ``phi`` is ``inf``
    outside the barrier domain and ``grad``/``hess`` are ``None`` when
    ``derivs`` is false or the point is outside the domain.
    """
    k = task_w.shape[1]
    tau = y[:k]
    eps = y[k:2 * k]
    s = y[2 * k]
    gap_t = tau - tau_floor
    if np.any(gap_t <= 0.0) or np.any(eps <= 0.0):
        return np.inf, np.inf, None, None
    xt = tau * t_scale
    xe = eps * e_scale
    if derivs:
        val, d_t, d_e, h_tt, h_te, h_ee = theta_terms(xt, xe, snr, scale, fixed)
    else:
        val = theta_values(xt, xe, snr, scale, fixed)
    f_lin = G @ y[:2 * k] - h
    f_task = task_off - task_w @ val
    f = np.concatenate((f_lin, f_task))
    r = s - f
    fmax = float(f.max())
    if np.any(r <= 0.0):
        return np.inf, fmax, None, None
    phi = weight * s - np.log(r).sum() - np.log(gap_t).sum() - np.log(eps).sum()
    if not derivs:
        return phi, fmax, None, None

    n = 2 * k + 1
    # constraint gradients w.r.t. (tau, eps) in normalized units
    J = np.zeros((f.shape[0], n))
    J[:G.shape[0], :2 * k] = G
    J[G.shape[0]:, :k] = -task_w * (d_t * t_scale)
    J[G.shape[0]:, k:2 * k] = -task_w * (d_e * e_scale)
    J[:, 2 * k] = -1.0
    inv_r = 1.0 / r
    Jr = J * inv_r[:, None]
    grad = Jr.sum(axis=0)
    grad[2 * k] += weight
    grad[:k] -= 1.0 / gap_t
    grad[k:2 * k] -= 1.0 / eps
    hess = Jr.T @ Jr
    # curvature of the concave sample terms
    coef = task_w.T @ inv_r[G.shape[0]:]
    idx = np.arange(k)
    hess[idx, idx] -= coef * h_tt * t_scale * t_scale
    hess[idx, idx + k] -= coef * h_te * t_scale * e_scale
    hess[idx + k, idx] -= coef * h_te * t_scale * e_scale
    hess[idx + k, idx + k] -= coef * h_ee * e_scale * e_scale
    hess[idx, idx] += 1.0 / (gap_t * gap_t)
    hess[idx + k, idx + k] += 1.0 / (eps * eps)
    return phi, fmax, grad, hess
