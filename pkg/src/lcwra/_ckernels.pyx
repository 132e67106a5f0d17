# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; see ``_pykernels`` for the contract."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, log1p, INFINITY

cnp.import_array()


def theta_values(double[::1] t, double[::1] e, double[::1] snr,
                 double[::1] scale, double[::1] fixed):
    cdef Py_ssize_t n = t.shape[0], i
    out = np.zeros(n)
    cdef double[::1] o = out
    for i in range(n):
        if fixed[i] > 0.0:
            o[i] = fixed[i] * t[i]
        elif t[i] > 0.0:
            o[i] = scale[i] * t[i] * log1p(snr[i] * e[i] / t[i])
    return out


cdef inline void _terms(double t, double e, double snr, double scale, double fixed,
                        double* v, double* dt, double* de,
                        double* htt, double* hte, double* hee) nogil:
    cdef double x, lx, inv, w
    if fixed > 0.0:
        v[0] = fixed * t
        dt[0] = fixed
        de[0] = 0.0
        htt[0] = 0.0
        hte[0] = 0.0
        hee[0] = 0.0
        return
    x = snr * e / t
    lx = log1p(x)
    inv = 1.0 / (1.0 + x)
    v[0] = scale * t * lx
    dt[0] = scale * (lx - x * inv)
    de[0] = scale * snr * inv
    w = scale * inv * inv / t
    htt[0] = -w * x * x
    hte[0] = w * snr * x
    hee[0] = -w * snr * snr


def theta_terms(double[::1] t, double[::1] e, double[::1] snr,
                double[::1] scale, double[::1] fixed):
    cdef Py_ssize_t n = t.shape[0], i
    value = np.empty(n)
    d_t = np.empty(n)
    d_e = np.empty(n)
    h_tt = np.empty(n)
    h_te = np.empty(n)
    h_ee = np.empty(n)
    cdef double[::1] v = value, a = d_t, b = d_e, c = h_tt, d = h_te, f = h_ee
    for i in range(n):
        _terms(t[i], e[i], snr[i], scale[i], fixed[i],
               &v[i], &a[i], &b[i], &c[i], &d[i], &f[i])
    return value, d_t, d_e, h_tt, h_te, h_ee


def greedy_fill(double[::1] rates, double[::1] sizes, double demand):
    cdef Py_ssize_t n = rates.shape[0], i
    z_arr = np.zeros(n)
    cdef double[::1] z = z_arr
    cdef double remaining = demand, take
    if remaining <= 0.0:
        return z_arr, 0.0
    for i in range(n):
        take = sizes[i] if sizes[i] < remaining else remaining
        z[i] = take / rates[i]
        remaining -= rates[i] * z[i]
        if remaining <= 0.0:
            return z_arr, 0.0
    return z_arr, remaining


def phase1_eval(double[::1] y, bint derivs, double[:, ::1] G, double[::1] h,
                double[:, ::1] task_w, double[::1] task_off, double t_scale,
                double e_scale, double[::1] snr, double[::1] scale,
                double[::1] fixed, double tau_floor, double weight):
    cdef Py_ssize_t k = task_w.shape[1], m_lin = G.shape[0], m_task = task_w.shape[0]
    cdef Py_ssize_t n = 2 * k + 1, m = m_lin + m_task
    cdef Py_ssize_t i, j, l, q
    cdef double s = y[2 * k], phi, fmax = -INFINITY, acc, fi, ri, g_t, g_e
    cdef double[::1] val = np.empty(k), dt = np.empty(k), de = np.empty(k)
    cdef double[::1] htt = np.empty(k), hte = np.empty(k), hee = np.empty(k)
    cdef double[::1] inv_r = np.empty(m)
    cdef double[:, ::1] J

    for i in range(k):
        if y[i] - tau_floor <= 0.0 or y[k + i] <= 0.0:
            return INFINITY, INFINITY, None, None
    for i in range(k):
        if derivs:
            _terms(y[i] * t_scale, y[k + i] * e_scale, snr[i], scale[i], fixed[i],
                   &val[i], &dt[i], &de[i], &htt[i], &hte[i], &hee[i])
        elif fixed[i] > 0.0:
            val[i] = fixed[i] * y[i] * t_scale
        else:
            val[i] = scale[i] * y[i] * t_scale * log1p(snr[i] * y[k + i] * e_scale / (y[i] * t_scale))

    phi = weight * s
    for i in range(m_lin):
        acc = -h[i]
        for j in range(2 * k):
            acc += G[i, j] * y[j]
        if acc > fmax:
            fmax = acc
        ri = s - acc
        inv_r[i] = 1.0 / ri if ri > 0.0 else -1.0
    for i in range(m_task):
        acc = task_off[i]
        for j in range(k):
            acc -= task_w[i, j] * val[j]
        if acc > fmax:
            fmax = acc
        ri = s - acc
        inv_r[m_lin + i] = 1.0 / ri if ri > 0.0 else -1.0
    for i in range(m):
        if inv_r[i] <= 0.0:
            return INFINITY, fmax, None, None
        phi += log(inv_r[i])
    for i in range(k):
        phi -= log(y[i] - tau_floor) + log(y[k + i])
    if not derivs:
        return phi, fmax, None, None

    J_arr = np.zeros((m, n))
    J = J_arr
    for i in range(m_lin):
        for j in range(2 * k):
            J[i, j] = G[i, j] * inv_r[i]
        J[i, 2 * k] = -inv_r[i]
    for i in range(m_task):
        l = m_lin + i
        for j in range(k):
            J[l, j] = -task_w[i, j] * dt[j] * t_scale * inv_r[l]
            J[l, k + j] = -task_w[i, j] * de[j] * e_scale * inv_r[l]
        J[l, 2 * k] = -inv_r[l]

    grad_arr = np.zeros(n)
    hess_arr = np.zeros((n, n))
    cdef double[::1] grad = grad_arr
    cdef double[:, ::1] hess = hess_arr
    for j in range(n):
        acc = 0.0
        for i in range(m):
            acc += J[i, j]
        grad[j] = acc
    grad[2 * k] += weight
    for j in range(n):
        for q in range(j, n):
            acc = 0.0
            for i in range(m):
                acc += J[i, j] * J[i, q]
            hess[j, q] = acc
            hess[q, j] = acc
    for j in range(k):
        acc = 0.0
        for i in range(m_task):
            acc += task_w[i, j] * inv_r[m_lin + i]
        g_t = y[j] - tau_floor
        g_e = y[k + j]
        grad[j] -= 1.0 / g_t
        grad[k + j] -= 1.0 / g_e
        hess[j, j] += -acc * htt[j] * t_scale * t_scale + 1.0 / (g_t * g_t)
        hess[j, k + j] -= acc * hte[j] * t_scale * e_scale
        hess[k + j, j] -= acc * hte[j] * t_scale * e_scale
        hess[k + j, k + j] += -acc * hee[j] * e_scale * e_scale + 1.0 / (g_e * g_e)
    return phi, fmax, grad_arr, hess_arr
