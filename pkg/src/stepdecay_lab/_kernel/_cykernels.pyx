# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled SGD inner loops; drop-in twin of ``_pykernels``.

Iterate updates replicate the fallback's elementwise arithmetic order, so
trajectories match it bit for bit on the quadratic and bounded-nonconvex
kernels (the logistic kernel's dot products reduce in a different order and
agree to rounding).  See ``_pykernels`` for the shared conventions.
"""

import numpy as np

from libc.math cimport exp, isfinite, log1p, sqrt

BACKEND_NAME = "compiled"


cdef inline void _project_c(double[::1] x, int proj_kind, double[::1] lo,
                            double[::1] hi, double[::1] center, double radius) noexcept nogil:
    cdef Py_ssize_t k, d = x.shape[0]
    cdef double norm2 = 0.0, delta, scale
    if proj_kind == 1:
        for k in range(d):
            if x[k] < lo[k]:
                x[k] = lo[k]
            elif x[k] > hi[k]:
                x[k] = hi[k]
    elif proj_kind == 2:
        for k in range(d):
            delta = x[k] - center[k]
            norm2 += delta * delta
        if norm2 > radius * radius:
            scale = radius / sqrt(norm2)
            for k in range(d):
                x[k] = center[k] + (x[k] - center[k]) * scale


cdef inline bint _finite(double[::1] x) noexcept nogil:
    cdef Py_ssize_t k
    for k in range(x.shape[0]):
        if not isfinite(x[k]):
            return 0
    return 1


def run_quadratic(x0, etas, phases, n_phases, lam, x_star, noise, proj, retain):
    cdef Py_ssize_t T = len(etas), d = len(x0)
    cdef double[::1] eta_v = np.ascontiguousarray(etas, dtype=np.float64)
    cdef long long[::1] phase_v = np.ascontiguousarray(phases, dtype=np.int64)
    cdef double[::1] lam_v = np.ascontiguousarray(lam, dtype=np.float64)
    cdef double[::1] xs_v = np.ascontiguousarray(x_star, dtype=np.float64)
    cdef long long[::1] retain_v = np.ascontiguousarray(retain, dtype=np.int64)
    cdef bint has_noise = noise is not None
    cdef double[:, ::1] noise_v = np.ascontiguousarray(
        noise if has_noise else np.empty((0, d)), dtype=np.float64)
    cdef int proj_kind = proj[0]
    cdef double[::1] lo = np.ascontiguousarray(proj[1], dtype=np.float64)
    cdef double[::1] hi = np.ascontiguousarray(proj[2], dtype=np.float64)
    cdef double[::1] center = np.ascontiguousarray(proj[3], dtype=np.float64)
    cdef double radius = proj[4]
    cdef Py_ssize_t n_sums = n_phases

    f = np.full(T, np.nan)
    gn2 = np.full(T, np.nan)
    dist2 = np.full(T, np.nan)
    phase_sums = np.zeros((n_sums, d))
    retained = np.full((len(retain), d), np.nan)
    xf = np.array(x0, dtype=np.float64)
    cdef double[::1] f_v = f, gn2_v = gn2, dist2_v = dist2
    cdef double[:, ::1] sums_v = phase_sums
    cdef double[:, ::1] ret_v = retained
    cdef double[::1] x = xf
    cdef double[::1] grad = np.empty(d)

    cdef Py_ssize_t t, k, ptr = 0, n_retain = retain_v.shape[0]
    cdef long long diverged_at = 0
    cdef double delta, ff, gg, dd, eta, g
    with nogil:
      for t in range(T):
        ff = 0.0
        gg = 0.0
        dd = 0.0
        for k in range(d):
            delta = x[k] - xs_v[k]
            g = lam_v[k] * delta
            grad[k] = g
            ff += lam_v[k] * (delta * delta)
            gg += g * g
            dd += delta * delta
        f_v[t] = 0.5 * ff
        gn2_v[t] = gg
        dist2_v[t] = dd
        if n_sums:
            for k in range(d):
                sums_v[phase_v[t] - 1, k] += x[k]
        while ptr < n_retain and retain_v[ptr] == t + 1:
            for k in range(d):
                ret_v[ptr, k] = x[k]
            ptr += 1
        eta = eta_v[t]
        if has_noise:
            for k in range(d):
                x[k] = x[k] - eta * (grad[k] + noise_v[t, k])
        else:
            for k in range(d):
                x[k] = x[k] - eta * grad[k]
        _project_c(x, proj_kind, lo, hi, center, radius)
        if not _finite(x):
            diverged_at = t + 1
            break
    return f, gn2, dist2, phase_sums, retained, xf, diverged_at


def run_bounded_nonconvex(x0, etas, phases, n_phases, noise, proj, retain):
    cdef Py_ssize_t T = len(etas), d = len(x0)
    cdef double[::1] eta_v = np.ascontiguousarray(etas, dtype=np.float64)
    cdef long long[::1] phase_v = np.ascontiguousarray(phases, dtype=np.int64)
    cdef long long[::1] retain_v = np.ascontiguousarray(retain, dtype=np.int64)
    cdef bint has_noise = noise is not None
    cdef double[:, ::1] noise_v = np.ascontiguousarray(
        noise if has_noise else np.empty((0, d)), dtype=np.float64)
    cdef int proj_kind = proj[0]
    cdef double[::1] lo = np.ascontiguousarray(proj[1], dtype=np.float64)
    cdef double[::1] hi = np.ascontiguousarray(proj[2], dtype=np.float64)
    cdef double[::1] center = np.ascontiguousarray(proj[3], dtype=np.float64)
    cdef double radius = proj[4]
    cdef Py_ssize_t n_sums = n_phases

    f = np.full(T, np.nan)
    gn2 = np.full(T, np.nan)
    dist2 = np.full(T, np.nan)
    phase_sums = np.zeros((n_sums, d))
    retained = np.full((len(retain), d), np.nan)
    xf = np.array(x0, dtype=np.float64)
    cdef double[::1] f_v = f, gn2_v = gn2, dist2_v = dist2
    cdef double[:, ::1] sums_v = phase_sums
    cdef double[:, ::1] ret_v = retained
    cdef double[::1] x = xf
    cdef double[::1] grad = np.empty(d)

    cdef Py_ssize_t t, k, ptr = 0, n_retain = retain_v.shape[0]
    cdef long long diverged_at = 0
    cdef double u, denom, ff, gg, dd, eta, g
    with nogil:
      for t in range(T):
        ff = 0.0
        gg = 0.0
        dd = 0.0
        for k in range(d):
            u = x[k] * x[k]
            denom = 1.0 + u
            g = (2.0 * x[k]) / (denom * denom)
            grad[k] = g
            ff += u / denom
            gg += g * g
            dd += u
        f_v[t] = ff
        gn2_v[t] = gg
        dist2_v[t] = dd
        if n_sums:
            for k in range(d):
                sums_v[phase_v[t] - 1, k] += x[k]
        while ptr < n_retain and retain_v[ptr] == t + 1:
            for k in range(d):
                ret_v[ptr, k] = x[k]
            ptr += 1
        eta = eta_v[t]
        if has_noise:
            for k in range(d):
                x[k] = x[k] - eta * (grad[k] + noise_v[t, k])
        else:
            for k in range(d):
                x[k] = x[k] - eta * grad[k]
        _project_c(x, proj_kind, lo, hi, center, radius)
        if not _finite(x):
            diverged_at = t + 1
            break
    return f, gn2, dist2, phase_sums, retained, xf, diverged_at


def run_logistic(x0, etas, phases, n_phases, indptr, indices, data, labels,
                 reg_lambda, batches, proj, retain):
    cdef Py_ssize_t T = len(etas), d = len(x0)
    cdef double[::1] eta_v = np.ascontiguousarray(etas, dtype=np.float64)
    cdef long long[::1] phase_v = np.ascontiguousarray(phases, dtype=np.int64)
    cdef long long[::1] indptr_v = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef long long[::1] indices_v = np.ascontiguousarray(indices, dtype=np.int64)
    cdef double[::1] data_v = np.ascontiguousarray(data, dtype=np.float64)
    cdef double[::1] labels_v = np.ascontiguousarray(labels, dtype=np.float64)
    cdef double reg = reg_lambda
    cdef long long[:, ::1] batch_v = np.ascontiguousarray(batches, dtype=np.int64)
    cdef long long[::1] retain_v = np.ascontiguousarray(retain, dtype=np.int64)
    cdef int proj_kind = proj[0]
    cdef double[::1] lo = np.ascontiguousarray(proj[1], dtype=np.float64)
    cdef double[::1] hi = np.ascontiguousarray(proj[2], dtype=np.float64)
    cdef double[::1] center = np.ascontiguousarray(proj[3], dtype=np.float64)
    cdef double radius = proj[4]
    cdef Py_ssize_t n = labels_v.shape[0], n_sums = n_phases
    cdef Py_ssize_t batch = batch_v.shape[1]

    f = np.full(T, np.nan)
    gn2 = np.full(T, np.nan)
    dist2 = np.full(T, np.nan)
    phase_sums = np.zeros((n_sums, d))
    retained = np.full((len(retain), d), np.nan)
    xf = np.array(x0, dtype=np.float64)
    cdef double[::1] f_v = f, gn2_v = gn2, dist2_v = dist2
    cdef double[:, ::1] sums_v = phase_sums
    cdef double[:, ::1] ret_v = retained
    cdef double[::1] x = xf
    cdef double[::1] grad = np.empty(d)

    cdef Py_ssize_t t, k, i, j, l, ptr = 0, n_retain = retain_v.shape[0]
    cdef long long diverged_at = 0, row
    cdef double s, margin, z, loss, coeff, gg, xx, eta, scale = 1.0 / batch
    with nogil:
      for t in range(T):
        loss = 0.0
        xx = 0.0
        for k in range(d):
            grad[k] = reg * x[k]
            xx += x[k] * x[k]
        for i in range(n):
            s = 0.0
            for l in range(indptr_v[i], indptr_v[i + 1]):
                s += data_v[l] * x[indices_v[l]]
            margin = labels_v[i] * s
            z = -margin
            if z > 0.0:
                loss += z + log1p(exp(-z))
            else:
                loss += log1p(exp(z))
            coeff = -labels_v[i] / (1.0 + exp(margin))
            for l in range(indptr_v[i], indptr_v[i + 1]):
                grad[indices_v[l]] += (data_v[l] * coeff) / n
        f_v[t] = loss / n + 0.5 * reg * xx
        gg = 0.0
        for k in range(d):
            gg += grad[k] * grad[k]
        gn2_v[t] = gg
        if n_sums:
            for k in range(d):
                sums_v[phase_v[t] - 1, k] += x[k]
        while ptr < n_retain and retain_v[ptr] == t + 1:
            for k in range(d):
                ret_v[ptr, k] = x[k]
            ptr += 1
        # minibatch gradient for the update
        for k in range(d):
            grad[k] = reg * x[k]
        for j in range(batch):
            row = batch_v[t, j]
            s = 0.0
            for l in range(indptr_v[row], indptr_v[row + 1]):
                s += data_v[l] * x[indices_v[l]]
            margin = labels_v[row] * s
            coeff = -labels_v[row] / (1.0 + exp(margin)) * scale
            for l in range(indptr_v[row], indptr_v[row + 1]):
                grad[indices_v[l]] += coeff * data_v[l]
        eta = eta_v[t]
        for k in range(d):
            x[k] = x[k] - eta * grad[k]
        _project_c(x, proj_kind, lo, hi, center, radius)
        if not _finite(x):
            diverged_at = t + 1
            break
    return f, gn2, dist2, phase_sums, retained, xf, diverged_at


def adversarial_finals(etas, active, start, lo, hi):
    cdef double[::1] eta_v = np.ascontiguousarray(etas, dtype=np.float64)
    cdef double[:, ::1] act_v = np.ascontiguousarray(active, dtype=np.float64)
    cdef Py_ssize_t T = eta_v.shape[0]
    cdef Py_ssize_t n_trials = act_v.shape[0], window = act_v.shape[1]
    cdef Py_ssize_t w0 = start - 1
    cdef double lo_c = lo, hi_c = hi
    out = np.empty(n_trials)
    cdef double[::1] out_v = out
    cdef Py_ssize_t trial, t
    cdef double x, eta
    with nogil:
      for trial in range(n_trials):
        x = 0.0
        for t in range(T):
            eta = eta_v[t]
            if w0 <= t < w0 + window:
                x = x - eta * (x - act_v[trial, t - w0])
            else:
                x = x - eta * x
            if x < lo_c:
                x = lo_c
            elif x > hi_c:
                x = hi_c
        out_v[trial] = x
    return out
