"""Pure numpy SGD inner loops; reference twin of the compiled kernel.

Every function consumes pre-drawn randomness (noise matrices or minibatch
index tables), so runs are deterministic and both backends walk the exact
same float sequence.  Iterate updates use only elementwise arithmetic and
therefore match the compiled kernel bit for bit; scalar summaries (function
values, squared norms) are reductions and may differ in the last ulp.

Shared conventions:
  etas      float64 (T,) step sizes, 1-based iteration t stored at t-1
  phases    int64 (T,) 1-based phase index per iteration
  retain    int64 (k,) sorted 1-based iterations whose pre-update iterate
            is kept (the final post-update point is always returned)
  n_phases  phase-sum rows to accumulate; 0 disables the accumulator
  proj      (kind, lo, hi, center, radius); kind 0 = none, 1 = box, 2 = ball
  returns   (f, gn2, dist2, phase_sums, retained, x_final, diverged_at)
            with diverged_at = 0 when the run stayed finite
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def _project(x, proj):
    kind, lo, hi, center, radius = proj
    if kind == 1:
        np.clip(x, lo, hi, out=x)
    elif kind == 2:
        delta = x - center
        norm2 = float(delta @ delta)
        if norm2 > radius * radius:
            x[:] = center + delta * (radius / np.sqrt(norm2))
    return x


def _alloc(T, n_phases, d, n_retain):
    f = np.full(T, np.nan)
    gn2 = np.full(T, np.nan)
    dist2 = np.full(T, np.nan)
    phase_sums = np.zeros((n_phases, d))
    retained = np.full((n_retain, d), np.nan)
    return f, gn2, dist2, phase_sums, retained


def run_quadratic(x0, etas, phases, n_phases, lam, x_star, noise, proj, retain):
    """SGD on 0.5 (x-x*)' diag(lam) (x-x*) with additive gradient noise."""
    T = len(etas)
    d = len(x0)
    f, gn2, dist2, phase_sums, retained = _alloc(T, n_phases, d, len(retain))
    x = np.array(x0, dtype=np.float64)
    ptr = 0
    diverged_at = 0
    for t in range(T):
        delta = x - x_star
        grad = lam * delta
        f[t] = 0.5 * float(lam @ (delta * delta))
        gn2[t] = float(grad @ grad)
        dist2[t] = float(delta @ delta)
        if n_phases:
            phase_sums[phases[t] - 1] += x
        while ptr < len(retain) and retain[ptr] == t + 1:
            retained[ptr] = x
            ptr += 1
        if noise is not None:
            grad = grad + noise[t]
        x = x - etas[t] * grad
        _project(x, proj)
        if not np.all(np.isfinite(x)):
            diverged_at = t + 1
            break
    return f, gn2, dist2, phase_sums, retained, x, diverged_at


def run_bounded_nonconvex(x0, etas, phases, n_phases, noise, proj, retain):
    """SGD on sum_k x_k^2/(1+x_k^2) with additive gaussian gradient noise."""
    T = len(etas)
    d = len(x0)
    f, gn2, dist2, phase_sums, retained = _alloc(T, n_phases, d, len(retain))
    x = np.array(x0, dtype=np.float64)
    ptr = 0
    diverged_at = 0
    for t in range(T):
        u = x * x
        denom = 1.0 + u
        grad = 2.0 * x / (denom * denom)
        f[t] = float(np.sum(u / denom))
        gn2[t] = float(grad @ grad)
        dist2[t] = float(x @ x)
        if n_phases:
            phase_sums[phases[t] - 1] += x
        while ptr < len(retain) and retain[ptr] == t + 1:
            retained[ptr] = x
            ptr += 1
        if noise is not None:
            grad = grad + noise[t]
        x = x - etas[t] * grad
        _project(x, proj)
        if not np.all(np.isfinite(x)):
            diverged_at = t + 1
            break
    return f, gn2, dist2, phase_sums, retained, x, diverged_at


def run_logistic(x0, etas, phases, n_phases, indptr, indices, data, labels,
                 reg_lambda, batches, proj, retain):
    """Minibatch SGD on L2-regularized logistic loss over CSR rows.

    Summaries use the full-dataset objective and gradient; the update uses
    the minibatch rows given in ``batches`` (one row of indices per step).
    The minimizer is unknown, so the dist2 column stays NaN.
    """
    T = len(etas)
    d = len(x0)
    n = len(labels)
    f, gn2, dist2, phase_sums, retained = _alloc(T, n_phases, d, len(retain))
    x = np.array(x0, dtype=np.float64)
    row_of_nnz = np.repeat(np.arange(n), np.diff(indptr))
    ptr = 0
    diverged_at = 0
    for t in range(T):
        margins = labels * np.bincount(row_of_nnz, weights=data * x[indices], minlength=n)
        f[t] = float(np.mean(np.logaddexp(0.0, -margins))) + 0.5 * reg_lambda * float(x @ x)
        coeff = -labels / (1.0 + np.exp(margins))
        full_grad = np.bincount(indices, weights=data * coeff[row_of_nnz], minlength=d) / n \
            + reg_lambda * x
        gn2[t] = float(full_grad @ full_grad)
        if n_phases:
            phase_sums[phases[t] - 1] += x
        while ptr < len(retain) and retain[ptr] == t + 1:
            retained[ptr] = x
            ptr += 1
        grad = reg_lambda * x
        rows = batches[t]
        scale = 1.0 / len(rows)
        for i in rows:
            lo, hi = indptr[i], indptr[i + 1]
            idx = indices[lo:hi]
            val = data[lo:hi]
            margin = labels[i] * float(val @ x[idx])
            c = -labels[i] / (1.0 + np.exp(margin)) * scale
            grad[idx] += c * val
        x = x - etas[t] * grad
        _project(x, proj)
        if not np.all(np.isfinite(x)):
            diverged_at = t + 1
            break
    return f, gn2, dist2, phase_sums, retained, x, diverged_at


def adversarial_finals(etas, active, start, lo, hi):
    """Final iterates of many runs of the lower-bound construction at once.

    Gradient is x - z with z nonzero only on the window of ``active``
    (shape (n_trials, window_len); window starts at 1-based step ``start``).
    All trials start at x = 0 and are clipped to [lo, hi] each step.
    Row i reproduces exactly what a full per-trial run would produce.
    """
    T = len(etas)
    n_trials, window = active.shape
    x = np.zeros(n_trials)
    for t in range(T):
        eta = etas[t]
        if start - 1 <= t < start - 1 + window:
            z = active[:, t - (start - 1)]
            x = x - eta * (x - z)
        else:
            x = x - eta * x
        np.clip(x, lo, hi, out=x)
    return x
