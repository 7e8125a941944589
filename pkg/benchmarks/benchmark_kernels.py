#!/usr/bin/env python3
"""Timing comparison of the compiled SGD kernels against the numpy fallback.

Runs the same pre-drawn inputs through both backends, checks that the final
iterates agree, and prints a table of per-kernel wall times and speedups.

    python benchmarks/benchmark_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from stepdecay_lab import schedules as S
from stepdecay_lab._kernel import _pykernels
from stepdecay_lab.data_io import synth_logistic_data
from stepdecay_lab.problems import make_adversarial_lower_bound

try:
    from stepdecay_lab._kernel import _cykernels
except ImportError:
    _cykernels = None


def _time(fn, repeat):
    best = float("inf")
    result = None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def build_cases():
    rng = np.random.default_rng(0)
    cases = []

    T, d = 2 ** 16, 1
    spec, _ = S.step_decay_spec(0.25, 2.0, T, S.STRONGLY_CONVEX)
    etas, phases = S.eta_sequence(spec, T), S.schedule_phases(spec, T)
    noise = rng.standard_normal((T, d))
    proj = (1, np.full(d, -4.0), np.full(d, 4.0), np.zeros(d), 0.0)
    args = (np.ones(d), etas, phases, int(phases[-1]), np.ones(d), np.zeros(d),
            noise, proj, np.empty(0, dtype=np.int64))
    cases.append((f"quadratic 1-D, T=2^16", "run_quadratic", args))

    T, d = 2 ** 14, 10
    spec, _ = S.step_decay_spec(0.5, 2.0, T, S.NONCONVEX)
    etas, phases = S.eta_sequence(spec, T), S.schedule_phases(spec, T)
    noise = 0.3 * rng.standard_normal((T, d))
    proj = (0, np.zeros(d), np.zeros(d), np.zeros(d), 0.0)
    args = (np.full(d, 1.0), etas, phases, int(phases[-1]), noise, proj,
            np.empty(0, dtype=np.int64))
    cases.append((f"bounded nonconvex d=10, T=2^14", "run_bounded_nonconvex", args))

    ds = synth_logistic_data(2000, 20, separation=2.0, seed=1)
    T, batch = 2000, 128
    spec = S.ScheduleSpec(variant=S.CONSTANT, eta0=0.1)
    etas, phases = S.eta_sequence(spec, T), S.schedule_phases(spec, T)
    batches = np.stack([rng.permutation(ds.n)[:batch] for _ in range(T)])
    proj = (0, np.zeros(ds.d), np.zeros(ds.d), np.zeros(ds.d), 0.0)
    args = (np.zeros(ds.d), etas, phases, 1, ds.indptr, ds.indices, ds.data,
            ds.labels, 1e-4, batches, proj, np.empty(0, dtype=np.int64))
    cases.append(("logistic n=2000 d=20 b=128, T=2000", "run_logistic", args))

    T = 65536
    problem = make_adversarial_lower_bound(T, 2.0)
    layout = problem.kernel_params["layout"]
    plan = S.phase_partition(2.0, T, S.STRONGLY_CONVEX)
    spec = S.ScheduleSpec(variant=S.STEP_DECAY, eta0=1.0, alpha=2.0, S=plan.S)
    etas = S.eta_sequence(spec, T)
    active = np.where(rng.random((200, layout.length)) < 0.5, 1.0, -1.0) / layout.nu
    args = (etas, active, layout.start, -4.0, 4.0)
    cases.append(("adversarial finals, 200 trials x 2^16 steps", "adversarial_finals", args))
    return cases


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3)
    opts = parser.parse_args()

    if _cykernels is None:
        print("compiled kernel unavailable; nothing to compare")
        return 1

    header = f"{'case':44s} {'python':>10s} {'compiled':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for label, fn_name, args in build_cases():
        t_py, r_py = _time(lambda: getattr(_pykernels, fn_name)(*args), opts.repeat)
        t_cy, r_cy = _time(lambda: getattr(_cykernels, fn_name)(*args), opts.repeat)
        final_py = r_py if fn_name == "adversarial_finals" else r_py[5]
        final_cy = r_cy if fn_name == "adversarial_finals" else r_cy[5]
        agree = np.allclose(final_py, final_cy, rtol=1e-9)
        print(f"{label:44s} {t_py:9.4f}s {t_cy:9.4f}s {t_py / t_cy:7.1f}x"
              + ("" if agree else "  MISMATCH"))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
