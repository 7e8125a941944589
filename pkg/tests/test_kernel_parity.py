"""Cross-backend checks: the compiled kernels against the numpy reference.

Iterates evolve through elementwise arithmetic only, so final points,
retained iterates, and phase sums must match bit for bit on the quadratic
and bounded-nonconvex kernels; scalar summaries are reductions and are
compared to rounding accuracy.  The logistic kernel's dot products reduce
in BLAS order in the fallback, so its trajectories are compared with a
small tolerance instead.
"""

import numpy as np
import pytest

from stepdecay_lab import schedules as S
from stepdecay_lab._kernel import _pykernels

cy = pytest.importorskip("stepdecay_lab._kernel._cykernels")


def _schedule_arrays(T, eta0=0.3, alpha=2.0):
    spec, _ = S.step_decay_spec(eta0, alpha, T, S.STRONGLY_CONVEX)
    return S.eta_sequence(spec, T), S.schedule_phases(spec, T)


def _compare(a, b, summary_rtol=1e-13):
    for name, pa, pb in (("f", a[0], b[0]), ("gn2", a[1], b[1]), ("dist2", a[2], b[2])):
        np.testing.assert_allclose(pa, pb, rtol=summary_rtol, atol=1e-300, err_msg=name)
    np.testing.assert_array_equal(a[3], b[3], err_msg="phase_sums")
    np.testing.assert_array_equal(a[4], b[4], err_msg="retained")
    np.testing.assert_array_equal(a[5], b[5], err_msg="x_final")
    assert a[6] == b[6]


@pytest.mark.parametrize("proj_kind", [0, 1])
def test_quadratic_parity_bitwise(proj_kind):
    rng = np.random.default_rng(0)
    T, d = 2048, 7
    etas, phases = _schedule_arrays(T)
    lam = np.linspace(0.5, 3.0, d)
    x_star = rng.normal(size=d)
    noise = rng.standard_normal((T, d))
    proj = (proj_kind, np.full(d, -2.0), np.full(d, 2.0), np.zeros(d), 0.0)
    retain = np.array([1, 2, 100, T], dtype=np.int64)
    args = (np.ones(d), etas, phases, int(phases[-1]), lam, x_star, noise, proj, retain)
    _compare(_pykernels.run_quadratic(*args), cy.run_quadratic(*args))


def test_quadratic_parity_ball_projection():
    rng = np.random.default_rng(1)
    T, d = 512, 3
    etas, phases = _schedule_arrays(T, eta0=0.4)
    lam = np.ones(d)
    noise = 4.0 * rng.standard_normal((T, d))
    proj = (2, np.zeros(d), np.zeros(d), np.zeros(d), 0.8)
    retain = np.arange(1, T + 1, dtype=np.int64)
    args = (np.full(d, 0.5), etas, phases, int(phases[-1]), lam, np.zeros(d),
            noise, proj, retain)
    a, b = _pykernels.run_quadratic(*args), cy.run_quadratic(*args)
    # ball projection computes a norm (a reduction), so allow rounding slack
    np.testing.assert_allclose(a[5], b[5], rtol=1e-12)
    np.testing.assert_allclose(a[4], b[4], rtol=1e-12)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-11)


def test_bounded_nonconvex_parity_bitwise():
    rng = np.random.default_rng(2)
    T, d = 4096, 10
    spec, _ = S.step_decay_spec(0.5, 2.0, T, S.NONCONVEX)
    etas, phases = S.eta_sequence(spec, T), S.schedule_phases(spec, T)
    noise = 0.3 * rng.standard_normal((T, d))
    proj = (0, np.zeros(d), np.zeros(d), np.zeros(d), 0.0)
    retain = np.array([T], dtype=np.int64)
    args = (np.full(d, 1.5), etas, phases, int(phases[-1]), noise, proj, retain)
    _compare(_pykernels.run_bounded_nonconvex(*args), cy.run_bounded_nonconvex(*args))


def test_divergence_step_agrees():
    T, d = 2048, 1
    etas = np.full(T, 2.5)
    phases = np.ones(T, dtype=np.int64)
    proj = (0, np.zeros(d), np.zeros(d), np.zeros(d), 0.0)
    retain = np.empty(0, dtype=np.int64)
    args = (np.ones(d), etas, phases, 1, np.ones(d), np.zeros(d), None, proj, retain)
    a, b = _pykernels.run_quadratic(*args), cy.run_quadratic(*args)
    assert a[6] == b[6] > 0


def test_logistic_parity_close():
    from stepdecay_lab.data_io import synth_logistic_data

    ds = synth_logistic_data(120, 8, separation=2.0, seed=6)
    T, batch = 200, 16
    spec = S.ScheduleSpec(variant=S.CONSTANT, eta0=0.3)
    etas, phases = S.eta_sequence(spec, T), S.schedule_phases(spec, T)
    rng = np.random.default_rng(3)
    batches = np.stack([rng.permutation(ds.n)[:batch] for _ in range(T)])
    proj = (0, np.zeros(ds.d), np.zeros(ds.d), np.zeros(ds.d), 0.0)
    retain = np.array([1, T], dtype=np.int64)
    args = (np.zeros(ds.d), etas, phases, 1, ds.indptr, ds.indices, ds.data,
            ds.labels, 1e-3, batches, proj, retain)
    a, b = _pykernels.run_logistic(*args), cy.run_logistic(*args)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-9)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-8, atol=1e-14)
    np.testing.assert_allclose(a[5], b[5], rtol=1e-9, atol=1e-12)


def test_adversarial_finals_parity_bitwise():
    from stepdecay_lab.problems import make_adversarial_lower_bound

    T = 2048
    problem = make_adversarial_lower_bound(T, 2.0)
    layout = problem.kernel_params["layout"]
    plan = S.phase_partition(2.0, T, S.STRONGLY_CONVEX)
    spec = S.ScheduleSpec(variant=S.STEP_DECAY, eta0=1.0, alpha=2.0, S=plan.S)
    etas = S.eta_sequence(spec, T)
    active = np.empty((64, layout.length))
    for j in range(64):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=17, spawn_key=(j,)))
        z = -problem.noise_plan(rng, T)["noise"][:, 0]
        active[j] = z[layout.start - 1: layout.start - 1 + layout.length]
    a = _pykernels.adversarial_finals(etas, active, layout.start, -4.0, 4.0)
    b = cy.adversarial_finals(etas, active, layout.start, -4.0, 4.0)
    np.testing.assert_array_equal(a, b)


def test_finals_path_matches_full_trajectory_run():
    """The finals fast path and a full recorded run share every float."""
    from stepdecay_lab.optimizer import RunConfig, sgd_run
    from stepdecay_lab.problems import make_adversarial_lower_bound

    T = 1024
    problem = make_adversarial_lower_bound(T, 2.0)
    layout = problem.kernel_params["layout"]
    plan = S.phase_partition(2.0, T, S.STRONGLY_CONVEX)
    spec = S.ScheduleSpec(variant=S.STEP_DECAY, eta0=1.0, alpha=2.0, S=plan.S)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        traj = sgd_run(RunConfig(problem=problem, schedule=spec, T=T, seed=21,
                                 spawn_key=(0,), retention="summaries_only"))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=21, spawn_key=(0,)))
    z = -problem.noise_plan(rng, T)["noise"][:, 0]
    active = z[layout.start - 1: layout.start - 1 + layout.length][None, :]
    etas = S.eta_sequence(spec, T)
    final = _pykernels.adversarial_finals(etas, active, layout.start, -4.0, 4.0)
    assert final[0] == traj.final_iterate[0]
