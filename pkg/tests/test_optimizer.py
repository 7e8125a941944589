import math
import warnings

import numpy as np
import pytest

from stepdecay_lab import schedules as S
from stepdecay_lab.optimizer import (RunConfig, Trajectory, replicate, run_metrics,
                                     sgd_run, write_trajectory_csv)
from stepdecay_lab.problems import FeasibleSet, make_adversarial_lower_bound, \
    make_bounded_nonconvex, make_quadratic
from stepdecay_lab.data_io import synth_logistic_data
from stepdecay_lab.problems import make_logistic


def quadratic_1d(noise=None, feasible_set=None):
    return make_quadratic(1, [1.0], noise=noise, feasible_set=feasible_set)


def test_exact_contraction_run():
    config = RunConfig(problem=quadratic_1d(),
                       schedule=S.ScheduleSpec(variant=S.CONSTANT, eta0=0.5),
                       T=4, x0=np.array([1.0]))
    traj = sgd_run(config)
    assert traj.final_iterate[0] == 0.0625
    assert traj.final_f == 0.001953125
    # pre-update records: 1, 0.5, 0.25, 0.125
    assert np.array_equal(traj.f_value, 0.5 * np.array([1.0, 0.25, 0.0625, 0.015625]))
    assert traj.diverged_at is None


def test_divergence_detected_for_large_step():
    config = RunConfig(problem=quadratic_1d(),
                       schedule=S.ScheduleSpec(variant=S.CONSTANT, eta0=2.5),
                       T=10_000, x0=np.array([1.0]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        traj = sgd_run(config)
    assert traj.diverged_at is not None
    assert not np.isfinite(traj.final_iterate[0])
    # growth factor |1 - eta| = 1.5 before overflow
    assert np.all(np.isnan(traj.f_value[traj.diverged_at:]))


def test_two_dim_contraction_bound():
    p = make_quadratic(2, [1.0, 4.0])
    config = RunConfig(problem=p, schedule=S.ScheduleSpec(variant=S.CONSTANT, eta0=0.1),
                       T=100, x0=np.array([1.0, 1.0]))
    traj = sgd_run(config)
    # contraction factor max|1 - eta*lam| = 0.9 per step
    assert np.linalg.norm(traj.final_iterate) <= 0.9 ** 100 * math.sqrt(2.0) + 1e-300


def test_seed_determinism_and_spawn_separation():
    p = quadratic_1d(noise=("gaussian", 1.0))
    spec, _ = S.step_decay_spec(0.25, 2.0, 128, S.STRONGLY_CONVEX)
    config = RunConfig(problem=p, schedule=spec, T=128, x0=np.array([1.0]), seed=7)
    a, b = sgd_run(config), sgd_run(config)
    assert np.array_equal(a.f_value, b.f_value)
    assert np.array_equal(a.final_iterate, b.final_iterate)
    other = sgd_run(RunConfig(problem=p, schedule=spec, T=128, x0=np.array([1.0]),
                              seed=7, spawn_key=(1,)))
    assert not np.array_equal(a.final_iterate, other.final_iterate)


def test_eta_fidelity_and_phase_bookkeeping():
    spec, plan = S.step_decay_spec(0.25, 2.0, 300, S.STRONGLY_CONVEX)
    p = quadratic_1d(noise=("gaussian", 0.1))
    traj = sgd_run(RunConfig(problem=p, schedule=spec, T=300, x0=np.array([1.0])))
    expect = [S.step_size(spec, t, 300) for t in range(1, 301)]
    assert np.array_equal(traj.eta, np.asarray(expect))
    assert np.array_equal(traj.phase_lengths, plan.lengths())
    assert traj.phase_sums.shape == (plan.N, 1)
    # phase sums really are the sums of the per-phase pre-update iterates
    full = sgd_run(RunConfig(problem=p, schedule=spec, T=300, x0=np.array([1.0]),
                             retention="all"))
    for ph in range(1, plan.N + 1):
        members = [full.iterates[t][0] for t in range(1, 301) if full.phase[t - 1] == ph]
        assert traj.phase_sums[ph - 1, 0] == pytest.approx(sum(members), rel=1e-12)


def test_feasibility_of_recorded_iterates():
    fs = FeasibleSet.box(-0.5, 0.5, dimension=1)
    p = quadratic_1d(noise=("gaussian", 4.0), feasible_set=fs)
    spec = S.ScheduleSpec(variant=S.CONSTANT, eta0=0.4)
    traj = sgd_run(RunConfig(problem=p, schedule=spec, T=500, x0=np.array([0.4]),
                             retention="all", seed=3))
    for x in traj.iterates.values():
        assert -0.5 - 1e-12 <= x[0] <= 0.5 + 1e-12
    assert abs(traj.final_iterate[0]) <= 0.5 + 1e-12


def test_infeasible_start_is_projected():
    fs = FeasibleSet.ball([0.0, 0.0], 1.0)
    p = make_quadratic(2, [1.0, 1.0], feasible_set=fs)
    traj = sgd_run(RunConfig(problem=p, schedule=S.ScheduleSpec(variant=S.CONSTANT, eta0=0.1),
                             T=3, x0=np.array([3.0, 4.0]), retention="all"))
    assert np.allclose(traj.iterates[1], [0.6, 0.8], atol=1e-15)


def test_noise_free_descent_is_monotone():
    p = make_quadratic(3, [0.5, 1.0, 2.0])
    spec = S.ScheduleSpec(variant=S.INVERSE_SQRT_T, eta0=0.5, a0=0.3)
    traj = sgd_run(RunConfig(problem=p, schedule=spec, T=200,
                             x0=np.array([1.0, -2.0, 0.5])))
    f_path = np.append(traj.f_value, traj.final_f)
    assert np.all(np.diff(f_path) <= 1e-15)


def test_adversarial_requires_zero_start_and_stays_at_zero_before_noise():
    p = make_adversarial_lower_bound(256, 2.0)
    layout = p.kernel_params["layout"]
    spec = S.ScheduleSpec(variant=S.STEP_DECAY, eta0=1.0, alpha=2.0,
                          S=S.phase_partition(2.0, 256, S.STRONGLY_CONVEX).S)
    with pytest.raises(Exception, match="start at x = 0"):
        sgd_run(RunConfig(problem=p, schedule=spec, T=256, x0=np.array([1.0])))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        traj = sgd_run(RunConfig(problem=p, schedule=spec, T=256, retention="all"))
    for t in range(1, layout.start + 1):
        assert traj.iterates[t][0] == 0.0


def test_retention_policies():
    p = quadratic_1d(noise=("gaussian", 1.0))
    spec, plan = S.step_decay_spec(0.25, 2.0, 256, S.STRONGLY_CONVEX)
    base = dict(problem=p, schedule=spec, T=256, x0=np.array([1.0]), seed=1)
    t_all = sgd_run(RunConfig(**base, retention="all"))
    assert len(t_all.iterates) == 256
    t_final = sgd_run(RunConfig(**base, output_rules=("sample_inv_eta",)))
    first_of_final = 256 - plan.lengths()[-1] + 1
    assert set(t_final.iterates) >= set(range(first_of_final, 257))
    assert t_final.sampled_index["sample_inv_eta"] in t_final.iterates
    t_none = sgd_run(RunConfig(**base, retention="summaries_only"))
    assert len(t_none.iterates) == 0


def test_trajectory_csv_layout(tmp_path):
    config = RunConfig(problem=quadratic_1d(),
                       schedule=S.ScheduleSpec(variant=S.CONSTANT, eta0=0.5),
                       T=4, x0=np.array([1.0]))
    path = tmp_path / "traj.csv"
    write_trajectory_csv(sgd_run(config), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,phase,eta,f_value,grad_norm2,dist2_to_star"
    assert len(lines) == 1 + 4 + 1
    assert lines[-1].split(",")[3] == "0.001953125"


def test_replicate_single_rep_equals_run():
    p = quadratic_1d(noise=("gaussian", 1.0))
    spec = S.ScheduleSpec(variant=S.CONSTANT, eta0=0.2)
    config = RunConfig(problem=p, schedule=spec, T=64, x0=np.array([1.0]))
    summary = replicate(config, 1, base_seed=5)
    traj = sgd_run(RunConfig(problem=p, schedule=spec, T=64, x0=np.array([1.0]),
                             seed=5, spawn_key=(0,)))
    assert summary["final_f"].mean == traj.final_f
    assert summary["final_f"].std == 0.0 and summary["final_f"].ci_half == 0.0


def test_replicate_zero_noise_has_zero_std():
    config = RunConfig(problem=quadratic_1d(),
                       schedule=S.ScheduleSpec(variant=S.CONSTANT, eta0=0.2),
                       T=32, x0=np.array([1.0]))
    summary = replicate(config, 8, base_seed=0)
    assert summary["final_f"].std == 0.0


def test_replicate_thread_invariance_and_ci_consistency():
    p = quadratic_1d(noise=("gaussian", 1.0))
    spec, _ = S.step_decay_spec(0.25, 2.0, 256, S.STRONGLY_CONVEX)
    config = RunConfig(problem=p, schedule=spec, T=256, x0=np.array([1.0]))
    serial = replicate(config, 24, base_seed=9)
    threaded = replicate(config, 24, base_seed=9, threads=4)
    for name in serial.metrics:
        assert np.array_equal(serial[name].values, threaded[name].values)
    # disjoint seed groups agree within the sum of their CI half-widths
    a = replicate(config, 200, base_seed=100)["last_dist2"]
    b = replicate(config, 400, base_seed=200, spawn_prefix=(1,))["last_dist2"]
    assert abs(a.mean - b.mean) <= a.ci_half + b.ci_half


def test_replicate_propagates_divergence_counts():
    config = RunConfig(problem=quadratic_1d(noise=("gaussian", 0.01)),
                       schedule=S.ScheduleSpec(variant=S.CONSTANT, eta0=2.5),
                       T=8192, x0=np.array([1.0]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        summary = replicate(config, 4, base_seed=0)
    assert summary.n_diverged == 4
    assert summary["final_f"].n == 0


def test_precondition_warnings():
    p = make_quadratic(1, [4.0])  # L = mu = 4
    with pytest.warns(RuntimeWarning, match="1/L"):
        sgd_run(RunConfig(problem=p, schedule=S.ScheduleSpec(variant=S.CONSTANT, eta0=0.3),
                          T=4, x0=np.array([0.1])))


def test_logistic_run_records_full_objective():
    ds = synth_logistic_data(60, 5, separation=2.0, seed=2)
    p = make_logistic(ds, reg_lambda=1e-3, batch_size=8)
    spec = S.ScheduleSpec(variant=S.CONSTANT, eta0=0.1)
    traj = sgd_run(RunConfig(problem=p, schedule=spec, T=50, seed=4))
    assert traj.dist2_to_star is None
    assert traj.f_value[0] == pytest.approx(math.log(2.0), rel=1e-12)
    assert traj.final_f < traj.f_value[0]
    metrics = run_metrics(traj, RunConfig(problem=p, schedule=spec, T=50, seed=4))
    assert "last_dist2" not in metrics and "final_f" in metrics
