"""SGD driver: single runs with trajectory recording, and seeded replication.

A run executes x <- Pi(x - eta_t * g_hat) for t = 1..T with the step sizes
of a validated schedule, recording per-iteration summaries at the pre-update
points x_1..x_T (the support of the sampling output rules) plus the final
post-update point, which is what the last-iterate rule returns.

Randomness: a run owns one PCG64 generator seeded from
SeedSequence(entropy=seed, spawn_key=spawn_key) and consumes it in a fixed
documented order: first one uniform per configured sampling rule (the
pre-drawn output index), then the problem's vectorized noise plan.
Replications use spawn keys (rep 0 -> (0,), rep 1 -> (1,), ...), so any
subset of reps can be reproduced independently and results do not depend on
worker count or completion order.

Memory policy: per-iteration summaries are always kept; full iterates are
retained for the pre-drawn sample indices plus, by default, the whole final
phase.  Block schedules additionally accumulate per-phase iterate sums,
which is all the suffix-averaging rule needs.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernel
from .output_rules import (LAST_ITERATE, SAMPLE_ETA, SAMPLE_INV_ETA,
                           SUFFIX_WEIGHTED_AVERAGE, OutputRule, as_rule,
                           suffix_average, weights_from_etas)
from .problems import StochasticProblem, project
from .schedules import (CONSTANT, HAZAN_KALE, STEP_DECAY, ScheduleSpec,
                        eta_sequence, schedule_phases)

RETENTION_POLICIES = ("all", "final_phase_plus_sampled", "summaries_only")

# schedules whose phase blocks are few enough to accumulate iterate sums for
_BLOCK_VARIANTS = (STEP_DECAY, CONSTANT, HAZAN_KALE)


class RunError(ValueError):
    """Raised for invalid run configurations."""


@dataclass(frozen=True)
class RunConfig:
    problem: StochasticProblem
    schedule: ScheduleSpec
    T: int
    output_rules: tuple = (LAST_ITERATE,)
    seed: int = 0
    spawn_key: tuple = ()
    x0: np.ndarray | None = None
    retention: str = "final_phase_plus_sampled"

    def rules(self) -> tuple[OutputRule, ...]:
        return tuple(as_rule(r) for r in self.output_rules)


@dataclass
class Trajectory:
    """Per-iteration record of one run plus its selected-output bookkeeping."""

    T: int
    seed: int
    spawn_key: tuple
    schedule: ScheduleSpec
    problem_id: str
    eta: np.ndarray
    phase: np.ndarray
    f_value: np.ndarray
    grad_norm2: np.ndarray
    dist2_to_star: np.ndarray | None
    phase_sums: np.ndarray | None
    phase_lengths: np.ndarray
    phase_etas: np.ndarray
    iterates: dict
    final_iterate: np.ndarray
    final_f: float
    final_grad_norm2: float
    final_dist2: float | None
    sampled_index: dict
    diverged_at: int | None


def _proj_tuple(feasible_set, d):
    zeros = np.zeros(d)
    if feasible_set.kind == "box":
        return (1, feasible_set.lo, feasible_set.hi, zeros, 0.0)
    if feasible_set.kind == "ball":
        return (2, zeros, zeros, feasible_set.center, feasible_set.radius)
    return (0, zeros, zeros, zeros, 0.0)


def _precondition_warnings(problem, spec):
    c = problem.constants
    if c.L is not None and spec.eta0 > 1.0 / c.L + 1e-12:
        warnings.warn(
            f"eta0={spec.eta0} exceeds 1/L={1.0 / c.L:.6g}; smooth-case guarantees "
            "do not apply", RuntimeWarning, stacklevel=3)
    if c.mu is not None and c.mu > 0 and spec.eta0 >= 1.0 / (2.0 * c.mu) - 1e-12:
        warnings.warn(
            f"eta0={spec.eta0} is not below 1/(2*mu)={1.0 / (2.0 * c.mu):.6g}; "
            "strongly-convex guarantees do not apply", RuntimeWarning, stacklevel=3)


def sgd_run(config: RunConfig) -> Trajectory:
    """Execute one seeded run; deterministic given (config, seed, spawn_key)."""
    problem, spec, T = config.problem, config.schedule, int(config.T)
    spec.validate(T)
    rules = config.rules()
    if config.retention not in RETENTION_POLICIES:
        raise RunError(f"unknown retention policy {config.retention!r}")

    etas = eta_sequence(spec, T)
    phases = schedule_phases(spec, T)
    n_phases = int(phases[-1])
    track_sums = spec.variant in _BLOCK_VARIANTS
    _precondition_warnings(problem, spec)

    d = problem.dimension
    x0 = problem.default_x0 if config.x0 is None else np.asarray(config.x0, dtype=np.float64)
    x0 = np.broadcast_to(np.atleast_1d(x0), (d,)).astype(np.float64)
    if "layout" in problem.kernel_params and np.any(x0 != 0.0):
        raise RunError("the lower-bound instance must start at x = 0")
    x0 = project(problem.feasible_set, x0)

    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed,
                                                       spawn_key=tuple(config.spawn_key)))
    sampled = {}
    for rule in rules:
        if rule.kind in (SAMPLE_INV_ETA, SAMPLE_ETA) and rule.kind not in sampled:
            sampled[rule.kind] = int(weights_from_etas(etas, rule.kind).sample(rng))
    plan = problem.noise_plan(rng, T)

    retain = set(sampled.values())
    if config.retention == "all":
        retain.update(range(1, T + 1))
    elif config.retention == "final_phase_plus_sampled":
        first_of_final = int(np.searchsorted(phases, n_phases, side="left")) + 1
        retain.update(range(first_of_final, T + 1))
    retain_idx = np.asarray(sorted(retain), dtype=np.int64)

    proj = _proj_tuple(problem.feasible_set, d)
    kp = problem.kernel_params
    if problem.kernel_kind == "quadratic":
        out = _kernel.run_quadratic(x0, etas, phases, n_phases if track_sums else 0,
                                    kp["lam"], kp["x_star"], plan.get("noise"),
                                    proj, retain_idx)
    elif problem.kernel_kind == "bounded_nonconvex":
        out = _kernel.run_bounded_nonconvex(x0, etas, phases, n_phases if track_sums else 0,
                                            plan.get("noise"), proj, retain_idx)
    elif problem.kernel_kind == "logistic":
        out = _kernel.run_logistic(x0, etas, phases, n_phases if track_sums else 0,
                                   kp["indptr"], kp["indices"], kp["data"], kp["labels"],
                                   kp["reg_lambda"], plan["batches"], proj, retain_idx)
    else:
        raise RunError(f"no kernel for problem kind {problem.kernel_kind!r}")
    f_vals, gn2, dist2, phase_sums, retained, x_final, diverged_at = out

    has_star = problem.constants.x_star is not None
    final_ok = bool(np.all(np.isfinite(x_final)))
    final_f = problem.value(x_final) if final_ok else float("nan")
    final_g = problem.full_gradient(x_final) if final_ok else np.full(d, np.nan)
    final_dist2 = None
    if has_star:
        delta = x_final - problem.constants.x_star
        final_dist2 = float(delta @ delta) if final_ok else float("nan")

    phase_lengths = np.bincount(phases, minlength=n_phases + 1)[1:]
    first_idx = np.searchsorted(phases, np.arange(1, n_phases + 1), side="left")
    return Trajectory(
        T=T, seed=config.seed, spawn_key=tuple(config.spawn_key), schedule=spec,
        problem_id=problem.problem_id,
        eta=etas, phase=phases, f_value=f_vals, grad_norm2=gn2,
        dist2_to_star=dist2 if has_star else None,
        phase_sums=phase_sums if track_sums else None,
        phase_lengths=phase_lengths, phase_etas=etas[first_idx],
        iterates={int(t): retained[i] for i, t in enumerate(retain_idx)},
        final_iterate=x_final, final_f=final_f,
        final_grad_norm2=float(final_g @ final_g),
        final_dist2=final_dist2,
        sampled_index=sampled, diverged_at=int(diverged_at) or None,
    )


def write_trajectory_csv(trajectory: Trajectory, path) -> None:
    """Serialize a trajectory: T pre-update rows plus the final point.

    Columns t, phase, eta, f_value, grad_norm2, dist2_to_star; the extra row
    t = T+1 carries the post-update final iterate (absent quantities are
    written as nan).
    """
    from .data_io import write_csv

    dist2 = trajectory.dist2_to_star
    rows = [
        (t + 1, int(trajectory.phase[t]), trajectory.eta[t], trajectory.f_value[t],
         trajectory.grad_norm2[t], dist2[t] if dist2 is not None else float("nan"))
        for t in range(trajectory.T)
    ]
    rows.append((trajectory.T + 1, int(trajectory.phase[-1]), trajectory.eta[-1],
                 trajectory.final_f, trajectory.final_grad_norm2,
                 trajectory.final_dist2 if trajectory.final_dist2 is not None else float("nan")))
    write_csv(path, ("t", "phase", "eta", "f_value", "grad_norm2", "dist2_to_star"), rows)


def run_metrics(trajectory: Trajectory, config: RunConfig) -> dict:
    """Scalar error metrics of one finished run, keyed by metric name."""
    problem = config.problem
    c = problem.constants
    out = {"final_f": trajectory.final_f}
    if trajectory.final_dist2 is not None:
        out["last_dist2"] = trajectory.final_dist2
    if c.f_star is not None:
        out["last_f_gap"] = trajectory.final_f - c.f_star
    for rule in config.rules():
        if rule.kind in (SAMPLE_INV_ETA, SAMPLE_ETA):
            dist = weights_from_etas(trajectory.eta, rule.kind)
            name = "weighted_grad_norm2_inv_eta" if rule.kind == SAMPLE_INV_ETA \
                else "weighted_grad_norm2_eta"
            out[name] = float(dist.probs @ trajectory.grad_norm2)
        elif rule.kind == SUFFIX_WEIGHTED_AVERAGE:
            x_hat = suffix_average(trajectory, trajectory.schedule, rule.mu)
            out["suffix_f"] = problem.value(x_hat)
            if c.f_star is not None:
                out["suffix_f_gap"] = out["suffix_f"] - c.f_star
            if c.x_star is not None:
                delta = x_hat - c.x_star
                out["suffix_dist2"] = float(delta @ delta)
    return out


@dataclass
class MetricSummary:
    mean: float
    std: float
    ci_half: float
    n: int
    values: np.ndarray

    @property
    def ci_upper(self) -> float:
        return self.mean + self.ci_half


@dataclass
class ReplicationSummary:
    n_reps: int
    n_diverged: int
    metrics: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> MetricSummary:
        return self.metrics[name]


def summarize_values(values: np.ndarray) -> MetricSummary:
    """Mean, sample std, and normal-approximation 95% CI half width."""
    values = np.asarray(values, dtype=np.float64)
    finite = values[np.isfinite(values)]
    n = len(finite)
    if n == 0:
        return MetricSummary(float("nan"), float("nan"), float("nan"), 0, values)
    mean = float(np.mean(finite))
    std = float(np.std(finite, ddof=1)) if n > 1 else 0.0
    return MetricSummary(mean, std, 1.96 * std / np.sqrt(n) if n > 1 else 0.0, n, values)


def replicate(config: RunConfig, n_reps: int, base_seed: int,
              spawn_prefix: tuple = (), threads: int = 1) -> ReplicationSummary:
    """Run n_reps independent replications with derived seed streams.

    Rep k uses SeedSequence(entropy=base_seed, spawn_key=spawn_prefix+(k,)).
    Aggregation always happens in rep order, so summaries are bit-identical
    for any thread count.
    """
    if n_reps < 1:
        raise RunError(f"n_reps must be >= 1, got {n_reps!r}")

    def one(k: int) -> dict:
        cfg = replace(config, seed=base_seed, spawn_key=tuple(spawn_prefix) + (k,))
        traj = sgd_run(cfg)
        m = run_metrics(traj, cfg)
        m["_diverged"] = traj.diverged_at is not None
        return m

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_rep = list(pool.map(one, range(n_reps)))
    else:
        per_rep = [one(k) for k in range(n_reps)]

    names = sorted({name for m in per_rep for name in m if not name.startswith("_")})
    summary = ReplicationSummary(
        n_reps=n_reps,
        n_diverged=sum(1 for m in per_rep if m["_diverged"]),
    )
    for name in names:
        values = np.array([m.get(name, float("nan")) for m in per_rep])
        summary.metrics[name] = summarize_values(values)
    return summary
