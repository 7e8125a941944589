"""Rate-verification experiments over horizon grids.

The harness turns asymptotic claims into finite checks: sweep the horizon T
over a grid, estimate an error metric by seeded replication at each T, fit
the log-log slope (the empirical rate exponent), and compare each mean
against the matching closed-form bound using the 95% CI upper edge, so a
bound "dominates" only when the whole confidence band sits below it.

Horizon grids default to powers of two so that log2-based phase partitions
are exact and rounding noise stays out of the fits.  All randomness derives
from one base seed through spawn keys (grid cell index, then rep index),
making every CSV byte-reproducible for any worker count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from . import _kernel, bounds
from .optimizer import MetricSummary, ReplicationSummary, RunConfig, replicate
from .output_rules import (LAST_ITERATE, SAMPLE_ETA, SAMPLE_INV_ETA,
                           SUFFIX_WEIGHTED_AVERAGE, OutputRule)
from .problems import StochasticProblem, make_adversarial_lower_bound
from .schedules import (EXP_DECAY, STEP_DECAY, ScheduleSpec, eta_sequence,
                        phase_partition, resolve_target_eta)

DEFAULT_T_GRID = tuple(2 ** k for k in range(8, 15))


class HarnessError(RuntimeError):
    """Raised when an experiment cannot produce a trustworthy result."""


# ---------------------------------------------------------------------------
# log-log rate fitting
# ---------------------------------------------------------------------------

@dataclass
class RateFit:
    T_values: np.ndarray
    errors: np.ndarray
    slope: float
    intercept: float
    residual: float


def rate_fit(T_grid, errors) -> RateFit:
    """Least-squares slope of ln(error) against ln(T).

    Needs at least three grid points and strictly positive errors; the slope
    is the empirical convergence exponent and ``residual`` is the RMS
    deviation from the fitted line.
    """
    T_values = np.asarray(T_grid, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if len(T_values) < 3:
        raise HarnessError(f"rate fit needs >= 3 grid points, got {len(T_values)}")
    if np.any(~np.isfinite(errors)) or np.any(errors <= 0):
        raise HarnessError("rate fit needs finite positive errors")
    x = np.log(T_values)
    y = np.log(errors)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return RateFit(T_values=T_values, errors=errors, slope=float(slope),
                   intercept=float(intercept),
                   residual=float(np.sqrt(np.mean(resid * resid))))


# ---------------------------------------------------------------------------
# schedule families (same policy re-instantiated per horizon)
# ---------------------------------------------------------------------------

BETA_SQRT_T = "sqrt_T"


@dataclass(frozen=True)
class ScheduleFamily:
    """A schedule policy whose horizon-dependent parameters rederive per T."""

    variant: str
    eta0: float
    alpha: float | None = None
    mode: str | None = None          # step_decay: phase partition mode
    a0: float | None = None
    beta: float | str | None = None  # exp_decay: number or "sqrt_T"
    T0: int | None = None
    target_eta_T: float | None = None

    def spec_for(self, T: int) -> ScheduleSpec:
        if self.variant == STEP_DECAY:
            if self.mode is None:
                raise HarnessError("step_decay family needs a phase-partition mode")
            plan = phase_partition(self.alpha, T, self.mode)
            return ScheduleSpec(variant=STEP_DECAY, eta0=self.eta0,
                                alpha=self.alpha, S=plan.S).validate(T)
        beta = self.beta
        if self.variant == EXP_DECAY and beta == BETA_SQRT_T:
            beta = math.sqrt(T)
        spec = ScheduleSpec(variant=self.variant, eta0=self.eta0, a0=self.a0,
                            beta=beta, T0=self.T0)
        if self.target_eta_T is not None:
            spec = resolve_target_eta(spec, T, self.target_eta_T)
        return spec.validate(T)

    def with_eta0(self, eta0: float) -> "ScheduleFamily":
        return dc_replace(self, eta0=float(eta0))


# ---------------------------------------------------------------------------
# rate experiments with bound dominance
# ---------------------------------------------------------------------------

_METRIC_RULES = {
    "last_dist2": LAST_ITERATE,
    "last_f_gap": LAST_ITERATE,
    "final_f": LAST_ITERATE,
    "weighted_grad_norm2_inv_eta": SAMPLE_INV_ETA,
    "weighted_grad_norm2_eta": SAMPLE_ETA,
    "suffix_f_gap": SUFFIX_WEIGHTED_AVERAGE,
    "suffix_dist2": SUFFIX_WEIGHTED_AVERAGE,
}

METRICS = tuple(_METRIC_RULES)


@dataclass
class RateExperimentResult:
    problem_id: str
    family: ScheduleFamily
    metric: str
    T_grid: tuple
    n_reps: int
    base_seed: int
    summaries: list                    # ReplicationSummary per T
    bound_reports: list | None         # BoundReport per T, when requested
    fit: RateFit
    bound_kind: str | None = None

    def metric_summary(self, i: int) -> MetricSummary:
        return self.summaries[i][self.metric]

    @property
    def means(self) -> np.ndarray:
        return np.array([self.metric_summary(i).mean for i in range(len(self.T_grid))])

    @property
    def ci_uppers(self) -> np.ndarray:
        return np.array([self.metric_summary(i).ci_upper for i in range(len(self.T_grid))])

    @property
    def bound_values(self) -> np.ndarray | None:
        if self.bound_reports is None:
            return None
        return np.array([b.value for b in self.bound_reports])

    @property
    def dominated(self) -> np.ndarray | None:
        """Per grid point: does the bound clear the CI upper edge?"""
        if self.bound_reports is None:
            return None
        return self.ci_uppers <= self.bound_values

    def rows(self):
        for i, T in enumerate(self.T_grid):
            s = self.metric_summary(i)
            row = [T, s.mean, s.std, s.ci_half, s.ci_upper]
            if self.bound_reports is not None:
                b = self.bound_reports[i].value
                row += [b, s.mean / b if b else float("nan"), int(s.ci_upper <= b)]
            yield row

    def csv_header(self):
        head = ["T", "mean", "std", "ci_half", "ci_upper"]
        if self.bound_reports is not None:
            head += ["bound", "mean_over_bound", "dominated"]
        return head


def bound_inputs_for(problem: StochasticProblem, family: ScheduleFamily,
                     kind: str, T: int, R: float | None,
                     overrides: dict | None = None) -> dict:
    """Assemble a bound's inputs from instance constants and the family."""
    c = problem.constants
    if kind in bounds.NONCONVEX_KINDS:
        inputs = dict(eta0=family.eta0, T=T, L=c.L, V2=c.V2, f_max=c.f_max)
        if kind == "T3.1":
            inputs["alpha"] = family.alpha
    elif kind in bounds.CONVEX_KINDS:
        inputs = dict(D2=c.D2, G2=c.G2, eta0=family.eta0, alpha=family.alpha, T=T)
    elif kind in bounds.STRONGLY_CONVEX_KINDS:
        inputs = dict(mu=c.mu, G2=c.G2, eta0=family.eta0, alpha=family.alpha,
                      T=T, R=R)
        if kind == "T5.1" and c.L is not None:
            inputs["L"] = c.L
    else:
        raise HarnessError(f"no input mapping for bound kind {kind!r}")
    if overrides:
        inputs.update(overrides)
    return inputs


def run_rate_experiment(problem: StochasticProblem, family: ScheduleFamily,
                        metric: str, T_grid=DEFAULT_T_GRID, n_reps: int = 50,
                        base_seed: int = 0, x0=None, suffix_mu: float | None = None,
                        bound_kind: str | None = None, bound_overrides: dict | None = None,
                        threads: int = 1, max_divergence_fraction: float = 0.1,
                        ) -> RateExperimentResult:
    """Estimate an error metric over a T grid, fit its rate, check its bound.

    For each horizon the schedule is rebuilt from the family (step decay
    rederives its phase layout), n_reps seeded replications run, and the
    metric's mean and CI are recorded; the experiment aborts if more than
    ``max_divergence_fraction`` of all runs diverge.
    """
    if metric not in _METRIC_RULES:
        raise HarnessError(f"unknown metric {metric!r}; known: {', '.join(METRICS)}")
    rule_kind = _METRIC_RULES[metric]
    if rule_kind == SUFFIX_WEIGHTED_AVERAGE:
        mu = suffix_mu if suffix_mu is not None else problem.constants.mu
        if mu is None:
            raise HarnessError("suffix metrics need mu (from the problem or suffix_mu)")
        rule = OutputRule(SUFFIX_WEIGHTED_AVERAGE, mu=float(mu))
    else:
        rule = OutputRule(rule_kind)

    if x0 is not None:
        x0 = np.asarray(x0, dtype=np.float64)
    R = None
    if problem.constants.x_star is not None:
        start = x0 if x0 is not None else problem.default_x0
        delta = np.broadcast_to(np.atleast_1d(start), (problem.dimension,)) \
            - problem.constants.x_star
        R = float(delta @ delta)

    summaries, reports = [], [] if bound_kind else None
    total_div = 0
    for i, T in enumerate(T_grid):
        spec = family.spec_for(int(T))
        config = RunConfig(problem=problem, schedule=spec, T=int(T),
                           output_rules=(rule,), x0=x0, retention="summaries_only")
        summary = replicate(config, n_reps, base_seed, spawn_prefix=(i,), threads=threads)
        total_div += summary.n_diverged
        summaries.append(summary)
        if bound_kind:
            inputs = bound_inputs_for(problem, family, bound_kind, int(T), R,
                                      bound_overrides)
            reports.append(bounds.evaluate_bound(bound_kind, **inputs))
    if total_div > max_divergence_fraction * n_reps * len(T_grid):
        raise HarnessError(
            f"{total_div} of {n_reps * len(T_grid)} runs diverged; experiment aborted")

    means = np.array([s[metric].mean for s in summaries])
    fit = rate_fit(np.asarray(T_grid, dtype=float), means)
    return RateExperimentResult(
        problem_id=problem.problem_id, family=family, metric=metric,
        T_grid=tuple(int(T) for T in T_grid), n_reps=n_reps, base_seed=base_seed,
        summaries=summaries, bound_reports=reports, fit=fit, bound_kind=bound_kind)


# ---------------------------------------------------------------------------
# lower-bound exceedance trials
# ---------------------------------------------------------------------------

@dataclass
class ExceedanceResult:
    T: int
    alpha: float
    delta: float
    threshold: float
    n_trials: int
    n_exceeding: int
    frequency: float
    ci_low: float
    ci_high: float
    f_finals: np.ndarray = field(repr=False, default=None)


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score 95% interval for a binomial proportion."""
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def lower_bound_trial(T: int, alpha: float, delta: float, n_trials: int,
                      base_seed: int = 0) -> ExceedanceResult:
    """Frequency with which the adversarial instance beats its threshold.

    Runs ``n_trials`` independent projected-SGD executions from x = 0 with
    eta0 = 1 on the single-noisy-phase instance and counts final value gaps
    at or above ``lower_bound_threshold``.  Trial j draws its signs from
    SeedSequence(entropy=base_seed, spawn_key=(j,)), matching what a full
    trajectory run with that seed would consume.
    """
    problem = make_adversarial_lower_bound(T, alpha)
    layout = problem.kernel_params["layout"]
    info = bounds.lower_bound_threshold(delta, alpha, T)
    plan = phase_partition(alpha, T, "strongly_convex")
    spec = ScheduleSpec(variant=STEP_DECAY, eta0=1.0, alpha=alpha, S=plan.S).validate(T)
    etas = eta_sequence(spec, T)

    active = np.empty((n_trials, layout.length))
    for j in range(n_trials):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=base_seed,
                                                           spawn_key=(j,)))
        noise = problem.noise_plan(rng, T)["noise"][:, 0]
        active[j] = -noise[layout.start - 1: layout.start - 1 + layout.length]

    finals = _kernel.adversarial_finals(etas, active, layout.start, -4.0, 4.0)
    f_finals = 0.5 * finals * finals
    n_exceeding = int(np.sum(f_finals >= info.value))
    ci_low, ci_high = wilson_interval(n_exceeding, n_trials)
    return ExceedanceResult(T=T, alpha=alpha, delta=delta, threshold=info.value,
                            n_trials=n_trials, n_exceeding=n_exceeding,
                            frequency=n_exceeding / n_trials,
                            ci_low=ci_low, ci_high=ci_high, f_finals=f_finals)


# ---------------------------------------------------------------------------
# initial-step-size robustness sweep
# ---------------------------------------------------------------------------

@dataclass
class RobustnessResult:
    eta0_grid: np.ndarray
    T: int
    n_reps: int
    losses: dict          # family name -> mean final loss per eta0 (nan = diverged)
    widths: dict          # family name -> log10 span of the near-optimal region
    tolerance: float = 1.1

    def near_optimal_mask(self, name: str) -> np.ndarray:
        losses = self.losses[name]
        finite = losses[np.isfinite(losses)]
        if not len(finite):
            return np.zeros(len(losses), dtype=bool)
        return np.isfinite(losses) & (losses <= self.tolerance * finite.min())


def robustness_sweep(problem: StochasticProblem, families: dict,
                     eta0_grid, T: int, n_reps: int = 3, base_seed: int = 0,
                     x0=None, tolerance: float = 1.1, threads: int = 1) -> RobustnessResult:
    """Final training loss per family and initial step over a wide eta0 grid.

    ``families`` maps names to ScheduleFamily templates whose eta0 is
    replaced by each grid value.  The reported width of a family is the
    log10 span of the eta0 set whose mean loss stays within ``tolerance``
    times the family's own minimum; divergent cells are non-finite and never
    qualify.
    """
    eta0_grid = np.asarray(eta0_grid, dtype=np.float64)
    if len(eta0_grid) >= 2 and math.log10(eta0_grid.max() / eta0_grid.min()) < 3.0:
        raise HarnessError("eta0 grid should span at least 3 orders of magnitude")
    losses, widths = {}, {}
    for fi, (name, family) in enumerate(sorted(families.items())):
        column = np.empty(len(eta0_grid))
        for ei, eta0 in enumerate(eta0_grid):
            spec = family.with_eta0(float(eta0)).spec_for(T)
            config = RunConfig(problem=problem, schedule=spec, T=T,
                               output_rules=(LAST_ITERATE,), x0=x0,
                               retention="summaries_only")
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                summary = replicate(config, n_reps, base_seed,
                                    spawn_prefix=(fi, ei), threads=threads)
            column[ei] = summary["final_f"].mean if summary["final_f"].n else float("nan")
        losses[name] = column
        mask = np.isfinite(column) & (column <= tolerance * np.nanmin(column)) \
            if np.any(np.isfinite(column)) else np.zeros(len(column), dtype=bool)
        if mask.any():
            qualifying = eta0_grid[mask]
            widths[name] = float(math.log10(qualifying.max() / qualifying.min()))
        else:
            widths[name] = float("nan")
    return RobustnessResult(eta0_grid=eta0_grid, T=T, n_reps=n_reps,
                            losses=losses, widths=widths, tolerance=tolerance)
