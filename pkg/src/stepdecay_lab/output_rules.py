"""Rules for picking the returned point of an SGD run.

Four rules are supported: the raw final iterate; sampling one recorded
iterate with probability proportional to 1/eta_t (mass concentrates on the
late, small-step iterates) or to eta_t (mass concentrates early); and the
suffix weighted average, the eta-weighted mean of all iterates from a
schedule-determined starting phase onward.

Sampling distributions are computed in log space and normalized, so they
stay finite for fast-decaying schedules at any horizon, and are drawn from
by inverse CDF with a single uniform per selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .schedules import STEP_DECAY, ScheduleSpec, eta_sequence

LAST_ITERATE = "last_iterate"
SAMPLE_INV_ETA = "sample_inv_eta"
SAMPLE_ETA = "sample_eta"
SUFFIX_WEIGHTED_AVERAGE = "suffix_weighted_average"

RULE_KINDS = (LAST_ITERATE, SAMPLE_INV_ETA, SAMPLE_ETA, SUFFIX_WEIGHTED_AVERAGE)
SAMPLING_KINDS = (SAMPLE_INV_ETA, SAMPLE_ETA)


class OutputRuleError(ValueError):
    """Raised for invalid rules or trajectories missing required iterates."""


@dataclass(frozen=True)
class OutputRule:
    kind: str
    mu: float | None = None  # strong-convexity modulus, suffix rule only

    def validate(self) -> "OutputRule":
        if self.kind not in RULE_KINDS:
            raise OutputRuleError(f"unknown output rule {self.kind!r}")
        if self.kind == SUFFIX_WEIGHTED_AVERAGE:
            if self.mu is None or not self.mu > 0:
                raise OutputRuleError("suffix_weighted_average requires mu > 0")
        elif self.mu is not None:
            raise OutputRuleError(f"{self.kind} does not take mu")
        return self


def as_rule(rule) -> OutputRule:
    if isinstance(rule, OutputRule):
        return rule.validate()
    if isinstance(rule, str):
        return OutputRule(kind=rule).validate()
    raise OutputRuleError(f"cannot interpret {rule!r} as an output rule")


@dataclass(frozen=True)
class OutputDistribution:
    """Normalized selection probabilities over iterations 1..T."""

    kind: str
    etas: np.ndarray
    probs: np.ndarray

    @cached_property
    def _cum(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def sample(self, rng, size=None):
        """Iteration indices (1-based) drawn by inverse CDF."""
        u = rng.random(size)
        return np.searchsorted(self._cum, u, side="right") + 1

    def mass_on(self, first: int, last: int) -> float:
        """Total probability of iterations first..last inclusive (1-based)."""
        return float(np.sum(self.probs[first - 1:last]))

    def block_masses(self, block_ids: np.ndarray) -> np.ndarray:
        """Probability per block for a 1-based block-index column."""
        return np.bincount(block_ids - 1, weights=self.probs)


def weights_from_etas(etas: np.ndarray, kind: str) -> OutputDistribution:
    """Distribution with w_t proportional to 1/eta_t or eta_t.

    Log weights are shifted by their maximum before exponentiation, so the
    normalization never overflows even when eta spans hundreds of orders of
    magnitude.
    """
    if kind not in SAMPLING_KINDS:
        raise OutputRuleError(f"{kind!r} is not a sampling rule")
    etas = np.asarray(etas, dtype=np.float64)
    if np.any(etas <= 0):
        raise OutputRuleError("step sizes must be positive")
    logw = np.log(etas)
    if kind == SAMPLE_INV_ETA:
        logw = -logw
    w = np.exp(logw - logw.max())
    return OutputDistribution(kind=kind, etas=etas, probs=w / w.sum())


def output_weights(rule, spec: ScheduleSpec, T: int) -> OutputDistribution:
    """Selection distribution of a sampling rule under a schedule."""
    rule = as_rule(rule)
    return weights_from_etas(eta_sequence(spec, T), rule.kind)


def suffix_constant(mu: float, alpha: float) -> float:
    """Prefactor 2*mu*alpha/(alpha-1) entering the suffix starting phase."""
    return 2.0 * mu * alpha / (alpha - 1.0)


def suffix_start_phase(mu: float, eta0: float, alpha: float, T: int) -> int:
    """First phase included in the suffix average (clamped to >= 1).

    floor(log_alpha(eta0 * alpha * A * T / log_alpha(T))) with
    A = 2*mu*alpha/(alpha-1); values below 1 are mapped to phase 1.
    """
    log_T = math.log(T, alpha)
    arg = eta0 * alpha * suffix_constant(mu, alpha) * T / log_T
    t_star = max(0, math.floor(math.log(arg, alpha)))
    return max(1, t_star)


def suffix_start_phase_expanded(mu: float, eta0: float, alpha: float, T: int) -> int:
    """Same phase via the expanded prefactor 2*mu*eta0*alpha^2/(alpha-1).

    Algebraically identical to ``suffix_start_phase``; kept so tests can
    assert the two forms agree on a parameter grid.
    """
    log_T = math.log(T, alpha)
    arg = 2.0 * mu * eta0 * alpha * alpha / (alpha - 1.0) * T / log_T
    return max(1, max(0, math.floor(math.log(arg, alpha))))


def suffix_average(trajectory, spec: ScheduleSpec | None = None, mu: float = 1.0) -> np.ndarray:
    """Eta-weighted mean of all iterates from the suffix starting phase on.

    Works from the per-phase iterate sums the run accumulates, so no
    individual iterates need to have been retained.  Requires a step-decay
    trajectory; errors when the starting phase exceeds the phase count
    (the horizon is too small for the given mu, eta0, alpha).
    """
    spec = spec or trajectory.schedule
    if spec.variant != STEP_DECAY:
        raise OutputRuleError("suffix averaging requires a step-decay schedule")
    if trajectory.phase_sums is None or not len(trajectory.phase_sums):
        raise OutputRuleError("trajectory did not accumulate phase sums")
    n_phases = trajectory.phase_sums.shape[0]
    t_star = suffix_start_phase(mu, spec.eta0, spec.alpha, trajectory.T)
    if t_star > n_phases:
        raise OutputRuleError(
            f"suffix start phase {t_star} exceeds phase count {n_phases}; "
            f"T={trajectory.T} too small for mu={mu}, eta0={spec.eta0}, alpha={spec.alpha}")
    phase_etas = trajectory.phase_etas[t_star - 1:]
    sums = trajectory.phase_sums[t_star - 1:]
    lengths = trajectory.phase_lengths[t_star - 1:]
    return (phase_etas @ sums) / float(phase_etas @ lengths)


def select_output(rule, trajectory, rng=None) -> np.ndarray:
    """Realize an output rule on a finished trajectory.

    The final iterate and the suffix average are deterministic.  Sampling
    rules use the index pre-drawn before the run when no generator is given;
    with an explicit generator a fresh index is drawn, which fails loudly if
    that iterate was not retained.
    """
    rule = as_rule(rule)
    if rule.kind == LAST_ITERATE:
        return trajectory.final_iterate
    if rule.kind == SUFFIX_WEIGHTED_AVERAGE:
        return suffix_average(trajectory, trajectory.schedule, rule.mu)
    if rng is None:
        if rule.kind not in trajectory.sampled_index:
            raise OutputRuleError(
                f"no pre-drawn index for {rule.kind}; request the rule in the run config "
                "or pass a generator")
        t = trajectory.sampled_index[rule.kind]
    else:
        t = int(weights_from_etas(trajectory.eta, rule.kind).sample(rng))
    if t not in trajectory.iterates:
        raise OutputRuleError(
            f"iterate {t} needed by {rule.kind} was not retained "
            f"(retained: {sorted(trajectory.iterates)[:8]}...)")
    return trajectory.iterates[t]
