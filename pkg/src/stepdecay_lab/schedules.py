"""Step-size schedules and the phase partition used by step decay.

Six schedule families are supported, all nonincreasing in t over a fixed
horizon T (iterations are 1-based, 1 <= t <= T):

  constant         eta_t = eta0
  inverse_t        eta_t = eta0 / (1 + a0 * t)
  inverse_sqrt_t   eta_t = eta0 / (1 + a0 * sqrt(t))
  step_decay       eta_t = eta0 / alpha**(p-1), p the phase index of t
  exp_decay        eta_t = eta0 * (beta / T)**(t / T)
  hazan_kale       eta halves on doubling intervals of initial length T0

Step decay runs in phases of S consecutive iterations with the step cut by
a factor alpha at each phase boundary; ``phase_partition`` chooses S and the
phase count N from the horizon (N ~ log_alpha(T) / 2 when targeting smooth
nonconvex objectives, N ~ log_alpha(T) when targeting strongly convex ones).
Phase step values are produced by successive division by alpha, so the ratio
of consecutive phase values is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

CONSTANT = "constant"
INVERSE_T = "inverse_t"
INVERSE_SQRT_T = "inverse_sqrt_t"
STEP_DECAY = "step_decay"
EXP_DECAY = "exp_decay"
HAZAN_KALE = "hazan_kale"

VARIANTS = (CONSTANT, INVERSE_T, INVERSE_SQRT_T, STEP_DECAY, EXP_DECAY, HAZAN_KALE)

NONCONVEX = "nonconvex"
STRONGLY_CONVEX = "strongly_convex"


class ScheduleError(ValueError):
    """Raised for invalid schedule parameters or out-of-range queries."""


@dataclass(frozen=True)
class ScheduleSpec:
    """One step-size policy with its parameters.

    Only the fields relevant to ``variant`` may be set; ``validate``
    rejects everything else.
    """

    variant: str
    eta0: float
    a0: float | None = None      # inverse_t / inverse_sqrt_t
    alpha: float | None = None   # step_decay
    S: int | None = None         # step_decay inner-loop length
    beta: float | None = None    # exp_decay, 1 <= beta < T
    T0: int | None = None        # hazan_kale initial interval length

    def validate(self, T: int) -> "ScheduleSpec":
        """Check parameters against the horizon T; returns self."""
        if self.variant not in VARIANTS:
            raise ScheduleError(f"unknown schedule variant {self.variant!r}")
        if not (isinstance(T, (int, np.integer)) and T >= 1):
            raise ScheduleError(f"horizon T must be a positive integer, got {T!r}")
        if not (self.eta0 > 0 and math.isfinite(self.eta0)):
            raise ScheduleError(f"eta0 must be positive, got {self.eta0!r}")
        needed = {
            CONSTANT: (),
            INVERSE_T: ("a0",),
            INVERSE_SQRT_T: ("a0",),
            STEP_DECAY: ("alpha", "S"),
            EXP_DECAY: ("beta",),
            HAZAN_KALE: ("T0",),
        }[self.variant]
        for name in ("a0", "alpha", "S", "beta", "T0"):
            value = getattr(self, name)
            if name in needed and value is None:
                raise ScheduleError(f"{self.variant} requires {name}")
            if name not in needed and value is not None:
                raise ScheduleError(f"{self.variant} does not take {name}")
        if self.a0 is not None and not self.a0 > 0:
            raise ScheduleError(f"a0 must be positive, got {self.a0!r}")
        if self.alpha is not None and not self.alpha > 1:
            raise ScheduleError(f"alpha must exceed 1, got {self.alpha!r}")
        if self.S is not None and not (isinstance(self.S, (int, np.integer)) and self.S >= 1):
            raise ScheduleError(f"S must be a positive integer, got {self.S!r}")
        if self.beta is not None and not (1 <= self.beta < T):
            raise ScheduleError(f"beta must lie in [1, T), got beta={self.beta!r} with T={T}")
        if self.T0 is not None and not (isinstance(self.T0, (int, np.integer)) and self.T0 >= 1):
            raise ScheduleError(f"T0 must be a positive integer, got {self.T0!r}")
        return self


@dataclass(frozen=True)
class PhasePlan:
    """Partition of a horizon T into N phases of S iterations.

    The final phase absorbs the T - S*N leftover iterations, keeping the
    smallest step in force longest, so S*N <= T < S*(N+1) always holds.
    """

    S: int
    N: int
    mode: str
    T: int
    ideal_count: float

    def phase_of(self, t: int | np.ndarray):
        """Phase index (1-based) of iteration t; vectorized over arrays."""
        return np.minimum((np.asarray(t) - 1) // self.S + 1, self.N)

    def lengths(self) -> np.ndarray:
        """Iterations per phase; the final entry includes the remainder."""
        out = np.full(self.N, self.S, dtype=np.int64)
        out[-1] += self.T - self.S * self.N
        return out

    @property
    def exact(self) -> bool:
        """True when the ideal phase count was already an integer."""
        return float(self.ideal_count).is_integer()


def phase_partition(alpha: float, T: int, mode: str) -> PhasePlan:
    """Choose the step-decay phase layout for horizon T.

    The ideal phase count is log_alpha(T)/2 in nonconvex mode and
    log_alpha(T) in strongly_convex mode.  The count is rounded to the
    nearest integer (at least 1), S = floor(T/count), and N = floor(T/S),
    so the remainder absorbed by the final phase is always shorter than one
    phase; when T >= count^2 (every practical setting) N equals the rounded
    count.  Rejects alpha so large that the ideal count falls below 1; use
    a constant schedule in that regime instead.
    """
    if mode not in (NONCONVEX, STRONGLY_CONVEX):
        raise ScheduleError(f"mode must be {NONCONVEX!r} or {STRONGLY_CONVEX!r}, got {mode!r}")
    if not (isinstance(T, (int, np.integer)) and T >= 2):
        raise ScheduleError(f"phase partition needs T >= 2, got {T!r}")
    if not alpha > 1:
        raise ScheduleError(f"alpha must exceed 1, got {alpha!r}")
    ideal = math.log(T, alpha)
    if mode == NONCONVEX:
        ideal /= 2.0
    if ideal < 1.0:
        raise ScheduleError(
            f"alpha={alpha} gives an ideal phase count {ideal:.4g} < 1 at T={T}; "
            "use a constant schedule instead"
        )
    count = min(int(T), max(1, math.floor(ideal + 0.5)))
    S = T // count
    N = T // S
    return PhasePlan(S=int(S), N=int(N), mode=mode, T=int(T), ideal_count=ideal)


def step_decay_spec(eta0: float, alpha: float, T: int, mode: str) -> tuple[ScheduleSpec, PhasePlan]:
    """Build a step-decay spec whose S comes from ``phase_partition``."""
    plan = phase_partition(alpha, T, mode)
    spec = ScheduleSpec(variant=STEP_DECAY, eta0=eta0, alpha=alpha, S=plan.S).validate(T)
    return spec, plan


def _phase_values(eta0: float, alpha: float, n: int) -> np.ndarray:
    """Per-phase step values eta0, eta0/alpha, ... by successive division."""
    out = np.empty(n)
    value = float(eta0)
    for p in range(n):
        out[p] = value
        value /= alpha
    return out


def _hk_breaks(T0: int, T: int) -> np.ndarray:
    """Cumulative endpoints of doubling intervals, truncated at T."""
    breaks = []
    length, total = T0, 0
    while total < T:
        total = min(total + length, T)
        breaks.append(total)
        length *= 2
    return np.asarray(breaks, dtype=np.int64)


def eta_sequence(spec: ScheduleSpec, T: int) -> np.ndarray:
    """Step sizes for t = 1..T as an array; the vector twin of ``step_size``."""
    spec.validate(T)
    t = np.arange(1, T + 1, dtype=np.float64)
    if spec.variant == CONSTANT:
        return np.full(T, float(spec.eta0))
    if spec.variant == INVERSE_T:
        return spec.eta0 / (1.0 + spec.a0 * t)
    if spec.variant == INVERSE_SQRT_T:
        return spec.eta0 / (1.0 + spec.a0 * np.sqrt(t))
    if spec.variant == EXP_DECAY:
        # scalar pow per entry: numpy's vectorized pow can differ from the
        # libm pow used by step_size in the last ulp, and the eta column
        # must reproduce step_size exactly
        ratio = spec.beta / T
        return spec.eta0 * np.fromiter((ratio ** (ti / T) for ti in range(1, T + 1)),
                                       dtype=np.float64, count=T)
    if spec.variant == STEP_DECAY:
        N = max(1, T // spec.S)
        p = np.minimum((np.arange(T) // spec.S), N - 1)
        return _phase_values(spec.eta0, spec.alpha, N)[p]
    # hazan_kale
    breaks = _hk_breaks(spec.T0, T)
    interval = np.searchsorted(breaks, np.arange(1, T + 1), side="left")
    return _phase_values(spec.eta0, 2.0, len(breaks))[interval]


def step_size(spec: ScheduleSpec, t: int, T: int) -> float:
    """Step size at iteration t (1 <= t <= T) under the validated spec."""
    spec.validate(T)
    if not (isinstance(t, (int, np.integer)) and 1 <= t <= T):
        raise ScheduleError(f"iteration t must lie in [1, {T}], got {t!r}")
    if spec.variant == CONSTANT:
        return float(spec.eta0)
    if spec.variant == INVERSE_T:
        return spec.eta0 / (1.0 + spec.a0 * t)
    if spec.variant == INVERSE_SQRT_T:
        return spec.eta0 / (1.0 + spec.a0 * math.sqrt(t))
    if spec.variant == EXP_DECAY:
        return spec.eta0 * (spec.beta / T) ** (t / T)
    if spec.variant == STEP_DECAY:
        N = max(1, T // spec.S)
        p = min((t - 1) // spec.S + 1, N)
        return float(_phase_values(spec.eta0, spec.alpha, p)[-1])
    breaks = _hk_breaks(spec.T0, T)
    interval = int(np.searchsorted(breaks, t, side="left"))
    return float(_phase_values(spec.eta0, 2.0, interval + 1)[-1])


def schedule_phases(spec: ScheduleSpec, T: int) -> np.ndarray:
    """Phase index (1-based) per iteration.

    Step decay and hazan_kale use their natural block indices; exp_decay and
    the polynomial decays change every step (phase = t, the S = 1 view of
    step decay); constant is a single phase.
    """
    spec.validate(T)
    if spec.variant == STEP_DECAY:
        N = max(1, T // spec.S)
        return np.minimum(np.arange(T, dtype=np.int64) // spec.S + 1, N)
    if spec.variant == HAZAN_KALE:
        breaks = _hk_breaks(spec.T0, T)
        return np.searchsorted(breaks, np.arange(1, T + 1), side="left").astype(np.int64) + 1
    if spec.variant == CONSTANT:
        return np.ones(T, dtype=np.int64)
    return np.arange(1, T + 1, dtype=np.int64)


def solve_tail_coefficient(eta0: float, etaT: float, T: int, variant: str) -> float:
    """Coefficient making the schedule hit a target final step size exactly.

    Returns a0 for inverse_t / inverse_sqrt_t or beta for exp_decay such
    that the step size at t = T equals etaT.
    """
    if not 0 < etaT < eta0:
        raise ScheduleError(f"target etaT must satisfy 0 < etaT < eta0, got etaT={etaT!r}, eta0={eta0!r}")
    if variant == INVERSE_T:
        return (eta0 / etaT - 1.0) / T
    if variant == INVERSE_SQRT_T:
        return (eta0 / etaT - 1.0) / math.sqrt(T)
    if variant == EXP_DECAY:
        return T * etaT / eta0
    raise ScheduleError(f"no tail coefficient for variant {variant!r}")


def resolve_target_eta(spec: ScheduleSpec, T: int, target_eta_T: float) -> ScheduleSpec:
    """Fill in a0 or beta from a desired final step size."""
    coeff = solve_tail_coefficient(spec.eta0, target_eta_T, T, spec.variant)
    if spec.variant == EXP_DECAY:
        return replace(spec, beta=coeff)
    return replace(spec, a0=coeff)
