"""Stochastic objective instances with certified constants.

Each instance bundles a deterministic value/gradient pair, an unbiased
stochastic gradient oracle, the constants its guarantees need (smoothness L,
strong convexity mu, oracle variance V2, oracle second moment G2, value
ceiling f_max, feasible-set diameter squared D2, the minimizer when known),
and a feasible-set projection.

Oracles draw noise from a caller-owned numpy Generator.  Every instance also
exposes a vectorized ``noise_plan`` that pre-draws the full noise stream of a
T-step run in one shot; consuming the plan row by row reproduces the same
stream the per-step oracle would draw, which is what makes compiled and pure
Python runs bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import data_io
from .schedules import STRONGLY_CONVEX, phase_partition

E_CONST = math.e


class ProblemError(ValueError):
    """Raised for invalid instance parameters."""


@dataclass(frozen=True)
class ProblemConstants:
    """Certified constants of an instance; absent entries are None."""

    L: float | None = None
    mu: float | None = None
    V2: float | None = None
    G2: float | None = None
    f_max: float | None = None
    D2: float | None = None
    x_star: np.ndarray | None = None
    f_star: float | None = None

    def __post_init__(self):
        if self.L is not None and self.mu is not None and self.mu > self.L + 1e-12:
            raise ProblemError(f"mu={self.mu} exceeds L={self.L}")


@dataclass(frozen=True)
class FeasibleSet:
    """Closed convex constraint set: all of R^d, a box, or a ball."""

    kind: str  # "all" | "box" | "ball"
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float | None = None

    @staticmethod
    def all_space() -> "FeasibleSet":
        return FeasibleSet(kind="all")

    @staticmethod
    def box(lo, hi, dimension: int | None = None) -> "FeasibleSet":
        lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
        if dimension is not None:
            lo = np.broadcast_to(lo, (dimension,)).copy()
            hi = np.broadcast_to(hi, (dimension,)).copy()
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ProblemError("box bounds must satisfy lo <= hi componentwise")
        return FeasibleSet(kind="box", lo=lo, hi=hi)

    @staticmethod
    def ball(center, radius: float) -> "FeasibleSet":
        center = np.atleast_1d(np.asarray(center, dtype=np.float64))
        if not radius > 0:
            raise ProblemError(f"ball radius must be positive, got {radius!r}")
        return FeasibleSet(kind="ball", center=center, radius=float(radius))

    def max_distance_from(self, point: np.ndarray) -> float | None:
        """sup over the set of the distance to ``point``; None if unbounded."""
        if self.kind == "all":
            return None
        if self.kind == "box":
            far = np.maximum(np.abs(self.lo - point), np.abs(self.hi - point))
            return float(np.linalg.norm(far))
        return float(np.linalg.norm(self.center - point) + self.radius)

    def diameter2(self) -> float | None:
        if self.kind == "all":
            return None
        if self.kind == "box":
            return float(np.sum((self.hi - self.lo) ** 2))
        return float((2.0 * self.radius) ** 2)


def project(feasible_set: FeasibleSet, u: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the set (identity for all of R^d)."""
    u = np.asarray(u, dtype=np.float64)
    if feasible_set.kind == "all":
        return u
    if feasible_set.kind == "box":
        return np.clip(u, feasible_set.lo, feasible_set.hi)
    delta = u - feasible_set.center
    norm = float(np.linalg.norm(delta))
    if norm <= feasible_set.radius:
        return u
    return feasible_set.center + delta * (feasible_set.radius / norm)


@dataclass(frozen=True)
class OracleContext:
    """Loop position handed to phase-aware oracles."""

    t: int       # global iteration, 1-based
    phase: int   # 1-based
    inner: int   # position within the phase, 1-based


@dataclass
class StochasticProblem:
    """Oracle bundle; immutable after construction by convention."""

    problem_id: str
    dimension: int
    constants: ProblemConstants
    feasible_set: FeasibleSet
    value: Callable[[np.ndarray], float]
    full_gradient: Callable[[np.ndarray], np.ndarray]
    stochastic_gradient: Callable  # (x, rng, context=None) -> ndarray
    noise_plan: Callable           # (rng, T, etas=None, plan=None) -> dict
    kernel_kind: str
    kernel_params: dict = field(default_factory=dict)
    default_x0: np.ndarray | None = None


# ---------------------------------------------------------------------------
# quadratic
# ---------------------------------------------------------------------------

def _sphere_rows(raw: np.ndarray, radius: float) -> np.ndarray:
    norms = np.linalg.norm(raw, axis=-1, keepdims=True)
    return raw / norms * radius


def make_quadratic(dimension, spectrum, x_star=None, noise=None, feasible_set=None) -> StochasticProblem:
    """Diagonal quadratic 0.5 * (x - x*)^T A (x - x*).

    ``noise`` is None, ("gaussian", sigma2) with sigma2 the per-coordinate
    variance (so V2 = sigma2 * d), or ("sphere", radius) for noise uniform on
    the radius-r sphere (bounded, V2 = r^2).  G2 and f_max are certified only
    when the feasible set is bounded.
    """
    lam = np.asarray(spectrum, dtype=np.float64)
    if lam.shape != (dimension,):
        raise ProblemError(f"spectrum must have length {dimension}, got shape {lam.shape}")
    if np.any(lam <= 0):
        raise ProblemError("all eigenvalues must be positive")
    x_star = np.zeros(dimension) if x_star is None else np.asarray(x_star, dtype=np.float64) + np.zeros(dimension)
    fs = feasible_set or FeasibleSet.all_space()

    noise_kind, noise_param = ("none", 0.0) if noise is None else noise
    if noise_kind not in ("none", "gaussian", "sphere"):
        raise ProblemError(f"unknown noise kind {noise_kind!r}")

    L = float(lam.max())
    mu = float(lam.min())
    if noise_kind == "gaussian":
        V2, second_moment = noise_param * dimension, noise_param * dimension
    elif noise_kind == "sphere":
        V2, second_moment = noise_param ** 2, noise_param ** 2
    else:
        V2, second_moment = 0.0, 0.0

    max_dist = fs.max_distance_from(x_star)
    G2 = None if max_dist is None else L * L * max_dist * max_dist + second_moment
    if fs.kind == "box":
        f_max = 0.5 * float(np.sum(lam * np.maximum((fs.lo - x_star) ** 2, (fs.hi - x_star) ** 2)))
    elif fs.kind == "ball":
        f_max = 0.5 * L * max_dist * max_dist
    else:
        f_max = None

    def value(x):
        return 0.5 * float(np.sum(lam * (x - x_star) ** 2))

    def full_gradient(x):
        return lam * (x - x_star)

    def draw_noise(rng, shape):
        if noise_kind == "gaussian":
            return math.sqrt(noise_param) * rng.standard_normal(shape)
        if noise_kind == "sphere":
            return _sphere_rows(rng.standard_normal(shape), noise_param)
        return np.zeros(shape)

    def stochastic_gradient(x, rng, context=None):
        return full_gradient(x) + draw_noise(rng, (dimension,))

    def noise_plan(rng, T, etas=None, plan=None):
        return {"noise": draw_noise(rng, (T, dimension))}

    return StochasticProblem(
        problem_id=f"quadratic(d={dimension})",
        dimension=dimension,
        constants=ProblemConstants(L=L, mu=mu, V2=V2, G2=G2, f_max=f_max,
                                   D2=fs.diameter2(), x_star=x_star, f_star=0.0),
        feasible_set=fs,
        value=value,
        full_gradient=full_gradient,
        stochastic_gradient=stochastic_gradient,
        noise_plan=noise_plan,
        kernel_kind="quadratic",
        kernel_params={"lam": lam, "x_star": x_star},
        default_x0=np.zeros(dimension),
    )


# ---------------------------------------------------------------------------
# bounded nonconvex
# ---------------------------------------------------------------------------

def make_bounded_nonconvex(dimension: int, noise_variance: float = 1.0) -> StochasticProblem:
    """Smooth nonconvex objective sum_k x_k^2 / (1 + x_k^2).

    Bounded above by d and below by 0, with |f''| <= 2 per coordinate, so
    L = 2 is certified.  The oracle adds zero-mean gaussian noise of total
    variance ``noise_variance`` (split evenly across coordinates).
    """
    if dimension < 1:
        raise ProblemError(f"dimension must be >= 1, got {dimension!r}")
    if noise_variance < 0:
        raise ProblemError("noise_variance must be nonnegative")
    sigma = math.sqrt(noise_variance / dimension)
    x_star = np.zeros(dimension)

    def value(x):
        u = x * x
        return float(np.sum(u / (1.0 + u)))

    def full_gradient(x):
        return 2.0 * x / (1.0 + x * x) ** 2

    def stochastic_gradient(x, rng, context=None):
        return full_gradient(x) + sigma * rng.standard_normal(dimension)

    def noise_plan(rng, T, etas=None, plan=None):
        return {"noise": sigma * rng.standard_normal((T, dimension))}

    return StochasticProblem(
        problem_id=f"bounded_nonconvex(d={dimension})",
        dimension=dimension,
        constants=ProblemConstants(L=2.0, V2=float(noise_variance), f_max=float(dimension),
                                   x_star=x_star, f_star=0.0),
        feasible_set=FeasibleSet.all_space(),
        value=value,
        full_gradient=full_gradient,
        stochastic_gradient=stochastic_gradient,
        noise_plan=noise_plan,
        kernel_kind="bounded_nonconvex",
        kernel_params={},
        default_x0=np.zeros(dimension),
    )


# ---------------------------------------------------------------------------
# regularized logistic regression
# ---------------------------------------------------------------------------

def make_logistic(dataset: data_io.SparseDataset, reg_lambda: float, batch_size: int,
                  feasible_set: FeasibleSet | None = None) -> StochasticProblem:
    """L2-regularized logistic regression over a sparse dataset.

    f(x) = mean_i ln(1 + exp(-b_i a_i.x)) + reg_lambda/2 ||x||^2.  The oracle
    averages per-sample gradients over a uniform minibatch drawn without
    replacement (independently each iteration), which keeps it unbiased for
    the full gradient.  mu = reg_lambda; L = reg_lambda + max_i ||a_i||^2 / 4.
    """
    if dataset.n == 0:
        raise ProblemError("dataset is empty")
    if not np.all(np.isin(dataset.labels, (-1.0, 1.0))):
        raise ProblemError("labels must be -1 or +1")
    if not 1 <= batch_size <= dataset.n:
        raise ProblemError(f"batch_size must lie in [1, n={dataset.n}], got {batch_size!r}")
    if reg_lambda < 0:
        raise ProblemError("reg_lambda must be nonnegative")

    n, d = dataset.n, dataset.d
    fs = feasible_set or FeasibleSet.all_space()
    row_norms2 = dataset.row_norms2()
    max_row = math.sqrt(float(row_norms2.max())) if n else 0.0
    L = reg_lambda + float(row_norms2.max()) / 4.0
    max_norm = fs.max_distance_from(np.zeros(d))
    if max_norm is None:
        G2 = f_max = None
    else:
        G2 = (max_row + reg_lambda * max_norm) ** 2
        f_max = math.log(2.0) + max_row * max_norm + 0.5 * reg_lambda * max_norm ** 2

    def margins(x, rows=None):
        return dataset.dot(x, rows=rows) * (dataset.labels if rows is None else dataset.labels[rows])

    def value(x):
        # ln(1 + exp(-z)) computed stably for large |z|
        return float(np.mean(np.logaddexp(0.0, -margins(x)))) + 0.5 * reg_lambda * float(x @ x)

    def _grad(x, rows):
        z = margins(x, rows=rows)
        labels = dataset.labels if rows is None else dataset.labels[rows]
        coeff = -labels / (1.0 + np.exp(z))   # -b * sigmoid(-b a.x)
        return dataset.weighted_row_sum(coeff, rows=rows) / (n if rows is None else len(rows)) + reg_lambda * x

    def full_gradient(x):
        return _grad(x, None)

    def stochastic_gradient(x, rng, context=None):
        rows = rng.permutation(n)[:batch_size]
        return _grad(x, rows)

    def noise_plan(rng, T, etas=None, plan=None):
        batches = np.empty((T, batch_size), dtype=np.int64)
        for t in range(T):
            batches[t] = rng.permutation(n)[:batch_size]
        return {"batches": batches}

    return StochasticProblem(
        problem_id=f"logistic(n={n}, d={d}, lambda={reg_lambda})",
        dimension=d,
        constants=ProblemConstants(L=L, mu=reg_lambda if reg_lambda > 0 else None,
                                   G2=G2, f_max=f_max, D2=fs.diameter2()),
        feasible_set=fs,
        value=value,
        full_gradient=full_gradient,
        stochastic_gradient=stochastic_gradient,
        noise_plan=noise_plan,
        kernel_kind="logistic",
        kernel_params={
            "indptr": dataset.indptr, "indices": dataset.indices, "data": dataset.data,
            "labels": dataset.labels, "reg_lambda": float(reg_lambda), "n": n,
        },
        default_x0=np.zeros(d),
    )


# ---------------------------------------------------------------------------
# adversarial instance for the high-probability lower bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdversarialLayout:
    """Where the noisy phase sits and the sign scalings it uses."""

    t_star: int         # noisy phase index, 1-based
    start: int          # first global iteration of that phase, 1-based
    length: int         # iterations in that phase
    eta_star: float     # step size during that phase
    nu: np.ndarray      # nu_i = (1 - eta_star)^(length - i), i = 1..length


def adversarial_layout(T: int, alpha: float, eta0: float = 1.0) -> AdversarialLayout:
    """Locate the single noisy phase of the lower-bound construction.

    Uses the strongly-convex phase partition; the noisy phase index is
    log_alpha(T) - log_alpha(log_alpha(T)) + 1 rounded to the nearest
    integer, and must land inside [2, N] so its step size is below 1.
    """
    plan = phase_partition(alpha, T, STRONGLY_CONVEX)
    log_T = math.log(T, alpha)
    t_star = math.floor(log_T - math.log(log_T, alpha) + 1.0 + 0.5)
    if not 1 <= t_star <= plan.N:
        raise ProblemError(
            f"noisy phase index {t_star} falls outside [1, {plan.N}] for T={T}, alpha={alpha}")
    eta_star = float(eta0 / alpha ** (t_star - 1))
    if not eta_star < 1.0:
        raise ProblemError(
            f"noisy-phase step {eta_star} must be below 1; T={T}, alpha={alpha} too small")
    lengths = plan.lengths()
    length = int(lengths[t_star - 1])
    start = plan.S * (t_star - 1) + 1
    nu = (1.0 - eta_star) ** (length - np.arange(1, length + 1, dtype=np.float64))
    layout = AdversarialLayout(t_star=t_star, start=start, length=length,
                               eta_star=eta_star, nu=nu)
    if 1.0 / nu.min() > E_CONST * (1.0 + 1e-12):
        raise ProblemError("sign scalings exceed e; horizon/decay combination unsupported")
    return layout


def make_adversarial_lower_bound(T: int, alpha: float, eta0: float = 1.0) -> StochasticProblem:
    """One-dimensional quadratic x^2/2 on [-4, 4] with a single noisy phase.

    The oracle returns x - z; z is zero except during the noisy phase, where
    z_i = X_i / nu_i with X_i a Rademacher sign and nu_i = (1-eta)^(len-i).
    Every |z| <= e, the oracle is unbiased, and runs must start at x = 0.
    """
    if eta0 != 1.0:
        raise ProblemError("the lower-bound construction fixes eta0 = 1")
    layout = adversarial_layout(T, alpha, eta0)
    fs = FeasibleSet.box(-4.0, 4.0, dimension=1)
    x_star = np.zeros(1)

    def value(x):
        return 0.5 * float(x[0] * x[0])

    def full_gradient(x):
        return x.copy()

    def draw_signs(rng, m):
        return np.where(rng.random(m) < 0.5, 1.0, -1.0)

    def stochastic_gradient(x, rng, context=None):
        z = 0.0
        if context is not None and context.phase == layout.t_star:
            z = draw_signs(rng, 1)[0] / layout.nu[context.inner - 1]
        return np.array([x[0] - z])

    def noise_plan(rng, T_run, etas=None, plan=None):
        if T_run != T:
            raise ProblemError(f"instance was built for T={T}, got a run of length {T_run}")
        z = np.zeros(T)
        signs = draw_signs(rng, layout.length)
        z[layout.start - 1: layout.start - 1 + layout.length] = signs / layout.nu
        # the kernel treats the oracle as gradient-plus-noise, so store -z
        return {"noise": -z[:, None]}

    return StochasticProblem(
        problem_id=f"adversarial(T={T}, alpha={alpha})",
        dimension=1,
        constants=ProblemConstants(L=1.0, mu=1.0, G2=(4.0 + E_CONST) ** 2,
                                   V2=E_CONST ** 2, f_max=8.0, D2=64.0,
                                   x_star=x_star, f_star=0.0),
        feasible_set=fs,
        value=value,
        full_gradient=full_gradient,
        stochastic_gradient=stochastic_gradient,
        noise_plan=noise_plan,
        kernel_kind="quadratic",
        kernel_params={"lam": np.ones(1), "x_star": x_star, "layout": layout},
        default_x0=np.zeros(1),
    )
