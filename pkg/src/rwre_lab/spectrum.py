"""Large-deviation layer: Lambda, the rate function J, kappa, speed, R-moments.

Lambda(lam) is the normalized log of the tilted moment of the rho-products:
closed form over the support for IID models, log Perron root of the tilted
kernel for finite Markov models.  kappa comes out two independent ways (the
positive zero of Lambda, and min_{y>0} J(y)/y) and the two must agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from . import _tilt
from .env import MARKOV_FINITE, EnvironmentModel, EnvironmentRealization, annealed_left_columns

_KAPPA_TOL = 1e-12
_SLOPE_TOL = 1e-12


def lambda_fn(model: EnvironmentModel, lam: float) -> float:
    """(1/n) log E prod rho_i^lam in the n->inf limit (exact for both kinds)."""
    if lam == 0.0:
        return 0.0
    return model.lambda_at(lam)


def lambda_prime(model: EnvironmentModel, lam: float) -> float:
    if model.kind == MARKOV_FINITE:
        return _tilt.lambda_markov_prime(model.log_rho_values, model.transition_arr, lam)
    return _tilt.lambda_iid_prime(model.log_rho_values, model.site_marginal, lam)


class KappaRoot(float):
    """kappa as a float, carrying a flag for the Lambda(1) = 0 boundary case."""

    at_boundary: bool = False

    def __new__(cls, value: float, at_boundary: bool = False):
        obj = super().__new__(cls, value)
        obj.at_boundary = at_boundary
        return obj


def kappa_root(model: EnvironmentModel) -> KappaRoot:
    """The unique kappa > 0 with Lambda(kappa) = 0, by bisection to 1e-12."""
    lam1 = lambda_fn(model, 1.0)
    if lam1 == 0.0:
        return KappaRoot(1.0, at_boundary=True)
    hi = 1.0
    val_hi = lam1
    while val_hi < 0.0:
        hi *= 2.0
        if hi > 512.0:
            raise ValueError("Lambda has no positive zero: model is ballistic")
        val_hi = lambda_fn(model, hi)
    lo = 1e-9
    if lambda_fn(model, lo) >= 0.0:
        raise ValueError("Lambda(0+) >= 0: model is not transient (E log rho >= 0)")
    while hi - lo > _KAPPA_TOL:
        mid = 0.5 * (lo + hi)
        if lambda_fn(model, mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return KappaRoot(0.5 * (lo + hi))


@lru_cache(maxsize=256)
def _slope_limit(model: EnvironmentModel, direction: int) -> Tuple[float, float]:
    """Converged extreme slope of Lambda and the lambda where it converged."""
    lam = 8.0 * direction
    prev = lambda_prime(model, lam)
    for _ in range(12):
        lam *= 2.0
        cur = lambda_prime(model, lam)
        if abs(cur - prev) <= _SLOPE_TOL:
            return cur, lam
        prev = cur
    return prev, lam


def rate_function(model: EnvironmentModel, x: float) -> float:
    """Legendre transform J(x) = sup_lam {lam*x - Lambda(lam)}.

    Returns math.inf outside the closure of the range of Lambda'.
    """
    s_max, l_max = _slope_limit(model, +1)
    s_min, l_min = _slope_limit(model, -1)
    edge_tol = 1e-9
    if x > s_max + edge_tol or x < s_min - edge_tol:
        return math.inf
    if x >= s_max - edge_tol:
        return l_max * x - lambda_fn(model, l_max)
    if x <= s_min + edge_tol:
        return l_min * x - lambda_fn(model, l_min)
    # Lambda' is nondecreasing; bisect Lambda'(lam) = x
    lo, hi = l_min, l_max
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if lambda_prime(model, mid) < x:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(1.0, abs(hi)):
            break
    lam_star = 0.5 * (lo + hi)
    return max(0.0, lam_star * x - lambda_fn(model, lam_star))


class KappaRate(float):
    """min_{y>0} J(y)/y as a float, carrying the grid argmin interval."""

    argmin_interval: Tuple[float, float] = (0.0, 0.0)

    def __new__(cls, value: float, argmin_interval=(0.0, 0.0)):
        obj = super().__new__(cls, value)
        obj.argmin_interval = tuple(argmin_interval)
        return obj


def kappa_via_rate(model: EnvironmentModel, grid_points: int = 400) -> KappaRate:
    """kappa as min over y > 0 of J(y)/y (grid search plus local refinement)."""
    s_max, _ = _slope_limit(model, +1)
    if s_max <= 0.0:
        return KappaRate(math.inf)
    ys = np.linspace(s_max / grid_points, s_max, grid_points)
    vals = np.array([rate_function(model, float(y)) / float(y) for y in ys])
    i = int(np.argmin(vals))
    flat = np.flatnonzero(vals <= vals[i] + 1e-12)
    interval = (float(ys[flat[0]]), float(ys[flat[-1]]))
    lo = ys[max(i - 1, 0)]
    hi = ys[min(i + 1, grid_points - 1)]
    res = minimize_scalar(
        lambda y: rate_function(model, y) / y,
        bounds=(float(lo), float(hi)),
        method="bounded",
        options={"xatol": 1e-10},
    )
    best = min(float(vals[i]), float(res.fun))
    return KappaRate(best, argmin_interval=interval)


@dataclass
class SpeedEstimate:
    """Monte Carlo speed diagnostic from the truncated R series."""

    mean_r: float
    tail_relative: float
    diverged: bool
    speed: float  # 0.0 when the series diverges (zero-speed regime)

    replicas: int = 0
    truncation_depth: int = 0


_TAIL_RULE = 1e-9


def _truncated_r(model: EnvironmentModel, depth: int, replicas: int, seed: int,
                 power: float = 1.0):
    """Accumulate R truncated at `depth` product terms, per replica.

    Returns (r_values, max relative tail increment over the last 10% of depth).
    """
    cols = annealed_left_columns(model, seed, replicas)
    r = np.ones(replicas)
    prod = np.ones(replicas)
    tail = np.zeros(replicas)
    tail_start = int(math.floor(0.9 * depth))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(depth):
            omega = next(cols)
            prod = prod * (1.0 - omega) / omega
            r = r + prod
            if k >= tail_start:
                tail = tail + prod
    rel = tail / r
    return r, float(np.nanmax(rel)) if replicas else 0.0


def _expected_tail_ratio(model: EnvironmentModel, depth: int) -> float:
    """Expected share of E[R_truncated] carried by the last 10% of terms.

    E[term_n] = exp(n * Lambda(1)); when Lambda(1) >= 0 the term expectations
    do not decay at all (E_P R = infinity) even though every single replica's
    series converges almost surely, so the per-replica tail alone cannot see
    the divergence.
    """
    lam1 = lambda_fn(model, 1.0)
    if lam1 >= 0.0:
        return 1.0
    tail_start = int(math.floor(0.9 * depth))
    # geometric sums of exp(n*lam1), n = tail_start..depth-1 over n = 0..depth-1
    log_tail = tail_start * lam1 + math.log1p(-math.exp((depth - tail_start) * lam1))
    log_all = math.log1p(-math.exp(depth * lam1))
    return math.exp(log_tail - log_all)


def speed(model: EnvironmentModel, truncation_depth: int = 2000, replicas: int = 400,
          seed: Optional[int] = None) -> SpeedEstimate:
    """Estimate v = 1/(2 E_P R - 1); flags divergence when the R tail won't die.

    Convergence requires both the sampled tail increments and the expected
    ones to pass the 1e-9 relative rule.  The admissibility gate is
    deliberately not consulted: ballistic sanity models are legitimate
    inputs here.
    """
    seed = model.master_seed if seed is None else seed
    r, tail_rel = _truncated_r(model, truncation_depth, replicas, seed)
    tail_rel = max(tail_rel, _expected_tail_ratio(model, truncation_depth))
    mean_r = float(np.mean(r))
    diverged = not (tail_rel < _TAIL_RULE) or not math.isfinite(mean_r)
    value = 0.0 if diverged else 1.0 / (2.0 * mean_r - 1.0)
    return SpeedEstimate(mean_r=mean_r, tail_relative=tail_rel, diverged=diverged,
                         speed=value, replicas=replicas, truncation_depth=truncation_depth)


@dataclass
class RMomentEstimate:
    """Monte Carlo estimate of E_P (truncated R)^beta."""

    beta: float
    truncation_depth: int
    replicas: int
    estimate: float
    tail_diagnostic: float  # max relative increment over the last 10% of depth
    divergence_warning: bool  # beta >= kappa: the true moment is infinite


def r_moment(model: EnvironmentModel, beta: float, truncation_depth: int,
             replicas: int, seed: Optional[int] = None) -> RMomentEstimate:
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    seed = model.master_seed if seed is None else seed
    r, tail_rel = _truncated_r(model, truncation_depth, replicas, seed)
    with np.errstate(over="ignore"):
        est = float(np.mean(r ** beta))
    warn = False
    if model.admissibility_checked:
        warn = beta >= float(kappa_root(model))
    return RMomentEstimate(beta=beta, truncation_depth=truncation_depth,
                           replicas=replicas, estimate=est,
                           tail_diagnostic=tail_rel, divergence_warning=warn)


def empirical_log_rho_mean(realization: EnvironmentRealization, n: int) -> float:
    """(1/n) sum_{i=0}^{n-1} log rho_i for one realization."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return float(np.mean(np.log(realization.rho_window(0, n))))


DEFAULT_LAMBDA_GRID = tuple(round(0.05 * k, 10) for k in range(1, 41))


@dataclass
class SpectrumReport:
    """Lambda/J grids plus the two kappa computations and speed diagnostics."""

    lambda_grid: List[Tuple[float, float]]
    kappa_root: float
    kappa_root_at_boundary: bool
    kappa_via_rate: float
    rate_grid: List[Tuple[float, float]]
    speed: SpeedEstimate
    model_id: str

    negative_lambda_witness: Optional[float] = None  # grid point nearest kappa/2 with Lambda < 0

    def check_invariants(self) -> List[str]:
        """Return a list of violated invariants (empty when healthy)."""
        problems = []
        lams = [p[0] for p in self.lambda_grid]
        vals = [p[1] for p in self.lambda_grid]
        for i in range(1, len(vals) - 1):
            d2 = vals[i + 1] - 2.0 * vals[i] + vals[i - 1]
            if d2 < -1e-9:
                problems.append(f"Lambda not convex at lambda={lams[i]}")
        if abs(self.kappa_root - self.kappa_via_rate) > 1e-4:
            problems.append("kappa_root and kappa_via_rate disagree beyond 1e-4")
        for lam, val in self.lambda_grid:
            if lam > 0.0 and abs(lam - self.kappa_root) > 1e-6:
                if math.copysign(1.0, val) != math.copysign(1.0, lam - self.kappa_root):
                    problems.append(f"sign(Lambda({lam})) != sign(lambda - kappa)")
        return problems


def spectrum_report(model: EnvironmentModel,
                    lambda_grid=DEFAULT_LAMBDA_GRID,
                    rate_points: int = 60,
                    speed_depth: int = 2000,
                    speed_replicas: int = 400) -> SpectrumReport:
    lam_pairs = [(float(l), lambda_fn(model, float(l))) for l in lambda_grid]
    k_root = kappa_root(model)
    k_rate = kappa_via_rate(model)
    s_max, _ = _slope_limit(model, +1)
    s_min, _ = _slope_limit(model, -1)
    xs = np.linspace(s_min, s_max, rate_points)
    rate_pairs = [(float(x), rate_function(model, float(x))) for x in xs]
    sp = speed(model, truncation_depth=speed_depth, replicas=speed_replicas)
    half = min((l for l, _ in lam_pairs if l > 0.0), key=lambda l: abs(l - k_root / 2.0))
    witness = lambda_fn(model, half)
    return SpectrumReport(
        lambda_grid=lam_pairs,
        kappa_root=float(k_root),
        kappa_root_at_boundary=k_root.at_boundary,
        kappa_via_rate=float(k_rate),
        rate_grid=rate_pairs,
        speed=sp,
        model_id=model.model_id(),
        negative_lambda_witness=witness if witness < 0.0 else None,
    )


def finite_n_lambda_markov(model: EnvironmentModel, lam: float, n: int) -> float:
    """(1/n) log E prod_{i=0}^{n-1} rho_i^lam, exact for a finite Markov chain.

    Evaluates pi^T D M^{n-1} 1 with per-step renormalization; a deterministic
    oracle for the Perron-root evaluation of Lambda.
    """
    if model.kind != MARKOV_FINITE:
        raise ValueError("finite-n oracle applies to Markov models")
    d = np.exp(lam * model.log_rho_values)
    m = model.transition_arr * d[np.newaxis, :]
    v = model.site_marginal * d
    log_scale = 0.0
    for _ in range(n - 1):
        v = v @ m
        s = v.sum()
        v = v / s
        log_scale += math.log(s)
    return (log_scale + math.log(v.sum())) / n
