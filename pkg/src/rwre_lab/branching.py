"""Branching process with immigration and its generating-function layer.

One immigrant arrives per generation; each particle at generation k leaves a
geometric number of offspring with success parameter omega_{-k}.  The sum of
Z_k + 1 independent geometrics is collapsed into a single negative-binomial
draw per generation, which is exact in law and makes a length-n path O(n).

The generating-function side works with the reciprocal polynomials B_n(s):
phi_n(s) = 1/B_n(s), with the stable log-space ratio recursion
q_k = 1/(1 + rho_k (1 - s q_{k-1})) so nothing overflows at any n.  Raw B_n
blows past double precision near n ~ 700 for s close to 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .env import EnvironmentModel, EnvironmentRealization, annealed_left_columns
from .prng import stream_key

DEFAULT_OVERFLOW_BOUND = 2**62
_SAMPLER_SAFE_BOUND = 2**55  # keeps the negative-binomial internals inside int64


@dataclass
class BranchingPath:
    """Z_0..Z_n with partial sums; flagged when the overflow guard tripped."""

    z: List[int]
    partial_sums: List[int]  # sum_{i=1}^k Z_i for k = 1..n
    flagged: bool = False

    @property
    def total(self) -> int:
        return self.partial_sums[-1] if self.partial_sums else 0


@dataclass
class MeanProfile:
    """Quenched means m_k = E_omega Z_k, k = 1..n."""

    h: List[float]


def simulate_z(realization: EnvironmentRealization, n: int, seed: int,
               overflow_bound: int = DEFAULT_OVERFLOW_BOUND) -> BranchingPath:
    """Sample Z_0..Z_n; Z_{k+1} ~ NegBin(Z_k + 1 trials, omega_{-k})."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    bound = min(overflow_bound, _SAMPLER_SAFE_BOUND)
    z = [0]
    sums: List[int] = []
    total = 0
    cur = 0
    flagged = False
    for k in range(n):
        cur = int(rng.negative_binomial(cur + 1, realization.omega_at(-k)))
        z.append(cur)
        total += cur
        sums.append(total)
        if cur > bound:
            flagged = True
            break
    return BranchingPath(z=z, partial_sums=sums, flagged=flagged)


def quenched_mean_profile(realization: EnvironmentRealization, n: int) -> MeanProfile:
    """m_{k+1} = rho_{-k} (m_k + 1), m_0 = 0.

    Equal in law (by stationarity) to the profile rho' + rho'rho'' + ... built
    from forward sites; the branching indexing over nonpositive sites is the
    one the sampler actually consumes.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    h = []
    m = 0.0
    for k in range(n):
        m = realization.rho_at(-k) * (m + 1.0)
        h.append(m)
    return MeanProfile(h=h)


def f_step(rho: float, x: float) -> float:
    """Offspring pgf evaluated at x: 1/(1 + rho(1-x)), in (0, 1] for x in [0,1]."""
    return 1.0 / (1.0 + rho * (1.0 - x))


def phi_product(realization: EnvironmentRealization, n: int, s: float) -> float:
    """Nested product phi_n(s), inner to outer; may underflow to 0 for large n."""
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    if n < 1:
        raise ValueError("n must be >= 1")
    q = f_step(realization.rho_at(0), s)
    prod = q
    for k in range(1, n):
        q = f_step(realization.rho_at(k), s * q)
        prod *= q
    return prod


def log_b(realization: EnvironmentRealization, n: int, s: float) -> float:
    """log B_n(s) via the ratio recursion; stable for any n."""
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    if n < 0:
        raise ValueError("n must be >= 0")
    log_total = 0.0
    q = 1.0  # seed: q_{-1} interpreted as B_{-1}/B_0 = 1
    for k in range(n):
        q = 1.0 / (1.0 + realization.rho_at(k) * (1.0 - s * q))
        if not 0.0 < q <= 1.0:
            raise AssertionError(f"ratio q_{k} = {q} left (0, 1]")
        log_total -= math.log(q)
    return log_total


def b_direct(rho_prefix, n: int, s: float) -> Tuple[float, float]:
    """B_n(s) by the three-term recursion and, independently, the summed form.

    Returns the pair for equivalence testing.  Guarded to n <= 500: raw
    polynomial values overflow for small s and large rho beyond that.
    """
    if n > 500:
        raise ValueError("b_direct is guarded to n <= 500; use log_b for large n")
    if n < 0:
        raise ValueError("n must be >= 0")
    rho = [float(r) for r in rho_prefix]
    if len(rho) < n:
        raise ValueError("rho_prefix shorter than n")

    # three-term recursion
    b_prev, b_cur = 1.0, 1.0  # B_{-1}, B_0
    for k in range(n):
        if k == 0:
            b_prev, b_cur = b_cur, 1.0 + rho[0] * (1.0 - s)
        else:
            b_prev, b_cur = b_cur, (1.0 + rho[k]) * b_cur - s * rho[k] * b_prev

    # summed form; the rho products are rebuilt per step, independent of the
    # three-term recursion above
    bs = [1.0, 1.0]  # B_{-1}, B_0 at indices 0, 1
    for m in range(n):
        acc = 0.0
        prod = 1.0
        for i in range(m, -1, -1):
            prod *= rho[i]
            acc += bs[i] * prod  # bs[i] is B_{i-1}
        bs.append(bs[m + 1] + (1.0 - s) * acc)

    return (b_cur if n > 0 else 1.0), bs[n + 1]


@dataclass
class PsiEstimate:
    value: float
    stderr: float
    replicas: int


def psi_mc(realization: EnvironmentRealization, n: int, s: float, replicas: int,
           seed: int) -> PsiEstimate:
    """Monte Carlo E_omega s^(Z_1+..+Z_n) at the fixed environment."""
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    rng = np.random.default_rng(seed)
    z = np.zeros(replicas, dtype=np.int64)
    total = np.zeros(replicas, dtype=np.int64)
    for k in range(n):
        z = rng.negative_binomial(z + 1, realization.omega_at(-k))
        total += z
    with np.errstate(divide="ignore"):
        vals = np.where(total == 0, 1.0, s ** total.astype(np.float64))
    return PsiEstimate(value=float(vals.mean()),
                       stderr=float(vals.std(ddof=1) / math.sqrt(replicas)),
                       replicas=replicas)


def sample_zsum_batch(model: EnvironmentModel, n: int, replicas: int, seed: int,
                      overflow_bound: int = DEFAULT_OVERFLOW_BOUND):
    """Annealed batch of sum_{i=1}^n Z_i: fresh environment per replica.

    Environments come from counter-based per-replica streams; offspring draws
    share one generator, vectorized across replicas per generation.  Returns
    (totals float array, flagged bool array); flagged replicas freeze at the
    overflow guard.
    """
    cols = annealed_left_columns(model, seed, replicas)
    rng = np.random.default_rng(stream_key(seed, "offspring"))
    bound = min(overflow_bound, _SAMPLER_SAFE_BOUND)
    z = np.zeros(replicas, dtype=np.int64)
    total = np.zeros(replicas, dtype=np.float64)
    flagged = np.zeros(replicas, dtype=bool)
    for _ in range(n):
        omega = next(cols)
        fresh = rng.negative_binomial(z + 1, omega)
        z = np.where(flagged, z, fresh)
        total = np.where(flagged, total, total + z)
        flagged |= z > bound
        z = np.where(flagged, 0, z)
    return total, flagged
