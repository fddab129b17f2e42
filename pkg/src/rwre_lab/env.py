"""Stationary environment models and reproducible two-sided realizations.

A model describes the law of the right-step probabilities omega_i; a
realization materializes one two-sided sequence lazily.  Every site's draw
is counter-based (see prng), so a realization is a pure function of
(model, seed, site): windows can grow in either direction, in any order, in
any process, and previously returned values never change.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from . import _tilt
from .prng import stream_key, u01, u01_array, u01_keys

IID_TWO_POINT = "IID_TWO_POINT"
IID_DISCRETE = "IID_DISCRETE"
MARKOV_FINITE = "MARKOV_FINITE"

_WEIGHT_TOL = 1e-12
_STATIONARY_TOL = 1e-10


class ModelError(ValueError):
    """Invalid environment model parameters."""


class AdmissibilityError(ModelError):
    """Model fails the transient zero-speed admissibility gate."""


@dataclass(frozen=True)
class EnvironmentModel:
    """Generative spec of the stationary omega-sequence plus a master seed.

    For IID kinds `weights` is the marginal law on `support`; for
    MARKOV_FINITE `transition` holds the row-stochastic kernel and
    `stationary_dist` its stationary law.
    """

    kind: str
    support: tuple
    weights: tuple
    master_seed: int
    transition: Optional[tuple] = None
    stationary_dist: Optional[tuple] = None
    admissibility_checked: bool = True

    @property
    def support_arr(self) -> np.ndarray:
        return np.asarray(self.support, dtype=float)

    @property
    def rho_values(self) -> np.ndarray:
        w = self.support_arr
        return (1.0 - w) / w

    @property
    def log_rho_values(self) -> np.ndarray:
        return np.log(self.rho_values)

    @property
    def transition_arr(self) -> np.ndarray:
        return np.asarray(self.transition, dtype=float)

    @property
    def site_marginal(self) -> np.ndarray:
        """Marginal law of the state at a single site."""
        if self.kind == MARKOV_FINITE:
            return np.asarray(self.stationary_dist, dtype=float)
        return np.asarray(self.weights, dtype=float)

    @property
    def reversed_transition(self) -> np.ndarray:
        """Time-reversed kernel P_hat[i,j] = pi_j P[j,i] / pi_i."""
        pi = self.site_marginal
        p = self.transition_arr
        return (pi[np.newaxis, :] * p.T) / pi[:, np.newaxis]

    def e_log_rho(self) -> float:
        return float(np.dot(self.site_marginal, self.log_rho_values))

    def lambda_at(self, lam: float) -> float:
        """The scaled cumulant generating function of the log-rho sums."""
        if self.kind == MARKOV_FINITE:
            return _tilt.lambda_markov(self.log_rho_values, self.transition_arr, lam)
        return _tilt.lambda_iid(self.log_rho_values, self.site_marginal, lam)

    def model_id(self) -> str:
        import hashlib
        import json

        blob = json.dumps(
            {
                "kind": self.kind,
                "support": list(self.support),
                "weights": [list(r) if isinstance(r, tuple) else r for r in self.weights],
                "transition": None if self.transition is None else [list(r) for r in self.transition],
                "seed": self.master_seed,
            },
            sort_keys=True,
        )
        return hashlib.blake2b(blob.encode(), digest_size=6).hexdigest()


def _check_probabilities(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ModelError(f"{what} must be a nonempty vector")
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ModelError(f"{what} must lie strictly inside (0, 1), got {arr.tolist()}")
    return arr


def _check_weights(weights, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ModelError(f"weights must have length {n}")
    if np.any(w < 0.0):
        raise ModelError("weights must be nonnegative")
    if abs(w.sum() - 1.0) > _WEIGHT_TOL:
        raise ModelError(f"weights sum to {w.sum()!r}, not 1 within {_WEIGHT_TOL}")
    return w


def _check_admissible(kind: str, support: np.ndarray, marginal: np.ndarray,
                      transition: Optional[np.ndarray]) -> None:
    log_rho = np.log((1.0 - support) / support)
    e_lr = float(np.dot(marginal, log_rho))
    if kind == MARKOV_FINITE:
        lam1 = _tilt.lambda_markov(log_rho, transition, 1.0)
    else:
        lam1 = _tilt.lambda_iid(log_rho, marginal, 1.0)
    if e_lr >= 0.0:
        raise AdmissibilityError(
            f"E_P log rho = {e_lr:.6g} >= 0: walk is not transient to the right"
        )
    if lam1 < 0.0:
        raise AdmissibilityError(
            f"Lambda(1) = {lam1:.6g} < 0: ballistic regime (positive speed), "
            "outside the zero-speed gate"
        )
    # E log rho < 0 makes Lambda negative on a right neighborhood of 0, so a
    # lambda_1 > 0 with Lambda(lambda_1) < 0 always exists here.


def make_iid_discrete(omega_states, weights, master_seed: int,
                      check_admissibility: bool = True) -> EnvironmentModel:
    """IID environment with an arbitrary finite omega support."""
    support = _check_probabilities(omega_states, "omega_states")
    w = _check_weights(weights, support.size)
    if check_admissibility:
        _check_admissible(IID_DISCRETE, support, w, None)
    return EnvironmentModel(
        kind=IID_DISCRETE,
        support=tuple(support.tolist()),
        weights=tuple(w.tolist()),
        master_seed=int(master_seed),
        admissibility_checked=check_admissibility,
    )


def make_iid_two_point(omega_hi: float, omega_lo: float, q: float, master_seed: int,
                       check_admissibility: bool = True) -> EnvironmentModel:
    """IID environment taking omega_lo with probability q, omega_hi otherwise.

    omega_lo is the small right-step probability (large rho) so q is the
    frequency of the slow sites.
    """
    support = _check_probabilities([omega_hi, omega_lo], "omega values")
    if not 0.0 < q < 1.0:
        raise ModelError(f"q must lie strictly inside (0, 1), got {q!r}")
    w = np.array([1.0 - q, q])
    if check_admissibility:
        _check_admissible(IID_TWO_POINT, support, w, None)
    return EnvironmentModel(
        kind=IID_TWO_POINT,
        support=tuple(support.tolist()),
        weights=tuple(w.tolist()),
        master_seed=int(master_seed),
        admissibility_checked=check_admissibility,
    )


def make_constant(omega: float, master_seed: int) -> EnvironmentModel:
    """Degenerate single-value environment (admissibility gate bypassed).

    Used for ballistic sanity checks; constant omega > 1/2 has positive speed
    and would be rejected by the gate.
    """
    support = _check_probabilities([omega], "omega value")
    return EnvironmentModel(
        kind=IID_DISCRETE,
        support=tuple(support.tolist()),
        weights=(1.0,),
        master_seed=int(master_seed),
        admissibility_checked=False,
    )


def _stationary_distribution(p: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eig(p.T)
    idx = int(np.argmin(np.abs(vals - 1.0)))
    pi = np.real(vecs[:, idx])
    pi = pi / pi.sum()
    return pi


def _check_primitive(p: np.ndarray) -> None:
    n = p.shape[0]
    reach = p > 0.0
    power = reach.copy()
    # P primitive (irreducible + aperiodic) iff some power <= (n-1)^2 + 1 is
    # strictly positive
    limit = (n - 1) ** 2 + 1
    for _ in range(limit):
        if power.all():
            return
        power = (power.astype(int) @ reach.astype(int)) > 0
    # distinguish the diagnostics
    closure = reach | np.eye(n, dtype=bool)
    acc = closure.copy()
    for _ in range(n):
        acc = (acc.astype(int) @ closure.astype(int)) > 0
    if not acc.all():
        raise ModelError("transition matrix is reducible")
    raise ModelError("transition matrix is periodic")


def make_markov_finite(omega_states, transition, master_seed: int,
                       check_admissibility: bool = True) -> EnvironmentModel:
    """Stationary two-sided finite-state Markov environment."""
    support = _check_probabilities(omega_states, "omega_states")
    p = np.asarray(transition, dtype=float)
    if p.shape != (support.size, support.size):
        raise ModelError(f"transition must be {support.size}x{support.size}")
    for row in p:
        _check_weights(row, support.size)
    _check_primitive(p)
    pi = _stationary_distribution(p)
    if np.any(pi <= 0.0):
        raise ModelError(f"stationary distribution has nonpositive entries: {pi.tolist()}")
    if np.max(np.abs(pi @ p - pi)) > _STATIONARY_TOL:
        raise ModelError("stationary distribution residual exceeds tolerance")
    if check_admissibility:
        _check_admissible(MARKOV_FINITE, support, pi, p)
    return EnvironmentModel(
        kind=MARKOV_FINITE,
        support=tuple(support.tolist()),
        weights=tuple(tuple(row) for row in p.tolist()),
        master_seed=int(master_seed),
        transition=tuple(tuple(row) for row in p.tolist()),
        stationary_dist=tuple(pi.tolist()),
        admissibility_checked=check_admissibility,
    )


class EnvironmentRealization:
    """One lazily materialized two-sided omega sequence.

    omega_at(i) depends only on (model, seed, i) for IID kinds; for Markov
    models the state at site i is built by extending from the stationary
    draw at site 0 (forward kernel to the right, reversed kernel to the
    left), with site i consuming exactly draw #i of the environment stream.
    Either way the realized values never change once returned.
    """

    def __init__(self, model: EnvironmentModel, seed: Optional[int] = None):
        self.model = model
        self.seed = model.master_seed if seed is None else int(seed)
        self.env_key = stream_key(self.seed, "env")
        if model.kind == MARKOV_FINITE:
            self._fwd_cdf = np.cumsum(model.transition_arr, axis=1)
            self._rev_cdf = np.cumsum(model.reversed_transition, axis=1)
            self._pi_cdf = np.cumsum(model.site_marginal)
            self._right: list = []  # states at sites 0, 1, 2, ...
            self._left: list = []   # states at sites -1, -2, ...
        else:
            self._cdf = np.cumsum(model.site_marginal)

    # -- state materialization (Markov only) --------------------------------

    def _draw_from_cdf(self, cdf: np.ndarray, site: int) -> int:
        return int(np.searchsorted(cdf, u01(self.env_key, site & 0xFFFFFFFFFFFFFFFF), side="right"))

    def _state_at(self, site: int) -> int:
        if site >= 0:
            while len(self._right) <= site:
                i = len(self._right)
                if i == 0:
                    self._right.append(self._draw_from_cdf(self._pi_cdf, 0))
                else:
                    prev = self._right[i - 1]
                    self._right.append(self._draw_from_cdf(self._fwd_cdf[prev], i))
            return self._right[site]
        while len(self._left) < -site:
            i = -len(self._left) - 1  # next site to fill, going left
            prev = self._state_at(i + 1)
            self._left.append(self._draw_from_cdf(self._rev_cdf[prev], i))
        return self._left[-site - 1]

    # -- public surface ------------------------------------------------------

    def omega_at(self, site: int) -> float:
        if self.model.kind == MARKOV_FINITE:
            return float(self.model.support[self._state_at(site)])
        u = u01(self.env_key, site & 0xFFFFFFFFFFFFFFFF)
        return float(self.model.support[int(np.searchsorted(self._cdf, u, side="right"))])

    def rho_at(self, site: int) -> float:
        w = self.omega_at(site)
        return (1.0 - w) / w

    def omega_window(self, lo: int, hi: int) -> np.ndarray:
        """omega values for sites lo..hi-1 as a float array."""
        if hi <= lo:
            return np.empty(0, dtype=float)
        if self.model.kind == MARKOV_FINITE:
            self._state_at(lo)
            self._state_at(hi - 1)
            states = [self._state_at(i) for i in range(lo, hi)]
            return self.model.support_arr[np.asarray(states, dtype=np.int64)]
        sites = np.arange(lo, hi, dtype=np.int64).astype(np.uint64)
        u = u01_array(self.env_key, sites)
        idx = np.searchsorted(self._cdf, u, side="right")
        return self.model.support_arr[idx]

    def rho_window(self, lo: int, hi: int) -> np.ndarray:
        w = self.omega_window(lo, hi)
        return (1.0 - w) / w


def omega_at(realization: EnvironmentRealization, site: int) -> float:
    return realization.omega_at(site)


def rho_at(realization: EnvironmentRealization, site: int) -> float:
    return realization.rho_at(site)


def annealed_left_columns(model: EnvironmentModel, seed: int, replicas: int) -> Iterator[np.ndarray]:
    """Yield omega vectors across replicas for sites 0, -1, -2, ...

    Each replica is an independent environment draw; replica r uses stream
    key derive(seed, "annealed", r).  Used by the R-series and branching
    Monte Carlo layers.
    """
    keys = np.array([stream_key(seed, "annealed", r) for r in range(replicas)], dtype=np.uint64)
    support = model.support_arr
    if model.kind == MARKOV_FINITE:
        rev_cdf = np.cumsum(model.reversed_transition, axis=1)
        pi_cdf = np.cumsum(model.site_marginal)
        u = u01_keys(keys, 0)
        states = np.searchsorted(pi_cdf, u, side="right")
        k = 0
        while True:
            yield support[states]
            k += 1
            u = u01_keys(keys, (-k) & 0xFFFFFFFFFFFFFFFF)
            rows = rev_cdf[states]
            states = (u[:, np.newaxis] >= rows).sum(axis=1)
    else:
        cdf = np.cumsum(model.site_marginal)
        k = 0
        while True:
            u = u01_keys(keys, (-k) & 0xFFFFFFFFFFFFFFFF)
            yield support[np.searchsorted(cdf, u, side="right")]
            k += 1
