"""Raw tilted-moment computations shared by env (admissibility) and spectrum.

These operate on plain arrays so the environment module can gate model
construction without importing the spectrum layer.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp


def lambda_iid(log_rho: np.ndarray, weights: np.ndarray, lam: float) -> float:
    """log E[rho^lam] over a finite support, computed in log space."""
    return float(logsumexp(np.log(weights) + lam * log_rho))


def lambda_iid_prime(log_rho: np.ndarray, weights: np.ndarray, lam: float) -> float:
    a = np.log(weights) + lam * log_rho
    a -= a.max()
    w = np.exp(a)
    return float(np.sum(w * log_rho) / np.sum(w))


def perron_root(m: np.ndarray) -> float:
    """Largest eigenvalue of a nonnegative primitive matrix.

    Direct eigensolve: exact to machine precision and much faster than power
    iteration inside the Legendre-transform inner loops.  power_iteration_root
    below is the independent cross-check.
    """
    return float(np.max(np.real(np.linalg.eigvals(m))))


def power_iteration_root(m: np.ndarray, tol: float = 1e-13, max_iter: int = 100_000) -> float:
    """Perron root by plain power iteration, for cross-validation."""
    v = np.full(m.shape[0], 1.0 / m.shape[0])
    r = 0.0
    for _ in range(max_iter):
        w = m @ v
        r_new = w.sum()
        v_new = w / r_new
        if abs(r_new - r) <= tol * max(1.0, abs(r_new)) and np.max(np.abs(v_new - v)) <= tol:
            return float(r_new)
        v, r = v_new, r_new
    return float(r)


def lambda_markov(log_rho: np.ndarray, transition: np.ndarray, lam: float) -> float:
    """log Perron root of the tilted matrix M(lam)_ij = P_ij * rho_j^lam.

    The column scale exp(lam*log_rho) is factored out before the power
    iteration so large |lam| cannot overflow.
    """
    shift = lam * log_rho.max() if lam >= 0 else lam * log_rho.min()
    tilted = transition * np.exp(lam * log_rho - shift)[np.newaxis, :]
    return shift + np.log(perron_root(tilted))


def lambda_markov_prime(log_rho: np.ndarray, transition: np.ndarray, lam: float,
                        h: float = 1e-6) -> float:
    up = lambda_markov(log_rho, transition, lam + h)
    dn = lambda_markov(log_rho, transition, lam - h)
    return (up - dn) / (2.0 * h)
