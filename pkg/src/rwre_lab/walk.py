"""Quenched walk simulation: X_n, hitting times T_n, left-crossing counts.

Trajectory randomness is a counter-based stream keyed separately from the
environment stream, with the time step as the counter.  That gives quenched
semantics (one environment, many walks and vice versa), exact replay across
window regrowth, and a pathwise monotone coupling in omega for walks sharing
a trajectory key.

The hot loops are numba kernels over a materialized omega window; the window
grows adaptively when the walk wanders past an edge.  A pure-python path with
an injectable uniform stream exists for forced-path tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from numba import njit

from .env import EnvironmentRealization
from .prng import nb_u01, stream_key, u01


@dataclass(frozen=True)
class WalkState:
    position: int
    time: int
    traj_key: int


@dataclass
class HittingRecord:
    """Outcome of one first-passage run to `target`."""

    target: int
    hitting_time: Optional[int]  # None when the step cap was exceeded
    capped: bool
    left_counts: Dict[int, int]  # site -> left crossings before T_n (nonzero only)
    min_position: int
    steps_taken: int

    def left_sum(self) -> int:
        return sum(self.left_counts.values())


@dataclass
class WalkSummary:
    position: int
    time: int
    min_position: int
    max_position: int


def step(state: WalkState, realization: EnvironmentRealization,
         stream: Optional[Callable[[int], float]] = None) -> WalkState:
    """One transition of the quenched chain: +1 w.p. omega at the position."""
    u = stream(state.time) if stream is not None else u01(state.traj_key, state.time)
    move = 1 if u < realization.omega_at(state.position) else -1
    return WalkState(state.position + move, state.time + 1, state.traj_key)


@njit(cache=True, nogil=True)
def _hit_kernel(omega, lo, counts, traj_key, pos, t, minpos, target, step_cap):
    """Run until hitting target, exceeding the cap, or touching the left edge.

    Returns (status, pos, t, minpos); status 0 = hit, 1 = capped, 2 = edge.
    """
    key = np.uint64(traj_key)
    while t < step_cap:
        idx = pos - lo
        if nb_u01(key, np.uint64(t)) < omega[idx]:
            pos += 1
        else:
            counts[idx] += 1
            pos -= 1
            if pos < minpos:
                minpos = pos
        t += 1
        if pos == target:
            return 0, pos, t, minpos
        if pos == lo:
            return 2, pos, t, minpos
    return 1, pos, t, minpos


@njit(cache=True, nogil=True)
def _walk_kernel(omega, lo, traj_key, pos, t, n_total, minpos, maxpos):
    """Advance until time n_total or an edge of the window; returns state."""
    key = np.uint64(traj_key)
    hi = lo + omega.shape[0] - 1
    while t < n_total:
        idx = pos - lo
        if nb_u01(key, np.uint64(t)) < omega[idx]:
            pos += 1
            if pos > maxpos:
                maxpos = pos
        else:
            pos -= 1
            if pos < minpos:
                minpos = pos
        t += 1
        if pos == lo or pos == hi:
            break
    return pos, t, minpos, maxpos


def default_step_cap(target: int, kappa_hat: float, safety: int = 100) -> int:
    """Zero-speed walks have T_n of order n^(1/kappa); the cap must grow
    superlinearly or finite records would be biased toward fast excursions."""
    return int(10.0 * safety * float(target) ** (1.0 / kappa_hat))


def hitting_time(realization: EnvironmentRealization, target: int, step_cap: int,
                 seed: int, stream: Optional[Callable[[int], float]] = None) -> HittingRecord:
    """Simulate until position == target or step_cap steps, recording U_i^n."""
    if target < 1:
        raise ValueError("target must be >= 1")
    if step_cap < target:
        raise ValueError("step_cap must be at least target")
    if stream is not None:
        return _hitting_time_py(realization, target, step_cap, seed, stream)

    traj_key = stream_key(seed, "traj")
    lo = -64
    omega = realization.omega_window(lo, target + 1)
    counts = np.zeros(omega.shape[0], dtype=np.int64)
    pos, t, minpos = 0, 0, 0
    while True:
        status, pos, t, minpos = _hit_kernel(
            omega, lo, counts, np.uint64(traj_key), pos, t, minpos, target, step_cap)
        if status != 2:
            break
        new_lo = lo * 2
        omega = realization.omega_window(new_lo, target + 1)
        grown = np.zeros(omega.shape[0], dtype=np.int64)
        grown[lo - new_lo:] = counts
        counts, lo = grown, new_lo
    left_counts = {int(lo + i): int(c) for i, c in enumerate(counts) if c}
    capped = status == 1
    return HittingRecord(
        target=target,
        hitting_time=None if capped else int(t),
        capped=capped,
        left_counts=left_counts,
        min_position=int(minpos),
        steps_taken=int(t),
    )


def _hitting_time_py(realization, target, step_cap, seed, stream) -> HittingRecord:
    traj_key = stream_key(seed, "traj")
    state = WalkState(0, 0, traj_key)
    counts: Dict[int, int] = {}
    minpos = 0
    while state.time < step_cap and state.position != target:
        here = state.position
        nxt = step(state, realization, stream=stream)
        if nxt.position < here:
            counts[here] = counts.get(here, 0) + 1
            minpos = min(minpos, nxt.position)
        state = nxt
    capped = state.position != target
    return HittingRecord(
        target=target,
        hitting_time=None if capped else state.time,
        capped=capped,
        left_counts=counts,
        min_position=minpos,
        steps_taken=state.time,
    )


def run_to_time(realization: EnvironmentRealization, n: int, seed: int) -> WalkSummary:
    """X_n after exactly n steps, with running extremes."""
    if n < 0:
        raise ValueError("n must be >= 0")
    traj_key = stream_key(seed, "traj")
    margin_lo, margin_hi = 1024, 1024
    lo = -margin_lo
    omega = realization.omega_window(lo, margin_hi + 1)
    pos, t, minpos, maxpos = 0, 0, 0, 0
    while t < n:
        pos, t, minpos, maxpos = _walk_kernel(omega, lo, np.uint64(traj_key), pos, t, n, minpos, maxpos)
        if t >= n:
            break
        if pos == lo:
            margin_lo *= 2
        else:
            margin_hi *= 2
        lo = -margin_lo
        omega = realization.omega_window(lo, margin_hi + 1)
    return WalkSummary(position=int(pos), time=int(t),
                       min_position=int(minpos), max_position=int(maxpos))


def verify_identity(record: HittingRecord) -> bool:
    """Exact integer check of T_n = n + 2 * sum_i U_i^n."""
    if record.hitting_time is None:
        raise ValueError("identity is only defined for finite hitting records")
    return record.hitting_time == record.target + 2 * record.left_sum()


def left_tail_mass(realization: EnvironmentRealization, target: int, seed: int,
                   step_cap: Optional[int] = None, kappa_hat: float = 1.0) -> int:
    """sum_{i <= 0} U_i^n for one finite run (the tight additive term)."""
    cap = step_cap if step_cap is not None else default_step_cap(target, kappa_hat)
    record = hitting_time(realization, target, cap, seed)
    if record.capped:
        raise RuntimeError(f"run capped at {cap} steps; no finite record")
    return sum(c for i, c in record.left_counts.items() if i <= 0)
