"""Continuous-time single-flip Glauber dynamics with a grand monotone coupling.

Uniformization: a global clock of rate |interior| rings, a uniform interior
vertex is chosen and one coin u is shared by every chain of a bundle.  Each
chain recomputes the admissible range [lo, hi] at that vertex and moves to
hi if u < 1/2, else to lo.  Moves that leave a chain's floor/ceiling band
are discarded.  Event ``n`` of a stream consumes the counter-based draws
3n (holding time), 3n+1 (vertex) and 3n+2 (coin).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit, prange

from .errors import CouplingTimeout
from .height import (BoundaryHeight, HeightFunction, check_admissible, extremal_heights,
                     max_below_ceiling, min_above_floor, quantize_ceiling, quantize_floor)
from .lattice import BIG
from .rng import derive_key, uniform

_BIG = int(BIG)


@njit(cache=True, inline="always")
def _bounds(h, nbr, x):
    lo = -_BIG
    hi = _BIG
    for k in range(6):
        y = nbr[x, k]
        if y >= 0:
            hy = h[y]
            if k < 3:
                if hy > lo:
                    lo = hy
                if hy + 1 < hi:
                    hi = hy + 1
            else:
                if hy - 1 > lo:
                    lo = hy - 1
                if hy < hi:
                    hi = hy
    return lo, hi


@njit(cache=True, inline="always")
def _update(h, nbr, x, coin, fl, ce):
    lo, hi = _bounds(h, nbr, x)
    new = hi if coin < 0.5 else lo
    if new < fl[x] or new > ce[x]:
        return 0
    d = new - h[x]
    h[x] = new
    return d


@njit(cache=True, inline="always")
def _event(key, counter, n_int):
    u0 = uniform(key, 3 * counter)
    dt = -math.log1p(-u0) / n_int
    j = int(uniform(key, 3 * counter + 1) * n_int)
    if j >= n_int:
        j = n_int - 1
    coin = uniform(key, 3 * counter + 2)
    return dt, j, coin


@njit(cache=True)
def _advance(H, FL, CE, nbr, interior, key, counter, clock, t_target, max_events):
    """Apply events with absolute time <= t_target; returns (counter, clock, n)."""
    n_int = interior.shape[0]
    if n_int == 0:
        return counter, clock, 0
    m = H.shape[0]
    n = 0
    while n < max_events:
        dt, j, coin = _event(key, counter, n_int)
        if clock + dt > t_target:
            break
        clock += dt
        x = interior[j]
        for c in range(m):
            _update(H[c], nbr, x, coin, FL[c], CE[c])
        counter += 1
        n += 1
    return counter, clock, n


@njit(cache=True)
def _coalesce(a, b, fla, cea, flb, ceb, nbr, interior, key, t_cap):
    """Run a coupled pair until equal; returns (time, remaining L1, events)."""
    n_int = interior.shape[0]
    dist = 0
    for i in range(a.shape[0]):
        dist += abs(a[i] - b[i])
    clock = 0.0
    counter = 0
    while dist > 0:
        dt, j, coin = _event(key, counter, n_int)
        if clock + dt > t_cap:
            return math.inf, dist, counter
        clock += dt
        x = interior[j]
        before = abs(a[x] - b[x])
        _update(a, nbr, x, coin, fla, cea)
        _update(b, nbr, x, coin, flb, ceb)
        dist += abs(a[x] - b[x]) - before
        counter += 1
    return clock, 0, counter


@njit(cache=True, parallel=True)
def _coalesce_many(a0, b0, fla, cea, flb, ceb, nbr, interior, keys, t_cap, times, remaining):
    for r in prange(keys.shape[0]):
        a = a0.copy()
        b = b0.copy()
        t, d, _ = _coalesce(a, b, fla, cea, flb, ceb, nbr, interior, keys[r], t_cap)
        times[r] = t
        remaining[r] = d


@njit(cache=True, parallel=True)
def _advance_many(H, FL, CE, nbr, interior, keys, t_target):
    """Independent replicas of a bundle, H shape (R, m, V), run from time 0."""
    for r in prange(keys.shape[0]):
        _advance(H[r], FL, CE, nbr, interior, keys[r], 0, 0.0, t_target, 1 << 62)


# ---------------------------------------------------------------------------

@dataclass
class EventStream:
    key: int
    counter: int = 0


@dataclass
class Constraint:
    """Optional floor/ceiling fields for a chain, in mesh units (may be real)."""

    floor: np.ndarray | None = None
    ceiling: np.ndarray | None = None

    def quantized(self, dom):
        fl = quantize_floor(dom, _field(self.floor))
        ce = quantize_ceiling(dom, _field(self.ceiling))
        if np.any(fl > ce):
            raise ValueError("constraint floor exceeds ceiling")
        return fl, ce


def _field(x):
    if x is None:
        return None
    if isinstance(x, HeightFunction):
        return x.values.astype(float)
    return np.asarray(x, dtype=float)


@dataclass
class ChainState:
    h: HeightFunction
    time: float
    stream: EventStream


@dataclass(frozen=True)
class EventRecord:
    time: float
    vertex: int
    coin: float
    deltas: tuple


class CouplingBundle:
    """Ordered list of chains driven by one event stream."""

    def __init__(self, heights: Sequence[HeightFunction], constraints=None, seed=0,
                 replica=0, stream: EventStream | None = None):
        if len(heights) == 0:
            raise ValueError("a bundle needs at least one chain")
        self.dom = heights[0].dom
        for h in heights:
            if h.dom is not self.dom:
                raise ValueError("all chains must live on the same domain")
        if constraints is None or isinstance(constraints, Constraint):
            constraints = [constraints or Constraint()] * len(heights)
        if len(constraints) != len(heights):
            raise ValueError("one constraint per chain expected")
        self.constraints = list(constraints)
        self.H = np.stack([h.values for h in heights]).astype(np.int64)
        q = [c.quantized(self.dom) for c in self.constraints]
        self.FL = np.stack([f for f, _ in q])
        self.CE = np.stack([c for _, c in q])
        if np.any(self.H < self.FL) or np.any(self.H > self.CE):
            raise ValueError("initial heights violate their constraint band")
        self.stream = stream or EventStream(derive_key(seed, replica))
        self.time = 0.0
        self.clock = 0.0   # absolute time of the last applied event
        self._nbr = np.ascontiguousarray(self.dom.nbr, dtype=np.int64)
        self._interior = np.ascontiguousarray(self.dom.interior, dtype=np.int64)

    @property
    def chains(self):
        return [ChainState(HeightFunction(self.dom, row), self.time, self.stream)
                for row in self.H]

    def heights(self):
        return [HeightFunction(self.dom, row) for row in self.H]

    def l1_distance(self, i=0, j=-1):
        return int(np.abs(self.H[i] - self.H[j]).sum())


def step(bundle: CouplingBundle) -> EventRecord:
    """Apply exactly one event of the global clock."""
    n_int = len(bundle._interior)
    if n_int == 0:
        return EventRecord(bundle.time, -1, 0.0, tuple(0 for _ in bundle.H))
    before = bundle.H.copy()
    c = bundle.stream.counter
    key = np.uint64(bundle.stream.key)
    dt, j, coin = _event(key, c, n_int)
    counter, clock, _ = _advance(bundle.H, bundle.FL, bundle.CE, bundle._nbr,
                                 bundle._interior, key, c, bundle.clock, math.inf, 1)
    bundle.stream.counter = counter
    bundle.clock = clock
    bundle.time = max(bundle.time, clock)
    x = int(bundle._interior[j])
    deltas = tuple(int(d) for d in (bundle.H[:, x] - before[:, x]))
    return EventRecord(bundle.time, x, float(coin), deltas)


def run_until(bundle: CouplingBundle, t_target: float, snapshot: Callable | None = None,
              every_events: int | None = None, every_time: float | None = None):
    """Advance to time t_target; events strictly after t_target are not applied.

    ``snapshot(bundle)`` is called every ``every_events`` events or every
    ``every_time`` units of simulated time when given.
    """
    if t_target < bundle.time:
        raise ValueError("t_target is in the past")
    key = np.uint64(bundle.stream.key)
    if snapshot is None or (every_events is None and every_time is None):
        counter, clock, _ = _advance(bundle.H, bundle.FL, bundle.CE, bundle._nbr,
                                     bundle._interior, key, bundle.stream.counter,
                                     bundle.clock, float(t_target), 1 << 62)
        bundle.stream.counter, bundle.clock = counter, clock
        bundle.time = float(t_target)
        return bundle
    if every_time is not None:
        t = bundle.time
        while t < t_target:
            t = min(t + every_time, t_target)
            run_until(bundle, t)
            snapshot(bundle)
        return bundle
    while True:
        counter, clock, n = _advance(bundle.H, bundle.FL, bundle.CE, bundle._nbr,
                                     bundle._interior, key, bundle.stream.counter,
                                     bundle.clock, float(t_target), int(every_events))
        bundle.stream.counter, bundle.clock = counter, clock
        if n < every_events:
            bundle.time = float(t_target)
            return bundle
        bundle.time = clock
        snapshot(bundle)


# ---------------------------------------------------------------------------
# coupling times

def extremal_pair(g: BoundaryHeight, constraint: Constraint | None = None):
    """Lowest and highest admissible states inside the constraint band."""
    if constraint is None or (constraint.floor is None and constraint.ceiling is None):
        return extremal_heights(g)
    top = max_below_ceiling(g, _field(constraint.ceiling)) if constraint.ceiling is not None \
        else extremal_heights(g)[1]
    bot = min_above_floor(g, _field(constraint.floor)) if constraint.floor is not None \
        else extremal_heights(g)[0]
    if np.any(bot.values > top.values):
        raise ValueError("empty constraint band")
    return bot, top


def _pair_arrays(g, constraint):
    dom = g.dom
    bot, top = extremal_pair(g, constraint)
    fl, ce = (constraint or Constraint()).quantized(dom)
    nbr = np.ascontiguousarray(dom.nbr, dtype=np.int64)
    interior = np.ascontiguousarray(dom.interior, dtype=np.int64)
    return bot.values.copy(), top.values.copy(), fl, ce, nbr, interior


def coupling_time(g: BoundaryHeight, constraint: Constraint | None = None, seed=0,
                  t_cap=math.inf, replica=0) -> float:
    """First meeting time of the chains started from the extremal states."""
    a, b, fl, ce, nbr, interior = _pair_arrays(g, constraint)
    if np.array_equal(a, b):
        return 0.0
    key = np.uint64(derive_key(seed, replica))
    t, dist, _ = _coalesce(a, b, fl, ce, fl, ce, nbr, interior, key, float(t_cap))
    if not math.isfinite(t):
        raise CouplingTimeout(t_cap, int(dist))
    return float(t)


def coupling_times(g: BoundaryHeight, constraint: Constraint | None = None, seed=0,
                   replicas=64, t_cap=math.inf, first_replica=0):
    """Coupling times of independent replicas; timeouts are reported as inf."""
    a, b, fl, ce, nbr, interior = _pair_arrays(g, constraint)
    if np.array_equal(a, b):
        return np.zeros(replicas)
    keys = np.array([derive_key(seed, first_replica + r) for r in range(replicas)],
                    dtype=np.uint64)
    times = np.empty(replicas)
    remaining = np.empty(replicas, dtype=np.int64)
    _coalesce_many(a, b, fl, ce, fl, ce, nbr, interior, keys, float(t_cap), times, remaining)
    return times


def sample_states(h0: HeightFunction, t, seed=0, replicas=1, constraint=None):
    """Independent copies of the chain from h0 observed at time t (R x V)."""
    dom = h0.dom
    fl, ce = (constraint or Constraint()).quantized(dom)
    H = np.repeat(h0.values[None, None, :], replicas, axis=0).astype(np.int64)
    keys = np.array([derive_key(seed, r) for r in range(replicas)], dtype=np.uint64)
    _advance_many(H, fl[None, :], ce[None, :], np.ascontiguousarray(dom.nbr, dtype=np.int64),
                  np.ascontiguousarray(dom.interior, dtype=np.int64), keys, float(t))
    return H[:, 0, :]
