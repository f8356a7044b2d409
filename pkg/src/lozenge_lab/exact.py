"""Exact analysis of the flip chain on small enumerable state spaces.

Ground truth for the stochastic code: exhaustive enumeration of the
admissible heights, the rate-1/2 generator, certified uniformization of
exp(tG), total variation and mixing times, conditioned uniform measures,
absorbing-chain hitting probabilities and the exact law of the coalescence
time of the grand coupling.
"""
from __future__ import annotations

import io
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg
from scipy.stats import poisson

from .errors import CapExceeded, DimensionMismatch, EmptyBand
from .height import BoundaryHeight, HeightFunction, extremal_heights
from .lattice import HI_OFF, LO_OFF

DEFAULT_CAP = 10 ** 6


class StateSpace:
    """All admissible heights with given boundary values, indexed 0..n-1."""

    def __init__(self, g: BoundaryHeight, states: np.ndarray):
        self.g = g
        self.dom = g.dom
        self.states = states
        self.states.setflags(write=False)
        self.index = {row.tobytes(): i for i, row in enumerate(states)}
        self._bounds = None

    def __len__(self):
        return len(self.states)

    def height(self, i) -> HeightFunction:
        return HeightFunction(self.dom, self.states[i])

    def id_of(self, h) -> int:
        vals = h.values if isinstance(h, HeightFunction) else np.asarray(h, dtype=np.int64)
        return self.index[np.ascontiguousarray(vals, dtype=np.int64).tobytes()]

    def local_bounds(self):
        """(lo, hi) arrays of shape (n, I): admissible range at each interior vertex."""
        if self._bounds is None:
            self._bounds = _all_bounds(self.states, self.dom)
        return self._bounds

    def to_csv(self):
        buf = io.StringIO()
        buf.write("state," + ",".join(f"h[{u};{v}]" for u, v in self.dom.coords.tolist()) + "\n")
        for i, row in enumerate(self.states):
            buf.write(f"{i}," + ",".join(str(x) for x in row.tolist()) + "\n")
        return buf.getvalue()


def _all_bounds(states, dom):
    I = dom.interior
    nb = dom.nbr[I]                     # (I, 6), all present for interior vertices
    hv = states[:, nb]                  # (n, I, 6)
    lo = (hv + LO_OFF).max(axis=2)
    hi = (hv + HI_OFF).min(axis=2)
    return lo, hi


def enumerate_states(g: BoundaryHeight, cap: int = DEFAULT_CAP) -> StateSpace:
    """Breadth-first enumeration of the flip graph from the minimal state."""
    hmin, _ = extremal_heights(g)
    dom = g.dom
    I = dom.interior
    start = hmin.values.copy()
    seen = {start.tobytes(): 0}
    order = [start]
    queue = deque([start])
    while queue:
        h = queue.popleft()
        lo, hi = _all_bounds(h[None, :], dom)
        cur = h[I]
        for j in np.flatnonzero(lo[0] < hi[0]):
            nxt = h.copy()
            nxt[I[j]] = hi[0, j] if cur[j] == lo[0, j] else lo[0, j]
            key = nxt.tobytes()
            if key not in seen:
                seen[key] = len(order)
                order.append(nxt)
                if len(order) > cap:
                    raise CapExceeded(f"state space exceeds cap {cap}")
                queue.append(nxt)
    return StateSpace(g, np.array(order, dtype=np.int64))


def macmahon(a, b, c):
    """Number of lozenge tilings of the (a, b, c) hexagon (boxed plane partitions)."""
    num = 1
    den = 1
    for i in range(1, a + 1):
        for j in range(1, b + 1):
            for k in range(1, c + 1):
                num *= i + j + k - 1
                den *= i + j + k - 2
    return num // den


def _moves(S: StateSpace):
    """move[i, j, c]: state after the event (vertex I[j], coin class c).

    c = 0 is a coin below 1/2 (go to the upper value), c = 1 the lower value.
    """
    lo, hi = S.local_bounds()
    n, m = lo.shape
    I = S.dom.interior
    out = np.empty((n, m, 2), dtype=np.int64)
    for i in range(n):
        h = S.states[i]
        for j in range(m):
            for c, val in ((0, hi[i, j]), (1, lo[i, j])):
                if val == h[I[j]]:
                    out[i, j, c] = i
                else:
                    nxt = h.copy()
                    nxt[I[j]] = val
                    out[i, j, c] = S.index.get(nxt.tobytes(), -1)
    return out


@dataclass
class GeneratorMatrix:
    Q: sp.csr_matrix

    @property
    def n(self):
        return self.Q.shape[0]

    def exit_rates(self):
        return -self.Q.diagonal()

    def to_coo_text(self):
        coo = self.Q.tocoo()
        lines = [f"% {self.n} {self.n} {coo.nnz}"]
        order = np.lexsort((coo.col, coo.row))
        for k in order:
            lines.append(f"{coo.row[k]} {coo.col[k]} {coo.data[k]:.17g}")
        return "\n".join(lines) + "\n"

    def spectrum(self):
        return np.linalg.eigvalsh(self.Q.toarray())


def generator(S: StateSpace) -> GeneratorMatrix:
    """Rate 1/2 between height functions that differ by one flip."""
    lo, hi = S.local_bounds()
    I = S.dom.interior
    rows, cols = [], []
    for i in range(len(S)):
        h = S.states[i]
        for j in np.flatnonzero(lo[i] < hi[i]):
            nxt = h.copy()
            nxt[I[j]] = hi[i, j] if h[I[j]] == lo[i, j] else lo[i, j]
            rows.append(i)
            cols.append(S.index[nxt.tobytes()])
    n = len(S)
    off = sp.coo_matrix((np.full(len(rows), 0.5), (rows, cols)), shape=(n, n)).tocsr()
    Q = off - sp.diags(np.asarray(off.sum(axis=1)).ravel())
    return GeneratorMatrix(Q.tocsr())


# ---------------------------------------------------------------------------
# transient laws

def _uniformized(Q, mu0, t, tol):
    n = Q.shape[0]
    lam = float(np.max(-Q.diagonal())) if n else 0.0
    if t == 0 or lam == 0:
        return mu0.copy()
    x = lam * t
    PT = (sp.identity(n, format="csr") + Q / lam).T.tocsr()
    kmax = int(poisson.isf(tol, x)) + 2
    kmin = max(0, int(poisson.ppf(tol * 1e-3, x)) - 1)
    w = poisson.pmf(np.arange(kmax + 1), x)
    v = mu0.T.copy()
    acc = np.zeros_like(v)
    for k in range(kmax + 1):
        if k >= kmin:
            acc += w[k] * v
        if k < kmax:
            v = PT @ v
    return acc.T


def evolve(G: GeneratorMatrix | sp.spmatrix, mu0, t, method="uniformization", tol=1e-13):
    """Row distribution(s) mu0 propagated to time t: mu0 @ exp(tG).

    uniformization (default): Poisson-weighted powers of I + G/Lambda,
    truncated once the Poisson tail is below ``tol`` (the entrywise error).
    eigh: spectral decomposition of the symmetric generator.  expm: dense Pade.
    """
    Q = G.Q if isinstance(G, GeneratorMatrix) else sp.csr_matrix(G)
    mu0 = np.asarray(mu0, dtype=float)
    if mu0.shape[-1] != Q.shape[0]:
        raise DimensionMismatch(f"distribution of size {mu0.shape[-1]} for {Q.shape[0]} states")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if method == "uniformization":
        return _uniformized(Q, np.atleast_2d(mu0), t, tol).reshape(mu0.shape)
    if method == "eigh":
        lam, V = np.linalg.eigh(Q.toarray())
        return (np.atleast_2d(mu0) @ V * np.exp(t * lam)) @ V.T if mu0.ndim == 2 else \
            ((mu0 @ V) * np.exp(t * lam)) @ V.T
    if method == "expm":
        return mu0 @ scipy.linalg.expm(t * Q.toarray())
    raise ValueError(f"unknown method {method!r}")


def tv_distance(mu, nu) -> float:
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise DimensionMismatch(f"shapes {mu.shape} and {nu.shape} differ")
    return 0.5 * float(np.abs(mu - nu).sum())


class _WorstCase:
    """t -> d(t) = max over initial states of TV(mu_t, pi)."""

    def __init__(self, G, pi=None, method="uniformization"):
        self.G = G
        self.n = G.n
        self.pi = np.full(self.n, 1.0 / self.n) if pi is None else np.asarray(pi, dtype=float)
        self.method = method
        if method == "eigh":
            self._lam, self._V = np.linalg.eigh(G.Q.toarray())

    def __call__(self, t):
        if self.method == "eigh":
            P = (self._V * np.exp(t * self._lam)) @ self._V.T
        else:
            P = evolve(self.G, np.eye(self.n), t, method=self.method)
        return float(0.5 * np.abs(P - self.pi).sum(axis=1).max())


def worst_case_tv(G: GeneratorMatrix, t, method="uniformization"):
    return _WorstCase(G, method=method)(t)


def exact_mixing_time(G: GeneratorMatrix, pi=None, threshold=0.25, rtol=1e-6,
                      method="uniformization") -> float:
    """inf{t : max_eta TV(mu_t^eta, pi) <= threshold}, by bisection."""
    d = _WorstCase(G, pi, method)
    if d(0.0) <= threshold:
        return 0.0
    hi = 1.0
    while d(hi) > threshold:
        hi *= 2.0
    lo = 0.0 if hi == 1.0 else hi / 2.0
    while hi - lo > rtol * hi * 0.5:
        mid = 0.5 * (lo + hi)
        if d(mid) > threshold:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def band_mask(S: StateSpace, band) -> np.ndarray:
    fl, ce = band.quantized(S.dom)
    return np.all((S.states >= fl) & (S.states <= ce), axis=1)


def conditioned_uniform(S: StateSpace, band) -> np.ndarray:
    """Uniform law on the states lying between band.floor and band.ceiling."""
    mask = band_mask(S, band)
    k = int(mask.sum())
    if k == 0:
        raise EmptyBand("no state lies inside the band")
    return mask / float(k)


def stationary_check(G) -> float:
    """||pi_uniform G||_inf (zero exactly for a doubly stochastic generator)."""
    Q = G.Q if isinstance(G, GeneratorMatrix) else sp.csr_matrix(G)
    n = Q.shape[0]
    return float(np.abs(np.asarray(Q.sum(axis=0)).ravel() / n).max())


def hitting_probability(G: GeneratorMatrix, A, T, start=None, tol=1e-13) -> float:
    """P(the chain started from `start` (default uniform) visits A before T).

    A is made absorbing by deleting its outgoing rates.
    """
    A = np.asarray(A, dtype=bool)
    n = G.n
    mu = np.full(n, 1.0 / n) if start is None else np.asarray(start, dtype=float)
    Q = G.Q.tolil(copy=True)
    for i in np.flatnonzero(A):
        Q.rows[i] = []
        Q.data[i] = []
    mt = evolve(sp.csr_matrix(Q), mu, T, tol=tol)
    return float(mt[A].sum())


# ---------------------------------------------------------------------------
# exact law of the coalescence time of the grand coupling

class CouplingLaw:
    """Pair chain (lower, upper) under shared events, from the band extremes.

    Transient pairs are those with lower != upper; all coalesced pairs are
    lumped into one absorbing state (index 0).
    """

    def __init__(self, S: StateSpace, band=None):
        from .glauber import Constraint
        band = band or Constraint()
        mask = band_mask(S, band)
        if not mask.any():
            raise EmptyBand("no state lies inside the band")
        moves = _moves(S)
        fl, ce = band.quantized(S.dom)
        ids = np.flatnonzero(mask)
        bot = ids[np.argmin(S.states[ids].sum(axis=1))]
        top = ids[np.argmax(S.states[ids].sum(axis=1))]
        I = S.dom.interior
        # censoring: a move leaving the band keeps the state
        cens = moves.copy()
        for i in ids:
            for j in range(len(I)):
                for c in range(2):
                    k = moves[i, j, c]
                    if k < 0 or not mask[k]:
                        cens[i, j, c] = i
        self.n_sites = len(I)
        pairs = {}
        rows, cols, vals = [], [], []
        start = (int(bot), int(top))
        if bot == top:
            self.start = 0
        else:
            pairs[start] = 1
            self.start = 1
        queue = deque([start] if bot != top else [])
        while queue:
            p = queue.popleft()
            src = pairs[p]
            for j in range(len(I)):
                for c in range(2):
                    q = (int(cens[p[0], j, c]), int(cens[p[1], j, c]))
                    if q == p:
                        continue
                    if q[0] == q[1]:
                        dst = 0
                    else:
                        if q not in pairs:
                            pairs[q] = len(pairs) + 1
                            queue.append(q)
                        dst = pairs[q]
                    rows.append(src)
                    cols.append(dst)
                    vals.append(0.5)
        n = len(pairs) + 1
        off = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        self.Q = (off - sp.diags(np.asarray(off.sum(axis=1)).ravel())).tocsr()
        self.n_pairs = len(pairs)

    def mean_time(self) -> float:
        if self.start == 0:
            return 0.0
        QT = self.Q[1:, 1:].tocsc()
        m = sp.linalg.spsolve(-QT, np.ones(self.n_pairs))
        return float(np.atleast_1d(m)[self.start - 1])

    def survival(self, t) -> float:
        """P(coalescence time > t)."""
        if self.start == 0:
            return 0.0
        mu = np.zeros(self.Q.shape[0])
        mu[self.start] = 1.0
        return float(1.0 - evolve(self.Q, mu, t)[0])


def coupling_law(S: StateSpace, band=None) -> CouplingLaw:
    return CouplingLaw(S, band)
