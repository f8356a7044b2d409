"""Experiment harness: scaling of coupling times, relaxation, fluctuations,
constrained mixing and the perturbation expansion.

Every experiment returns a dataclass with a ``rows()`` method producing the
records written to CSV by the command-line front end.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import BadParameters, CapExceeded
from .exact import enumerate_states, exact_mixing_time, generator, macmahon
from .glauber import Constraint, CouplingBundle, coupling_times, extremal_pair, run_until
from .height import BoundaryHeight, extremal_heights, forced_boundary
from .lattice import DomainSpec, build_domain
from .rng import derive_key

log = logging.getLogger(__name__)

DEFAULT_SLOPE = (-1.0 / 3.0, -1.0 / 3.0)
EXACT_MIX_CAP = 20000


@dataclass
class ExperimentConfig:
    seed: int = 0
    replicas: int = 64
    domain: str = "rect:16"
    sizes: tuple = (8, 12, 16, 24, 32)
    slope: tuple = DEFAULT_SLOPE
    eta: float = 0.05
    eps0: float = 0.1
    xi: float = 0.25
    threads: int | None = None
    deterministic: bool = False
    out: str = "out"

    def header_lines(self):
        d = asdict(self)
        return [f"{k}={d[k]!r}" for k in sorted(d)]


def affine_boundary(n, slope=DEFAULT_SLOPE) -> BoundaryHeight:
    """Boundary heights of the size-n rhombus under the affine profile."""
    return forced_boundary(build_domain(DomainSpec.rectangle(n, slope)))


def _affine_phi(dom, slope):
    pos = dom.positions()
    return slope[0] * pos[:, 0] + slope[1] * pos[:, 1]


# ---------------------------------------------------------------------------
# coupling-time statistics and the scaling fit

@dataclass
class SizeStats:
    n: int
    delta: float
    replicas: int
    timeouts: int
    median: float
    mean: float
    ci_low: float
    ci_high: float
    q75: float
    q90: float


def summarize_times(n, times, seed=0, confidence=0.95) -> SizeStats:
    """Median with a bootstrap confidence interval; timeouts (inf) are excluded."""
    t = np.asarray(times, dtype=float)
    ok = t[np.isfinite(t)]
    n_to = int(t.size - ok.size)
    if n_to:
        warnings.warn(f"n={n}: {n_to} coupling runs hit the time cap and are excluded")
    if ok.size == 0:
        nan = float("nan")
        return SizeStats(n, 1.0 / n, int(t.size), n_to, nan, nan, nan, nan, nan, nan)
    if ok.size > 1 and np.ptp(ok) > 0:
        res = stats.bootstrap((ok,), np.median, confidence_level=confidence, n_resamples=2000,
                              method="percentile", random_state=np.random.default_rng(seed))
        lo, hi = float(res.confidence_interval.low), float(res.confidence_interval.high)
    else:
        lo = hi = float(np.median(ok))
    return SizeStats(n, 1.0 / n, int(t.size), n_to, float(np.median(ok)), float(ok.mean()), lo, hi,
                     float(np.quantile(ok, 0.75)), float(np.quantile(ok, 0.9)))


@dataclass
class PowerFit:
    exponent: float
    stderr: float
    intercept: float
    residuals: np.ndarray

    def predict(self, n):
        return np.exp(self.intercept) * np.asarray(n, float) ** self.exponent


def fit_exponent(ns, T, log_divisor=False) -> PowerFit:
    """Least squares of log T (or log(T / log n)) on log n; needs >= 4 sizes."""
    ns = np.asarray(ns, float)
    T = np.asarray(T, float)
    ok = np.isfinite(T) & (T > 0)
    if ok.sum() < 4:
        raise BadParameters(f"scaling fit needs at least 4 usable sizes, got {int(ok.sum())}")
    x = np.log(ns[ok])
    y = np.log(T[ok] / (np.log(ns[ok]) if log_divisor else 1.0))
    lr = stats.linregress(x, y)
    resid = y - (lr.intercept + lr.slope * x)
    return PowerFit(float(lr.slope), float(lr.stderr), float(lr.intercept), resid)


@dataclass
class ScalingResult:
    sizes: list
    fit: PowerFit
    log_fit: PowerFit
    slope: tuple

    @property
    def exponent(self):
        return self.fit.exponent

    @property
    def monotone(self):
        med = [s.median for s in self.sizes]
        return all(b > a for a, b in zip(med, med[1:]))

    def rows(self):
        out = []
        for s, res in zip(self.sizes, _pad(self.fit.residuals, len(self.sizes))):
            d = asdict(s)
            d["fit_residual"] = res
            out.append(d)
        return out

    def summary(self):
        return {"exponent": self.fit.exponent, "stderr": self.fit.stderr,
                "exponent_log_corrected": self.log_fit.exponent,
                "stderr_log_corrected": self.log_fit.stderr,
                "max_abs_residual": float(np.max(np.abs(self.fit.residuals))),
                "monotone": self.monotone}


def _pad(a, n):
    a = list(a)
    return a + [float("nan")] * (n - len(a))


def scaling(sizes=(8, 12, 16, 24, 32), slope=DEFAULT_SLOPE, replicas=64, seed=0,
            t_cap_factor=200.0) -> ScalingResult:
    """Coupling time of the extremal chains for each size n (delta = 1/n)."""
    sizes = [int(n) for n in sizes]
    if len(sizes) < 4:
        raise BadParameters("scaling needs at least 4 sizes")
    rows = []
    for k, n in enumerate(sizes):
        g = affine_boundary(n, slope)
        times = coupling_times(g, seed=seed * 1000 + k, replicas=replicas,
                               t_cap=t_cap_factor * n * n)
        rows.append(summarize_times(n, times, seed))
        log.info("n=%d median coupling time %.4g", n, rows[-1].median)
    ns = [s.n for s in rows]
    med = [s.median for s in rows]
    return ScalingResult(rows, fit_exponent(ns, med), fit_exponent(ns, med, log_divisor=True),
                         tuple(slope))


# ---------------------------------------------------------------------------
# mixing times

@dataclass
class CouplingMixing:
    times: np.ndarray
    quantiles: dict
    stats: SizeStats

    def tail(self, t):
        """Empirical P(tau > t) and its binomial standard error."""
        p = float(np.mean(self.times > t))
        return p, math.sqrt(max(p * (1 - p), 1e-300) / len(self.times))

    def rows(self):
        return [{"quantile": q, "time": v} for q, v in self.quantiles.items()]


def exact_mixtime(spec: DomainSpec, cap=EXACT_MIX_CAP, threshold=0.25):
    """Exact T_mix; the worst case over starts propagates an n x n block, hence the cap."""
    if spec.variant == "hexagon" and macmahon(*spec.params) > cap:
        raise CapExceeded(f"state space exceeds cap {cap}")
    dom = build_domain(spec)
    g = forced_boundary(dom)
    S = enumerate_states(g, cap)
    return exact_mixing_time(generator(S), threshold=threshold, rtol=1e-9)


def coupling_mixtime(spec: DomainSpec, replicas=1000, seed=0,
                     quantiles=(0.5, 0.75, 0.9, 0.99)) -> CouplingMixing:
    g = forced_boundary(build_domain(spec))
    t = coupling_times(g, seed=seed, replicas=replicas)
    ok = t[np.isfinite(t)]
    return CouplingMixing(t, {q: float(np.quantile(ok, q)) for q in quantiles},
                          summarize_times(spec.params[0], t, seed))


# ---------------------------------------------------------------------------
# relaxation from the maximal configuration

@dataclass
class RelaxCurve:
    n: int
    times: np.ndarray
    sup_dist: np.ndarray          # (replicas, len(times)), continuum units
    initial: float

    def fraction_below(self, eps):
        return np.mean(self.sup_dist < eps, axis=0)

    def entry_time(self, eps, quantile=0.95):
        """First snapshot time after which the fraction below eps stays >= quantile."""
        frac = self.fraction_below(eps)
        good = frac >= quantile
        for i in range(len(good)):
            if good[i:].all():
                return float(self.times[i])
        return float("inf")

    def rows(self):
        out = []
        for j, t in enumerate(self.times):
            col = self.sup_dist[:, j]
            out.append({"time": float(t), "mean": float(col.mean()), "median": float(np.median(col)),
                        "max": float(col.max()), "frac_below_0.1": float(np.mean(col < 0.1)),
                        "frac_below_0.05": float(np.mean(col < 0.05))})
        return out


def relax(n=24, slope=DEFAULT_SLOPE, times=None, replicas=32, seed=0) -> RelaxCurve:
    """sup_x |delta h_t(x) - phi(x)| for chains started at the maximal state."""
    g = affine_boundary(n, slope)
    dom = g.dom
    phi = _affine_phi(dom, slope)
    _, top = extremal_heights(g)
    if times is None:
        times = np.concatenate([[0.0], np.geomspace(0.05, 10.0, 30) * n * n])
    times = np.asarray(times, float)
    out = np.empty((replicas, len(times)))
    for r in range(replicas):
        b = CouplingBundle([top], stream=None, seed=seed, replica=r)
        for j, t in enumerate(times):
            run_until(b, float(t))
            out[r, j] = np.max(np.abs(dom.mesh * b.H[0] - phi))
    initial = float(np.max(np.abs(dom.mesh * top.values - phi)))
    return RelaxCurve(n, times, out, initial)


# ---------------------------------------------------------------------------
# equilibrium fluctuations

def equilibrium_samples(g: BoundaryHeight, t_burn, spacing, snapshots, replicas=64, seed=0):
    """Snapshots of independent chains after a burn-in; returns (samples, V)."""
    _, top = extremal_heights(g)
    out = []
    for r in range(replicas):
        b = CouplingBundle([top], seed=seed, replica=r)
        run_until(b, float(t_burn))
        for k in range(snapshots):
            if k:
                run_until(b, b.time + float(spacing))
            out.append(b.H[0].copy())
    return np.asarray(out)


def central_moments(x, orders=(1, 2, 4)):
    x = np.asarray(x, float)
    c = x - x.mean()
    return {k: float(np.mean(np.abs(c) ** k)) for k in orders}


@dataclass
class FluctRow:
    n: int
    delta: float
    samples: int
    moments: dict          # order -> E|delta (h - mean h)|^k
    moments_phi: dict      # order -> E|delta h - phi|^k
    stderr1: float

    def row(self):
        d = {"n": self.n, "delta": self.delta, "samples": self.samples, "stderr_m1": self.stderr1}
        for k, v in self.moments.items():
            d[f"central_m{k}"] = v
        for k, v in self.moments_phi.items():
            d[f"phi_m{k}"] = v
        return d


@dataclass
class FluctResult:
    rows_: list

    def rows(self):
        return [r.row() for r in self.rows_]

    def ratio(self, order=1):
        """Moment ratio between consecutive sizes (coarse / fine)."""
        m = [r.moments[order] for r in self.rows_]
        return [a / b if b > 0 else float("inf") for a, b in zip(m, m[1:])]

    def jensen_ok(self):
        return all(r.moments[2] >= r.moments[1] ** 2 - 1e-15 and
                   r.moments[4] >= r.moments[2] ** 2 - 1e-15 for r in self.rows_)


def _stderr_abs_dev(x):
    """Standard error of mean |x - mean x| from its influence function.

    The centring by the sample mean contributes the term
    (P(X < mu) - P(X > mu)) (x - mu); dropping it underestimates the error
    badly for lattice-valued heights.
    """
    x = np.asarray(x, float)
    mu = x.mean()
    d = x - mu
    infl = np.abs(d) - np.abs(d).mean() + (np.mean(d < 0) - np.mean(d > 0)) * d
    return float(np.std(infl, ddof=1) / math.sqrt(len(x)))


def fluct(sizes=(12, 24), slope=DEFAULT_SLOPE, replicas=64, snapshots=8, seed=0,
          burn_factor=20.0, spacing_factor=2.0, pilot=16) -> FluctResult:
    """Moments of the height at the centre vertex at equilibrium.

    Burn-in is burn_factor times the 90% quantile of a pilot coupling-time
    sample; snapshots are spaced by spacing_factor times that quantile.
    """
    out = []
    for k, n in enumerate(sizes):
        g = affine_boundary(n, slope)
        dom = g.dom
        tc = float(np.quantile(coupling_times(g, seed=seed + 7919 * (k + 1), replicas=pilot), 0.9))
        H = equilibrium_samples(g, burn_factor * tc, spacing_factor * tc, snapshots, replicas,
                                seed=seed + k)
        c = dom.center_vertex()
        x = dom.mesh * H[:, c]
        phi_c = float(_affine_phi(dom, slope)[c])
        dev = x - phi_c
        out.append(FluctRow(n, dom.mesh, len(x), central_moments(x),
                            {o: float(np.mean(np.abs(dev) ** o)) for o in (1, 2, 4)},
                            _stderr_abs_dev(x)))
    return FluctResult(out)


@dataclass
class ExactFluctCheck:
    exact: float
    simulated: float
    stderr: float

    @property
    def z(self):
        return abs(self.simulated - self.exact) / self.stderr if self.stderr > 0 else float("inf")


def exact_fluct_check(spec=DomainSpec.hexagon(1, 1, 2), samples=4000, t=20.0, seed=0):
    """First central moment at the centre: exact uniform law vs simulation."""
    dom = build_domain(spec)
    g = forced_boundary(dom)
    S = enumerate_states(g)
    c = dom.center_vertex()
    vals = S.states[:, c].astype(float)
    exact = float(np.mean(np.abs(vals - vals.mean())))
    from .glauber import sample_states
    _, top = extremal_heights(g)
    H = sample_states(top, t, seed=seed, replicas=samples)
    x = H[:, c].astype(float)
    return ExactFluctCheck(exact, float(np.mean(np.abs(x - x.mean()))), _stderr_abs_dev(x))


# ---------------------------------------------------------------------------
# constrained mixing between two bands

@dataclass
class PTRFCell:
    n: int
    width: int              # band width in lattice units (Delta / delta)
    delta: float
    diameter: float
    scale: float            # diam^2 Delta^2 delta^-4 log^2(1/delta)
    stats: SizeStats

    @property
    def ratio(self):
        return self.stats.q75 / self.scale


@dataclass
class PTRFResult:
    cells: list
    C_hat: float
    holdout: list = field(default_factory=list)

    @property
    def holds(self):
        return all(np.isfinite(c.stats.q75) and c.stats.q75 <= self.C_hat * c.scale * (1 + 1e-12)
                   for c in self.cells)

    @property
    def spread(self):
        r = [c.ratio for c in self.cells]
        return max(r) / min(r)

    def rows(self):
        out = []
        for k, c in enumerate(self.cells):
            d = {"n": c.n, "width": c.width, "delta": c.delta, "diameter": c.diameter,
                 "scale": c.scale, "q75": c.stats.q75, "median": c.stats.median,
                 "timeouts": c.stats.timeouts, "ratio": c.ratio, "C_hat": self.C_hat,
                 "bound": self.C_hat * c.scale}
            if self.holdout:
                d["holdout_q75"] = self.holdout[k].stats.q75
            out.append(d)
        return out


def band_constraint(dom, slope, width):
    """Floor/ceiling at phi/delta -+ width/2 (mesh units)."""
    phi = _affine_phi(dom, slope) / dom.mesh
    return Constraint(floor=phi - width / 2.0, ceiling=phi + width / 2.0)


def _ptrf_cells(sizes, widths, slope, replicas, seed):
    cells = []
    for n in sizes:
        g = affine_boundary(n, slope)
        dom = g.dom
        for w in widths:
            con = band_constraint(dom, slope, w)
            extremal_pair(g, con)   # raises if the band is empty
            t = coupling_times(g, con, seed=seed * 7 + 1000 * n + w, replicas=replicas,
                               t_cap=1e3 * n * n)
            delta = dom.mesh
            Delta = w * delta
            diam = dom.diameter()
            scale = diam ** 2 * Delta ** 2 * delta ** -4 * math.log(1 / delta) ** 2
            cells.append(PTRFCell(n, int(w), delta, diam, scale, summarize_times(n, t, seed)))
    return cells


def ptrf_sweep(sizes=(8, 12, 16), widths=(2, 4), slope=DEFAULT_SLOPE, replicas=64, seed=0,
               holdout_seed=None) -> PTRFResult:
    """Censored coupling times against the constrained-mixing bound.

    The mixing time of each cell is bounded by the 75% quantile of the
    coupling time (P(tau > t) <= 1/4 implies d(t) <= 1/4).  C_hat is the
    smallest constant for which the bound holds on every cell.
    """
    cells = _ptrf_cells(sizes, widths, slope, replicas, seed)
    C = max(c.ratio for c in cells)
    hold = _ptrf_cells(sizes, widths, slope, replicas, holdout_seed) if holdout_seed is not None \
        else []
    return PTRFResult(cells, float(C), hold)


# ---------------------------------------------------------------------------
# perturbation expansion

def perturb(profile="curved", xi=0.25, w=(0.0, 0.0), eps=0.005, r=0.08, n_grid=65,
            base_grid=257, seed=0):
    from .pde.perturbation import expansion_check
    from .pde.profiles import AffineProfile, curved_profile
    prof = AffineProfile() if profile == "affine" else curved_profile(base_grid, seed=seed)
    return expansion_check(prof, xi, w, eps, r, n_grid=n_grid)


def perturb_ratio(profile="curved", xi=0.25, w=(0.0, 0.0), eps=0.005, r=0.08, n_grid=65,
                  base_grid=257, seed=0):
    """Reports at eps and eps/2 and the ratio of their R values."""
    a = perturb(profile, xi, w, eps, r, n_grid, base_grid, seed)
    b = perturb(profile, xi, w, eps / 2, r, n_grid, base_grid, seed)
    return a, b, (a.R / b.R if b.R > 0 else float("nan"))


def derive_seed(seed, k):
    """Independent integer seed for sub-experiment k."""
    return int(derive_key(seed, k)) >> 33
