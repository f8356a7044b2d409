"""Acceptance suite: one test and one PASS/FAIL line per criterion."""
import math
import time

import mpmath
import numpy as np
import pytest

from lozenge_lab.exact import (conditioned_uniform, enumerate_states, exact_mixing_time,
                               generator, macmahon, stationary_check, tv_distance, worst_case_tv)
from lozenge_lab.experiments import exact_fluct_check, fluct, perturb, ptrf_sweep, scaling
from lozenge_lab.glauber import Constraint, CouplingBundle, run_until, step
from lozenge_lab.height import HeightFunction, extremal_heights, forced_boundary
from lozenge_lab.pde.grid import Discretization, EllipseRegion, Grid
from lozenge_lab.pde.perturbation import coefficient_a
from lozenge_lab.pde.profiles import AffineProfile, curved_profile, perturbed_affine_data
from lozenge_lab.pde.solver import (maximum_principle_check, newton, self_convergence,
                                    solve_euler_lagrange)
from lozenge_lab.surface import Barrier, hess_sigma, sigma

from conftest import hexagon

pytestmark = pytest.mark.acceptance


def test_c1_enumeration(acceptance):
    t0 = time.perf_counter()
    want = {(1, 1, 1): 2, (1, 1, 2): 3, (2, 2, 2): 20, (3, 3, 3): 980}
    got = {abc: len(enumerate_states(forced_boundary(hexagon(*abc)))) for abc in want}
    dt = time.perf_counter() - t0
    ok = all(got[k] == want[k] == macmahon(*k) for k in want) and dt < 5
    assert acceptance("C1 enumeration", ok, f"counts {list(got.values())}, {dt:.2f}s (< 5s)")


def test_c2_exact_mixing(acceptance):
    t0 = time.perf_counter()
    S1 = enumerate_states(forced_boundary(hexagon(1, 1, 1)))
    err = abs(exact_mixing_time(generator(S1), rtol=1e-9) - math.log(2))
    stat = max(stationary_check(generator(enumerate_states(forced_boundary(hexagon(*abc)))))
               for abc in [(1, 1, 1), (1, 1, 2), (2, 2, 2), (3, 3, 3)])
    G = generator(enumerate_states(forced_boundary(hexagon(1, 1, 2))))
    grid = np.linspace(0.2, 3.0, 5)
    d = {t: worst_case_tv(G, t) for t in set(np.add.outer(grid, grid).ravel()) | set(grid)}
    excess = max(d[s + t] - 2 * d[s] * d[t] for s in grid for t in grid)
    dt = time.perf_counter() - t0
    ok = err <= 1e-6 and stat <= 1e-12 and excess <= 1e-9 and dt < 10
    assert acceptance("C2 exact mixing", ok,
                      f"|T_mix - ln 2| = {err:.2e}, stationarity {stat:.1e}, "
                      f"max d(s+t) - 2d(s)d(t) = {excess:.2e}, {dt:.1f}s (< 10s)")


def test_c3_monotone_coupling(acceptance):
    t0 = time.perf_counter()
    S = enumerate_states(forced_boundary(hexagon(3, 3, 3)))
    rng = np.random.default_rng(2024)
    violations = 0
    for k in range(1000):
        i, j = rng.integers(len(S), size=2)
        a = np.minimum(S.states[i], S.states[j])
        b = np.maximum(S.states[i], S.states[j])
        bundle = CouplingBundle([HeightFunction(S.dom, a), HeightFunction(S.dom, b)], seed=k)
        for _ in range(1000):
            step(bundle)
            violations += int(np.any(bundle.H[0] > bundle.H[1]))
    S2 = enumerate_states(forced_boundary(hexagon(2, 2, 2)))
    lo, hi = extremal_heights(S2.g)
    band = Constraint(ceiling=0.5 * (lo.values + hi.values))
    pi = conditioned_uniform(S2, band)
    start = S2.height(int(np.flatnonzero(pi)[0]))
    counts = np.zeros(len(S2))
    b = CouplingBundle([start], constraints=band, seed=7)

    def visit(bb):
        counts[S2.id_of(bb.H[0])] += 1
    n_events = 10 ** 6
    while counts.sum() < n_events:
        run_until(b, b.time + 1e4, snapshot=visit, every_events=1)
    tv = tv_distance(counts / counts.sum(), pi)
    dt = time.perf_counter() - t0
    ok = violations == 0 and tv <= 0.02 and dt < 60
    assert acceptance("C3 monotone coupling", ok,
                      f"{violations} order violations in 1e3 pairs x 1e3 events, "
                      f"censored TV {tv:.4f} (<= 0.02) over {int(counts.sum())} events, "
                      f"{dt:.1f}s (< 60s)")


def test_c4_scaling(acceptance):
    t0 = time.perf_counter()
    res = scaling(sizes=(8, 12, 16, 24, 32), replicas=64, seed=0)
    dt = time.perf_counter() - t0
    med = [round(s.median, 1) for s in res.sizes]
    timeouts = sum(s.timeouts for s in res.sizes)
    ok = 1.8 <= res.exponent <= 2.6 and res.monotone and timeouts == 0 and dt < 900
    assert acceptance("C4 mixing-time scaling", ok,
                      f"exponent {res.exponent:.3f} +/- {res.fit.stderr:.3f} in [1.8, 2.6] "
                      f"(log-corrected {res.log_fit.exponent:.3f}), medians {med} monotone="
                      f"{res.monotone}, {dt:.1f}s (< 900s)")


def test_c5_surface_tension(acceptance):
    rng = np.random.default_rng(5)
    u = rng.random(50)
    edge = rng.integers(3, size=50)
    pts = [(-x, 0.0) if e == 0 else (0.0, -x) if e == 1 else (-x, x - 1.0)
           for x, e in zip(u, edge)]
    bmax = max(abs(sigma(s, t)) for s, t in pts)

    def lob(th):
        return -mpmath.quad(lambda v: mpmath.log(abs(2 * mpmath.sin(v))), [0, th])
    ref = float(-3 * lob(mpmath.pi / 3) / mpmath.pi)
    qerr = abs(sigma(-1 / 3, -1 / 3) - ref)

    def draw(k):
        p = rng.dirichlet([1, 1, 1], size=k)
        return -p[:, 0], -p[:, 1]
    s1, t1 = draw(1000)
    s2, t2 = draw(1000)
    lam = rng.random(1000)
    lhs = sigma(lam * s1 + (1 - lam) * s2, lam * t1 + (1 - lam) * t2)
    rhs = lam * sigma(s1, t1) + (1 - lam) * sigma(s2, t2)
    conv = float(np.max(lhs - rhs))
    p = rng.dirichlet([2, 2, 2], size=100)
    a, _, c = hess_sigma(-p[:, 0], -p[:, 1])
    hmin = float(min(a.min(), c.min()))
    ok = bmax <= 1e-6 and qerr <= 1e-7 and conv <= 1e-10 and hmin > 0
    assert acceptance("C5 surface tension", ok,
                      f"max |sigma| on boundary {bmax:.1e}, quadrature diff {qerr:.1e}, "
                      f"max convexity excess {conv:.1e}, min Hessian diagonal {hmin:.3f}")


def test_c6_pde_solver(acceptance):
    t0 = time.perf_counter()
    disk = EllipseRegion()
    d129 = Discretization(Grid.square(-1, 1, 129), disk)
    aff = lambda x, y: -(x + y) / 3
    _, u, tr = solve_euler_lagrange(d129, aff, tol=1e-13)
    aff_res = tr.residuals[-1]
    aff_err = float(np.abs(u - aff(*d129.xy.T)).max())

    sc = self_convergence(disk, perturbed_affine_data(seed=0), n=65, tol=1e-11)

    rng = np.random.default_rng(0)
    mp_ok, mp_min = True, np.inf
    for _ in range(20):
        c = rng.normal(size=4) * 0.02
        base = lambda x, y, c=c: aff(x, y) + c[0] * x * y + c[1] * np.sin(3 * x)
        bump = lambda x, y, c=c: 0.03 * np.exp(-((x - 10 * c[2]) ** 2 + (y - 10 * c[3]) ** 2) / 0.3)
        ok, mn = maximum_principle_check(d129, lambda x, y: base(x, y) + bump(x, y), base)
        mp_ok &= ok
        mp_min = min(mp_min, mn)

    g = perturbed_affine_data(seed=1)
    _, _, tr = solve_euler_lagrange(d129, g, tol=1e-12)
    P, v = tr.problem, tr.v
    Pt = P.with_tilt((0.01, -0.005))
    vf, trf = newton(Pt, v, tol=1e-12, frozen=True, J0=P.jacobian(v), maxiter=60)
    vn, _ = newton(Pt, v, tol=1e-12)
    decay = float(trf.decay_factors().max())
    agree = float(np.abs(vf - vn).max())
    dt = time.perf_counter() - t0
    ok = (aff_res <= 1e-12 and aff_err <= 1e-12 and 3.2 <= sc.ratio <= 4.8 and mp_ok
          and decay <= 0.5 and agree <= 1e-8 and dt < 300)
    assert acceptance("C6 PDE solver", ok,
                      f"affine residual {aff_res:.1e} error {aff_err:.1e}; self-convergence "
                      f"ratio {sc.ratio:.3f} (grids {sc.ns}); max principle 20/20={mp_ok} "
                      f"(min gap {mp_min:.2e}); frozen decay {decay:.3f}, |frozen - full| "
                      f"{agree:.1e}; {dt:.0f}s (< 300s)")


def test_c7_perturbation(acceptance):
    t0 = time.perf_counter()
    aff = perturb("affine", xi=0.25, eps=0.005, r=0.08)
    cur = perturb("curved", xi=0.25, eps=0.005, r=0.08)
    half = perturb("curved", xi=0.25, eps=0.0025, r=0.08)
    ratio = cur.R / half.R
    prof = curved_profile(257)
    a1 = coefficient_a(prof, Barrier(0.25), (0.0, 0.0)).a
    a2 = coefficient_a(prof, Barrier(0.125), (0.0, 0.0)).a
    a_ratio = abs(a2) / abs(a1)
    gap_err = abs(cur.center_gap - cur.predicted_center_gap) / abs(cur.predicted_center_gap)
    dt = time.perf_counter() - t0
    ok = (aff.a == 0 and aff.R <= 1e-8 and cur.a < 0.25 and 1.7 <= ratio <= 4.3
          and a_ratio <= 0.6 and gap_err <= 0.2 and dt < 600)
    assert acceptance("C7 perturbation expansion", ok,
                      f"affine a={aff.a:g} R={aff.R:.1e}; curved a={cur.a:.4f} (< 1/4); "
                      f"R ratio under eps halving {ratio:.3f} in [1.7, 4.3]; "
                      f"a(xi/2)/a(xi) = {a_ratio:.3f} (<= 0.6); centre gap rel. error "
                      f"{gap_err:.4f} (<= 0.2); {dt:.0f}s (< 600s)")


def test_c8_fluctuations(acceptance):
    t0 = time.perf_counter()
    res = fluct(sizes=(12, 24), replicas=64, snapshots=8, seed=0)
    ratio = res.ratio(1)[0]
    ex = exact_fluct_check(seed=0)
    dt = time.perf_counter() - t0
    m = [r.moments[1] for r in res.rows_]
    ok = ratio >= 1.4 and ex.z <= 3 and res.jensen_ok() and dt < 600
    assert acceptance("C8 fluctuation decay", ok,
                      f"E|h - Eh| at centre {m[0]:.4f} (n=12) -> {m[1]:.4f} (n=24), ratio "
                      f"{ratio:.3f} (>= 1.4); hex(1,1,2) exact {ex.exact:.4f} vs simulated "
                      f"{ex.simulated:.4f}, z={ex.z:.2f} (<= 3); {dt:.0f}s (< 600s)")


def test_c9_constrained_mixing(acceptance):
    t0 = time.perf_counter()
    res = ptrf_sweep(sizes=(8, 12, 16), widths=(2, 4), replicas=64, seed=0, holdout_seed=1)
    dt = time.perf_counter() - t0
    finite = all(np.isfinite(c.stats.q75) and c.stats.timeouts == 0 for c in res.cells)
    hold_excess = max(h.stats.q75 / (res.C_hat * c.scale) for c, h in zip(res.cells, res.holdout))
    ok = len(res.cells) == 6 and finite and res.holds and dt < 600
    assert acceptance("C9 constrained mixing bound", ok,
                      f"C_hat={res.C_hat:.4g} bounds all {len(res.cells)} cells={res.holds}, "
                      f"ratio spread {res.spread:.2f}, independent-replica max q75/bound "
                      f"{hold_excess:.3f} (informational); {dt:.1f}s (< 600s)")
