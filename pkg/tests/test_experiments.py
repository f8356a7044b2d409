import math
import warnings

import numpy as np
import pytest

from lozenge_lab.errors import BadParameters
from lozenge_lab.experiments import (ExperimentConfig, band_constraint, central_moments,
                                     coupling_mixtime, derive_seed, exact_fluct_check,
                                     exact_mixtime, fit_exponent, fluct, perturb_ratio,
                                     ptrf_sweep, relax, scaling, summarize_times)
from lozenge_lab.errors import CapExceeded
from lozenge_lab.glauber import extremal_pair
from lozenge_lab.lattice import DomainSpec


def test_fit_exponent_recovers_power():
    ns = np.array([8, 12, 16, 24, 32])
    fit = fit_exponent(ns, 3.0 * ns ** 2.2)
    assert fit.exponent == pytest.approx(2.2, abs=1e-12) and fit.stderr < 1e-10
    assert np.allclose(fit.predict(ns), 3.0 * ns ** 2.2)
    lf = fit_exponent(ns, ns ** 2 * np.log(ns), log_divisor=True)
    assert lf.exponent == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(BadParameters):
        fit_exponent([8, 12, 16], [1, 2, 3])


def test_scaling_needs_four_sizes():
    with pytest.raises(BadParameters):
        scaling(sizes=(8,))


def test_summarize_times_handles_timeouts():
    with pytest.warns(UserWarning):
        s = summarize_times(8, [1.0, 2.0, 3.0, np.inf])
    assert s.timeouts == 1 and s.median == 2.0 and s.ci_low <= 2.0 <= s.ci_high


def test_small_scaling_run():
    res = scaling(sizes=(4, 6, 8, 10), replicas=16, seed=1)
    assert len(res.rows()) == 4 and res.exponent > 1
    assert set(res.summary()) >= {"exponent", "exponent_log_corrected", "max_abs_residual"}


def test_scaling_reproducible():
    a = scaling(sizes=(4, 5, 6, 7), replicas=8, seed=2).rows()
    b = scaling(sizes=(4, 5, 6, 7), replicas=8, seed=2).rows()
    assert a == b


def test_exact_mixtime_and_cap():
    assert abs(exact_mixtime(DomainSpec.hexagon(1, 1, 1)) - math.log(2)) < 1e-6
    with pytest.raises(CapExceeded):
        exact_mixtime(DomainSpec.hexagon(8, 8, 8), cap=10 ** 5)


def test_coupling_upper_bounds_tv():
    spec = DomainSpec.hexagon(1, 1, 2)
    t_ex = exact_mixtime(spec)
    res = coupling_mixtime(spec, replicas=20000, seed=4)
    p, se = res.tail(t_ex)
    assert p >= 0.25 - 3 * se


def test_relax_curve_small():
    rc = relax(n=8, replicas=4, times=[0.0, 5 * 64.0], seed=0)
    assert np.allclose(rc.sup_dist[:, 0], rc.initial)
    assert rc.rows()[0]["time"] == 0.0


def test_central_moments_jensen():
    x = np.random.default_rng(0).normal(size=1000)
    m = central_moments(x)
    assert m[2] >= m[1] ** 2 and m[4] >= m[2] ** 2
    assert m[1] == pytest.approx(math.sqrt(2 / math.pi), rel=0.08)


def test_fluct_small():
    res = fluct(sizes=(6, 12), replicas=8, snapshots=2, seed=3)
    assert res.jensen_ok()
    rows = res.rows()
    assert all(r["central_m1"] >= 0 for r in rows) and len(res.ratio(1)) == 1


def test_exact_fluct_small():
    c = exact_fluct_check(samples=1000, seed=2)
    assert c.exact == pytest.approx(4 / 9)
    assert c.z < 4


def test_abs_dev_stderr_matches_replication():
    from lozenge_lab.experiments import _stderr_abs_dev
    rng = np.random.default_rng(1)
    est, se = [], []
    for _ in range(400):
        x = (rng.random(500) < 1 / 3).astype(float)
        est.append(np.mean(np.abs(x - x.mean())))
        se.append(_stderr_abs_dev(x))
    assert np.std(est) == pytest.approx(np.mean(se), rel=0.15)


def test_band_constraint_nonempty():
    from lozenge_lab.experiments import affine_boundary
    g = affine_boundary(8)
    bot, top = extremal_pair(g, band_constraint(g.dom, (-1 / 3, -1 / 3), 2))
    assert np.all(bot.values <= top.values)


def test_ptrf_small():
    res = ptrf_sweep(sizes=(4, 6), widths=(2,), replicas=8, seed=0)
    assert res.holds and res.C_hat == max(c.ratio for c in res.cells)
    assert len(res.rows()) == 2


def test_perturb_ratio_affine():
    a, b, ratio = perturb_ratio("affine", n_grid=33)
    assert a.R <= 1e-8 and b.R <= 1e-8


def test_config_header_sorted():
    lines = ExperimentConfig(seed=3).header_lines()
    assert lines == sorted(lines) and "seed=3" in lines


def test_derive_seed_distinct():
    s = {derive_seed(0, k) for k in range(100)}
    assert len(s) == 100 and all(0 <= x < 2 ** 31 for x in s)


def test_relax_below_tenth_at_five_n_squared():
    rc = relax(n=24, replicas=32, times=[0.0, 5 * 24 ** 2], seed=0)
    assert rc.fraction_below(0.1)[1] >= 0.95
    assert rc.sup_dist[0, 0] == rc.initial
