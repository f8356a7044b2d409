"""Matplotlib figures for the experiment reports (written as PNG files)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}   # keeps PNG bytes free of version strings


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def plot_scaling(result, path):
    ns = np.array([s.n for s in result.sizes], float)
    med = np.array([s.median for s in result.sizes])
    lo = np.array([s.ci_low for s in result.sizes])
    hi = np.array([s.ci_high for s in result.sizes])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.errorbar(ns, med, yerr=[med - lo, hi - med], fmt="o", capsize=3, label="median coupling time")
    grid = np.geomspace(ns.min(), ns.max(), 50)
    ax.plot(grid, result.fit.predict(grid), "-",
            label=f"fit n^{result.fit.exponent:.2f} (+/- {result.fit.stderr:.2f})")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n = 1/delta")
    ax.set_ylabel("time")
    ax.legend()
    return _save(fig, path)


def plot_relax(curve, path, eps=(0.1, 0.05)):
    fig, ax = plt.subplots(figsize=(5, 4))
    t = np.maximum(curve.times, curve.times[curve.times > 0].min() / 2)
    ax.plot(t, np.median(curve.sup_dist, axis=0), "-", label="median")
    ax.fill_between(t, curve.sup_dist.min(axis=0), curve.sup_dist.max(axis=0), alpha=0.3,
                    label="min..max over replicas")
    for e in eps:
        ax.axhline(e, ls="--", lw=0.8, color="k")
    ax.set_xscale("log")
    ax.set_xlabel("time")
    ax.set_ylabel("sup |delta h - phi|")
    ax.set_title(f"n = {curve.n}")
    ax.legend()
    return _save(fig, path)


def plot_fluct(result, path):
    rows = result.rows_
    d = np.array([r.delta for r in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    for k in (1, 2, 4):
        ax.plot(d, [r.moments[k] for r in rows], "o-", label=f"E|h - Eh|^{k}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("delta")
    ax.set_ylabel("central moment at the centre")
    ax.legend()
    return _save(fig, path)


def plot_ptrf(result, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    for w in sorted({c.width for c in result.cells}):
        cells = [c for c in result.cells if c.width == w]
        ax.plot([c.scale for c in cells], [c.stats.q75 for c in cells], "o", label=f"width {w}")
    s = np.geomspace(min(c.scale for c in result.cells), max(c.scale for c in result.cells), 20)
    ax.plot(s, result.C_hat * s, "k--", label=f"C_hat = {result.C_hat:.3g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("diam^2 Delta^2 delta^-4 log^2(1/delta)")
    ax.set_ylabel("75% coupling time")
    ax.legend()
    return _save(fig, path)


def plot_field(field, path, title=""):
    fig, ax = plt.subplots(figsize=(4.5, 4))
    g = field.grid
    im = ax.imshow(field.values.T, origin="lower", extent=(g.x[0], g.x[-1], g.y[0], g.y[-1]))
    fig.colorbar(im, ax=ax)
    ax.set_title(title)
    return _save(fig, path)


def plot_mixtime(times, exact_tmix, path):
    t = np.sort(np.asarray(times)[np.isfinite(times)])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.step(t, 1 - np.arange(1, len(t) + 1) / len(t), where="post", label="P(tau > t)")
    if exact_tmix is not None:
        ax.axvline(exact_tmix, color="k", ls="--", label="exact T_mix")
        ax.axhline(0.25, color="gray", ls=":")
    ax.set_xlabel("time")
    ax.legend()
    return _save(fig, path)
