"""Figures written next to the CSV and JSON outputs."""

from __future__ import annotations

import numpy as np


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_partition(dom, partition, margin_gap, path):
    """Cell assignment and tie margins.  Returns ``None`` for ``d > 2``."""
    if dom.d > 2:
        return None
    plt = _pyplot()
    a = partition.assignment.astype(float) + 1
    a[a <= 0] = np.nan
    cmap = plt.get_cmap("tab10", partition.m)
    if dom.d == 1:
        fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7, 4), sharex=True,
                                       gridspec_kw={"height_ratios": [1, 2]})
        x = dom.points[:, 0]
        ax0.imshow(a[None, :], aspect="auto", cmap=cmap, vmin=0.5, vmax=partition.m + 0.5,
                   extent=(0, 1, 0, 1), interpolation="nearest")
        for c in partition.fractional_cells:
            ax0.axvspan(x[c] - dom.h / 2, x[c] + dom.h / 2, color="k", alpha=0.4)
        ax0.set_yticks([])
        ax0.set_title("assigned index (grey: fractional cell)")
        ax1.semilogy(x, np.maximum(margin_gap, 1e-18), ".", ms=3)
        ax1.set_xlabel("x")
        ax1.set_ylabel("tie margin")
    else:
        k = dom.cells_per_axis
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 4))
        im = ax0.imshow(a.reshape(k, k).T, origin="lower", extent=(0, 1, 0, 1), cmap=cmap,
                        vmin=0.5, vmax=partition.m + 0.5, interpolation="nearest")
        fig.colorbar(im, ax=ax0, ticks=range(1, partition.m + 1), label="index")
        ax0.set_title("assigned index (white: fractional cell)")
        gap = np.log10(np.maximum(margin_gap, 1e-18)).reshape(k, k).T
        im = ax1.imshow(gap, origin="lower", extent=(0, 1, 0, 1), interpolation="nearest")
        fig.colorbar(im, ax=ax1, label="log10 tie margin")
        ax1.set_title("tie margin")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_dual_slices(dual_fn, lam_star, path, width=1.0, samples=201):
    """Dual function along each coordinate axis through the maximizer."""
    plt = _pyplot()
    lam_star = np.asarray(lam_star, dtype=float)
    n = lam_star.size
    fig, axes = plt.subplots(1, n, figsize=(4 * n, 3), squeeze=False)
    t = np.linspace(-width, width, samples)
    for k, ax in enumerate(axes[0]):
        vals = []
        for s in t:
            lam = lam_star.copy()
            lam[k] += s
            vals.append(dual_fn(lam))
        ax.plot(lam_star[k] + t, vals)
        ax.axvline(lam_star[k], color="k", lw=0.8, ls="--")
        ax.set_xlabel(f"lambda_{k + 1}")
    axes[0][0].set_ylabel("dual value")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_probe(stats, path):
    plt = _pyplot()
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(8, 3))
    ax0.hist(stats.tie_measures, bins=20)
    ax0.set_xlabel("tie measure")
    ax0.set_ylabel("trials")
    frac = [t.fractional_cells for t in stats.trials if t.fractional_cells is not None]
    if frac:
        ax1.hist(frac, bins=np.arange(max(frac) + 2) - 0.5)
    ax1.set_xlabel("fractional cells")
    ax0.set_title(stats.model.get("name", ""))
    ax1.set_title(f"generic fraction {stats.generic_fraction:.3f}")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
