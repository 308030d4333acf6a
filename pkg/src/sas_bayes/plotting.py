"""SVG figures for fit reports.

Zero-count points are dropped from every figure; they stay in the data and
the likelihood.
"""
import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# stable SVG output: fixed id salt, no timestamp
matplotlib.rcParams["svg.hashsalt"] = "sas_bayes"
_META = {"Date": None, "Creator": None}

LABELS = {"R": r"$R$ (nm)", "sigma": r"$\sigma$ (nm)", "b": r"$b$", "t": r"$t$"}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def plot_fit(path, d, i_map, i_true=None):
    fig, ax = plt.subplots(figsize=(5, 4))
    keep = d.y > 0
    ax.plot(d.q[keep], d.y[keep], ".", color="0.6", ms=3, label="data")
    if i_true is not None:
        ax.plot(d.q, i_true, "k--", lw=1, label="true")
    ax.plot(d.q, i_map, "r-", lw=1.2, label="MAP")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"$q$ (nm$^{-1}$)")
    ax.set_ylabel("intensity (counts)")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_histograms(path, hists, truth=None):
    n = len(hists)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3))
    for ax, h in zip(axes if n > 1 else [axes], hists):
        ax.bar(h.centers, h.counts, width=h.edges[1] - h.edges[0], color="0.5")
        label = LABELS.get(h.name, h.name)
        if h.rescale is not None:
            label = r"$t / t^*$"
        ax.set_xlabel(label)
        if truth is not None and h.name in truth:
            ref = 1.0 if h.rescale is not None else truth[h.name]
            ax.axvline(ref, color="r", ls="--", lw=1)
    axes_list = axes if n > 1 else [axes]
    axes_list[0].set_ylabel("count")
    fig.tight_layout()
    return _save(fig, path)


def plot_residuals(path, res):
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.axhline(0.0, color="k", lw=0.8)
    ax.plot(res.q, res.residual, ".", color="0.3", ms=3)
    ax.set_xscale("log")
    ax.set_xlabel(r"$q$ (nm$^{-1}$)")
    ax.set_ylabel(r"$(y - I)/I$")
    if len(res.residual):
        top = max(abs(float(res.residual.min())), abs(float(res.residual.max())))
        if math.isfinite(top) and top > 0:
            ax.set_ylim(-1.05 * top, 1.05 * top)
    fig.tight_layout()
    return _save(fig, path)


def render_all(outdir, d, i_map, i_true, hists, truth, res):
    return [
        plot_fit(os.path.join(outdir, "fit.svg"), d, i_map, i_true),
        plot_histograms(os.path.join(outdir, "histograms.svg"), hists, truth),
        plot_residuals(os.path.join(outdir, "residuals.svg"), res),
    ]
