"""Matplotlib rendering of solve traces and smoothing sweeps.

Figures are written next to the delimited outputs; the CLI calls these after
emitting the CSVs unless figures are disabled.
"""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_KIND_COLORS = {
    "serious": "tab:blue",
    "rejected": "tab:red",
    "restoration-serious": "tab:green",
    "restoration-rejected": "tab:orange",
}


def render_trace(records, path, title=""):
    """Two-panel convergence figure: merit/objective and step geometry."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7.0, 6.0), sharex=True)
    ks = [r.k for r in records]
    ax1.plot(ks, [r.r_value for r in records], "-", color="0.4", lw=1.0, label="objective")
    ax1.plot(ks, [r.merit_value for r in records], "-", color="k", lw=1.0, label="merit")
    for kind, color in _KIND_COLORS.items():
        pts = [(r.k, r.merit_value) for r in records if r.step_kind == kind]
        if pts:
            ax1.plot(*zip(*pts), "o", ms=3.5, color=color, label=kind)
    ax1.set_ylabel("value")
    ax1.legend(fontsize=7, ncol=2)
    if title:
        ax1.set_title(title)

    ax2.semilogy(ks, [max(r.step_norm, 1e-300) for r in records], "o-", ms=2.5,
                 lw=0.8, label="step norm")
    ax2.semilogy(ks, [max(r.alpha, 1e-300) for r in records], "s-", ms=2.5,
                 lw=0.8, label="quadratic coefficient")
    ax2.set_xlabel("iteration")
    ax2.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_sweep(rows, path, which, title=""):
    """Smoothed-value curves per penalty coefficient; eg1 overlays sqrt(x)."""
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    by_mu = {}
    for mu, x, val in rows:
        by_mu.setdefault(mu, []).append((x, val))
    for mu in sorted(by_mu):
        pts = sorted(by_mu[mu])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], lw=1.2,
                label=f"mu = {mu:g}")
    if which == "eg1":
        xs = sorted({x for pts in by_mu.values() for x, _ in pts})
        ax.plot(xs, [math.sqrt(max(x, 0.0)) for x in xs], "k--", lw=1.0,
                label="exact value")
    ax.set_xlabel("x")
    ax.set_ylabel("smoothed value")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
