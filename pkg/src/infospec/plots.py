"""Figure rendering for spectra, bounds and condition trends.

Figures are a convenience layer next to the CSV outputs; the CSV stays the
machine contract.  PNGs are written without a Software tag so reruns are
byte-stable under a fixed matplotlib version.
"""
from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIG_SIZE = (6.0, 3.8)
DPI = 150


def _render(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=DPI, bbox_inches="tight",
                metadata={"Software": None})
    plt.close(fig)
    return buf.getvalue()


def spectrum_figure(spectra, which: str, reference=None) -> bytes:
    """Stacked ECDFs of a spectrum family over the n-grid."""
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    for spec in spectra:
        finite = np.isfinite(spec.values)
        vals = spec.values[finite]
        cum = np.cumsum(spec.masses)[finite]
        if vals.size == 0:
            continue
        ax.step(vals, cum, where="post", label=f"n={spec.n}")
        neg_mass = float(spec.masses[~finite].sum())
        if neg_mass > 0:
            ax.axhline(neg_mass, color="gray", lw=0.6, ls=":")
    if reference is not None:
        for value, label in reference:
            ax.axvline(value, color="k", lw=0.8, ls="--")
            ax.text(value, 1.02, label, ha="center", fontsize=8)
    ax.set_xlabel(f"{which} density (nats/symbol)")
    ax.set_ylabel("CDF")
    ax.set_ylim(-0.02, 1.08)
    ax.legend(fontsize=8, loc="lower right")
    ax.grid(alpha=0.3)
    return _render(fig)


def bounds_figure(rows, title: str) -> bytes:
    """Bound decomposition against block length (rows of CodeTrialReport)."""
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    ns = [r.n for r in rows]
    ax.plot(ns, [r.bound for r in rows], "o-", label="bound")
    ax.plot(ns, [r.prob_term for r in rows], "s--", label="probability term")
    ax.plot(ns, [r.exp_term for r in rows], "^:", label="exp term")
    eps = [r.epsilon for r in rows if r.epsilon is not None]
    if len(eps) == len(rows):
        ax.plot(ns, eps, "d-", label="error probability")
    if len(ns) > 1 and max(ns) / max(min(ns), 1) >= 4:
        ax.set_xscale("log", base=2)
    ax.set_xlabel("block length n")
    ax.set_ylabel("probability")
    ax.set_title(title, fontsize=10)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _render(fig)


def condition_figure(report, title: str) -> bytes:
    """Per-n condition terms with the epsilon threshold."""
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    ns = [r.n for r in report.rows]
    ax.plot(ns, [r.combined for r in report.rows], "o-", label="combined")
    if all(r.term2 is not None for r in report.rows):
        ax.plot(ns, [r.term1 for r in report.rows], "s--", label="source tail")
        ax.plot(ns, [r.term2 for r in report.rows], "^--", label="channel tail")
    ax.axhline(report.eps, color="k", lw=0.8, ls="--", label=f"eps={report.eps:g}")
    if len(ns) > 1 and max(ns) / max(min(ns), 1) >= 4:
        ax.set_xscale("log", base=2)
    ax.set_yscale("symlog", linthresh=1e-6)
    ax.set_xlabel("block length n")
    ax.set_ylabel("probability")
    ax.set_title(f"{title} [{report.verdict}]", fontsize=10)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _render(fig)


def functional_figure(summary, title: str) -> bytes:
    """Quantile-proxy trajectories behind the rate and capacity estimates."""
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    styles = {"h_upper": "o-", "h_lower": "o--", "i_upper": "s-", "i_lower": "s--"}
    for name, traj in summary.trajectories.items():
        ns = [n for n, _ in traj]
        qs = [q for _, q in traj]
        ax.plot(ns, qs, styles.get(name, "-"), label=name)
    if len(summary.n_grid) > 1 and max(summary.n_grid) / max(min(summary.n_grid), 1) >= 4:
        ax.set_xscale("log", base=2)
    ax.set_xlabel("block length n")
    ax.set_ylabel("nats/symbol")
    ax.set_title(title, fontsize=10)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _render(fig)
