"""Static SVG figures: rank-size plots per partition cell and the d_r spacing curve."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed ids and no timestamp keep the SVG byte-stable across runs
    matplotlib.rcParams["svg.hashsalt"] = "centralplace"
    return plt


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    fig.clf()
    return path


def rank_size_svg(cells: list, path, theta: float | None = None, title: str = "") -> Path:
    """Log-log rank-size scatter, one series per cell (size lists, largest first)."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    for j, sizes in enumerate(cells):
        s = np.sort(np.asarray(sizes, dtype=float))[::-1]
        ax.loglog(np.arange(1, s.size + 1) - 0.5, s, "o-", ms=3, lw=0.8, label=f"cell {j + 1} (n={s.size})")
    ax.set_xlabel("rank - 0.5")
    ax.set_ylabel("size")
    if theta is not None:
        title = (title + "  " if title else "") + f"common slope {theta:.3f}"
    ax.set_title(title)
    if len(cells) <= 12:
        ax.legend(fontsize=6)
    fig.tight_layout()
    out = _save(fig, path)
    plt.close(fig)
    return out


def spacing_svg(rs, observed, cf_mean, path, cf_lo=None, cf_hi=None) -> Path:
    """Observed ``d_r`` against the counterfactual mean (and optional band)."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    rs = np.asarray(rs)
    if cf_lo is not None and cf_hi is not None:
        ax.fill_between(rs, cf_lo, cf_hi, color="0.85", label="counterfactual band")
    ax.plot(rs, cf_mean, "k--", lw=1, label="counterfactual mean")
    ax.plot(rs, observed, "o-", ms=3, color="tab:blue", label="observed")
    ax.set_xlabel("r")
    ax.set_ylabel("d_r")
    ax.legend(fontsize=7)
    fig.tight_layout()
    out = _save(fig, path)
    plt.close(fig)
    return out
