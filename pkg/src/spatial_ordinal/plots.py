"""SVG figures for the size and power studies (non-interactive backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# Fixed ids and no timestamp keep the SVG bytes stable across runs.
_RC = {"svg.hashsalt": "spatial-ordinal", "svg.fonttype": "none"}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def qq_plot(summaries, path) -> Path:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 5))
        top = 0.0
        for s in summaries:
            pts = s.qq()
            th = [p[0] for p in pts]
            em = [p[1] for p in pts]
            ax.plot(th, em, ".", ms=2, label=f"n={s.n}, m={s.m}")
            top = max(top, max(th), max(em))
        ax.plot([0, top], [0, top], "k-", lw=0.8)
        ax.set_xlabel("chi-square quantile")
        ax.set_ylabel("empirical quantile of L")
        ax.legend(frameon=False, fontsize=8)
        return _save(fig, path)


def power_plot(curves, path) -> Path:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 4))
        for cv in curves:
            ax.plot(cv.rho, cv.rates, "o-", ms=3, label=f"n={cv.n}, k={cv.k_graph}")
        if curves:
            ax.set_title(f"{curves[0].model}, m={curves[0].m}")
        ax.axhline(0.05, color="grey", lw=0.6, ls="--")
        ax.set_xlabel("rho")
        ax.set_ylabel("rejection rate")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(frameon=False, fontsize=8)
        return _save(fig, path)
