"""Matplotlib figures for moment series.

SVG output is made byte-reproducible by fixing the id hash salt and
dropping the date stamp.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "tamedjump",
    "svg.fonttype": "path",
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
}


def plot_moments(series_list, path, title="", reference=None):
    """Log-scale E|Y_n|^2 against t_n, one line per series.

    ``reference`` is an optional ``(times, values, label)`` curve drawn dashed.
    """
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 4))
        for s in series_list:
            positive = s.msq > 0
            ax.semilogy(s.times[positive], s.msq[positive], label=f"dt = {s.dt:g}")
        if reference is not None:
            t, v, label = reference
            ax.semilogy(t, v, "k--", lw=1.0, label=label)
        ax.set_xlabel("t")
        ax.set_ylabel(r"$E\,|Y_n|^2$")
        if title:
            ax.set_title(title)
        ax.legend(loc="best", frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def exponential_curve(times, alpha, x0_msq=1.0):
    times = np.asarray(times, dtype=float)
    return times, x0_msq * np.exp(alpha * times)
