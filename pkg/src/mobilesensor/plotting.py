"""Figure rendering for CLI outputs (Agg backend, files only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.75),
    "font.size": 9,
    "axes.linewidth": 0.6,
    "lines.linewidth": 1.2,
    "legend.frameon": False,
    "savefig.dpi": 150,
}


def control_figure(rows, path):
    """Signal along the path, its best noise-span approximant, and the sign control."""
    t, f, l, c = (list(col) for col in zip(*rows))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(t, f, color="k", label="signal")
        ax.plot(t, l, color="tab:blue", ls="--", label="noise-span approximant")
        ax2 = ax.twinx()
        ax2.step(t, c, where="post", color="tab:red", lw=0.8, label="control")
        ax2.set_ylim(-1.5, 1.5)
        ax2.set_ylabel("c(t)")
        ax.set_xlabel("t")
        ax.set_ylabel("field along path")
        h1, l1 = ax.get_legend_handles_labels()
        h2, l2 = ax2.get_legend_handles_labels()
        ax.legend(h1 + h2, l1 + l2, loc="upper left")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def sweep_figure(rows, path):
    """Estimator variance against the Cramer-Rao bound versus shot count."""
    m, var, crb, _ = (list(col) for col in zip(*rows))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(m, var, "o", color="k", label="empirical variance")
        ax.loglog(m, crb, "-", color="tab:blue", label="Cramer-Rao bound")
        ax.set_xlabel("shots m")
        ax.set_ylabel("variance of estimate")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
