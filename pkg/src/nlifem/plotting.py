"""Optional matplotlib rendering of convergence reports (PNG)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .report import _x_values, guide_orders, norms_of  # noqa: E402


def plot_report(report, path, dpi: int = 120) -> None:
    """Log-log chart of every error norm with dashed reference slopes."""
    xs = _x_values(report)
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    for n in norms_of(report):
        pts = [(x, r[f"err_{n}"]) for x, r in zip(xs, report.rows) if r.get(f"err_{n}")]
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", label=n)
    if ax.lines:
        x0, y0 = ax.lines[0].get_xdata()[-1], ax.lines[0].get_ydata()[-1]
        xa = ax.lines[0].get_xdata()[0]
        for p in guide_orders(report):
            ax.plot([xa, x0], [y0 * (xa / x0) ** p, y0], "--", color="0.55", lw=1, label=f"order {p}")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("delta" if report.x_label == "delta" else "h")
    ax.set_ylabel("error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
