"""Figure rendering for study reports (log-log convergence and sweep plots)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_study(report, path):
    """Render one PNG per report: fitted series on log-log axes, other
    numeric series on linear axes."""
    rows = report.rows
    if not rows:
        return None
    if "eps" in rows[0]:
        x = np.array([r["eps"] for r in rows])
        xlabel = "eps"
    else:
        key = next(k for k in rows[0] if isinstance(rows[0][k], (int, float)))
        x = np.array([r[key] for r in rows])
        xlabel = key

    fitted = list(report.fits.keys())
    series = fitted or [k for k in rows[0] if k != xlabel]
    ncols = min(3, max(1, len(series)))
    nrows_fig = (len(series) + ncols - 1) // ncols
    fig, axes = plt.subplots(
        nrows_fig, ncols, figsize=(4.2 * ncols, 3.4 * nrows_fig), squeeze=False
    )
    for ax in axes.ravel()[len(series):]:
        ax.set_axis_off()

    for ax, name in zip(axes.ravel(), series):
        y = np.array([float(r[name]) for r in rows])
        fit = report.fits.get(name)
        if fit is not None and np.all(y > 0) and np.all(x > 0):
            ax.loglog(x, y, "o-", label=name)
            slope = fit["slope"]
            ref = y[0] * (x / x[0]) ** slope
            ax.loglog(x, ref, "k--", lw=0.8, label=f"slope {slope:.3f}")
            if "expected" in fit:
                exp = fit["expected"]
                ax.loglog(x, y[0] * (x / x[0]) ** exp, "r:", lw=0.8, label=f"expected {exp:.3f}")
        else:
            ax.plot(x, y, "o-", label=name)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(name)
        ax.legend(fontsize=7)
        ax.grid(True, which="both", alpha=0.3)

    fig.suptitle(f"{report.study} ({report.config.get('hash', '')[:8]})", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
