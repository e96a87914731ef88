"""SVG figures rendered from experiment results.

Figures are derived artifacts; the CSV files are the source of truth. SVG
output is made byte-stable (fixed hash salt, no timestamp) so reruns with
the same seed reproduce identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "certunlearn",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.figsize": (4.2, 3.0),
}

LABELS = {
    "err_t1": r"$\|\tilde\beta^{(1)} - \hat\beta_{\setminus M}\|_2$",
    "err_t2": r"$\|\tilde\beta^{(2)} - \hat\beta_{\setminus M}\|_2$",
    "err_exact": r"$\|\hat\beta - \hat\beta_{\setminus M}\|_2$",
}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def scaling_figure(summary: list[dict], xvar: str, quantity: str, fit=None, path=None):
    """Mean +- std of ``quantity`` against ``xvar`` on log-log axes, with the fitted line."""
    x = np.array([row[xvar] for row in summary], dtype=float)
    mean = np.array([row[f"{quantity}_mean"] for row in summary])
    std = np.array([row[f"{quantity}_std"] for row in summary])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        lower = np.clip(mean - std, mean * 1e-3, None)
        ax.errorbar(x, mean, yerr=[mean - lower, std], fmt="o", color="k", ms=4, capsize=2, lw=0.8)
        if fit is not None:
            slope, intercept, r2 = fit
            xx = np.geomspace(x.min(), x.max(), 50)
            ax.plot(xx, np.exp(intercept) * xx**slope, "--", color="tab:red", lw=1, label=f"slope {slope:.2f} ($R^2$={r2:.3f})")
            ax.legend(frameon=False)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel(xvar)
        ax.set_ylabel(LABELS.get(quantity, quantity))
        fig.tight_layout()
        # saved inside the style context so the fixed svg hash salt applies
        if path is not None:
            return _save(fig, Path(path))
    return fig


def loss_scatter(pairs: list[dict], point: str, path=None):
    """Exact-retrain loss against perturbed-Newton loss, one panel per step count."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(7.0, 3.2), sharex=True, sharey=True)
        for ax, t in zip(axes, (1, 2)):
            rows = [r for r in pairs if r["steps"] == t and r["point"] == point]
            xs = np.array([r["loss_exact"] for r in rows])
            ys = np.array([r["loss_perturbed"] for r in rows])
            ax.scatter(xs, ys, s=8, color="k", alpha=0.6, lw=0)
            if len(xs):
                lo = min(xs.min(), ys.min())
                hi = max(xs.max(), ys.max())
                ax.plot([lo, hi], [lo, hi], color="tab:red", lw=0.8)
            ax.set_xlabel("exact removal loss")
            ax.set_title(f"T = {t}")
        axes[0].set_ylabel("perturbed Newton loss")
        fig.tight_layout()
        # saved inside the style context so the fixed svg hash salt applies
        if path is not None:
            return _save(fig, Path(path))
    return fig


def render(result) -> list[Path]:
    cfg = result.config
    out = cfg.output_dir
    files = []
    if cfg.kind in ("p_scaling", "m_scaling"):
        xvar = "p" if cfg.kind == "p_scaling" else "m"
        for q in ("err_t1", "err_t2", "err_exact"):
            files.append(scaling_figure(result.summary, xvar, q, result.slopes.get(q), out / f"{cfg.kind}_{q}.svg"))
    if result.pairs:
        for point in ("heldout", "forgotten"):
            files.append(loss_scatter(result.pairs, point, out / f"{cfg.kind}_{point}.svg"))
    return files
