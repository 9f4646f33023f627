"""Figure rendering for experiment reports.

Figures are written next to the delimited output as PNG files; the Agg
backend is forced so runs work headless, and savefig metadata is pinned
so reruns stay byte-stable.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = dict(dpi=130, bbox_inches="tight", metadata={"Software": "nsq"})


def save_decay_figure(
    path,
    lam,
    series: dict,
    xlabel: str = "blocks condensed per output (lambda)",
    ylabel: str = "residual",
    title: str = "",
    loglog: bool = False,
    fit: tuple[float, float] | None = None,
) -> None:
    """Semilog (or log-log) decay curves over a lambda sweep.

    ``series`` maps labels to value arrays; ``fit`` optionally draws the
    fitted line ``exp(intercept + slope * x)`` with x = lam or log(lam).
    """
    lam = np.asarray(lam, dtype=float)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, values in series.items():
        ax.plot(lam, values, marker="o", label=label)
    if fit is not None:
        slope, intercept = fit
        xs = np.linspace(lam.min(), lam.max(), 64)
        base = np.log(xs) if loglog else xs
        ax.plot(xs, np.exp(intercept + slope * base), "k--", lw=1, label="fit")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_yscale("log")
    if loglog:
        ax.set_xscale("log")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_level_profile(path, levels, delta_hat, thresholds, title: str = "") -> None:
    """Multilevel isometry profile: measured defect vs the allowed one."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(levels, delta_hat, marker="o", label="measured")
    ax.plot(levels, thresholds, marker="s", ls="--", label="allowed")
    ax.set_xlabel("level")
    ax.set_ylabel("isometry defect")
    ax.set_yscale("log")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_error_bars(path, labels, values, tolerance: float, title: str = "") -> None:
    """Per-case relative errors against a tolerance line."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    floor = 1e-18
    ax.bar(labels, np.maximum(values, floor))
    ax.axhline(tolerance, color="r", ls="--", label=f"tolerance {tolerance:g}")
    ax.set_xlabel("case")
    ax.set_ylabel("relative error")
    ax.set_yscale("log")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_distance_scatter(path, d_true, d_embedded, title: str = "") -> None:
    """Embedded vs true pairwise distances with the identity line."""
    d_true = np.asarray(d_true, float)
    d_embedded = np.asarray(d_embedded, float)
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    lim = max(1e-12, float(d_true.max(initial=0)), float(d_embedded.max(initial=0)))
    ax.plot([0, lim], [0, lim], "k--", lw=1, label="identity")
    ax.plot(d_true, d_embedded, ".", ms=4, alpha=0.7)
    ax.set_xlabel("true distance")
    ax.set_ylabel("embedded distance")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
