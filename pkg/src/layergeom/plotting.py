"""Figure rendering for curves and series; Agg backend, files only."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .cutoff import MixingReport

__all__ = ["save_tv_figure", "save_series_figure"]


def save_tv_figure(report: MixingReport, path: str | Path) -> Path:
    """TV-vs-depth curve with the mixing time and transition window marked."""
    curve = report.curve
    cfg = curve.config
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(curve.depths, curve.tv_raw, "o-", ms=3, label="TV (raw, [0, 2])")
    ax.plot(curve.depths, curve.tv_normalized, "s--", ms=3,
            label="TV (normalized, [0, 1])")
    ax.axhline(report.threshold_raw, color="grey", lw=0.8, ls=":",
               label=f"threshold {report.threshold_raw:g} (raw)")
    if report.t_mix is not None:
        ax.axvline(report.t_mix, color="crimson", lw=1.0,
                   label=f"t_mix = {report.t_mix}")
    lo, hi = report.window
    if lo is not None and hi is not None and lo < hi:
        ax.axvspan(lo, hi, color="orange", alpha=0.15, label="transition window")
    ax.set_xlabel("depth (layers)")
    ax.set_ylabel("TV distance to origin point mass")
    ax.set_title(f"{cfg.activation.name}, width {cfg.width}, "
                 f"{cfg.weight_spec.describe()}, M={cfg.ensemble}")
    ax.legend(fontsize=8)
    ax.set_ylim(-0.05, 2.1)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_series_figure(ns, values, ylabel: str, path: str | Path,
                       hline: float | None = None, title: str = "",
                       logx: bool = False) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ns, values, lw=1.0)
    if hline is not None:
        ax.axhline(hline, color="crimson", lw=0.8, ls="--",
                   label=f"reference {hline:g}")
        ax.legend(fontsize=8)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
