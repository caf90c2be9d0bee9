"""Figure rendering for CLI reports.

Each helper writes one PNG next to the delimited output it illustrates.
Rendering is optional (the --plot flag) and never affects result payloads.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_profile_plot(y, psi, path, label="maximizer"):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(y, psi, lw=1.5)
    ax.set_xlabel("height")
    ax.set_ylabel(label)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_mode_series_plot(series, path):
    fig, axes = plt.subplots(2, 1, figsize=(6, 4.5), sharex=True)
    axes[0].plot(series.t, series.eta, lw=1.0)
    axes[0].set_ylabel("amplitude")
    axes[1].plot(series.t, series.energy, lw=1.0, color="tab:red")
    axes[1].set_ylabel("energy")
    axes[1].set_xlabel("time")
    for ax in axes:
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_scan_plot(rows, path, threshold=None):
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.plot([r.M3 for r in rows], [r.growth_rate for r in rows], "o-", lw=1.2)
    ax.axhline(0.0, color="k", lw=0.8)
    if threshold is not None:
        ax.axvline(threshold, color="tab:red", ls="--", lw=1.0, label="threshold")
        ax.legend()
    ax.set_xlabel("vertical field strength")
    ax.set_ylabel("max growth rate")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sweep_plot(rows, path):
    eps = [r["epsilon"] for r in rows]
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.plot(eps, [r["V_M"] for r in rows], "o-", label="magnetic")
    ax.plot(eps, [r["V_star"] for r in rows], "s-", label="released potential")
    ax.plot(eps, [r["delta_EP"] for r in rows], "^-", label="total variation")
    ax.set_xscale("log")
    ax.set_xlabel("amplitude")
    ax.set_ylabel("energy")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_flux_plot(report, path):
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    errs = [s.abs_error for s in report.surfaces]
    ax.bar(range(len(errs)), errs)
    ax.axhline(report.pointwise_residual, color="tab:red", ls="--",
               label="pointwise residual")
    ax.set_xlabel("surface index")
    ax.set_ylabel("|flux error|")
    ax.set_yscale("log" if max(errs + [report.pointwise_residual]) > 0 else "linear")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
