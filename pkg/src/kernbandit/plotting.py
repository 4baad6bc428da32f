"""PNG figures rendered from the CSV outputs.

The CSV files stay the source of truth; these figures are a convenience
view and are always recomputed from them.
"""

from __future__ import annotations

import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def regret_curves(summary_csv, out_path) -> str:
    """Log-log mean final regret against T, one line per (env, algo)."""
    groups = defaultdict(lambda: defaultdict(list))
    slopes = {}
    with open(summary_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["env_id"], row["algo_id"])
            groups[key][int(row["T"])].append(float(row["final_regret"]))
            slopes[key] = row["slope"]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for (env, algo), by_T in sorted(groups.items()):
        Ts = np.array(sorted(by_T))
        means = np.array([np.mean(by_T[T]) for T in Ts])
        errs = np.array([np.std(by_T[T], ddof=1) / np.sqrt(len(by_T[T])) if len(by_T[T]) > 1 else 0.0
                         for T in Ts])
        slope = slopes[(env, algo)]
        label = f"{env} / {algo}" + ("" if slope == "nan" else f" (slope {float(slope):.3f})")
        ax.errorbar(Ts, np.maximum(means, 1e-12), yerr=errs, marker="o", capsize=3, label=label)
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("horizon T")
    ax.set_ylabel("mean cumulative regret")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def trace_plot(trace_csv, out_path) -> str:
    data = np.genfromtxt(trace_csv, delimiter=",", names=True)
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    top.plot(data["t"], data["regret_cum"])
    top.set_ylabel("cumulative regret")
    bottom.plot(data["t"], data["x"], ".", markersize=2)
    bottom.set_ylabel("action x")
    bottom.set_xlabel("round t")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def instance_plot(instance, out_path, grid_size: int = 4097) -> str:
    xs = np.linspace(0.0, 1.0, grid_size)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(xs, instance.phi(xs, 0), color="k", lw=1.5, label="phi_0")
    for s in range(1, instance.M + 1):
        ax.plot(xs, instance.rough(xs, s), lw=0.8, alpha=0.7)
    for s in range(instance.M + 1):
        ax.axvline(instance.bin_interval(s)[0], color="0.85", lw=0.5, zorder=0)
    p = instance.params
    ax.set_title(f"m1={p.m1}, m2={p.m2}, M={p.M}, Delta={p.Delta:.4g}")
    ax.set_xlabel("x")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_report(out_dir, max_traces: int = 12) -> list:
    """Figures for a simulate output directory; returns the written paths."""
    written = [regret_curves(os.path.join(out_dir, "summary.csv"), os.path.join(out_dir, "regret_curves.png"))]
    trace_dir = os.path.join(out_dir, "traces")
    if os.path.isdir(trace_dir):
        fig_dir = os.path.join(out_dir, "figures")
        os.makedirs(fig_dir, exist_ok=True)
        for name in sorted(os.listdir(trace_dir))[:max_traces]:
            if name.endswith(".csv"):
                written.append(trace_plot(os.path.join(trace_dir, name),
                                          os.path.join(fig_dir, name[:-4] + ".png")))
    return written
