#!/usr/bin/env python3
"""Plot a run directory written by `cineswarm run`.

    scripts/plot_run.py out/tower [--compare out/tower_baseline] [--save plots/]

Reads frames.csv and metrics.json. Without --save the figures are shown
interactively.
"""

import argparse
import json
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd


def load(run_dir):
    run_dir = Path(run_dir)
    frames = pd.read_csv(run_dir / "frames.csv")
    with open(run_dir / "metrics.json") as f:
        metrics = json.load(f)["metrics"]
    return frames, metrics


def top_view(ax, frames, title):
    for name, rows in frames.groupby("entity", sort=False):
        if name == "target_estimate":
            continue
        style = "k--" if name == "target" else "-"
        ax.plot(rows["x"], rows["y"], style, label=name, lw=1.2)
        ax.plot(rows["x"].iloc[0], rows["y"].iloc[0], "o", ms=3, color=ax.lines[-1].get_color())
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(title)
    ax.legend(fontsize=8)


def formation(axes, metrics):
    t = np.asarray(metrics["time"])
    ax_df, ax_h, ax_p = axes
    for i, series in enumerate(metrics["d_f"]):
        ax_df.plot(t, series, label=f"light {i + 1}")
    ax_df.axhline(0.0, color="k", lw=0.6)
    ax_df.set_ylabel("d_F [m]")
    for i, series in enumerate(metrics["lighting_heading_dev"]):
        ax_h.plot(t, series, label=f"light {i + 1}")
    for bound in (-0.2, 0.2):
        ax_h.axhline(bound, color="r", lw=0.6, ls=":")
    ax_h.set_ylabel("heading dev [rad]")
    for i, series in enumerate(metrics["lighting_pitch_dev"]):
        ax_p.plot(t, series, label=f"light {i + 1}")
    for bound in (-0.12, 0.12):
        ax_p.axhline(bound, color="r", lw=0.6, ls=":")
    ax_p.set_ylabel("pitch dev [rad]")
    ax_p.set_xlabel("t [s]")
    ax_df.legend(fontsize=8)


def camera_angles(axes, runs):
    ax_h, ax_p = axes
    for label, metrics in runs:
        t = np.asarray(metrics["time"])
        ax_h.plot(t, np.unwrap(metrics["leader_heading"]), label=f"{label} ({metrics['rms_jerk_heading']:.4f} rad/s^3)")
        ax_p.plot(t, metrics["leader_pitch"], label=f"{label} ({metrics['rms_jerk_pitch']:.4f} rad/s^3)")
    ax_h.set_ylabel("camera heading [rad]")
    ax_p.set_ylabel("camera pitch [rad]")
    ax_p.set_xlabel("t [s]")
    ax_h.legend(fontsize=8)
    ax_p.legend(fontsize=8)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("run")
    ap.add_argument("--compare", help="second run directory, e.g. the --no-cinematography baseline")
    ap.add_argument("--save", help="directory for PNG output")
    args = ap.parse_args()

    frames, metrics = load(args.run)
    runs = [(Path(args.run).name, metrics)]
    if args.compare:
        runs.append((Path(args.compare).name, load(args.compare)[1]))

    figs = {}
    fig, ax = plt.subplots(figsize=(9, 6))
    top_view(ax, frames, f"{metrics['scenario']} (seed {metrics['seed']})")
    figs["top_view"] = fig

    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(9, 7))
    formation(axes, metrics)
    figs["formation"] = fig

    fig, axes = plt.subplots(2, 1, sharex=True, figsize=(9, 5))
    camera_angles(axes, runs)
    figs["camera"] = fig

    fig, ax = plt.subplots(figsize=(9, 3))
    t = np.asarray(metrics["time"])
    ax.plot(t, metrics["clearance"], label="min obstacle clearance")
    ax.plot(t, metrics["separation"], label="min UAV separation")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("[m]")
    ax.legend(fontsize=8)
    figs["safety"] = fig

    for fig in figs.values():
        fig.tight_layout()
    if args.save:
        out = Path(args.save)
        out.mkdir(parents=True, exist_ok=True)
        for name, fig in figs.items():
            fig.savefig(out / f"{name}.png", dpi=120)
    else:
        plt.show()


if __name__ == "__main__":
    main()
