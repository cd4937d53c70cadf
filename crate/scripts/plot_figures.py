#!/usr/bin/env python3
"""Figures from the CSVs written by `amsp estimate` and `amsp mc`.

    python3 scripts/plot_figures.py out/lightly_damped [--save figs/]
"""
import argparse
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd

STATES = ["delta", "domega", "eq_p", "ed_p"]


def estimates(out, figs):
    est, truth = out / "estimates.csv", out / "truth_pmu.csv"
    if not est.exists():
        return
    e = pd.read_csv(est)
    t = pd.read_csv(truth) if truth.exists() else None
    fig, axes = plt.subplots(4, 1, sharex=True, figsize=(8, 9))
    for ax, s in zip(axes, STATES):
        if t is not None:
            ax.plot(t["t"], t[s], "k", lw=1, label="truth")
        ax.plot(e["t"], e[s], lw=0.8, label="estimate")
        ax.set_ylabel(s)
    axes[0].legend()
    axes[-1].set_xlabel("t [s]")
    figs.append(("estimates", fig))


def traces(out, figs):
    path = out / "traces.csv"
    if not path.exists():
        return
    tr = pd.read_csv(path)
    fig, (a, b) = plt.subplots(2, 1, sharex=True, figsize=(8, 5))
    a.semilogy(tr["t"], tr["n_phi"].clip(lower=1e-16), label="n(Phi)")
    a.semilogy(tr["t"], tr["n_h"].clip(lower=1e-16), label="n(h)")
    a.legend()
    b.step(tr["t"], tr["mp"], where="post")
    b.set_ylabel("M_p")
    b.set_xlabel("t [s]")
    figs.append(("traces", fig))


def curves(out, figs):
    path = out / "curves.csv"
    if not path.exists():
        return
    c = pd.read_csv(path)
    fig, axes = plt.subplots(5, 1, sharex=True, figsize=(8, 11))
    for mode, g in c.groupby("mode", sort=False):
        for ax, s in zip(axes, STATES):
            ax.semilogy(g["t"], g[f"mse_{s}"], lw=0.8, label=mode)
            ax.set_ylabel(f"MSE {s}")
        axes[4].plot(g["t"], g["mean_mp"], lw=0.8, label=mode)
    axes[4].set_ylabel("mean M_p")
    axes[4].set_xlabel("t [s]")
    axes[0].legend(ncol=3, fontsize="small")
    figs.append(("mse_curves", fig))


def bars(out, figs):
    mmse, timing = out / "mmse.csv", out / "timing.csv"
    if not (mmse.exists() and timing.exists()):
        return
    m = pd.read_csv(mmse)
    whole = m[m["segment"] == "whole"].pivot(index="mode", columns="state", values="mMSE")
    tm = pd.read_csv(timing).set_index("mode")
    order = list(tm.index)
    fig, (a, b) = plt.subplots(1, 2, figsize=(11, 4))
    whole.loc[order, STATES].plot.bar(ax=a, logy=True)
    a.set_ylabel("mMSE")
    tm.loc[order, "mean_s"].plot.bar(ax=b)
    b.set_ylabel("mean wall time [s]")
    fig.tight_layout()
    figs.append(("mmse_timing", fig))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", type=Path)
    ap.add_argument("--save", type=Path)
    args = ap.parse_args()
    figs = []
    for f in (estimates, traces, curves, bars):
        f(args.out, figs)
    if not figs:
        raise SystemExit(f"no CSV outputs found in {args.out}")
    if args.save:
        args.save.mkdir(parents=True, exist_ok=True)
        for name, fig in figs:
            fig.savefig(args.save / f"{name}.png", dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
