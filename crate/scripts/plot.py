#!/usr/bin/env python3
"""Render the CSV tables written by `fwa` (needs pandas and matplotlib).

    python scripts/plot.py out/                # every known table in out/
    python scripts/plot.py out/ --save figs/   # write PNGs instead of showing
"""
import argparse
import pathlib

import matplotlib.pyplot as plt
import pandas as pd


def convergence(path, ax):
    df = pd.read_csv(path)
    for scheme, g in df.groupby("scheme", sort=False):
        m = g.groupby("step")["suboptimality"].mean()
        ax.plot(m.index, m.values, label=scheme)
    ax.set(xlabel="step", ylabel="suboptimality", yscale="log", title=path.stem)


def stability(path, ax, column="param_distance"):
    df = pd.read_csv(path)
    for scheme, g in df.groupby("scheme", sort=False):
        m = g.groupby("epoch")[column].mean()
        ax.plot(m.index, m.values, label=scheme)
    ax.set(xlabel="epoch", ylabel=column, title=path.stem)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("dir", type=pathlib.Path)
    p.add_argument("--save", type=pathlib.Path)
    args = p.parse_args()

    jobs = [(f, convergence) for f in sorted(args.dir.glob("convergence_*.csv"))
            if f.stem not in ("convergence_summary", "convergence_checks")]
    for f in sorted(args.dir.glob("stability_*.csv")):
        if f.stem not in ("stability_summary", "stability_checks"):
            jobs.append((f, stability))
            jobs.append((f, lambda path, ax: stability(path, ax, "gen_error")))
    if not jobs:
        raise SystemExit(f"no convergence or stability tables in {args.dir}")

    for i, (f, draw) in enumerate(jobs):
        fig, ax = plt.subplots(figsize=(6, 4))
        draw(f, ax)
        ax.legend()
        fig.tight_layout()
        if args.save:
            args.save.mkdir(parents=True, exist_ok=True)
            fig.savefig(args.save / f"{f.stem}_{i}.png", dpi=120)
            plt.close(fig)
    if not args.save:
        plt.show()


if __name__ == "__main__":
    main()
