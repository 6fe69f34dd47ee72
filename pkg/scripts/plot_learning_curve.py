#!/usr/bin/env python3
"""Plot a learning-curve CSV (fraction, mean, std) produced by `gaitwave run`."""

import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("curve_csv", help="path to a curve.csv from a run")
    ap.add_argument("-o", "--out", default=None,
                    help="output PNG path (default: next to the CSV)")
    args = ap.parse_args()

    path = Path(args.curve_csv)
    with path.open(newline="") as fh:
        rows = sorted(csv.DictReader(fh), key=lambda r: float(r["fraction"]))
    if not rows:
        raise SystemExit(f"{path} holds no curve points")
    fractions = [float(r["fraction"]) for r in rows]
    means = [float(r["mean"]) for r in rows]
    stds = [float(r["std"]) for r in rows]

    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.errorbar(fractions, means, yerr=stds, marker="o", capsize=3)
    ax.set_xlabel("fraction of the dataset used for training")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.grid(alpha=0.3)
    fig.tight_layout()

    out = Path(args.out) if args.out else path.with_suffix(".png")
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
