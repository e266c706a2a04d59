#!/usr/bin/env python3
"""Log-log plot of per-level strong errors from `stochheat convergence` CSV reports."""

import argparse
import json
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_report(path):
    meta, rows, header = {}, [], None
    with open(path) as f:
        for line in f:
            line = line.rstrip("\n")
            if line.startswith("# "):
                key, _, value = line[2:].partition(": ")
                meta[key] = value
            elif header is None:
                header = line.split(",")
            elif line:
                rows.append(dict(zip(header, map(float, line.split(",")))))
    return meta, rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("reports", nargs="+", help="CSV files written by the convergence command")
    ap.add_argument("-o", "--out", default="convergence.png")
    args = ap.parse_args()

    fig, ax = plt.subplots(figsize=(6, 4.5))
    for path in args.reports:
        meta, rows = read_report(path)
        if not rows:
            print(f"{path}: no rows", file=sys.stderr)
            continue
        name = json.loads(meta["config"])["name"] if "config" in meta else path
        n = [r["n"] for r in rows]
        err = [r["error"] for r in rows]
        se = [r["std_error"] for r in rows]
        label = f"{name} (fit {meta.get('fitted_rate', 'n/a')})"
        ax.errorbar(n, err, yerr=se, marker="o", capsize=3, label=label)
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("strong error")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)


if __name__ == "__main__":
    main()
