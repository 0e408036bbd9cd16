"""Render NMSE, SER and iteration figures from a ``pare run`` CSV.

Usage: python scripts/plot_figures.py results.csv [--outdir figures] [--format png]

Needs matplotlib (``pip install artifact[plot]``). Kept outside the package so
the library and CLI never import a plotting backend.
"""

import argparse
import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from pare.harness import read_csv  # noqa: E402

STYLE = {
    "axes.grid": True,
    "grid.alpha": 0.4,
    "font.size": 10,
    "legend.fontsize": 8,
    "figure.figsize": (4.8, 3.4),
    "savefig.bbox": "tight",
}


def by_q(rows):
    groups = defaultdict(list)
    for row in rows:
        groups[row["q"]].append(row)
    return {q: sorted(rs, key=lambda r: r["snr_db"]) for q, rs in sorted(groups.items())}


def _positive(xs, ys):
    # Log axes cannot show zeros (e.g. SER with no errors).
    pts = [(x, y) for x, y in zip(xs, ys) if y > 0 and not math.isnan(y)]
    return [p[0] for p in pts], [p[1] for p in pts]


def plot_nmse(groups, path):
    fig, ax = plt.subplots()
    for q, rows in groups.items():
        snr = [r["snr_db"] for r in rows]
        for key, marker, label in (("nmse_H", "o", "H"), ("nmse_G", "s", "G")):
            ax.semilogy(*_positive(snr, [r[key] for r in rows]), marker=marker,
                        label=f"{label}, Q={q}")
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("NMSE")
    ax.legend()
    fig.savefig(path)
    plt.close(fig)


def plot_ser(groups, path):
    fig, ax = plt.subplots()
    zf_done = False
    for q, rows in groups.items():
        snr = [r["snr_db"] for r in rows]
        ax.semilogy(*_positive(snr, [r["ser_pare"] for r in rows]), marker="o", label=f"TALS, Q={q}")
        if not zf_done:
            # ZF with perfect CSI does not depend on Q.
            ax.semilogy(*_positive(snr, [r["ser_zf"] for r in rows]), "k--", marker="x",
                        label="ZF, perfect CSI")
            zf_done = True
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("SER")
    ax.legend()
    fig.savefig(path)
    plt.close(fig)


def plot_iterations(groups, path):
    fig, ax = plt.subplots()
    for q, rows in groups.items():
        ax.plot([r["snr_db"] for r in rows], [r["mean_iterations"] for r in rows],
                marker="o", label=f"Q={q}")
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("mean TALS iterations")
    ax.legend()
    fig.savefig(path)
    plt.close(fig)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv")
    parser.add_argument("--outdir", default="figures")
    parser.add_argument("--format", default="png")
    args = parser.parse_args(argv)

    groups = by_q(read_csv(args.csv))
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        for name, fn in (("nmse", plot_nmse), ("ser", plot_ser), ("iterations", plot_iterations)):
            path = outdir / f"{name}.{args.format}"
            fn(groups, path)
            print(f"wrote {path}")


if __name__ == "__main__":
    main()
