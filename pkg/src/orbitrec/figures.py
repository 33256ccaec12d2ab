"""Figure rendering for the CLI report paths.

Kept separate from the numerical core: only the command layer imports this,
and every renderer takes a CSV produced by an experiment command and writes
an image next to it.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

CURVE_STYLES = {
    "blue-dashed": dict(color="tab:blue", linestyle="--"),
    "red-dashed": dict(color="tab:red", linestyle="--"),
    "blue-solid": dict(color="tab:blue", linestyle="-"),
    "red-solid": dict(color="tab:red", linestyle="-"),
    "green-solid": dict(color="tab:green", linestyle="-"),
    "pink-solid": dict(color="tab:pink", linestyle="-"),
    "brown-solid": dict(color="tab:brown", linestyle="-"),
}


def _read_csv(path: str):
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader]
    return header, rows


def render_landscape(csv_path: str, out_path: str):
    header, rows = _read_csv(csv_path)
    if header[1].startswith("theta"):
        x = np.array([float(r[0]) for r in rows])
        y = np.array([float(r[1]) for r in rows])
        z = np.array([float(r[2]) for r in rows])
        xs, ys = np.unique(x), np.unique(y)
        grid = z.reshape(len(xs), len(ys))
        fig, ax = plt.subplots(figsize=(5.2, 4.2))
        cs = ax.contourf(xs, ys, grid.T, levels=30, cmap="viridis")
        fig.colorbar(cs, ax=ax, label="negative log-likelihood")
        i, j = np.unravel_index(np.argmin(grid), grid.shape)
        ax.plot(xs[i], ys[j], "r*", markersize=12, label="grid argmin")
        ax.set_xlabel(header[0])
        ax.set_ylabel(header[1])
        ax.legend(loc="upper right")
    else:
        x = np.array([float(r[0]) for r in rows])
        z = np.array([float(r[1]) for r in rows])
        fig, ax = plt.subplots(figsize=(5.2, 3.6))
        ax.plot(x, z, "-")
        ax.set_xlabel(header[0])
        ax.set_ylabel("negative log-likelihood")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_curves(csv_path: str, out_path: str):
    header, rows = _read_csv(csv_path)
    curves = {}
    for label, sigma, mean, std in rows:
        curves.setdefault(label, []).append((float(sigma), float(mean), float(std)))
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for label, pts in curves.items():
        pts.sort()
        xs = [p[0] for p in pts]
        ms = [p[1] for p in pts]
        es = [p[2] for p in pts]
        style = CURVE_STYLES.get(label, {})
        ax.errorbar(xs, ms, yerr=es, label=label, capsize=2, **style)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("noise level")
    ax.set_ylabel("relative error")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_bias(csv_path: str, out_path: str):
    header, rows = _read_csv(csv_path)
    sigma = np.array([float(r[0]) for r in rows])
    order = np.argsort(sigma)
    one_sided = np.array([float(r[1]) for r in rows])[order]
    full = np.array([float(r[2]) for r in rows])[order]
    sigma = sigma[order]
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    ax.plot(sigma, one_sided, "o-", label="one-sided Hausdorff")
    ax.plot(sigma, full, "s-", label="Hausdorff")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("noise level")
    ax.set_ylabel("orbit distance")
    ax.legend()
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_orbit(csv_path: str, out_path: str):
    header, rows = _read_csv(csv_path)
    ycols = [i for i, name in enumerate(header) if name.startswith("y_")]
    pts = np.array([[float(r[i]) for i in ycols] for r in rows])
    # drop coordinates that are constant along the orbit before plotting
    live = np.where(pts.std(axis=0) > 1e-12 * (1 + np.abs(pts).max()))[0]
    fig = plt.figure(figsize=(5.6, 4.6))
    if len(live) >= 3:
        ax = fig.add_subplot(projection="3d")
        ax.scatter(pts[:, live[0]], pts[:, live[1]], pts[:, live[2]],
                   c=np.arange(len(pts)), cmap="viridis", s=4)
        ax.set_zlabel(header[ycols[live[2]]])
    else:
        ax = fig.add_subplot()
        a = live[0] if len(live) > 0 else 0
        b = live[1] if len(live) > 1 else min(1, pts.shape[1] - 1)
        ax.scatter(pts[:, a], pts[:, b], c=np.arange(len(pts)), cmap="viridis", s=4)
    ax.set_xlabel(header[ycols[live[0] if len(live) else 0]])
    ax.set_ylabel(header[ycols[live[1] if len(live) > 1 else 0]])
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
