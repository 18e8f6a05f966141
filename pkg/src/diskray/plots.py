"""Figure rendering for the report path.

All figures go straight to PNG files through the Agg backend so the
command line works headless.  Nothing here feeds back into the numerics;
plots are a convenience layer over the CSV/JSON artifacts.
"""

from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import PhasePoint, fan_entry, trace_geodesic  # noqa: E402

_DPI = 130


def _finish(fig, path: str) -> str:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def save_fan(path: str, data, title: str = "") -> str:
    """Heat map of fan-grid samples over (beta, alpha)."""
    v = data.values
    if np.iscomplexobj(v):
        v = np.abs(v)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    im = ax.pcolormesh(
        data.beta, data.alpha, v.T, shading="nearest", cmap="RdBu_r"
    )
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("beta")
    ax.set_ylabel("alpha")
    if title:
        ax.set_title(title)
    return _finish(fig, path)


def save_tensor(path: str, u, grid, title: str = "") -> str:
    """One panel per tensor component, masked to the disk."""
    n = u.comps.shape[-1]
    fig, axes = plt.subplots(1, n, figsize=(4.4 * n, 4.0), squeeze=False)
    labels = {0: ["value"], 1: ["c1", "c2"], 2: ["c11", "c12", "c22"]}[u.rank]
    for k, (ax, lab) in enumerate(zip(axes[0], labels)):
        z = np.where(grid.mask, np.real(u.comps[:, :, k]), np.nan)
        im = ax.pcolormesh(grid.x, grid.x, z.T, shading="nearest", cmap="RdBu_r")
        fig.colorbar(im, ax=ax, shrink=0.85)
        ax.set_aspect("equal")
        ax.add_patch(plt.Circle((0.0, 0.0), 1.0, fill=False, lw=0.8, color="k"))
        ax.set_title(lab)
    if title:
        fig.suptitle(title)
    return _finish(fig, path)


def save_convergence(path: str, history, title: str = "") -> str:
    """Relative residual per iteration on a log scale."""
    fig, ax = plt.subplots(figsize=(5.6, 3.8))
    ax.semilogy(range(1, len(history) + 1), history, marker=".", lw=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel("relative residual")
    ax.grid(True, which="both", alpha=0.3)
    if title:
        ax.set_title(title)
    return _finish(fig, path)


def save_degree_energy(path: str, energies: dict, title: str = "") -> str:
    """Grouped bars of fiber-degree energy, one group per labeled field."""
    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    n = len(energies)
    width = 0.8 / max(n, 1)
    for i, (label, en) in enumerate(energies.items()):
        ks = np.arange(len(en))
        ax.bar(ks + (i - 0.5 * (n - 1)) * width, en, width=width, label=label)
    ax.set_yscale("log")
    ax.set_xlabel("fiber degree")
    ax.set_ylabel("energy")
    ax.legend()
    if title:
        ax.set_title(title)
    return _finish(fig, path)


def save_annulus(path: str, ext, title: str = "") -> str:
    """Potential of a rim extension on its polar grid."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    im = ax.pcolormesh(ext.phi, ext.r, ext.w, shading="nearest", cmap="RdBu_r")
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("angle")
    ax.set_ylabel("radius")
    if title:
        ax.set_title(title)
    return _finish(fig, path)


def save_rays(path: str, metric, n: int = 14, title: str = "") -> str:
    """A spread of traced geodesics inside the unit circle."""
    fig, ax = plt.subplots(figsize=(5.2, 5.2))
    t = np.linspace(0.0, 2.0 * math.pi, 256)
    ax.plot(np.cos(t), np.sin(t), "k", lw=1.0)
    rng = np.random.default_rng(12345)
    betas = rng.uniform(0.0, 2.0 * math.pi, n)
    alphas = rng.uniform(-1.35, 1.35, n)
    for b, a in zip(betas, alphas):
        x1, x2, th = fan_entry(b, a)
        path_obj = trace_geodesic(metric, PhasePoint(float(x1), float(x2), float(th)))
        ax.plot(path_obj.xs1, path_obj.xs2, lw=0.9)
    ax.set_aspect("equal")
    ax.set_xlim(-1.05, 1.05)
    ax.set_ylim(-1.05, 1.05)
    if title:
        ax.set_title(title)
    return _finish(fig, path)
