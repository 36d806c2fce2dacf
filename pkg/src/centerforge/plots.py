"""Figure rendering for the report paths (headless Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "plot_extend_decay",
    "plot_solve_convergence",
    "plot_section_surface",
    "plot_bifurcation",
    "plot_surgery_spectra",
    "plot_verify_margins",
    "plot_clarke_hist",
]

CLASS_COLORS = {
    "CONVERGED": "tab:green",
    "PERIOD2": "tab:orange",
    "ESCAPED": "tab:red",
    "IRREGULAR": "tab:purple",
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(Path(path), dpi=130)
    plt.close(fig)


def plot_extend_decay(ladder: list[dict], path) -> None:
    rs = [row["r"] for row in ladder]
    c0 = [row["c0"] for row in ladder]
    c1 = [row["c1"] for row in ladder]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    if max(c0, default=0.0) > 0:
        ax.loglog(rs, c0, "o-", label="C0 distance to linearization")
    if max(c1, default=0.0) > 0:
        ax.loglog(rs, c1, "s-", label="C1 distance to linearization")
    ref = np.asarray(rs)
    if max(c0, default=0.0) > 0:
        ax.loglog(ref, c0[0] * (ref / ref[0]) ** 2, "k:", lw=0.8, label="O(r^2)")
        ax.loglog(ref, c1[0] * (ref / ref[0]), "k--", lw=0.8, label="O(r)")
    ax.set_xlabel("extension radius r")
    ax.set_ylabel("distance")
    ax.legend(fontsize=8)
    ax.set_title("cutoff extension vs linearization")
    _save(fig, path)


def plot_solve_convergence(residuals, rate: float, path) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    sweeps = np.arange(1, len(residuals) + 1)
    ax.semilogy(sweeps, residuals, "o-", ms=3, label="sweep residual")
    if len(residuals) >= 2 and residuals[1] > 0:
        ax.semilogy(sweeps, residuals[1] * rate ** (sweeps - 2.0), "k--", lw=0.8,
                    label=f"rate {rate:.3f}")
    ax.set_xlabel("sweep")
    ax.set_ylabel("sup-norm residual")
    ax.legend(fontsize=8)
    ax.set_title("fixed-section iteration")
    _save(fig, path)


def plot_section_surface(section, path) -> None:
    vals = section.values
    n_t = vals.shape[0]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    if section.n_cu >= 2:
        sl = vals[n_t // 2, :, :, 0]
        ext = [section.fibre_axes[0][0], section.fibre_axes[0][-1],
               section.fibre_axes[1][0], section.fibre_axes[1][-1]]
        im = axes[0].imshow(sl.T, origin="lower", extent=ext, aspect="auto", cmap="viridis")
        fig.colorbar(im, ax=axes[0], shrink=0.85)
        axes[0].set_xlabel("u")
        axes[0].set_ylabel("c")
        axes[0].set_title("section at mid base node")
        mid = [len(ax_) // 2 for ax_ in section.fibre_axes]
        trace = vals[:, :, mid[1], 0]
        im2 = axes[1].imshow(trace.T, origin="lower", aspect="auto", cmap="magma",
                             extent=[section.theta_nodes[0], section.theta_nodes[-1],
                                     section.fibre_axes[0][0], section.fibre_axes[0][-1]])
        fig.colorbar(im2, ax=axes[1], shrink=0.85)
        axes[1].set_xlabel("base parameter")
        axes[1].set_ylabel("u")
        axes[1].set_title("section at c = 0")
    else:
        axes[0].plot(section.fibre_axes[0], vals[n_t // 2, :, 0])
        axes[0].set_xlabel("fibre")
        axes[1].plot(section.theta_nodes, vals[:, len(section.fibre_axes[0]) // 2, 0])
        axes[1].set_xlabel("base parameter")
    _save(fig, path)


def plot_bifurcation(rows, path) -> None:
    fig, ax = plt.subplots(figsize=(6.5, 4))
    for row in rows:
        color = CLASS_COLORS.get(row.label, "tab:gray")
        amp = row.amplitude if np.isfinite(row.amplitude) else np.nan
        ax.plot([row.eta], [amp], "o", ms=4, color=color)
    if rows:
        ax.axvline(rows[0].eta_critical, color="k", ls=":", lw=0.9,
                   label=f"2/lambda1 = {rows[0].eta_critical:.4g}")
    handles = [plt.Line2D([0], [0], marker="o", ls="", color=c, label=l) for l, c in CLASS_COLORS.items()]
    handles.append(plt.Line2D([0], [0], ls=":", color="k", label="2/lambda1"))
    ax.legend(handles=handles, fontsize=7)
    ax.set_xlabel("step size eta")
    ax.set_ylabel("tail amplitude along top direction")
    ax.set_title("attractor classes vs step size")
    _save(fig, path)


def plot_surgery_spectra(report: dict, path) -> None:
    spectra = report["items"]["spectral_bounds"]["spectra"]
    labels = list(spectra)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for i, lab in enumerate(labels):
        lo, hi = spectra[lab]["min"], spectra[lab]["max"]
        ax.plot([i, i], [lo, hi], "o-", lw=2)
    ax.axhline(1.0, color="k", ls=":", lw=0.8)
    ax.axhline(-1.0, color="k", ls=":", lw=0.8)
    kappa = report["items"]["spectral_bounds"]["kappa"]
    ax.axhspan(-kappa, kappa, color="tab:blue", alpha=0.12, label=f"|spec| <= {kappa}")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels)
    ax.set_ylabel("eigenvalue range along the base")
    ax.set_title("patched-map normal spectra")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_verify_margins(results: list[dict], path) -> None:
    fig, ax = plt.subplots(figsize=(6.5, 0.45 * max(len(results), 4) + 1.2))
    names = [r["name"] for r in results]
    ok = [r["pass"] for r in results]
    ax.barh(range(len(names)), [1.0] * len(names),
            color=["tab:green" if o else "tab:red" for o in ok])
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names, fontsize=7)
    ax.set_xticks([])
    ax.set_title("invariant suite results")
    _save(fig, path)


def plot_clarke_hist(sigmas, path) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.hist(sigmas, bins=32, color="tab:blue", alpha=0.8)
    ax.set_xlabel("sampled |J|_op")
    ax.set_ylabel("count")
    ax.set_title("generalized-Jacobian sample spectrum")
    _save(fig, path)
