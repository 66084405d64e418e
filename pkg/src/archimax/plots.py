"""Figure rendering for the CLI report paths.

Every plot lands next to its delimited output as a PNG; nothing here is
interactive (Agg backend).
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_chi_curve(df, pair_label, out_path, true_lambda=None):
    """Pre-asymptotic tail dependence curve with its pointwise 95% band."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.plot(df["q"], df["chi"], color="black", lw=1.4, label=r"$\hat\chi(q)$")
    ax.plot(df["q"], df["lo"], color="black", lw=0.8, ls=":")
    ax.plot(df["q"], df["hi"], color="black", lw=0.8, ls=":")
    if true_lambda is not None:
        ax.axhline(true_lambda, color="crimson", lw=1.2,
                   label=rf"$\lambda = {true_lambda:.3f}$")
    ax.set_xlabel("q")
    ax.set_ylabel(r"$\chi(q)$")
    ax.set_ylim(-0.05, 1.05)
    ax.set_title(f"pair {pair_label}")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_matrix(mat, out_path, title, labels=None, fmt="{:.2f}"):
    """Annotated heatmap of a pairwise-estimate matrix (NaN cells blank)."""
    mat = np.asarray(mat, dtype=float)
    d = mat.shape[0]
    fig, ax = plt.subplots(figsize=(0.55 * d + 2.2, 0.55 * d + 1.8))
    masked = np.ma.masked_invalid(mat)
    im = ax.imshow(masked, cmap="viridis")
    fig.colorbar(im, ax=ax, shrink=0.85)
    ticks = labels or [str(i + 1) for i in range(d)]
    ax.set_xticks(range(d), ticks)
    ax.set_yticks(range(d), ticks)
    for i in range(d):
        for j in range(d):
            if np.isfinite(mat[i, j]):
                ax.text(j, i, fmt.format(mat[i, j]), ha="center", va="center",
                        fontsize=7, color="white")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_pickands_curves(curves, out_path, title):
    """Bivariate Pickands estimates A(w, 1-w); one line per pair."""
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    for label, (w, a) in sorted(curves.items()):
        ax.plot(w, a, lw=1.2, label=label)
    w = np.linspace(0.0, 1.0, 101)
    ax.plot(w, np.maximum(w, 1.0 - w), color="gray", lw=0.8, ls="--")
    ax.plot([0.0, 1.0], [1.0, 1.0], color="gray", lw=0.8, ls="--")
    ax.set_xlabel("w")
    ax.set_ylabel("A(w, 1-w)")
    ax.set_ylim(0.48, 1.02)
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
