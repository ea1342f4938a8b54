"""PNG figures for simulation and residual reports (Agg backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_trajectory", "plot_residual_grid"]


def plot_trajectory(traj, path, tau: float = 1.0, length: float = 1.0, title: str = ""):
    """Ball position, servo angle and ``H_hat`` against time.

    ``tau`` and ``length`` convert model time and position to seconds and
    metres.
    """
    t = traj.t * tau
    fig, axes = plt.subplots(3, 1, figsize=(7, 7), sharex=True)
    axes[0].plot(t, traj.q[:, 0] * length, lw=1.2)
    axes[0].set_ylabel("s [m]" if length != 1.0 else "s")
    axes[1].plot(t, traj.q[:, 1], lw=1.2, color="C1")
    axes[1].set_ylabel("theta [rad]")
    axes[2].plot(t, traj.H, lw=1.2, color="C2")
    axes[2].set_ylabel("H_hat")
    axes[2].set_xlabel("t [s]" if tau != 1.0 else "t")
    if traj.saturated.any():
        for ax in axes:
            ax.fill_between(t, 0, 1, where=traj.saturated, transform=ax.get_xaxis_transform(),
                            color="0.85", lw=0, label="saturated")
        axes[0].legend(loc="best", fontsize=8)
    for ax in axes:
        ax.grid(alpha=0.3)
    fig.suptitle(title or f"status: {traj.status}")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_residual_grid(s_vals, th_vals, values, path, label: str = "max residual"):
    """Heat map of ``log10`` residual norms on an ``(s, theta)`` grid."""
    v = np.asarray(values, dtype=float)
    with np.errstate(divide="ignore"):
        z = np.log10(np.where(v > 0, v, np.nan))
    fig, ax = plt.subplots(figsize=(6, 4.5))
    mesh = ax.pcolormesh(s_vals, th_vals, z.T, shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label=f"log10 {label}")
    ax.set_xlabel("s")
    ax.set_ylabel("theta")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
