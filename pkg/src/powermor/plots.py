"""Report figures rendered to PNG files.

Kept separate from the numeric code: nothing here feeds back into any
computation, and the CLI can skip it wholesale with --no-plots.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .lti import Trajectory
from .metrics import SweepResult

_DPI = 130


def fig_rotor_angles(traj: Trajectory, ng: int, path, title: str = "Rotor angles") -> None:
    """All machine angles over time, relative to machine 1."""
    t = traj.times
    delta = traj.states[:, :ng]
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for k in range(ng):
        ax.plot(t, np.degrees(delta[:, k] - delta[:, 0]), lw=0.9, label=f"machine {k + 1}")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("angle relative to machine 1 (deg)")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if ng <= 12:
        ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def fig_traj_overlay(trajs, labels, output: int, path, ylabel: str = "output") -> None:
    """One output channel from several trajectories on a shared axis."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for traj, label in zip(trajs, labels):
        ax.plot(traj.times, traj.outputs[:, output], lw=1.0, label=label)
    ax.set_xlabel("time (s)")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def fig_sweep(result: SweepResult, path) -> None:
    """Magnitude and phase of the full and reduced channel, log-frequency."""
    fig, (ax_m, ax_p) = plt.subplots(2, 1, figsize=(7.0, 5.6), sharex=True)
    ax_m.semilogx(result.omega, result.full.magnitude_db, lw=1.2, label="full")
    ax_m.semilogx(result.omega, result.reduced.magnitude_db, lw=1.2, ls="--", label="reduced")
    ax_m.set_ylabel("magnitude (dB)")
    ax_m.grid(True, which="both", alpha=0.3)
    ax_m.legend(fontsize=8)
    ax_p.semilogx(result.omega, np.degrees(result.full.phase_rad), lw=1.2, label="full")
    ax_p.semilogx(result.omega, np.degrees(result.reduced.phase_rad), lw=1.2, ls="--", label="reduced")
    ax_p.set_xlabel("frequency (rad/s)")
    ax_p.set_ylabel("phase (deg)")
    ax_p.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def fig_mode_map(full_eigs, reduced_eigs, path) -> None:
    """Eigenvalues of both models in the complex plane."""
    full_eigs = np.asarray(full_eigs, dtype=complex)
    reduced_eigs = np.asarray(reduced_eigs, dtype=complex)
    fig, ax = plt.subplots(figsize=(5.6, 4.6))
    ax.scatter(full_eigs.real, full_eigs.imag, s=36, marker="x", label="full", color="tab:blue")
    ax.scatter(
        reduced_eigs.real,
        reduced_eigs.imag,
        s=52,
        marker="o",
        facecolors="none",
        edgecolors="tab:red",
        label="reduced",
    )
    ax.axvline(0.0, color="k", lw=0.6, alpha=0.5)
    ax.axhline(0.0, color="k", lw=0.6, alpha=0.5)
    ax.set_xlabel("Re (1/s)")
    ax.set_ylabel("Im (rad/s)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
