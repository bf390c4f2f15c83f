"""Comparing a reduced model against the full one.

Covers mode pairing and per-mode frequency error, magnitude/phase sweeps
of one transfer-function entry over a frequency band, and time-domain
trajectory error.  All relative errors follow the convention
(full - reduced) / full * 100.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .errors import EvalAtPole, GridMismatch, ZeroReference
from .lti import (
    StateSpaceModel,
    Trajectory,
    _freeze,
    _grouped_order,
    eig,
    format_number,
    transfer_eval,
)

SWEEP_LO = 1e-2
SWEEP_HI = 1e2
SWEEP_POINTS = 200


def frequency_error_pct(f_full: float, f_reduced: float) -> float:
    """Percentage frequency error, (full - reduced) / full * 100.

    Both zero is an exact match (0.0).  A zero reference with a nonzero
    reduced value has no well-defined relative error and raises
    :class:`ZeroReference`.
    """
    if f_full == 0.0:
        if f_reduced == 0.0:
            return 0.0
        raise ZeroReference("relative error against a zero reference frequency")
    return (f_full - f_reduced) / f_full * 100.0


ModePair = namedtuple(
    "ModePair", ["full_eigenvalue", "reduced_eigenvalue", "distance", "frequency_error_pct"]
)


@dataclass(frozen=True)
class ModePairing:
    """Greedy match of reduced modes to full modes.

    One :class:`ModePair` per reduced representative (imag >= 0); full
    representatives nobody claimed are listed in ``unmatched_full``.  The
    pair's frequency error is NaN when undefined (zero full frequency,
    nonzero reduced).
    """

    pairs: tuple
    unmatched_full: tuple


def _representatives(eigenvalues: np.ndarray) -> list:
    """Indices of modes to report: drop the negative-Im half of each pair."""
    return [i for i, lam in enumerate(eigenvalues) if lam.imag >= -1e-12]


def pair_modes(full_eigs, reduced_eigs) -> ModePairing:
    """Pair each reduced mode with its nearest unclaimed full mode.

    Works on representatives (imag >= 0) only.  Reduced modes are processed
    in ascending |Re| order (slowest first) and each claims the closest
    remaining full mode in the complex plane, which makes the pairing
    deterministic and independent of input permutations.
    """
    full_eigs = np.asarray(full_eigs, dtype=complex)
    reduced_eigs = np.asarray(reduced_eigs, dtype=complex)
    full_rep = _representatives(full_eigs)
    red_rep = _representatives(reduced_eigs)
    red_order = sorted(
        red_rep, key=lambda i: (abs(reduced_eigs[i].real), abs(reduced_eigs[i]), reduced_eigs[i].imag)
    )
    available = sorted(
        full_rep, key=lambda j: (abs(full_eigs[j].real), abs(full_eigs[j]), full_eigs[j].imag)
    )
    pairs = []
    for i in red_order:
        if not available:
            break
        lam_r = reduced_eigs[i]
        # min keeps the first of tied candidates, and available is sorted,
        # so ties resolve deterministically
        j = min(available, key=lambda j: abs(full_eigs[j] - lam_r))
        available.remove(j)
        lam_f = full_eigs[j]
        f_full = abs(lam_f.imag) / (2.0 * np.pi)
        f_red = abs(lam_r.imag) / (2.0 * np.pi)
        try:
            err = frequency_error_pct(f_full, f_red)
        except ZeroReference:
            err = float("nan")
        pairs.append(
            ModePair(
                full_eigenvalue=complex(lam_f),
                reduced_eigenvalue=complex(lam_r),
                distance=float(abs(lam_f - lam_r)),
                frequency_error_pct=err,
            )
        )
    return ModePairing(pairs=tuple(pairs), unmatched_full=tuple(complex(full_eigs[j]) for j in available))


def mode_error_table(full: StateSpaceModel, reduced: StateSpaceModel) -> list:
    """Rows of (f_full_hz, f_red_hz, re_full, re_red, freq_err_pct).

    Sorted ascending by the full mode's |Re|.  Where the relative error is
    undefined (zero reference, nonzero reduced) the error column is NaN
    rather than an exception, so a table can always be produced.
    """
    pairing = pair_modes(eig(full).eigenvalues, eig(reduced).eigenvalues)
    rows = []
    for pair in pairing.pairs:
        lam_f = pair.full_eigenvalue
        lam_r = pair.reduced_eigenvalue
        rows.append(
            (
                abs(lam_f.imag) / (2.0 * np.pi),
                abs(lam_r.imag) / (2.0 * np.pi),
                lam_f.real,
                lam_r.real,
                pair.frequency_error_pct,
            )
        )
    if rows:
        # |Re| groups first; within a group of numerically tied decay rates
        # order by frequency so jitter at machine precision cannot shuffle rows.
        scale = max(1.0, max(abs(r[2]) for r in rows))
        order = _grouped_order(
            [abs(r[2]) for r in rows],
            [(r[0], r[1]) for r in rows],
            tol=1e-9 * scale,
        )
        rows = [rows[i] for i in order]
    return rows


def write_mode_table(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("f_full_hz,f_red_hz,re_full,re_red,freq_err_pct\n")
        for row in rows:
            fh.write(",".join(format_number(v) for v in row) + "\n")


@dataclass(frozen=True)
class Sweep:
    """Frequency response of one transfer entry over a log-spaced band."""

    omega: np.ndarray
    magnitude_db: np.ndarray
    phase_rad: np.ndarray
    pole_indices: tuple


def freq_sweep(
    model: StateSpaceModel,
    entry: tuple = (0, 0),
    w_lo: float = SWEEP_LO,
    w_hi: float = SWEEP_HI,
    points: int = SWEEP_POINTS,
) -> Sweep:
    """Magnitude (dB) and phase of G[entry](j omega) on a log grid.

    ``entry`` is (output_index, input_index), matching matrix indexing of
    G.  Grid points that land numerically on a pole are flagged in
    ``pole_indices`` and carry NaN instead of aborting the sweep.
    """
    ch_out, ch_in = entry
    if not (0 <= ch_out < model.p and 0 <= ch_in < model.m):
        raise ValueError(f"entry {entry!r} out of range for a {model.p}x{model.m} transfer matrix")
    if not (0 < w_lo < w_hi) or points < 2:
        raise ValueError("need 0 < w_lo < w_hi and at least 2 points")
    omega = np.geomspace(w_lo, w_hi, points)
    mag = np.empty(points)
    phase = np.empty(points)
    poles = []
    for k, w in enumerate(omega):
        try:
            g = transfer_eval(model, 1j * w)[ch_out, ch_in]
        except EvalAtPole:
            poles.append(k)
            mag[k] = np.nan
            phase[k] = np.nan
            continue
        a = abs(g)
        mag[k] = 20.0 * np.log10(a) if a > 0 else -np.inf
        phase[k] = np.angle(g)
    return Sweep(
        omega=_freeze(omega),
        magnitude_db=_freeze(mag),
        phase_rad=_freeze(phase),
        pole_indices=tuple(poles),
    )


@dataclass(frozen=True)
class SweepResult:
    """Full and reduced sweeps on one shared grid, plus the dB gap."""

    omega: np.ndarray
    full: Sweep
    reduced: Sweep
    magnitude_gap_db: np.ndarray

    @property
    def max_gap_db(self) -> float:
        gap = self.magnitude_gap_db
        finite = gap[np.isfinite(gap)]
        return float(np.max(np.abs(finite))) if finite.size else float("nan")


def sweep_pair(
    full: StateSpaceModel,
    reduced: StateSpaceModel,
    entry: tuple = (0, 0),
    entry_reduced: tuple | None = None,
    w_lo: float = SWEEP_LO,
    w_hi: float = SWEEP_HI,
    points: int = SWEEP_POINTS,
) -> SweepResult:
    """Sweep the same entry of both models on one grid.

    ``entry_reduced`` overrides the entry used on the reduced model, for
    reductions that renumber inputs (single-input reduced systems).
    """
    if entry_reduced is None:
        entry_reduced = entry
    sf = freq_sweep(full, entry, w_lo, w_hi, points)
    sr = freq_sweep(reduced, entry_reduced, w_lo, w_hi, points)
    gap = sf.magnitude_db - sr.magnitude_db
    return SweepResult(omega=sf.omega, full=sf, reduced=sr, magnitude_gap_db=_freeze(gap))


def write_sweep(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("omega_rad_s,mag_full_db,mag_red_db,phase_full,phase_red\n")
        for k in range(len(result.omega)):
            fh.write(
                ",".join(
                    format_number(v)
                    for v in (
                        result.omega[k],
                        result.full.magnitude_db[k],
                        result.reduced.magnitude_db[k],
                        result.full.phase_rad[k],
                        result.reduced.phase_rad[k],
                    )
                )
                + "\n"
            )


@dataclass(frozen=True)
class TrajectoryError:
    rms: float
    max_abs: float
    time_of_max: float


def traj_error(a: Trajectory, b: Trajectory, channel: int = 0) -> TrajectoryError:
    """RMS and peak deviation of one output channel between two trajectories.

    The trajectories must share the time grid exactly; anything else raises
    :class:`GridMismatch` rather than silently resampling.
    """
    if (
        a.n_samples != b.n_samples
        or abs(a.t0 - b.t0) > 1e-12
        or abs(a.dt - b.dt) > 1e-12 * max(1.0, a.dt)
    ):
        raise GridMismatch(
            "time grids differ",
            a=(a.t0, a.dt, a.n_samples),
            b=(b.t0, b.dt, b.n_samples),
        )
    if not (0 <= channel < a.outputs.shape[1] and channel < b.outputs.shape[1]):
        raise GridMismatch(f"output channel {channel} missing from one trajectory")
    diff = a.outputs[:, channel] - b.outputs[:, channel]
    k = int(np.argmax(np.abs(diff)))
    return TrajectoryError(
        rms=float(np.sqrt(np.mean(diff**2))),
        max_abs=float(abs(diff[k])),
        time_of_max=float(a.t0 + k * a.dt),
    )
