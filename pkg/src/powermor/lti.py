"""Core linear time-invariant state-space types and numerics.

The central object is :class:`StateSpaceModel`, a real system

    dx/dt = A x + B u,    y = C x + D u.

On top of it this module provides a deterministic eigendecomposition
(:func:`eig`), pointwise transfer-function evaluation (:func:`transfer_eval`),
fixed-step RK4 simulation (:func:`simulate_linear`), an oscillatory-mode
report (:func:`mode_report`), and JSON/CSV serialization helpers.
"""

from __future__ import annotations

import json
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .errors import (
    EigNoConvergence,
    EvalAtPole,
    ParseError,
    SimulationDiverged,
    ValidationError,
)

# Relative condition floor for shifted solves (sI - A); beyond it the solve
# result cannot be trusted and the operation errors instead of returning noise.
COND_LIMIT = 1e13

# State-norm threshold treated as numerical blow-up during integration.
DIVERGENCE_NORM = 1e12


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _grouped_order(primary, secondary, tol: float) -> list:
    """Indices sorted by primary key, with near-ties resolved by secondary key.

    Runs of primaries whose consecutive gaps are <= tol count as tied and are
    re-sorted by the secondary key alone.  Plain lexicographic sorting cannot
    do this: floating-point keys that are mathematically equal differ by
    roundoff, which would silently disable any tie-break.
    """
    n = len(primary)
    idx = sorted(range(n), key=lambda i: (primary[i], secondary[i]))
    out = []
    start = 0
    for k in range(1, n + 1):
        if k == n or primary[idx[k]] - primary[idx[k - 1]] > tol:
            out.extend(sorted(idx[start:k], key=lambda i: secondary[i]))
            start = k
    return out


def _as_real_matrix(value, name: str) -> np.ndarray:
    if np.iscomplexobj(value):
        raise ValidationError(f"{name} must be real, got complex entries", field=name)
    arr = np.array(value, dtype=float)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be a 2-D real matrix", field=name)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries", field=name)
    return _freeze(arr)


@dataclass(frozen=True)
class StateSpaceModel:
    """Immutable real state-space system (A, B, C, D).

    Arrays are copied on construction and marked read-only, so instances can
    be shared freely.  Optional state/input/output names are carried along
    for reporting; they never influence numerics.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray | None = None
    state_names: tuple[str, ...] | None = None
    input_names: tuple[str, ...] | None = None
    output_names: tuple[str, ...] | None = None

    def __post_init__(self):
        A = _as_real_matrix(self.A, "A")
        B = _as_real_matrix(self.B, "B")
        C = _as_real_matrix(self.C, "C")
        if A.shape[0] != A.shape[1]:
            raise ValidationError("A must be square", field="A")
        n = A.shape[0]
        if B.shape[0] != n:
            raise ValidationError("B row count must match the state dimension", field="B")
        if C.shape[1] != n:
            raise ValidationError("C column count must match the state dimension", field="C")
        D = self.D
        if D is None:
            D = np.zeros((C.shape[0], B.shape[1]))
        D = _as_real_matrix(D, "D")
        if D.shape != (C.shape[0], B.shape[1]):
            raise ValidationError("D must be p-by-m", field="D")
        for attr, value in (("A", A), ("B", B), ("C", C), ("D", D)):
            object.__setattr__(self, attr, value)
        for attr, dim in (
            ("state_names", n),
            ("input_names", B.shape[1]),
            ("output_names", C.shape[0]),
        ):
            names = getattr(self, attr)
            if names is not None:
                names = tuple(str(s) for s in names)
                if len(names) != dim:
                    raise ValidationError(f"{attr} length must be {dim}", field=attr)
                object.__setattr__(self, attr, names)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class Spectrum:
    """Eigendecomposition of a real matrix in the package's canonical order.

    Eigenvalues are sorted by ascending |Re|, ties by ascending Im, so that
    the same matrix always produces the same ordering.  For a real matrix the
    list is closed under conjugation.
    """

    eigenvalues: np.ndarray
    right_eigenvectors: np.ndarray
    basis_condition: float

    def __post_init__(self):
        w = np.array(self.eigenvalues, dtype=complex)
        v = np.array(self.right_eigenvectors, dtype=complex)
        object.__setattr__(self, "eigenvalues", _freeze(w))
        object.__setattr__(self, "right_eigenvectors", _freeze(v))


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled simulation result: states and outputs vs time."""

    t0: float
    dt: float
    states: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        if self.dt <= 0:
            raise ValidationError("dt must be positive", field="dt")
        x = np.array(self.states, dtype=float)
        y = np.array(self.outputs, dtype=float)
        if x.ndim != 2 or y.ndim != 2:
            raise ValidationError("states and outputs must be 2-D sample arrays")
        if x.shape[0] != y.shape[0]:
            raise ValidationError("states and outputs must have one row per sample")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValidationError("trajectory contains non-finite samples")
        object.__setattr__(self, "states", _freeze(x))
        object.__setattr__(self, "outputs", _freeze(y))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.states.shape[0])

    @property
    def n_samples(self) -> int:
        return self.states.shape[0]


ModeRow = namedtuple("ModeRow", ["eigenvalue", "frequency_hz", "damping_ratio", "real_part"])

StabilityReport = namedtuple("StabilityReport", ["stable", "max_real_part"])


@dataclass(frozen=True)
class ModeTable:
    """One row per oscillatory pair (positive-Im representative) or real mode."""

    rows: tuple

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)


def eig(model_or_matrix) -> Spectrum:
    """Eigendecomposition with the canonical deterministic ordering.

    Accepts a :class:`StateSpaceModel` or a square real matrix.  Column i of
    the returned eigenvector matrix has unit norm and satisfies
    ``A v_i = lambda_i v_i`` to a tight residual.
    """
    A = model_or_matrix.A if isinstance(model_or_matrix, StateSpaceModel) else np.asarray(model_or_matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError("eig needs a square matrix")
    try:
        w, v = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise EigNoConvergence(str(exc)) from exc
    order = np.lexsort((w.imag, np.abs(w.real)))
    w = w[order]
    v = v[:, order]
    # Residual guard: ||A v - lambda v|| <= 1e-10 ||A|| per (unit-norm) column.
    anorm = np.linalg.norm(A, 2) if A.size else 0.0
    res = np.linalg.norm(A @ v - v * w[None, :], axis=0)
    if np.any(res > 1e-10 * max(anorm, 1e-300)):
        raise EigNoConvergence("eigenpair residual above tolerance", max_residual=float(res.max()))
    cond = float(np.linalg.cond(v))
    return Spectrum(eigenvalues=w, right_eigenvectors=v, basis_condition=cond)


def _checked_solve(M: np.ndarray, rhs: np.ndarray, context: str):
    """LU solve of M x = rhs with a condition guard and a residual check.

    Raises :class:`EvalAtPole` when the 1-norm condition estimate exceeds
    COND_LIMIT (the matrix is a shifted system sI - A sitting numerically on
    a pole) or when even one step of iterative refinement cannot reach a
    1e-10 relative residual.
    """
    M = np.ascontiguousarray(M, dtype=complex)
    lu, piv = scipy.linalg.lu_factor(M)
    anorm = np.linalg.norm(M, 1)
    rcond, info = lapack.zgecon(lu, anorm)
    if info != 0 or not np.isfinite(rcond) or rcond < 1.0 / COND_LIMIT:
        cond = float(1.0 / rcond) if rcond > 0 else np.inf
        raise EvalAtPole(f"{context}: shifted matrix numerically singular", condition=cond)
    x = scipy.linalg.lu_solve((lu, piv), rhs)
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm > 0:
        resid = np.linalg.norm(M @ x - rhs) / rhs_norm
        if resid > 1e-10:
            x = x + scipy.linalg.lu_solve((lu, piv), rhs - M @ x)
            resid = np.linalg.norm(M @ x - rhs) / rhs_norm
            if resid > 1e-10:
                raise EvalAtPole(f"{context}: solve residual {resid:.2e} above 1e-10", condition=float(1.0 / rcond))
    return x


def transfer_eval(model: StateSpaceModel, s: complex) -> np.ndarray:
    """Evaluate G(s) = C (sI - A)^{-1} B + D at one complex point."""
    M = s * np.eye(model.n) - model.A
    X = _checked_solve(M, model.B.astype(complex), "transfer_eval")
    return model.C @ X + model.D


def simulate_linear(
    model: StateSpaceModel,
    input_samples: np.ndarray | None,
    x0: np.ndarray | None = None,
    dt: float = 0.005,
    horizon: float | None = None,
) -> Trajectory:
    """Integrate the model with classical fixed-step RK4.

    ``input_samples`` holds u at the grid points t0 + k dt (shape
    (steps+1, m)); ``None`` means zero input.  Stage values at half steps use
    the average of the bracketing samples, which keeps full fourth-order
    accuracy for the autonomous part.  A state norm above ``DIVERGENCE_NORM``
    aborts with :class:`SimulationDiverged` carrying the blow-up time.
    """
    if dt <= 0:
        raise ValidationError("dt must be positive", field="dt")
    if horizon is None:
        if input_samples is None:
            raise ValidationError("horizon is required when input_samples is None", field="horizon")
        steps = len(np.atleast_2d(input_samples)) - 1
    else:
        if horizon <= 0:
            raise ValidationError("horizon must be positive", field="horizon")
        steps = int(round(horizon / dt))
    if input_samples is None:
        u = np.zeros((steps + 1, model.m))
    else:
        u = np.atleast_2d(np.asarray(input_samples, dtype=float))
        if u.shape[1] != model.m:
            raise ValidationError("input_samples must have m columns", field="input_samples")
        if u.shape[0] < steps + 1:
            raise ValidationError(
                f"input_samples covers {u.shape[0] - 1} steps, horizon needs {steps}",
                field="input_samples",
            )
    x = np.zeros(model.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    if x.shape != (model.n,):
        raise ValidationError("x0 must be an n-vector", field="x0")

    A, B = model.A, model.B
    states = np.empty((steps + 1, model.n))
    states[0] = x
    h = dt
    for k in range(steps):
        uk = u[k]
        uk1 = u[k + 1]
        uh = 0.5 * (uk + uk1)
        k1 = A @ x + B @ uk
        k2 = A @ (x + 0.5 * h * k1) + B @ uh
        k3 = A @ (x + 0.5 * h * k2) + B @ uh
        k4 = A @ (x + h * k3) + B @ uk1
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_NORM:
            raise SimulationDiverged(f"state norm blew up at t = {(k + 1) * dt:.6g}", t=(k + 1) * dt)
        states[k + 1] = x
    outputs = states @ model.C.T + u[: steps + 1] @ model.D.T
    return Trajectory(t0=0.0, dt=dt, states=states, outputs=outputs)


def _conjugate_units(eigenvalues: np.ndarray):
    """Group an eigenvalue list into real singles and conjugate pairs.

    Returns a list of index tuples: (i,) for a real eigenvalue, (i, j) for a
    conjugate pair with i the encountered member and j its partner.  Input
    order is preserved; matching prefers the closest conjugate.
    """
    w = np.asarray(eigenvalues, dtype=complex)
    n = len(w)
    used = np.zeros(n, dtype=bool)
    units = []
    for i in range(n):
        if used[i]:
            continue
        lam = w[i]
        scale = max(1.0, abs(lam))
        if abs(lam.imag) <= 1e-12 * scale:
            used[i] = True
            units.append((i,))
            continue
        # find the conjugate partner among unused entries
        best = -1
        best_d = np.inf
        for j in range(i + 1, n):
            if used[j] or abs(w[j].imag) <= 1e-12 * max(1.0, abs(w[j])):
                continue
            d = abs(w[j] - np.conj(lam))
            if d < best_d:
                best_d = d
                best = j
        if best < 0 or best_d > 1e-8 * scale:
            used[i] = True
            units.append((i,))  # unpaired oscillatory entry; caller decides
            continue
        used[i] = used[best] = True
        units.append((i, best))
    return units


def mode_report(spectrum: Spectrum) -> ModeTable:
    """Collapse a spectrum into per-mode rows (frequency, damping, real part).

    Conjugate pairs produce a single row keyed by the positive-imaginary
    representative; frequency is |Im|/2pi in Hz, damping ratio -Re/|lambda|
    (1 for a zero eigenvalue).  Rows are sorted ascending by |Re|.
    """
    w = spectrum.eigenvalues
    rows = []
    for unit in _conjugate_units(w):
        lam = w[unit[0]]
        if len(unit) == 2 or abs(lam.imag) > 1e-12 * max(1.0, abs(lam)):
            rep = lam if lam.imag > 0 else np.conj(lam)
        else:
            rep = complex(lam.real, 0.0)
        mag = abs(rep)
        zeta = 1.0 if mag == 0 else -rep.real / mag
        rows.append(
            ModeRow(
                eigenvalue=rep,
                frequency_hz=abs(rep.imag) / (2.0 * np.pi),
                damping_ratio=float(zeta),
                real_part=float(rep.real),
            )
        )
    scale = max(1.0, max((abs(r.eigenvalue) for r in rows), default=1.0))
    order = _grouped_order(
        [abs(r.real_part) for r in rows],
        [(r.frequency_hz, r.real_part) for r in rows],
        tol=1e-9 * scale,
    )
    return ModeTable(rows=tuple(rows[i] for i in order))


def is_stable(spectrum: Spectrum, margin: float = 0.0) -> StabilityReport:
    """Check max Re(lambda) < -margin.  Returns (stable, max_real_part)."""
    if margin < 0:
        raise ValidationError("margin must be non-negative", field="margin")
    max_re = float(spectrum.eigenvalues.real.max())
    return StabilityReport(stable=bool(max_re < -margin), max_real_part=max_re)


# ---------------------------------------------------------------------------
# serialization

def model_to_dict(model: StateSpaceModel) -> dict:
    """JSON-ready dict with dimensions and row-major matrix entries."""
    return {
        "n": model.n,
        "m": model.m,
        "p": model.p,
        "A": model.A.reshape(-1).tolist(),
        "B": model.B.reshape(-1).tolist(),
        "C": model.C.reshape(-1).tolist(),
        "D": model.D.reshape(-1).tolist(),
    }


def model_from_dict(doc: dict) -> StateSpaceModel:
    try:
        n, m, p = int(doc["n"]), int(doc["m"]), int(doc["p"])
        A = np.asarray(doc["A"], dtype=float).reshape(n, n)
        B = np.asarray(doc["B"], dtype=float).reshape(n, m)
        C = np.asarray(doc["C"], dtype=float).reshape(p, n)
        D = np.asarray(doc["D"], dtype=float).reshape(p, m)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad state-space document: {exc}") from exc
    return StateSpaceModel(A=A, B=B, C=C, D=D)


def save_model(model: StateSpaceModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(json_round(model_to_dict(model)), fh, indent=1)
        fh.write("\n")


def load_model(path) -> StateSpaceModel:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", line=exc.lineno) from exc
    return model_from_dict(doc)


def format_number(x: float) -> str:
    """Decimal text with 15 significant digits, the package-wide CSV format."""
    return f"{x:.15g}"


def json_round(obj):
    """Clamp every float in a JSON-ready structure to 15 significant digits.

    Keeps JSON output consistent with the CSV number format and independent
    of how repr chooses to print the 16th/17th digit.
    """
    if isinstance(obj, float):
        return float(f"{obj:.15g}")
    if isinstance(obj, list):
        return [json_round(v) for v in obj]
    if isinstance(obj, dict):
        return {k: json_round(v) for k, v in obj.items()}
    return obj


def trajectory_to_csv(traj: Trajectory, path, include_outputs: bool = True) -> None:
    """Write `t,x1..xn[,y1..yp]` rows with 15-significant-digit numbers."""
    n = traj.states.shape[1]
    p = traj.outputs.shape[1]
    header = ["t"] + [f"x{i + 1}" for i in range(n)]
    if include_outputs:
        header += [f"y{i + 1}" for i in range(p)]
    times = traj.times
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(traj.n_samples):
            row = [format_number(times[k])]
            row += [format_number(v) for v in traj.states[k]]
            if include_outputs:
                row += [format_number(v) for v in traj.outputs[k]]
            fh.write(",".join(row) + "\n")
