"""Gramian-weighted rational-Krylov reduction with mirror-image shift iteration.

The method combines an SVD-side ingredient, the observability Gramian Q of
(A, C), with a rational Krylov basis V spanning {(s_i I - A)^{-1} b}.  The
oblique projector Z = Q V (V' Q V)^{-1} satisfies Z'V = I, and the reduced
triple

    A_r = Z' A V,    b_r = Z' b,    C_r = C V

matches the full transfer function exactly at every shift s_i on the chosen
input column.  Shifts are then replaced by the mirror images of the reduced
poles, -eig(A_r), and the projection repeats until the shift set stops
moving; at the fixed point the model interpolates G at the mirror images of
its own poles.

The method is single-input by construction: callers pick one (input, output)
channel, and full-MIMO requests are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BasisRankDeficient,
    DefectiveMatrix,
    EvalAtPole,
    GramianProjectionSingular,
    MimoUnsupported,
    NotStrictlyStable,
    OrderTooLarge,
    ShiftHitsPole,
    ValidationError,
)
from .lti import StateSpaceModel, _checked_solve, _freeze, eig, format_number, transfer_eval
from .modal import ReducedModel

# Stability margin demanded of A before a Gramian is attempted.
STABILITY_MARGIN = 1e-10

# Condition ceiling for the projected Gramian V'QV.
PROJECTION_COND_LIMIT = 1e12


@dataclass(frozen=True)
class Gramian:
    """Observability Gramian Q of (A, C): A'Q + QA + C'C = 0, Q = Q' >= 0.

    ``residual`` is the relative Lyapunov residual actually achieved,
    ||A'Q + QA + C'C||_F / ||C'C||_F.
    """

    Q: np.ndarray
    residual: float

    def __post_init__(self):
        object.__setattr__(self, "Q", _freeze(np.array(self.Q, dtype=float)))


@dataclass(frozen=True)
class ShiftSet:
    """Interpolation shifts: strictly right-half-plane, conjugate-closed.

    Values are kept in the canonical order (ascending Re, then |Im|, then
    Im), which places each conjugate pair adjacently with the negative
    imaginary member first.
    """

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=complex)
        if vals.ndim != 1 or len(vals) == 0:
            raise ValidationError("shift set must be a non-empty vector", field="values")
        if np.any(vals.real <= 0):
            raise ValidationError("shifts must have strictly positive real part", field="values")
        order = np.lexsort((vals.imag, np.abs(vals.imag), vals.real))
        vals = vals[order]
        k = 0
        while k < len(vals):
            v = vals[k]
            if abs(v.imag) <= 1e-12 * max(1.0, abs(v)):
                k += 1
                continue
            if k + 1 >= len(vals) or abs(vals[k + 1] - np.conj(v)) > 1e-8 * max(1.0, abs(v)):
                raise ValidationError("complex shifts must come in conjugate pairs", field="values")
            k += 2
        object.__setattr__(self, "values", _freeze(vals))

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True)
class KrylovBasis:
    """Stacked rational Krylov directions; orthonormal unless raw was requested."""

    V: np.ndarray
    orthonormal: bool

    def __post_init__(self):
        object.__setattr__(self, "V", _freeze(np.array(self.V, dtype=float)))


@dataclass(frozen=True)
class SvdKrylovResult:
    """Outcome of the shift iteration.

    ``final_shifts`` are the shifts the returned model was built from;
    ``shift_history`` holds the per-iteration max relative shift change,
    ``interp_history`` the per-iteration max relative interpolation error,
    ``projector_history`` the per-iteration ||Z'V - I||_F, and
    ``interpolation_errors`` the final per-shift errors on the channel.
    """

    reduced: ReducedModel
    final_shifts: ShiftSet
    iterations: int
    converged: bool
    shift_history: tuple
    interp_history: tuple
    projector_history: tuple
    interpolation_errors: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "interpolation_errors", _freeze(np.array(self.interpolation_errors, dtype=float))
        )


def _lyap_rhs_solve(X: np.ndarray, lam: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve A'Q + QA + rhs = 0 through the eigenbasis A = X diag(lam) X^{-1}."""
    Xinv = np.linalg.inv(X)
    F = X.conj().T @ rhs.astype(complex) @ X
    denom = lam.conj()[:, None] + lam[None, :]
    M = -F / denom
    Q = Xinv.conj().T @ M @ Xinv
    Q = Q.real
    return 0.5 * (Q + Q.T)


def obs_gramian(model: StateSpaceModel) -> Gramian:
    """Observability Gramian via the eigenbasis closed form.

    Requires max Re(lambda) < -STABILITY_MARGIN.  Up to two refinement
    passes push the Lyapunov residual to roundoff level; if it still exceeds
    1e-8 relative the eigenbasis is too ill-conditioned and
    :class:`DefectiveMatrix` is raised.
    """
    spec = eig(model)
    max_re = float(spec.eigenvalues.real.max())
    if max_re >= -STABILITY_MARGIN:
        raise NotStrictlyStable(f"max Re(lambda) = {max_re:.3e}", max_real_part=max_re)
    A = model.A
    CtC = model.C.T @ model.C
    scale = np.linalg.norm(CtC, "fro")
    if scale == 0:
        return Gramian(Q=np.zeros_like(A), residual=0.0)
    X, lam = spec.right_eigenvectors, spec.eigenvalues
    Q = _lyap_rhs_solve(X, lam, CtC)
    resid = None
    for _ in range(3):
        R = A.T @ Q + Q @ A + CtC
        resid = np.linalg.norm(R, "fro") / scale
        if resid <= 1e-11:
            break
        Q = Q + _lyap_rhs_solve(X, lam, R)
    if resid > 1e-8:
        raise DefectiveMatrix(
            f"Lyapunov residual {resid:.3e} above 1e-8 after refinement",
            condition=spec.basis_condition,
            residual=float(resid),
        )
    evals = np.linalg.eigvalsh(Q)
    qnorm = float(np.abs(evals).max()) if len(evals) else 0.0
    if len(evals) and evals.min() < -1e-10 * max(qnorm, 1e-300):
        raise DefectiveMatrix(
            f"Gramian indefinite: min eigenvalue {evals.min():.3e}", min_eigenvalue=float(evals.min())
        )
    return Gramian(Q=Q, residual=float(resid))


def initial_shifts(model: StateSpaceModel, r: int) -> ShiftSet:
    """Deterministic real positive starting shifts from Gershgorin data.

    The upper end is 10x the infinity-norm bound on the spectrum; the lower
    end is a tenth of the smallest Gershgorin-disc distance from the origin,
    floored at 1e-3.  r shifts are log-spaced across that span (the
    geometric midpoint when r = 1).  No eigendecomposition is involved.
    """
    n = model.n
    if r < 1:
        raise ValidationError("r must be at least 1", field="r")
    if r > n:
        raise OrderTooLarge(f"r = {r} exceeds the full order n = {n}", r=r, n=n)
    absA = np.abs(model.A)
    row_sums = absA.sum(axis=1)
    rho_hi = 10.0 * max(float(row_sums.max()), 1e-3)
    radii = row_sums - np.diag(absA)
    disc_dist = np.abs(np.diag(model.A)) - radii
    rho_lo = max(1e-3, 0.1 * max(float(disc_dist.min()), 0.0))
    if rho_lo >= rho_hi:
        rho_lo = rho_hi / 10.0
    if r == 1:
        vals = np.array([np.sqrt(rho_lo * rho_hi)])
    else:
        vals = np.geomspace(rho_lo, rho_hi, r)
    return ShiftSet(values=vals.astype(complex))


def krylov_basis(
    model: StateSpaceModel, shifts: ShiftSet, b: np.ndarray, orthogonalize: bool = True
) -> KrylovBasis:
    """Real basis for span{(s_i I - A)^{-1} b}.

    A conjugate shift pair contributes the real and imaginary parts of the
    solve at its positive-imaginary member, so the basis stays real with one
    column per shift.  Columns are orthonormalized by twice-iterated
    Gram-Schmidt unless raw columns are requested; a column whose
    post-projection norm falls below 1e-12 of its original marks rank
    deficiency.
    """
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.shape != (model.n,):
        raise ValidationError("b must be an n-vector", field="b")
    eye = np.eye(model.n)
    cols = []
    vals = shifts.values
    k = 0
    while k < len(vals):
        s = vals[k]
        if abs(s.imag) <= 1e-12 * max(1.0, abs(s)):
            try:
                x = _checked_solve(s.real * eye - model.A, b.astype(complex), "krylov_basis")
            except EvalAtPole as exc:
                raise ShiftHitsPole(f"shift {s.real:.6g} sits numerically on a pole", shift=complex(s)) from exc
            cols.append(x.real)
            k += 1
        else:
            s_pos = vals[k + 1] if vals[k + 1].imag > 0 else vals[k]
            try:
                x = _checked_solve(s_pos * eye - model.A, b.astype(complex), "krylov_basis")
            except EvalAtPole as exc:
                raise ShiftHitsPole(f"shift {s_pos:.6g} sits numerically on a pole", shift=complex(s_pos)) from exc
            cols.append(x.real)
            cols.append(x.imag)
            k += 2
    V = np.column_stack(cols)
    if not orthogonalize:
        return KrylovBasis(V=V, orthonormal=False)
    Q = np.zeros_like(V)
    for j in range(V.shape[1]):
        v = V[:, j].copy()
        norm0 = np.linalg.norm(v)
        for _ in range(2):  # twice-iterated Gram-Schmidt
            if j:
                v -= Q[:, :j] @ (Q[:, :j].T @ v)
        norm1 = np.linalg.norm(v)
        if norm0 == 0 or norm1 < 1e-12 * norm0:
            raise BasisRankDeficient(
                f"basis rank collapsed at column {j + 1} of {V.shape[1]}", rank=j
            )
        Q[:, j] = v / norm1
    return KrylovBasis(V=Q, orthonormal=True)


def oblique_projector(gramian, basis) -> np.ndarray:
    """Z = Q V (V'QV)^{-1}, the Gramian-weighted left projector with Z'V = I.

    Accepts :class:`Gramian`/:class:`KrylovBasis` instances or bare arrays.
    A couple of Newton passes scrub roundoff out of Z'V; if the defect still
    exceeds 1e-10 (or V'QV is numerically singular) the projection is
    refused.
    """
    Q = gramian.Q if isinstance(gramian, Gramian) else np.asarray(gramian, dtype=float)
    V = basis.V if isinstance(basis, KrylovBasis) else np.asarray(basis, dtype=float)
    W = Q @ V
    G = V.T @ W
    G = 0.5 * (G + G.T)
    cond = float(np.linalg.cond(G))
    if not np.isfinite(cond) or cond > PROJECTION_COND_LIMIT:
        raise GramianProjectionSingular(
            f"V'QV condition {cond:.3e} exceeds {PROJECTION_COND_LIMIT:.0e}", condition=cond
        )
    try:
        Z = np.linalg.solve(G, W.T).T
    except np.linalg.LinAlgError as exc:
        raise GramianProjectionSingular("V'QV singular") from exc
    r = V.shape[1]
    eye = np.eye(r)
    for _ in range(3):
        E = Z.T @ V - eye
        defect = np.linalg.norm(E, "fro")
        if defect <= 1e-12:
            break
        Z = Z - Z @ E.T
    defect = float(np.linalg.norm(Z.T @ V - eye, "fro"))
    if defect > 1e-10:
        raise GramianProjectionSingular(
            f"projector defect {defect:.3e} above 1e-10", condition=cond, defect=defect
        )
    return Z


def _validate_channel(model: StateSpaceModel, channel) -> tuple[int, int]:
    if channel is None:
        raise MimoUnsupported(
            "this method reduces one input/output channel at a time; pass channel=(input_index, output_index)"
        )
    try:
        ch_in, ch_out = int(channel[0]), int(channel[1])
    except (TypeError, ValueError, IndexError) as exc:
        raise ValidationError("channel must be a pair (input_index, output_index)", field="channel") from exc
    if not (0 <= ch_in < model.m and 0 <= ch_out < model.p):
        raise ValidationError(
            f"channel ({ch_in}, {ch_out}) out of range for an m={model.m}, p={model.p} model",
            field="channel",
        )
    return ch_in, ch_out


def reduce_once(
    model: StateSpaceModel, gramian: Gramian, shifts: ShiftSet, channel, orthogonalize: bool = True
):
    """One projection pass: returns (A_r, b_r, C_r) for the given shifts."""
    ch_in, _ = _validate_channel(model, channel)
    b = model.B[:, ch_in]
    basis = krylov_basis(model, shifts, b, orthogonalize=orthogonalize)
    Z = oblique_projector(gramian, basis)
    A_r = Z.T @ model.A @ basis.V
    b_r = Z.T @ b
    C_r = model.C @ basis.V
    return A_r, b_r, C_r


def _reflect_to_rhp(values: np.ndarray) -> np.ndarray:
    """Mirror eigenvalue negatives into the open right half-plane."""
    re = np.abs(values.real)
    # an exactly imaginary value would leave the shift on the boundary
    re = np.where(re == 0.0, np.maximum(1e-8, 1e-8 * np.abs(values)), re)
    return re + 1j * values.imag


def shift_change(old: ShiftSet, new: ShiftSet) -> float:
    """Max relative movement between two equally sized shift sets.

    Both sets are compared in the canonical (Re, Im) order, so the metric is
    insensitive to how the eigen-solver happened to order its output.
    """
    a, b = old.values, new.values
    if len(a) != len(b):
        raise ValidationError("shift sets must have equal size")
    ka = np.lexsort((a.imag, a.real))
    kb = np.lexsort((b.imag, b.real))
    return float(np.max(np.abs(b[kb] - a[ka]) / np.abs(a[ka])))


def interpolation_check(model: StateSpaceModel, reduced, shifts: ShiftSet, channel) -> np.ndarray:
    """Per-shift relative error |G(s_i) - G_r(s_i)| / |G(s_i)| on the channel."""
    rmodel = reduced.model if isinstance(reduced, ReducedModel) else reduced
    ch_in, ch_out = _validate_channel(model, channel)
    r_in = 0 if rmodel.m == 1 else ch_in
    errs = np.empty(len(shifts))
    for i, s in enumerate(shifts.values):
        g = transfer_eval(model, s)[ch_out, ch_in]
        gr = transfer_eval(rmodel, s)[ch_out, r_in]
        errs[i] = abs(g - gr) / max(abs(g), 1e-300)
    return errs


def svd_krylov_reduce(
    model: StateSpaceModel,
    r: int,
    channel,
    tol: float = 1e-6,
    max_iter: int = 100,
    orthogonalize: bool = True,
) -> SvdKrylovResult:
    """Iterate projection and mirror-image shift updates to a fixed point.

    Starting from Gershgorin-based shifts, each pass projects onto the
    current rational Krylov basis, reads off the reduced poles, reflects any
    that stray into the closed left half-plane, and compares the mirrored
    poles with the shifts that built the model.  Convergence: max relative
    shift change < tol.  The returned model is the iterate built from
    ``final_shifts``, so at convergence its poles mirror those shifts to
    within the same tolerance.
    """
    ch_in, ch_out = _validate_channel(model, channel)
    if tol <= 0 or max_iter < 1:
        raise ValidationError("tol must be positive and max_iter at least 1")
    if r > model.n:
        raise OrderTooLarge(f"r = {r} exceeds the full order n = {model.n}", r=r, n=model.n)
    gram = obs_gramian(model)  # also enforces strict stability
    shifts = initial_shifts(model, r)
    b = model.B[:, ch_in]
    D_col = model.D[:, [ch_in]]
    in_name = model.input_names[ch_in] if model.input_names else f"u{ch_in + 1}"

    shift_hist: list[float] = []
    interp_hist: list[float] = []
    proj_hist: list[float] = []
    converged = False
    A_r = b_r = C_r = None
    interp_errs = None
    built_from = shifts
    for _ in range(max_iter):
        built_from = shifts
        basis = krylov_basis(model, shifts, b, orthogonalize=orthogonalize)
        Z = oblique_projector(gram, basis)
        proj_hist.append(float(np.linalg.norm(Z.T @ basis.V - np.eye(len(shifts)), "fro")))
        A_r = Z.T @ model.A @ basis.V
        b_r = Z.T @ b
        C_r = model.C @ basis.V
        iterate = StateSpaceModel(A=A_r, B=b_r[:, None], C=C_r, D=D_col)
        interp_errs = interpolation_check(model, iterate, shifts, (ch_in, ch_out))
        interp_hist.append(float(interp_errs.max()))
        mirrored = ShiftSet(values=_reflect_to_rhp(-eig(A_r).eigenvalues))
        change = shift_change(shifts, mirrored)
        shift_hist.append(change)
        if change < tol:
            converged = True
            break
        shifts = mirrored

    reduced_model = StateSpaceModel(
        A=A_r,
        B=b_r[:, None],
        C=C_r,
        D=D_col,
        input_names=(in_name,),
        output_names=model.output_names,
    )
    reduced = ReducedModel(
        model=reduced_model,
        method="svd-krylov",
        retained_eigenvalues=eig(A_r).eigenvalues,
        provenance={
            "full_order": model.n,
            "requested_r": r,
            "r": reduced_model.n,
            "channel": [ch_in, ch_out],
            "tol": tol,
            "orthogonalize": orthogonalize,
        },
    )
    return SvdKrylovResult(
        reduced=reduced,
        final_shifts=built_from,
        iterations=len(shift_hist),
        converged=converged,
        shift_history=tuple(shift_hist),
        interp_history=tuple(interp_hist),
        projector_history=tuple(proj_hist),
        interpolation_errors=interp_errs,
    )


def write_convergence_trace(result: SvdKrylovResult, path) -> None:
    """CSV trace `iter,max_rel_shift_change,max_interp_error`, one row per pass."""
    with open(path, "w", newline="") as fh:
        fh.write("iter,max_rel_shift_change,max_interp_error\n")
        for k, (dc, ie) in enumerate(zip(result.shift_history, result.interp_history), start=1):
            fh.write(f"{k},{format_number(dc)},{format_number(ie)}\n")
