"""Modal truncation and residualization.

Pipeline: :func:`diagonalize` brings a model to (complex) diagonal
coordinates, :func:`order_modes` ranks the modes, :func:`partition` splits
retained from discarded state (never through a conjugate pair), and
:func:`residualize` / :func:`truncate` build the reduced model, which
:func:`realify` returns to real matrices.

Residualization solves the discarded block at steady state, which folds a
feedthrough correction D - C2 A2^{-1} B2 into the reduced system and makes
the DC gain of the original exact.  Truncation drops the block outright and
is exact at infinite frequency instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadCriterion,
    DefectiveMatrix,
    NotConjugateClosed,
    SingularDiscard,
    ValidationError,
)
from .lti import StateSpaceModel, _conjugate_units, _freeze, _grouped_order, eig

# Eigenvector-basis condition ceiling; above it the matrix is treated as
# numerically defective and modal coordinates are refused.
BASIS_COND_LIMIT = 1e12

# |Re lambda| at or below this counts as a singular (non-residualizable) mode.
ZERO_MODE_TOL = 1e-8


@dataclass(frozen=True)
class ModalForm:
    """Model in diagonal coordinates: A = T diag(eigenvalues) T^{-1}.

    Conjugate eigenvalues sit in adjacent positions with exactly conjugate
    eigenvector columns, input rows and output columns, so downstream
    realification is lossless.
    """

    T: np.ndarray
    eigenvalues: np.ndarray
    B_modal: np.ndarray
    C_modal: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for attr in ("T", "eigenvalues", "B_modal", "C_modal"):
            object.__setattr__(self, attr, _freeze(np.array(getattr(self, attr), dtype=complex)))
        object.__setattr__(self, "D", _freeze(np.array(self.D, dtype=float)))

    @property
    def n(self) -> int:
        return len(self.eigenvalues)


@dataclass(frozen=True)
class ModalPartition:
    """Retained/discarded split of a modal form.

    A1/A2 are the diagonal blocks stored as vectors; B1/B2, C1/C2 the
    matching input rows and output columns.  ``r`` is the actual retained
    count after any conjugate-pair boundary adjustment.
    """

    ordering: np.ndarray
    r: int
    requested_r: int
    n_full: int
    A1: np.ndarray
    A2: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D: np.ndarray


@dataclass(frozen=True)
class ReducedModel:
    """A reduced real model plus how it was obtained."""

    model: StateSpaceModel
    method: str
    retained_eigenvalues: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "retained_eigenvalues", _freeze(np.array(self.retained_eigenvalues, dtype=complex))
        )


def diagonalize(model: StateSpaceModel) -> ModalForm:
    """Bring a model to modal coordinates, pairing conjugate modes adjacently.

    Raises :class:`DefectiveMatrix` when the eigenvector basis condition
    exceeds BASIS_COND_LIMIT or the similarity fails to reconstruct A to a
    1e-8 relative residual.
    """
    spec = eig(model)
    if spec.basis_condition > BASIS_COND_LIMIT:
        raise DefectiveMatrix(
            f"eigenvector basis condition {spec.basis_condition:.3e} exceeds {BASIS_COND_LIMIT:.0e}",
            condition=spec.basis_condition,
        )
    w = spec.eigenvalues
    v = spec.right_eigenvectors.copy()
    order = []
    pair_second = []
    for unit in _conjugate_units(w):
        if len(unit) == 1:
            lam = w[unit[0]]
            if abs(lam.imag) > 1e-12 * max(1.0, abs(lam)):
                raise NotConjugateClosed("unpaired complex eigenvalue in a real matrix spectrum")
            order.append(unit[0])
        else:
            i, j = unit
            first, second = (i, j) if w[i].imag > 0 else (j, i)
            order.append(first)
            order.append(second)
            pair_second.append((len(order) - 1, len(order) - 2))
    order = np.asarray(order, dtype=int)
    lam = w[order].copy()
    T = v[:, order]
    # enforce exact conjugacy inside each pair
    for pos2, pos1 in pair_second:
        lam[pos2] = np.conj(lam[pos1])
        T[:, pos2] = np.conj(T[:, pos1])
    lam.setflags(write=False)

    T_inv = np.linalg.solve(T, np.eye(model.n, dtype=complex))
    anorm = np.linalg.norm(model.A, "fro")
    recon = np.linalg.norm((T * lam[None, :]) @ T_inv - model.A, "fro")
    if anorm > 0 and recon / anorm > 1e-8:
        raise DefectiveMatrix(
            f"similarity reconstructs A to {recon / anorm:.3e} relative, above 1e-8",
            condition=spec.basis_condition,
            residual=float(recon / anorm),
        )
    B_modal = T_inv @ model.B
    C_modal = model.C.astype(complex) @ T
    return ModalForm(T=T, eigenvalues=lam, B_modal=B_modal, C_modal=C_modal, D=model.D)


def _units_of(lam: np.ndarray):
    """Adjacent-pair structure of a conjugate-ordered eigenvalue vector."""
    units = []
    k = 0
    n = len(lam)
    while k < n:
        lk = lam[k]
        real_k = abs(lk.imag) <= 1e-12 * max(1.0, abs(lk))
        if not real_k:
            if k + 1 >= n or abs(lam[k + 1] - np.conj(lk)) > 1e-8 * max(1.0, abs(lk)):
                raise NotConjugateClosed(f"eigenvalue {lk} has no adjacent conjugate partner")
            units.append((k, k + 1))
            k += 2
        else:
            units.append((k,))
            k += 1
    return units


def order_modes(modal_form: ModalForm, criterion: str = "modulus") -> np.ndarray:
    """Permutation ranking modes slow-to-fast under the given criterion.

    ``"modulus"`` (the default) sorts by ascending |lambda|; ``"re"`` by
    ascending |Re lambda| (dominant-pole style).  Conjugate pairs always
    move together.  Ties break by ascending |lambda|, then ascending Im of
    the representative, so the permutation is deterministic.  Modulus is
    the default because it keeps slow aperiodic modes (|Re| large relative
    to other real parts but |lambda| small) ahead of fast oscillatory ones;
    under "re" such a mode sorts last, and residualizing it injects a
    1/|Re|-scaled feedthrough that can dwarf the true response.
    """
    lam = modal_form.eigenvalues
    if criterion == "re":
        primary = lambda x: abs(x.real)
    elif criterion == "modulus":
        primary = abs
    else:
        raise BadCriterion(f"unknown mode-ordering criterion {criterion!r}")
    units = _units_of(lam)
    # grouped sort: primaries within roundoff of each other count as tied,
    # otherwise the (|lambda|, Im) tie-break would never fire on real data
    scale = max(1.0, float(np.max(np.abs(lam))) if len(lam) else 1.0)
    order = _grouped_order(
        [primary(lam[u[0]]) for u in units],
        [(abs(lam[u[0]]), lam[u[0]].imag) for u in units],
        tol=1e-9 * scale,
    )
    return np.concatenate([np.asarray(units[i], dtype=int) for i in order])


def partition(modal_form: ModalForm, permutation: np.ndarray, r_requested: int) -> ModalPartition:
    """Split a modal form into retained (first r) and discarded modes.

    When the requested boundary would cut a conjugate pair in half, r is
    incremented by one so the pair stays together.  Discarding a mode with
    |Re lambda| <= ZERO_MODE_TOL raises :class:`SingularDiscard`: such a
    block cannot be residualized and would silently change the DC behaviour.
    """
    n = modal_form.n
    perm = np.asarray(permutation, dtype=int)
    if sorted(perm.tolist()) != list(range(n)):
        raise ValidationError("permutation must reorder exactly the n modes", field="permutation")
    if not 1 <= r_requested <= n:
        raise ValidationError(f"r_requested must lie in [1, {n}]", field="r_requested")
    lam = modal_form.eigenvalues[perm]
    units = _units_of(lam)  # also validates pair adjacency survived the permutation
    r = r_requested
    for unit in units:
        if len(unit) == 2 and unit[0] == r - 1:
            r += 1
            break
    discarded = lam[r:]
    bad = np.abs(discarded.real) <= ZERO_MODE_TOL
    if np.any(bad):
        raise SingularDiscard(
            f"{int(bad.sum())} discarded mode(s) have |Re| <= {ZERO_MODE_TOL:g}",
            eigenvalues=discarded[bad].tolist(),
        )
    Bp = modal_form.B_modal[perm]
    Cp = modal_form.C_modal[:, perm]
    return ModalPartition(
        ordering=perm,
        r=r,
        requested_r=r_requested,
        n_full=n,
        A1=lam[:r],
        A2=lam[r:],
        B1=Bp[:r],
        B2=Bp[r:],
        C1=Cp[:, :r],
        C2=Cp[:, r:],
        D=modal_form.D,
    )


def realify(eigenvalues: np.ndarray, B: np.ndarray, C: np.ndarray, D: np.ndarray) -> StateSpaceModel:
    """Convert a conjugate-closed complex diagonal system to real matrices.

    Real eigenvalues keep 1x1 blocks; each adjacent conjugate pair
    (sigma +- j omega) becomes the 2x2 block [[sigma, omega], [-omega, sigma]]
    with input rows [Re b; -Im b] and output columns [2 Re c, 2 Im c].  The
    transfer function is preserved exactly (up to roundoff).

    Raises :class:`NotConjugateClosed` when the eigenvalue list is not closed
    under conjugation with pairs adjacent.
    """
    lam = np.asarray(eigenvalues, dtype=complex)
    B = np.atleast_2d(np.asarray(B, dtype=complex))
    C = np.atleast_2d(np.asarray(C, dtype=complex))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    n = len(lam)
    if B.shape[0] != n or C.shape[1] != n:
        raise ValidationError("B rows and C columns must match the eigenvalue count")
    units = _units_of(lam)
    A_r = np.zeros((n, n))
    B_r = np.zeros((n, B.shape[1]))
    C_r = np.zeros((C.shape[0], n))
    for unit in units:
        if len(unit) == 1:
            k = unit[0]
            A_r[k, k] = lam[k].real
            B_r[k] = B[k].real
            C_r[:, k] = C[:, k].real
        else:
            k, k2 = unit
            sigma, omega = lam[k].real, lam[k].imag
            # average out roundoff asymmetry between the two conjugate rows
            b = 0.5 * (B[k] + np.conj(B[k2]))
            c = 0.5 * (C[:, k] + np.conj(C[:, k2]))
            A_r[k, k] = A_r[k2, k2] = sigma
            A_r[k, k2] = omega
            A_r[k2, k] = -omega
            B_r[k] = b.real
            B_r[k2] = -b.imag
            C_r[:, k] = 2.0 * c.real
            C_r[:, k2] = 2.0 * c.imag
    return StateSpaceModel(A=A_r, B=B_r, C=C_r, D=D)


def residualize(partition_: ModalPartition) -> ReducedModel:
    """Reduce by solving the discarded block at steady state.

    The feedthrough becomes D - C2 A2^{-1} B2, which keeps the DC gain of
    the full model exactly.
    """
    if len(partition_.A2):
        correction = partition_.C2 @ (partition_.B2 / partition_.A2[:, None])
        D_new = partition_.D - correction.real
    else:
        D_new = partition_.D
    model = realify(partition_.A1, partition_.B1, partition_.C1, D_new)
    return ReducedModel(
        model=model,
        method="modal-residualization",
        retained_eigenvalues=partition_.A1,
        provenance={"full_order": partition_.n_full, "requested_r": partition_.requested_r, "r": partition_.r},
    )


def truncate(partition_: ModalPartition) -> ReducedModel:
    """Reduce by dropping the discarded block outright (feedthrough unchanged)."""
    model = realify(partition_.A1, partition_.B1, partition_.C1, partition_.D)
    return ReducedModel(
        model=model,
        method="modal-truncation",
        retained_eigenvalues=partition_.A1,
        provenance={"full_order": partition_.n_full, "requested_r": partition_.requested_r, "r": partition_.r},
    )


def modal_reduce(
    model: StateSpaceModel, r: int, criterion: str = "modulus", method: str = "modal-residualization"
) -> ReducedModel:
    """One-call modal pipeline: diagonalize, order, partition, reduce."""
    form = diagonalize(model)
    perm = order_modes(form, criterion)
    part = partition(form, perm, r)
    if method == "modal-residualization":
        reduced = residualize(part)
    elif method == "modal-truncation":
        reduced = truncate(part)
    else:
        raise ValidationError(f"unknown modal method {method!r}", field="method")
    reduced.provenance["criterion"] = criterion
    return reduced


# ---------------------------------------------------------------------------
# serialization

def reduced_model_to_dict(reduced: ReducedModel) -> dict:
    from .lti import model_to_dict

    doc = model_to_dict(reduced.model)
    doc["meta"] = {
        "method": reduced.method,
        "r": reduced.model.n,
        "requested_r": reduced.provenance.get("requested_r"),
        "criterion": reduced.provenance.get("criterion"),
        "retained_eigenvalues": [[float(z.real), float(z.imag)] for z in reduced.retained_eigenvalues],
    }
    return doc


def save_reduced_model(reduced: ReducedModel, path) -> None:
    from .lti import json_round

    with open(path, "w") as fh:
        json.dump(json_round(reduced_model_to_dict(reduced)), fh, indent=1)
        fh.write("\n")
