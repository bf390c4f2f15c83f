"""Modal decomposition, mode ordering, and truncation/residualization."""

import numpy as np
import pytest

from powermor import (
    StateSpaceModel,
    diagonalize,
    eig,
    modal_reduce,
    order_modes,
    partition,
    realify,
    residualize,
    save_reduced_model,
    transfer_eval,
    truncate,
)
from powermor.errors import (
    BadCriterion,
    DefectiveMatrix,
    NotConjugateClosed,
    SingularDiscard,
    ValidationError,
)

from conftest import make_stable


def pair_and_real():
    """3-state example: one lightly damped pair and one fast real mode.

    Under the real-part criterion the pair (-0.1 +- 10j) is slowest; under
    the modulus criterion the real mode -5 is.
    """
    return StateSpaceModel(
        A=[[-0.1, 10.0, 0.0], [-10.0, -0.1, 0.0], [0.0, 0.0, -5.0]],
        B=[[1.0], [0.0], [1.0]],
        C=[[1.0, 0.0, 1.0]],
    )


class TestDiagonalize:
    def test_similarity_reconstructs_a(self):
        rng = np.random.default_rng(11)
        m = make_stable(rng, 8, m=2, p=2)
        form = diagonalize(m)
        A_back = (form.T * form.eigenvalues[None, :]) @ np.linalg.inv(form.T)
        assert np.max(np.abs(A_back.real - m.A)) < 1e-10 * np.max(np.abs(m.A))

    def test_pairs_adjacent_and_exactly_conjugate(self):
        form = diagonalize(pair_and_real())
        lam = form.eigenvalues
        k = int(np.argmax(np.abs(lam.imag) > 0.5))
        assert lam[k + 1] == np.conj(lam[k])
        assert np.array_equal(form.T[:, k + 1], np.conj(form.T[:, k]))
        assert np.array_equal(form.B_modal[k + 1], np.conj(form.B_modal[k]))

    def test_transfer_preserved_in_modal_coordinates(self):
        rng = np.random.default_rng(12)
        m = make_stable(rng, 7)
        form = diagonalize(m)
        for s in (0.0, 1j, 0.3 + 2j):
            g = transfer_eval(m, s)[0, 0]
            g_modal = form.C_modal @ (form.B_modal[:, 0] / (s - form.eigenvalues)) + form.D[0, 0]
            assert abs(g - g_modal[0]) < 1e-9 * max(1.0, abs(g))

    def test_defective_matrix_rejected(self):
        jordan = StateSpaceModel(A=[[0.0, 1.0], [0.0, 0.0]], B=[[1.0], [1.0]], C=[[1.0, 0.0]])
        with pytest.raises(DefectiveMatrix):
            diagonalize(jordan)


class TestOrderModes:
    def test_real_part_criterion_ranks_pair_first(self):
        form = diagonalize(pair_and_real())
        lam = form.eigenvalues[order_modes(form, "re")]
        assert abs(lam[0].imag) > 1.0  # pair leads
        assert abs(lam[2] + 5.0) < 1e-12

    def test_modulus_criterion_ranks_real_mode_first(self):
        form = diagonalize(pair_and_real())
        lam = form.eigenvalues[order_modes(form, "modulus")]
        assert abs(lam[0] + 5.0) < 1e-12
        assert abs(lam[1].imag) > 1.0

    def test_default_is_modulus(self):
        form = diagonalize(pair_and_real())
        assert np.array_equal(order_modes(form), order_modes(form, "modulus"))

    def test_unknown_criterion(self):
        form = diagonalize(pair_and_real())
        with pytest.raises(BadCriterion):
            order_modes(form, "imag")

    def test_pairs_never_split(self):
        rng = np.random.default_rng(13)
        m = make_stable(rng, 12)
        form = diagonalize(m)
        for crit in ("re", "modulus"):
            lam = form.eigenvalues[order_modes(form, crit)]
            k = 0
            while k < len(lam):
                if abs(lam[k].imag) > 1e-12:
                    assert lam[k + 1] == np.conj(lam[k])
                    k += 2
                else:
                    k += 1


class TestPartition:
    def test_boundary_bump_keeps_pair_together(self):
        form = diagonalize(pair_and_real())
        perm = order_modes(form, "re")  # pair occupies slots 0 and 1
        part = partition(form, perm, 1)
        assert part.r == 2
        assert part.requested_r == 1

    def test_no_bump_at_clean_boundary(self):
        form = diagonalize(pair_and_real())
        perm = order_modes(form, "modulus")  # real mode first
        part = partition(form, perm, 1)
        assert part.r == 1
        assert len(part.A2) == 2

    def test_discarding_zero_mode_raises(self):
        m = StateSpaceModel(A=[[0.0, 0.0], [0.0, -2.0]], B=[[1.0], [1.0]], C=[[1.0, 1.0]])
        form = diagonalize(m)
        lam = form.eigenvalues
        iz = int(np.argmin(np.abs(lam)))
        perm = np.array([1 - iz, iz])  # force the zero mode into the discard set
        with pytest.raises(SingularDiscard):
            partition(form, perm, 1)

    def test_rejects_bad_permutation(self):
        form = diagonalize(pair_and_real())
        with pytest.raises(ValidationError):
            partition(form, np.array([0, 0, 1]), 1)

    def test_rejects_out_of_range_r(self):
        form = diagonalize(pair_and_real())
        perm = order_modes(form)
        for r in (0, 4):
            with pytest.raises(ValidationError):
                partition(form, perm, r)


class TestRealify:
    def test_transfer_matches_complex_diagonal(self):
        lam = np.array([-1.0 + 5.0j, -1.0 - 5.0j, -3.0])
        B = np.array([[0.5 - 0.2j], [0.5 + 0.2j], [1.0]])
        C = np.array([[1.0 + 1.0j, 1.0 - 1.0j, 2.0]])
        D = np.array([[0.0]])
        m = realify(lam, B, C, D)
        assert m.A.dtype == float
        for s in (0.0, 1j, 2.0 + 3.0j):
            g_c = (C @ (B[:, 0] / (s - lam)))[0] + D[0, 0]
            g_r = transfer_eval(m, s)[0, 0]
            assert abs(g_c - g_r) < 1e-12 * max(1.0, abs(g_c))

    def test_pair_becomes_rotation_block(self):
        lam = np.array([-1.0 + 5.0j, -1.0 - 5.0j])
        m = realify(lam, np.array([[1.0], [1.0]]), np.array([[1.0, 1.0]]), np.array([[0.0]]))
        assert np.allclose(m.A, [[-1.0, 5.0], [-5.0, -1.0]])

    def test_unpaired_complex_rejected(self):
        with pytest.raises(NotConjugateClosed):
            realify(
                np.array([-1.0 + 5.0j, -3.0]),
                np.ones((2, 1)),
                np.ones((1, 2)),
                np.zeros((1, 1)),
            )


class TestReduction:
    def test_residualization_keeps_dc_gain(self):
        # two real modes; dropping the fast one moves its DC contribution into D
        m = StateSpaceModel(A=np.diag([-1.0, -100.0]), B=[[1.0], [1.0]], C=[[1.0, 1.0]])
        red = modal_reduce(m, 1, method="modal-residualization")
        assert red.model.n == 1
        assert abs(red.model.D[0, 0] - 0.01) < 1e-14
        g0_full = transfer_eval(m, 0.0)[0, 0]
        g0_red = transfer_eval(red.model, 0.0)[0, 0]
        assert abs(g0_full - g0_red) < 1e-13
        assert abs(g0_full - 1.01) < 1e-13

    def test_truncation_leaves_feedthrough_alone(self):
        m = StateSpaceModel(A=np.diag([-1.0, -100.0]), B=[[1.0], [1.0]], C=[[1.0, 1.0]])
        red = modal_reduce(m, 1, method="modal-truncation")
        assert red.model.D[0, 0] == 0.0
        assert abs(transfer_eval(red.model, 0.0)[0, 0] - 1.0) < 1e-14

    def test_retained_eigenvalues_exact(self):
        rng = np.random.default_rng(14)
        m = make_stable(rng, 10)
        red = modal_reduce(m, 4)
        full_eigs = eig(m).eigenvalues
        for lam in red.retained_eigenvalues:
            assert np.min(np.abs(full_eigs - lam)) < 1e-9

    def test_full_order_residualization_is_exact(self):
        rng = np.random.default_rng(15)
        m = make_stable(rng, 9)
        red = modal_reduce(m, 9)
        assert red.model.n == 9
        for w in np.geomspace(1e-2, 1e2, 20):
            g = transfer_eval(m, 1j * w)[0, 0]
            gr = transfer_eval(red.model, 1j * w)[0, 0]
            assert abs(g - gr) <= 1e-9 * max(1.0, abs(g))

    def test_methods_differ_away_from_dc(self):
        m = StateSpaceModel(A=np.diag([-1.0, -100.0]), B=[[1.0], [1.0]], C=[[1.0, 1.0]])
        form = diagonalize(m)
        part = partition(form, order_modes(form), 1)
        res = residualize(part)
        tru = truncate(part)
        assert res.method == "modal-residualization"
        assert tru.method == "modal-truncation"
        assert abs(res.model.D[0, 0] - tru.model.D[0, 0]) > 1e-3

    def test_unknown_method_rejected(self):
        m = pair_and_real()
        with pytest.raises(ValidationError):
            modal_reduce(m, 1, method="balanced")

    def test_provenance_records_the_run(self):
        m = pair_and_real()
        red = modal_reduce(m, 1, criterion="re")
        assert red.provenance["criterion"] == "re"
        assert red.provenance["requested_r"] == 1
        assert red.provenance["r"] == 2  # boundary bump
        assert red.provenance["full_order"] == 3

    def test_saved_document_carries_meta(self, tmp_path):
        red = modal_reduce(pair_and_real(), 1)
        path = tmp_path / "reduced.json"
        save_reduced_model(red, path)
        import json

        doc = json.loads(path.read_text())
        assert doc["meta"]["method"] == "modal-residualization"
        assert doc["meta"]["r"] == red.model.n
        assert len(doc["meta"]["retained_eigenvalues"]) == red.model.n


class TestBenchmarkReduction:
    def test_half_order_keeps_slow_oscillatory_pairs(self, bench):
        red = modal_reduce(bench.full, 10)
        kept = red.retained_eigenvalues
        assert len(kept) == 10
        full_eigs = eig(bench.full).eigenvalues
        # every kept mode is one of the full ones, to eigensolver accuracy
        for lam in kept:
            assert np.min(np.abs(full_eigs - lam)) < 1e-8
        # the slow end survives: the two slowest oscillatory frequencies
        kept_freqs = sorted({round(abs(l.imag) / (2 * np.pi), 6) for l in kept if abs(l.imag) > 1e-9})
        full_freqs = sorted({round(abs(l.imag) / (2 * np.pi), 6) for l in full_eigs if abs(l.imag) > 1e-9})
        assert kept_freqs[:2] == full_freqs[:2]

    def test_zero_mode_is_retained_not_discarded(self, bench):
        # the rigid-body mode must end up in the kept set under both criteria
        for crit in ("modulus", "re"):
            red = modal_reduce(bench.full, 10, criterion=crit)
            assert np.min(np.abs(red.retained_eigenvalues)) < 1e-8
