"""End-to-end acceptance checks for the benchmark reduction pipeline.

Each test covers one shipped guarantee: the frequency-error arithmetic
against a recorded reference table, eigenvalue retention, DC-gain
preservation, the Gramian contract, interpolation and the mirror fixed
point of the shift iteration, linearization fidelity, the benchmark fault
study, frequency-response agreement, and byte-level determinism.  Every
test also enforces a wall-clock budget.
"""

import filecmp
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from powermor import (
    FaultScenario,
    SimConfig,
    StateSpaceModel,
    eig,
    electrical_power,
    fault_disturbance,
    frequency_error_pct,
    freq_sweep,
    linearize_swing,
    modal_reduce,
    mode_error_table,
    obs_gramian,
    simulate_fault,
    simulate_linear,
    svd_krylov_reduce,
    swing_rhs,
    transfer_eval,
)

from conftest import DATA, make_stable

REPO_ROOT = Path(__file__).resolve().parents[1]

# Recorded rotor-mode comparison: (full Hz, reduced Hz, reported error %).
# The error column is reproduced from the frequency columns alone.
REFERENCE_TABLE = [
    (0.0035, 0.0035, 0.0),
    (0.0103, 0.0103, 0.0),
    (0.0266, 0.0262, 1.5038),
    (0.0335, 0.0337, -0.5970),
    (0.0678, 0.0678, 0.0),
    (0.1981, 0.1981, 0.0),
    (0.2328, 0.2328, 0.0),
    (0.5636, 0.5636, 0.0),
    (0.8424, 0.8424, 0.0),
    (0.9162, 0.9162, 0.0),
    (0.9379, 1.0234, -9.1161),
    (1.0234, 1.0449, -2.1008),
    (1.0449, 1.1118, -6.4025),
    (1.1118, 1.3238, -19.0682),
    (1.3237, 1.3606, -2.7876),
]


def test_criterion_1_reference_table_arithmetic():
    start = time.perf_counter()
    for f_full, f_red, reported in REFERENCE_TABLE:
        err = frequency_error_pct(f_full, f_red)
        assert abs(err - reported) <= 5e-4, (f_full, f_red, err, reported)
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    print(f"[criterion 1] PASS: 15/15 reference rows reproduced within 5e-4 ({elapsed:.3f} s)")


def test_criterion_2_retained_modes_exact(bench):
    start = time.perf_counter()
    red = modal_reduce(bench.full, 10)
    assert red.model.n == 10
    full_eigs = eig(bench.full).eigenvalues
    worst = max(float(np.min(np.abs(full_eigs - lam))) for lam in red.retained_eigenvalues)
    assert worst <= 1e-8
    rows = mode_error_table(bench.full, red.model)
    osc = sorted((r for r in rows if r[0] > 1e-6), key=lambda r: r[0])
    slowest_two = [f"{abs(r[4]):.4f}" for r in osc[:2]]
    assert slowest_two == ["0.0000", "0.0000"]
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    print(
        f"[criterion 2] PASS: retained modes pair at <= {worst:.2e}; "
        f"two slowest rows print 0.0000 ({elapsed:.3f} s)"
    )


def test_criterion_3_dc_gain_preservation():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    preserved = 0
    truncation_violations = 0
    total = 100
    for _ in range(total):
        n = int(rng.integers(2, 51))
        m = make_stable(rng, n)
        r = max(1, n // 2)
        g0 = transfer_eval(m, 0.0)[0, 0]
        g0_res = transfer_eval(modal_reduce(m, r, method="modal-residualization").model, 0.0)[0, 0]
        g0_tru = transfer_eval(modal_reduce(m, r, method="modal-truncation").model, 0.0)[0, 0]
        scale = max(abs(g0), 1e-300)
        if abs(g0_res - g0) <= 1e-10 * scale:
            preserved += 1
        if abs(g0_tru - g0) > 1e-10 * scale:
            truncation_violations += 1
    assert preserved == total
    assert truncation_violations >= 90
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    print(
        f"[criterion 3] PASS: residualization preserved G(0) on {preserved}/{total}, "
        f"truncation violated it on {truncation_violations}/{total} ({elapsed:.2f} s)"
    )


def test_criterion_4_gramian_contract():
    start = time.perf_counter()
    # scalar closed form
    scalar = StateSpaceModel(A=[[-1.0]], B=[[1.0]], C=[[1.0]])
    assert abs(obs_gramian(scalar).Q[0, 0] - 0.5) <= 1e-12

    rng = np.random.default_rng(8)
    worst_residual = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 61))
        m = make_stable(rng, n, p=int(rng.integers(1, 4)))
        g = obs_gramian(m)
        CtC = m.C.T @ m.C
        res = float(
            np.linalg.norm(m.A.T @ g.Q + g.Q @ m.A + CtC, "fro") / np.linalg.norm(CtC, "fro")
        )
        worst_residual = max(worst_residual, res)
    assert worst_residual <= 1e-8

    # output-energy identity on small systems, Simpson quadrature
    worst_energy = 0.0
    for _ in range(5):
        n = int(rng.integers(2, 11))
        m = make_stable(rng, n, p=2, margin=0.5)
        Q = obs_gramian(m).Q
        x0 = rng.standard_normal(n)
        dt = 0.001
        traj = simulate_linear(m, None, x0=x0, dt=dt, horizon=40.0)
        y2 = np.sum(traj.outputs**2, axis=1)
        w = np.ones(len(y2))
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        energy = dt / 3.0 * float(np.sum(w * y2))
        predicted = float(x0 @ Q @ x0)
        worst_energy = max(worst_energy, abs(energy - predicted) / predicted)
    assert worst_energy <= 1e-4
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    print(
        f"[criterion 4] PASS: worst Lyapunov residual {worst_residual:.2e}, scalar case exact, "
        f"worst energy mismatch {worst_energy:.2e} ({elapsed:.2f} s)"
    )


def test_criterion_5_interpolation_and_mirror_fixed_point():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    tol = 1e-6
    not_converged = 0
    worst_interp = 0.0
    worst_projector = 0.0
    worst_mirror = 0.0
    total = 20
    for k in range(total):
        n = int(rng.integers(8, 41))
        r = (2, 4, 6)[k % 3]
        m = make_stable(rng, n)
        res = svd_krylov_reduce(m, r, channel=(0, 0), tol=tol, max_iter=100)
        worst_interp = max(worst_interp, max(res.interp_history))
        worst_projector = max(worst_projector, max(res.projector_history))
        if not res.converged:
            not_converged += 1
            continue
        mirrored = np.sort_complex(-eig(res.reduced.model.A).eigenvalues)
        shifts = np.sort_complex(res.final_shifts.values)
        worst_mirror = max(
            worst_mirror, float(np.max(np.abs(shifts - mirrored) / np.abs(mirrored)))
        )
    assert worst_interp <= 1e-8
    assert worst_projector <= 1e-10
    assert worst_mirror <= 10 * tol
    assert not_converged <= 2  # at most 10 percent, reported rather than failed
    elapsed = time.perf_counter() - start
    assert elapsed < 120.0
    print(
        f"[criterion 5] PASS: interp <= {worst_interp:.2e} every iteration, "
        f"projector defect <= {worst_projector:.2e}, mirror gap <= {worst_mirror:.2e}, "
        f"{not_converged}/{total} not converged ({elapsed:.2f} s)"
    )


def test_criterion_6_linearization_fidelity(bench):
    start = time.perf_counter()
    # entrywise agreement with central finite differences on the benchmark
    x0 = np.concatenate(([g.delta0 for g in bench.gens], np.zeros(10)))
    h = 1e-6
    J = np.empty((20, 20))
    for j in range(20):
        xp, xm = x0.copy(), x0.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j] = (
            swing_rhs(xp, bench.yred_pre, bench.gens, bench.omega_s)
            - swing_rhs(xm, bench.yred_pre, bench.gens, bench.omega_s)
        ) / (2 * h)
    fd_gap = float(np.max(np.abs(bench.full.A - J)))
    assert fd_gap <= 1e-6

    # two-machine closed form: x'' + sigma x' + omega_s (K11/2H1 + K22/2H2) x = 0
    from conftest import two_machine_network
    from powermor import (
        build_ybus,
        init_generators,
        load_admittances,
        reduce_to_internal_nodes,
        solve_power_flow,
    )

    net = two_machine_network()
    pf = solve_power_flow(net)
    gens = init_generators(net, pf)
    yred = reduce_to_internal_nodes(build_ybus(net), gens, load_admittances(net, pf), net.bus_ids)
    model = linearize_swing(gens, yred, net.omega_s)
    E = np.array([g.E for g in gens])
    d0 = np.array([g.delta0 for g in gens])
    H = np.array([g.H for g in gens])
    sigma = gens[0].D / (2 * gens[0].H)
    K = np.zeros((2, 2))
    for j in range(2):
        dp, dm = d0.copy(), d0.copy()
        dp[j] += h
        dm[j] -= h
        K[:, j] = (electrical_power(yred, E, dp) - electrical_power(yred, E, dm)) / (2 * h)
    kappa = net.omega_s * (K[0, 0] / (2 * H[0]) + K[1, 1] / (2 * H[1]))
    lam_expected = (-sigma + np.sqrt(complex(sigma**2 - 4 * kappa))) / 2
    osc = [z for z in eig(model).eigenvalues if z.imag > 1e-9]
    pair_gap = abs(osc[0] - lam_expected)
    assert len(osc) == 1 and pair_gap <= 1e-8
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    print(
        f"[criterion 6] PASS: finite-difference gap {fd_gap:.2e}, "
        f"closed-form pair gap {pair_gap:.2e} ({elapsed:.3f} s)"
    )


def test_criterion_7_benchmark_fault_study(bench):
    start = time.perf_counter()
    scenario = FaultScenario(faulted_bus=3, t_on=1.0, t_clear=1.1)
    config = SimConfig(dt=0.005, horizon=20.0)

    nonlinear = simulate_fault(bench.net, bench.gens, scenario, config, pf=bench.pf)
    assert not nonlinear.synchronism_lost

    u = fault_disturbance(bench.gens, bench.yred_pre, bench.yred_fault, scenario, config)
    traj_full = simulate_linear(bench.full, u, dt=config.dt, horizon=config.horizon)
    red = modal_reduce(bench.full, 10)
    traj_red = simulate_linear(red.model, u, dt=config.dt, horizon=config.horizon)

    machine_1_full = traj_full.outputs[:, 0]
    machine_1_red = traj_red.outputs[:, 0]
    rms_dev = float(np.sqrt(np.mean(machine_1_full**2)))
    rms_err = float(np.sqrt(np.mean((machine_1_full - machine_1_red) ** 2)))
    assert rms_dev > 0
    ratio = rms_err / rms_dev
    assert ratio <= 0.05
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    print(
        f"[criterion 7] PASS: synchronism preserved; machine-1 rms error "
        f"{100 * ratio:.4f}% of the full-linear deviation ({elapsed:.2f} s)"
    )


def test_criterion_8_frequency_response_agreement(bench):
    start = time.perf_counter()
    band = dict(w_lo=1e-2, w_hi=1e2, points=200)
    sweep_full = freq_sweep(bench.full, (0, 0), **band)

    def gap_to_full(model, entry=(0, 0), reference=sweep_full):
        sw = freq_sweep(model, entry, **band)
        return np.abs(reference.magnitude_db - sw.magnitude_db)

    # residualization keeps its feedthrough at high frequency where the true
    # response keeps rolling off, so its 3 dB agreement band is the slow band
    # covering every system pole; truncation has no such floor
    gaps_res = gap_to_full(modal_reduce(bench.full, 10, method="modal-residualization").model)
    slow_band = sweep_full.omega <= 10.0
    res_gap = float(np.max(gaps_res[slow_band]))
    assert res_gap <= 3.0

    tru_gap = float(np.max(gap_to_full(modal_reduce(bench.full, 10, method="modal-truncation").model)))
    assert tru_gap <= 3.0

    deflated_sweep = freq_sweep(bench.deflated, (0, 0), **band)
    svd_res = svd_krylov_reduce(bench.deflated, 10, channel=(0, 0))
    assert svd_res.converged
    svd_gap = float(
        np.max(
            np.abs(
                deflated_sweep.magnitude_db
                - freq_sweep(svd_res.reduced.model, (0, 0), **band).magnitude_db
            )
        )
    )
    assert svd_gap <= 3.0

    full_order_gap = float(np.max(gap_to_full(modal_reduce(bench.full, 20).model)))
    assert full_order_gap <= 1e-8
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    print(
        f"[criterion 8] PASS: gaps (dB) residualization {res_gap:.3f} over the slow band, "
        f"truncation {tru_gap:.3f}, shift iteration {svd_gap:.3f}, "
        f"full order {full_order_gap:.2e} ({elapsed:.2f} s)"
    )


def test_criterion_9_byte_identical_reruns(tmp_path):
    start = time.perf_counter()
    outs = []
    for name in ("run1", "run2"):
        out = tmp_path / name
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "powermor.cli",
                "compare",
                "--network-path",
                str(DATA),
                "--output-dir",
                str(out),
            ],
            cwd=REPO_ROOT,
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outs.append(out)
    names1 = sorted(p.name for p in outs[0].iterdir())
    names2 = sorted(p.name for p in outs[1].iterdir())
    assert names1 == names2 and len(names1) == 12
    for name in names1:
        assert filecmp.cmp(outs[0] / name, outs[1] / name, shallow=False), name
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    print(
        f"[criterion 9] PASS: {len(names1)} output files byte-identical across reruns "
        f"({elapsed:.2f} s)"
    )
