"""Shared fixtures: the 39-bus pipeline (computed once) and random-model helpers."""

from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from powermor import (
    StateSpaceModel,
    build_ybus,
    init_generators,
    linearize_swing,
    load_admittances,
    load_network,
    network_from_dict,
    reduce_to_internal_nodes,
    relative_swing_model,
    solve_power_flow,
)

DATA = Path(__file__).resolve().parents[1] / "data" / "new_england_39.json"


@pytest.fixture(scope="session")
def bench():
    """39-bus benchmark pipeline, solved once per test session.

    Carries the network, operating point, initialized machines, the three
    admittance matrices the fault study needs, the 20-state small-signal
    model, and its strictly stable 18-state machine-1-frame counterpart.
    """
    net = load_network(DATA)
    pf = solve_power_flow(net)
    gens = init_generators(net, pf)
    ybus = build_ybus(net)
    yload = load_admittances(net, pf)
    yred_pre = reduce_to_internal_nodes(ybus, gens, yload, net.bus_ids)
    yred_fault = reduce_to_internal_nodes(
        ybus, gens, yload, net.bus_ids, grounded_buses=(3,)
    )
    return SimpleNamespace(
        net=net,
        pf=pf,
        gens=gens,
        ybus=ybus,
        yload=yload,
        yred_pre=yred_pre,
        yred_fault=yred_fault,
        full=linearize_swing(gens, yred_pre, net.omega_s),
        deflated=relative_swing_model(gens, yred_pre, net.omega_s),
        omega_s=net.omega_s,
    )


def make_stable(rng, n, m=1, p=1, margin=0.2):
    """Random strictly stable model: dense A shifted left of -margin."""
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    A -= (np.max(np.linalg.eigvals(A).real) + margin) * np.eye(n)
    return StateSpaceModel(
        A=A,
        B=rng.standard_normal((n, m)),
        C=rng.standard_normal((p, n)),
    )


@pytest.fixture
def stable_factory():
    return make_stable


def two_machine_network(H2=8.0, sigma=0.25, p_gen=0.9, x=0.4, r=0.0):
    """Minimal two-machine system with a uniform damping-to-inertia ratio."""
    H1 = 4.0
    return network_from_dict(
        {
            "base_mva": 100.0,
            "f_s": 60.0,
            "buses": [
                {"id": 1, "kind": "slack", "V_setpoint": 1.0},
                {"id": 2, "kind": "PV", "V_setpoint": 1.02},
            ],
            "branches": [{"from": 1, "to": 2, "r": r, "x": x}],
            "generators": [
                {"bus": 1, "H": H1, "D": 2 * H1 * sigma, "xd_prime": 0.25},
                {"bus": 2, "H": H2, "D": 2 * H2 * sigma, "xd_prime": 0.30, "P_gen": p_gen},
            ],
        }
    )


def lossless_three_machine():
    """Three machines, zero-resistance lines, reactive-only loads, D = 0.

    The reduced admittance matrix of this system is purely imaginary, so
    the swing dynamics conserve an energy function once the network stops
    switching.
    """
    return network_from_dict(
        {
            "base_mva": 100.0,
            "f_s": 60.0,
            "buses": [
                {"id": 1, "kind": "slack", "V_setpoint": 1.0},
                {"id": 2, "kind": "PV", "V_setpoint": 1.01, "Q_load": 0.3},
                {"id": 3, "kind": "PV", "V_setpoint": 1.02, "Q_load": 0.2},
            ],
            "branches": [
                {"from": 1, "to": 2, "r": 0.0, "x": 0.3},
                {"from": 2, "to": 3, "r": 0.0, "x": 0.25},
                {"from": 1, "to": 3, "r": 0.0, "x": 0.35},
            ],
            "generators": [
                {"bus": 1, "H": 5.0, "D": 0.0, "xd_prime": 0.2},
                {"bus": 2, "H": 4.0, "D": 0.0, "xd_prime": 0.25, "P_gen": 0.6},
                {"bus": 3, "H": 6.0, "D": 0.0, "xd_prime": 0.3, "P_gen": 0.5},
            ],
        }
    )


@pytest.fixture
def two_machine():
    return two_machine_network


@pytest.fixture
def lossless_net():
    return lossless_three_machine()
