"""Classical multi-machine swing model behind a constant-impedance network.

Machines are constant-EMF sources E < delta behind transient reactance.
Loads become constant admittances at the solved operating point, the whole
network is collapsed onto the machine internal nodes by Kron reduction, and
the dynamics per machine i are

    d(delta_i)/dt = omega_i
    (2 H_i / omega_s) d(omega_i)/dt = Pm_i - Pe_i(delta) - (D_i / omega_s) omega_i

with Pe_i = sum_j E_i E_j (G_ij cos(delta_i - delta_j) + B_ij sin(delta_i - delta_j))
on the reduced admittance matrix G + jB.  omega_i is the speed deviation in
electrical rad/s.

A bus fault is modelled by grounding the faulted bus before the reduction,
which yields a distinct fault-on admittance matrix; clearing restores the
pre-fault matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import (
    DegenerateGenerator,
    KronSingular,
    SimulationDiverged,
    ValidationError,
)
from ..lti import DIVERGENCE_NORM, StateSpaceModel, Trajectory, _freeze, format_number
from .network import Network, build_ybus
from .powerflow import PowerFlowSolution, solve_power_flow

# Largest angle spread (rad) still counted as synchronous operation.
SYNC_SPREAD_LIMIT = 4.0 * np.pi


@dataclass(frozen=True)
class GeneratorClassical:
    """Initialized classical machine: dispatch turned into E, delta0, Pm."""

    bus: int
    H: float
    D: float
    xd_prime: float
    Pm: float
    E: float
    delta0: float


@dataclass(frozen=True)
class FaultScenario:
    """Self-clearing bus fault: grounded at t_on, restored at t_clear."""

    faulted_bus: int
    t_on: float = 1.0
    t_clear: float = 1.1

    def __post_init__(self):
        if not 0.0 <= self.t_on < self.t_clear:
            raise ValidationError("need 0 <= t_on < t_clear", field="scenario")


@dataclass(frozen=True)
class SimConfig:
    """Fixed-step integration settings."""

    dt: float = 0.005
    horizon: float = 20.0

    def __post_init__(self):
        if self.dt <= 0 or self.horizon <= 0:
            raise ValidationError("dt and horizon must be positive", field="sim")
        if self.horizon < self.dt:
            raise ValidationError("horizon must cover at least one step", field="sim")


@dataclass(frozen=True)
class FaultSimResult:
    """Nonlinear simulation output plus synchronism bookkeeping."""

    trajectory: Trajectory
    synchronism_lost: bool
    t_loss: float | None


def load_admittances(network: Network, pf: PowerFlowSolution) -> np.ndarray:
    """Constant-impedance load conversion: y_i = (P_i - j Q_i) / |V_i|^2."""
    V2 = pf.v_mag**2
    y = np.zeros(network.n_bus, dtype=complex)
    for i, bus in enumerate(network.buses):
        if bus.P_load or bus.Q_load:
            if V2[i] <= 0:
                raise ValidationError(f"zero voltage at loaded bus {bus.id}")
            y[i] = complex(bus.P_load, -bus.Q_load) / V2[i]
    return y


def reduce_to_internal_nodes(
    ybus: np.ndarray,
    generators,
    load_admittance: np.ndarray,
    bus_ids,
    grounded_buses=(),
    keep_buses=(),
) -> np.ndarray:
    """Kron reduction onto the machine internal nodes.

    Builds the augmented admittance matrix (network + load admittances +
    machine branches 1/(j xd') from each terminal to its internal node),
    removes grounded buses entirely (their voltage is held at zero), and
    eliminates the remaining non-internal nodes by the Schur complement.
    ``keep_buses`` lists bus ids to treat as internal, i.e. excluded from
    elimination.

    Raises :class:`KronSingular` when the interior block cannot be inverted.
    """
    bus_ids = list(bus_ids)
    nb = len(bus_ids)
    ng = len(generators)
    idx = {bid: i for i, bid in enumerate(bus_ids)}
    Y = np.zeros((nb + ng, nb + ng), dtype=complex)
    Y[:nb, :nb] = ybus + np.diag(load_admittance)
    for k, gen in enumerate(generators):
        i = idx[gen.bus]
        m = nb + k
        ym = 1.0 / complex(0.0, gen.xd_prime)
        Y[i, i] += ym
        Y[m, m] += ym
        Y[i, m] -= ym
        Y[m, i] -= ym
    grounded = {idx[b] for b in grounded_buses}
    kept_internal = {idx[b] for b in keep_buses}
    internal = sorted(kept_internal) + list(range(nb, nb + ng))
    boundary = [i for i in range(nb) if i not in grounded and i not in kept_internal]
    keep = internal
    if not boundary:
        return Y[np.ix_(keep, keep)].copy()
    Yii = Y[np.ix_(keep, keep)]
    Yib = Y[np.ix_(keep, boundary)]
    Ybi = Y[np.ix_(boundary, keep)]
    Ybb = Y[np.ix_(boundary, boundary)]
    try:
        X = np.linalg.solve(Ybb, Ybi)
    except np.linalg.LinAlgError as exc:
        raise KronSingular("interior node block is singular") from exc
    resid = np.linalg.norm(Ybb @ X - Ybi) / max(np.linalg.norm(Ybi), 1e-300)
    if not np.isfinite(resid) or resid > 1e-8:
        raise KronSingular(f"interior solve residual {resid:.3e} above 1e-8")
    return Yii - Yib @ X


def init_generators(network: Network, pf: PowerFlowSolution):
    """Turn dispatch into classical-machine constants (E, delta0, Pm).

    The internal EMF is E<delta = V + j xd' I from the terminal conditions.
    Pm is then set to the electrical power at the initial angles on the
    reduced pre-fault network, so the equilibrium is exact by construction.
    """
    gens = []
    for k, spec in enumerate(network.generators):
        i = network.bus_index(spec.bus)
        Vc = pf.v_complex[i]
        S = complex(pf.p_gen[k], pf.q_gen[k])
        if abs(Vc) <= 1e-12:
            raise DegenerateGenerator(f"zero terminal voltage at bus {spec.bus}", bus=spec.bus)
        I = np.conj(S / Vc)
        Ec = Vc + 1j * spec.xd_prime * I
        if abs(Ec) <= 1e-9:
            raise DegenerateGenerator(f"zero internal EMF at bus {spec.bus}", bus=spec.bus)
        gens.append(
            GeneratorClassical(
                bus=spec.bus,
                H=spec.H,
                D=spec.D,
                xd_prime=spec.xd_prime,
                Pm=np.nan,
                E=abs(Ec),
                delta0=float(np.angle(Ec)),
            )
        )
    ybus = build_ybus(network)
    yred = reduce_to_internal_nodes(ybus, gens, load_admittances(network, pf), network.bus_ids)
    pe0 = electrical_power(yred, np.array([g.E for g in gens]), np.array([g.delta0 for g in gens]))
    return tuple(
        GeneratorClassical(
            bus=g.bus, H=g.H, D=g.D, xd_prime=g.xd_prime, Pm=float(pe0[k]), E=g.E, delta0=g.delta0
        )
        for k, g in enumerate(gens)
    )


def electrical_power(yred: np.ndarray, E: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Air-gap power of every machine at the given internal angles."""
    Eph = E * np.exp(1j * delta)
    return (Eph * np.conj(yred @ Eph)).real


def _gen_arrays(gens):
    return (
        np.array([g.E for g in gens]),
        np.array([g.Pm for g in gens]),
        np.array([g.H for g in gens]),
        np.array([g.D for g in gens]),
        np.array([g.delta0 for g in gens]),
    )


def swing_rhs(state: np.ndarray, yred: np.ndarray, gens, omega_s: float) -> np.ndarray:
    """Time derivative of (delta_1..delta_ng, omega_1..omega_ng)."""
    E, Pm, H, D, _ = _gen_arrays(gens)
    ng = len(gens)
    state = np.asarray(state, dtype=float)
    delta = state[:ng]
    omega = state[ng:]
    pe = electrical_power(yred, E, delta)
    domega = (omega_s / (2.0 * H)) * (Pm - pe - D * omega / omega_s)
    return np.concatenate((omega, domega))


def _angle_jacobian(yred: np.ndarray, E: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """K_ij = d Pe_i / d delta_j.  Rows sum to zero exactly by construction."""
    ng = len(E)
    G = yred.real
    B = yred.imag
    dij = delta[:, None] - delta[None, :]
    EiEj = np.outer(E, E)
    K = EiEj * (G * np.sin(dij) - B * np.cos(dij))
    np.fill_diagonal(K, 0.0)
    np.fill_diagonal(K, -K.sum(axis=1))
    return K


def linearize_swing(gens, yred: np.ndarray, omega_s: float) -> StateSpaceModel:
    """Small-signal model about the initialized equilibrium.

    States (d delta, d omega), inputs d Pm per machine, outputs the angle
    deviations.  The feedthrough is zero.
    """
    E, _, H, D, delta0 = _gen_arrays(gens)
    ng = len(gens)
    K = _angle_jacobian(yred, E, delta0)
    minv = omega_s / (2.0 * H)
    A = np.zeros((2 * ng, 2 * ng))
    A[:ng, ng:] = np.eye(ng)
    A[ng:, :ng] = -minv[:, None] * K
    A[ng:, ng:] = np.diag(-D / (2.0 * H))
    B = np.zeros((2 * ng, ng))
    B[ng:, :] = np.diag(minv)
    C = np.zeros((ng, 2 * ng))
    C[:, :ng] = np.eye(ng)
    names_d = tuple(f"delta_{k + 1}" for k in range(ng))
    names_w = tuple(f"omega_{k + 1}" for k in range(ng))
    return StateSpaceModel(
        A=A,
        B=B,
        C=C,
        D=np.zeros((ng, ng)),
        state_names=names_d + names_w,
        input_names=tuple(f"pm_{k + 1}" for k in range(ng)),
        output_names=names_d,
    )


def relative_swing_model(gens, yred: np.ndarray, omega_s: float) -> StateSpaceModel:
    """Small-signal model in the machine-1 frame, strictly stable and minimal.

    Both rigid-body modes of the absolute model (the zero eigenvalue from
    the uniform angle shift and the damped mean-speed mode) live in the
    machine-1-referenced null directions; with relative states
    (d(delta_i - delta_1), d(omega_i - omega_1), i = 2..ng) they drop out
    entirely and the remaining model is strictly stable AND observable from
    the relative angles, so its observability Gramian is positive definite.
    Keeping absolute speeds instead would leave the mean-speed mode in the
    state but exactly invisible to the outputs: a singular Gramian that
    breaks any projector built on it.

    The relative-speed dynamics close exactly only when D_i/(2 H_i) is the
    same for every machine; otherwise the absolute mean speed leaks into
    the relative equations and no 2(ng-1)-state form exists.  Non-uniform
    ratios are rejected rather than silently approximated.
    """
    E, _, H, D, delta0 = _gen_arrays(gens)
    ng = len(gens)
    if ng < 2:
        raise ValidationError("relative model needs at least two machines")
    sigma = D / (2.0 * H)
    sigma0 = float(sigma.mean())
    if np.max(np.abs(sigma - sigma0)) > 1e-9 * max(1.0, sigma0):
        raise ValidationError(
            "relative model requires a uniform damping-to-inertia ratio "
            f"D/(2H); got spread {np.max(sigma) - np.min(sigma):.3g}",
            field="D",
        )
    K = _angle_jacobian(yred, E, delta0)
    minv = omega_s / (2.0 * H)
    nd = ng - 1
    A = np.zeros((2 * nd, 2 * nd))
    A[:nd, nd:] = np.eye(nd)
    # K has zero row sums, so K delta = K[:, 1:] (delta_2:n - delta_1);
    # subtracting machine 1's acceleration row keeps the system closed
    Krel = minv[1:, None] * K[1:, 1:] - minv[0] * K[0:1, 1:]
    A[nd:, :nd] = -Krel
    A[nd:, nd:] = -sigma0 * np.eye(nd)
    B = np.zeros((2 * nd, ng))
    B[nd:, 1:] = np.diag(minv[1:])
    B[nd:, 0] = -minv[0]
    C = np.zeros((nd, 2 * nd))
    C[:, :nd] = np.eye(nd)
    rel_d = tuple(f"rel_delta_{k + 2}" for k in range(nd))
    rel_w = tuple(f"rel_omega_{k + 2}" for k in range(nd))
    return StateSpaceModel(
        A=A,
        B=B,
        C=C,
        D=np.zeros((nd, ng)),
        state_names=rel_d + rel_w,
        input_names=tuple(f"pm_{k + 1}" for k in range(ng)),
        output_names=rel_d,
    )


def _grid_step(value: float, dt: float, name: str) -> int:
    k = int(round(value / dt))
    if abs(k * dt - value) > 1e-9 * max(1.0, abs(value)):
        raise ValidationError(f"{name} = {value} does not land on the dt = {dt} grid", field=name)
    return k


def simulate_fault(
    network: Network,
    gens,
    scenario: FaultScenario | None,
    config: SimConfig,
    pf: PowerFlowSolution | None = None,
) -> FaultSimResult:
    """Integrate the nonlinear swing equations through a self-clearing fault.

    Three admittance matrices drive the piecewise dynamics: pre-fault,
    fault-on (faulted bus grounded), and post-fault (equal to pre-fault,
    since the fault clears without switching any branch).  Matrix changes
    happen exactly at grid points.  ``scenario=None`` runs the undisturbed
    system.  Losing synchronism (angle spread beyond SYNC_SPREAD_LIMIT) is
    reported, not raised; numeric blow-up raises :class:`SimulationDiverged`.
    """
    if pf is None:
        pf = solve_power_flow(network)
    ybus = build_ybus(network)
    yload = load_admittances(network, pf)
    yred_pre = reduce_to_internal_nodes(ybus, gens, yload, network.bus_ids)
    omega_s = network.omega_s
    E, Pm, H, D, delta0 = _gen_arrays(gens)
    ng = len(gens)
    minv = omega_s / (2.0 * H)

    steps = int(round(config.horizon / config.dt))
    if scenario is not None:
        yred_fault = reduce_to_internal_nodes(
            ybus, gens, yload, network.bus_ids, grounded_buses=(scenario.faulted_bus,)
        )
        k_on = _grid_step(scenario.t_on, config.dt, "t_on")
        k_clear = _grid_step(scenario.t_clear, config.dt, "t_clear")
        if k_on >= steps:
            raise ValidationError("t_on lies beyond the horizon", field="t_on")
    else:
        yred_fault = yred_pre
        k_on = k_clear = steps + 1

    def rhs(x: np.ndarray, yred: np.ndarray) -> np.ndarray:
        delta = x[:ng]
        omega = x[ng:]
        pe = electrical_power(yred, E, delta)
        return np.concatenate((omega, minv * (Pm - pe - D * omega / omega_s)))

    h = config.dt
    x = np.concatenate((delta0, np.zeros(ng)))
    states = np.empty((steps + 1, 2 * ng))
    states[0] = x
    synchronism_lost = False
    t_loss = None
    for k in range(steps):
        yred = yred_fault if k_on <= k < k_clear else yred_pre
        k1 = rhs(x, yred)
        k2 = rhs(x + 0.5 * h * k1, yred)
        k3 = rhs(x + 0.5 * h * k2, yred)
        k4 = rhs(x + h * k3, yred)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = (k + 1) * h
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_NORM:
            raise SimulationDiverged(
                f"swing integration blew up at t = {t:.6g}",
                t=t,
                partial_states=states[: k + 1].copy(),
                dt=h,
            )
        states[k + 1] = x
        spread = float(x[:ng].max() - x[:ng].min())
        if not synchronism_lost and spread > SYNC_SPREAD_LIMIT:
            synchronism_lost = True
            t_loss = t
    traj = Trajectory(t0=0.0, dt=h, states=states, outputs=states[:, :ng])
    return FaultSimResult(trajectory=traj, synchronism_lost=synchronism_lost, t_loss=t_loss)


def fault_disturbance(
    gens, yred_pre: np.ndarray, yred_fault: np.ndarray, scenario: FaultScenario, config: SimConfig
) -> np.ndarray:
    """Equivalent mechanical-power pulse that a linear model sees from a fault.

    During the fault window the machines feel the accelerating power
    Pe_pre(delta_eq) - Pe_fault(delta_eq); outside it the disturbance is
    zero.  Returns one input row per grid point, (steps+1, ng).
    """
    E, _, _, _, delta0 = _gen_arrays(gens)
    pulse = electrical_power(yred_pre, E, delta0) - electrical_power(yred_fault, E, delta0)
    steps = int(round(config.horizon / config.dt))
    k_on = _grid_step(scenario.t_on, config.dt, "t_on")
    k_clear = _grid_step(scenario.t_clear, config.dt, "t_clear")
    u = np.zeros((steps + 1, len(gens)))
    u[k_on:k_clear] = pulse
    return u


def write_swing_csv(traj: Trajectory, path, ng: int | None = None) -> None:
    """Write `t,delta_1..delta_ng,omega_1..omega_ng` rows (states only)."""
    n = traj.states.shape[1]
    if ng is None:
        if n % 2:
            raise ValidationError("state count is odd; pass ng explicitly", field="ng")
        ng = n // 2
    header = ["t"] + [f"delta_{k + 1}" for k in range(ng)] + [f"omega_{k + 1}" for k in range(n - ng)]
    times = traj.times
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(traj.n_samples):
            fh.write(
                ",".join([format_number(times[k])] + [format_number(v) for v in traj.states[k]]) + "\n"
            )
