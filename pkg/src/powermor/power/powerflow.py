"""Newton-Raphson power flow in polar coordinates.

Flat start (angles zero, magnitudes at setpoint where given, else 1.0),
full Jacobian, convergence when the largest absolute mismatch drops below
tolerance.  The Jacobian blocks come from the complex derivative identities

    dS/d(theta) = j diag(V) conj(diag(I) - Y diag(V))
    dS/d(|V|)   = diag(V/|V|) conj(diag(I)) + diag(V) conj(Y diag(V/|V|))

evaluated at the current iterate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import PowerFlowDiverged, ValidationError
from ..lti import _freeze, format_number
from .network import Network, build_ybus


@dataclass(frozen=True)
class PowerFlowSolution:
    """Converged operating point plus generator bookkeeping.

    ``p_gen``/``q_gen`` align with ``network.generators``; for the slack
    machine both come from the network solution, for PV machines the active
    part is the dispatch and the reactive part balances the bus.
    """

    v_mag: np.ndarray
    v_ang: np.ndarray
    p_inj: np.ndarray
    q_inj: np.ndarray
    p_gen: np.ndarray
    q_gen: np.ndarray
    iterations: int
    max_mismatch: float

    def __post_init__(self):
        for attr in ("v_mag", "v_ang", "p_inj", "q_inj", "p_gen", "q_gen"):
            object.__setattr__(self, attr, _freeze(np.array(getattr(self, attr), dtype=float)))

    @property
    def v_complex(self) -> np.ndarray:
        return self.v_mag * np.exp(1j * self.v_ang)


def solve_power_flow(network: Network, tol: float = 1e-8, max_iter: int = 50) -> PowerFlowSolution:
    """Solve the network power flow; raises :class:`PowerFlowDiverged` on failure.

    The divergence report carries the per-iteration max-mismatch trace in
    ``details["trace"]``.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive", field="tol")
    Y = build_ybus(network)
    n = network.n_bus
    kinds = [bus.kind for bus in network.buses]
    slack = network.slack_index
    pv = [i for i, k in enumerate(kinds) if k == "PV"]
    pq = [i for i, k in enumerate(kinds) if k == "PQ"]
    pvpq = pv + pq

    p_sched = np.array([-bus.P_load for bus in network.buses])
    q_sched = np.array([-bus.Q_load for bus in network.buses])
    for g in network.generators:
        p_sched[network.bus_index(g.bus)] += g.P_gen

    vm = np.array([bus.V_setpoint if bus.kind in ("PV", "slack") else 1.0 for bus in network.buses])
    va = np.zeros(n)

    trace: list[float] = []
    for it in range(max_iter + 1):
        V = vm * np.exp(1j * va)
        Ibus = Y @ V
        S = V * np.conj(Ibus)
        dP = S.real - p_sched
        dQ = S.imag - q_sched
        mism = np.concatenate((dP[pvpq], dQ[pq]))
        max_mis = float(np.max(np.abs(mism))) if len(mism) else 0.0
        trace.append(max_mis)
        if not np.isfinite(max_mis) or max_mis > 1e8:
            raise PowerFlowDiverged(
                f"mismatch blew up at iteration {it}", trace=trace, iterations=it
            )
        if max_mis < tol:
            p_gen = np.empty(network.n_gen)
            q_gen = np.empty(network.n_gen)
            for k, g in enumerate(network.generators):
                i = network.bus_index(g.bus)
                bus = network.buses[i]
                p_gen[k] = S[i].real + bus.P_load if i == slack else g.P_gen
                q_gen[k] = S[i].imag + bus.Q_load
            return PowerFlowSolution(
                v_mag=vm,
                v_ang=va,
                p_inj=S.real,
                q_inj=S.imag,
                p_gen=p_gen,
                q_gen=q_gen,
                iterations=it,
                max_mismatch=max_mis,
            )
        if it == max_iter:
            break
        diagV = np.diag(V)
        diagI = np.diag(Ibus)
        diagVn = np.diag(V / vm)
        dS_dva = 1j * diagV @ np.conj(diagI - Y @ diagV)
        dS_dvm = diagVn @ np.conj(diagI) + diagV @ np.conj(Y @ diagVn)
        J11 = dS_dva[np.ix_(pvpq, pvpq)].real
        J12 = dS_dvm[np.ix_(pvpq, pq)].real
        J21 = dS_dva[np.ix_(pq, pvpq)].imag
        J22 = dS_dvm[np.ix_(pq, pq)].imag
        J = np.block([[J11, J12], [J21, J22]])
        try:
            step = np.linalg.solve(J, mism)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowDiverged(
                f"singular Jacobian at iteration {it}", trace=trace, iterations=it
            ) from exc
        va[pvpq] -= step[: len(pvpq)]
        vm[pq] -= step[len(pvpq):]
    raise PowerFlowDiverged(
        f"no convergence after {max_iter} iterations (last mismatch {trace[-1]:.3e})",
        trace=trace,
        iterations=max_iter,
    )


def write_pf_csv(network: Network, pf: PowerFlowSolution, path) -> None:
    """One row per bus: id, kind, voltage, angle, and net complex injection."""
    with open(path, "w", newline="") as fh:
        fh.write("bus,kind,v_mag_pu,v_ang_rad,p_inj_pu,q_inj_pu\n")
        for i, bus in enumerate(network.buses):
            fh.write(
                ",".join(
                    (
                        str(bus.id),
                        bus.kind,
                        format_number(pf.v_mag[i]),
                        format_number(pf.v_ang[i]),
                        format_number(pf.p_inj[i]),
                        format_number(pf.q_inj[i]),
                    )
                )
                + "\n"
            )
