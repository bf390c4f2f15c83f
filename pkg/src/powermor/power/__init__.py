"""Multi-machine power-system front end: network data, power flow, swing model."""

from .network import (
    Branch,
    Bus,
    GeneratorSpec,
    Network,
    build_ybus,
    load_network,
    network_from_dict,
)
from .powerflow import PowerFlowSolution, solve_power_flow, write_pf_csv
from .swing import (
    FaultScenario,
    FaultSimResult,
    GeneratorClassical,
    SimConfig,
    electrical_power,
    fault_disturbance,
    init_generators,
    linearize_swing,
    load_admittances,
    reduce_to_internal_nodes,
    relative_swing_model,
    simulate_fault,
    swing_rhs,
    write_swing_csv,
)

__all__ = [
    "Branch",
    "Bus",
    "GeneratorSpec",
    "Network",
    "build_ybus",
    "load_network",
    "network_from_dict",
    "PowerFlowSolution",
    "solve_power_flow",
    "write_pf_csv",
    "FaultScenario",
    "FaultSimResult",
    "GeneratorClassical",
    "SimConfig",
    "electrical_power",
    "fault_disturbance",
    "init_generators",
    "linearize_swing",
    "load_admittances",
    "reduce_to_internal_nodes",
    "relative_swing_model",
    "simulate_fault",
    "swing_rhs",
    "write_swing_csv",
]
