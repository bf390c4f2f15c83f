"""powermor: model-order reduction for multi-machine power-system models.

The package has three layers: generic LTI state-space numerics (lti),
two reduction families (modal truncation/residualization and an iterative
Gramian-weighted rational-Krylov projection), and a power-system front end
that builds the linear model from network data, simulates faults, and
compares full against reduced responses.
"""

from .errors import (
    BadCriterion,
    BasisRankDeficient,
    DefectiveMatrix,
    DegenerateGenerator,
    EigNoConvergence,
    EvalAtPole,
    GramianProjectionSingular,
    GridMismatch,
    KronSingular,
    MimoUnsupported,
    NotConjugateClosed,
    NotStrictlyStable,
    OrderTooLarge,
    ParseError,
    PowermorError,
    PowerFlowDiverged,
    ShiftHitsPole,
    SimulationDiverged,
    SingularDiscard,
    ValidationError,
    ZeroReference,
)
from .lti import (
    ModeRow,
    ModeTable,
    Spectrum,
    StabilityReport,
    StateSpaceModel,
    Trajectory,
    eig,
    format_number,
    is_stable,
    load_model,
    mode_report,
    model_from_dict,
    model_to_dict,
    save_model,
    simulate_linear,
    trajectory_to_csv,
    transfer_eval,
)
from .metrics import (
    ModePair,
    ModePairing,
    Sweep,
    SweepResult,
    TrajectoryError,
    freq_sweep,
    frequency_error_pct,
    mode_error_table,
    pair_modes,
    sweep_pair,
    traj_error,
    write_mode_table,
    write_sweep,
)
from .modal import (
    ModalForm,
    ModalPartition,
    ReducedModel,
    diagonalize,
    modal_reduce,
    order_modes,
    partition,
    realify,
    reduced_model_to_dict,
    residualize,
    save_reduced_model,
    truncate,
)
from .power import (
    Branch,
    Bus,
    FaultScenario,
    FaultSimResult,
    GeneratorClassical,
    GeneratorSpec,
    Network,
    PowerFlowSolution,
    SimConfig,
    build_ybus,
    electrical_power,
    fault_disturbance,
    init_generators,
    linearize_swing,
    load_admittances,
    load_network,
    network_from_dict,
    reduce_to_internal_nodes,
    relative_swing_model,
    simulate_fault,
    solve_power_flow,
    swing_rhs,
    write_pf_csv,
    write_swing_csv,
)
from .svdkrylov import (
    Gramian,
    KrylovBasis,
    ShiftSet,
    SvdKrylovResult,
    initial_shifts,
    interpolation_check,
    krylov_basis,
    oblique_projector,
    obs_gramian,
    reduce_once,
    shift_change,
    svd_krylov_reduce,
    write_convergence_trace,
)

__version__ = "0.1.0"
